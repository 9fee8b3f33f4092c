"""Euclidean model chamber algebra for SL(n,R).

Vectors live in the trace-zero subspace of R^n (log-singular-value
coordinates).  The model chamber consists of non-increasingly sorted
vectors.  Walls are indexed by i in {1, ..., n-1} and separate
coordinates i and i+1; a face type records the set of walls where a
strict gap is required.  Everything downstream phrases chamber
combinatorics through this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-10
CHAMBER_TOL = 1e-9
SQRT2 = math.sqrt(2.0)


def check_model_vector(v, tol: float = SUM_TOL) -> np.ndarray:
    """Validate a trace-zero coordinate vector and return it as ndarray."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size < 2:
        raise ValueError(f"expected a vector of dimension >= 2, got shape {v.shape}")
    if abs(float(v.sum())) > tol * max(1.0, float(np.abs(v).max())):
        raise ValueError(f"coordinates must sum to 0, got sum {v.sum():.3e}")
    return v


def check_cartan_vector(v, tol: float = CHAMBER_TOL) -> np.ndarray:
    """Validate a chamber vector: trace zero and non-increasing."""
    v = check_model_vector(v, tol=max(tol, SUM_TOL))
    if np.any(np.diff(v) > tol):
        raise ValueError(f"coordinates must be non-increasing, got {v}")
    return v


def sort_to_chamber(v) -> tuple[np.ndarray, np.ndarray]:
    """Sort a model vector into the chamber.

    Returns the sorted vector and a witness permutation ``perm`` such
    that ``sorted == v[perm]``.  Idempotent on chamber vectors.
    """
    v = check_model_vector(v)
    perm = np.argsort(-v, kind="stable")
    return v[perm], perm


def iota_vector(v) -> np.ndarray:
    """Opposition involution on the model flat: a -> (-a_n, ..., -a_1)."""
    v = np.asarray(v, dtype=float)
    return -v[::-1]


@dataclass(frozen=True)
class FaceType:
    """A face of the model chamber, encoded by its set of strict walls.

    ``kept`` is the set of wall indices i (1-based, 1 <= i <= n-1) where a
    strict gap a_i > a_{i+1} is required.  The full set encodes the top
    face; the empty set is not a valid proper face type.
    """

    n: int
    kept: frozenset[int]

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need n >= 2")
        if not self.kept:
            raise ValueError("a proper face type keeps at least one wall")
        if not all(1 <= i <= self.n - 1 for i in self.kept):
            raise ValueError(f"wall indices must lie in 1..{self.n - 1}")

    @classmethod
    def make(cls, n: int, walls) -> "FaceType":
        return cls(n, frozenset(int(i) for i in walls))

    @classmethod
    def full(cls, n: int) -> "FaceType":
        return cls(n, frozenset(range(1, n)))

    @property
    def dims(self) -> tuple[int, ...]:
        """Subspace dimensions of flags of this type, ascending."""
        return tuple(sorted(self.kept))

    @property
    def boundaries(self) -> tuple[int, ...]:
        return (0,) + self.dims + (self.n,)

    @property
    def blocks(self) -> tuple[tuple[int, int], ...]:
        b = self.boundaries
        return tuple((b[k], b[k + 1]) for k in range(len(b) - 1))

    @property
    def is_full(self) -> bool:
        return len(self.kept) == self.n - 1

    @property
    def is_iota_invariant(self) -> bool:
        return self.kept == frozenset(self.n - i for i in self.kept)


def iota_face(face: FaceType) -> FaceType:
    """Opposition involution on face types: I -> {n - i : i in I}."""
    return FaceType(face.n, frozenset(face.n - i for i in face.kept))


def face_boundary_distance(delta, face: FaceType) -> float:
    """Euclidean distance from a chamber vector to the forbidden walls.

    Equals min over kept walls i of (a_i - a_{i+1}) / sqrt(2); the
    hyperplane projection of a chamber vector stays in the chamber, so
    the wall distance is exact.
    """
    delta = check_cartan_vector(delta)
    gaps = wall_gaps(delta, face)
    return float(gaps.min()) / SQRT2


def wall_gaps(delta, face: FaceType) -> np.ndarray:
    """Gaps a_i - a_{i+1} at the kept walls, in ascending wall order."""
    delta = np.asarray(delta, dtype=float)
    idx = np.array(face.dims, dtype=int)
    return delta[idx - 1] - delta[idx]


def pav_nonincreasing(values, weights=None) -> np.ndarray:
    """Weighted least-squares projection onto non-increasing vectors.

    Pool-adjacent-violators; exact up to floating point.
    """
    y = np.asarray(values, dtype=float)
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    # Blocks are (mean, weight, count); merge while an ascent remains.
    means: list[float] = []
    wts: list[float] = []
    counts: list[int] = []
    for yi, wi in zip(y, w):
        means.append(float(yi))
        wts.append(float(wi))
        counts.append(1)
        while len(means) > 1 and means[-2] < means[-1]:
            m2, w2, c2 = means.pop(), wts.pop(), counts.pop()
            m1, w1, c1 = means.pop(), wts.pop(), counts.pop()
            wt = w1 + w2
            means.append((m1 * w1 + m2 * w2) / wt)
            wts.append(wt)
            counts.append(c1 + c2)
    out = np.empty_like(y)
    pos = 0
    for m, c in zip(means, counts):
        out[pos:pos + c] = m
        pos += c
    return out


def project_to_face_sector(delta, face: FaceType) -> np.ndarray:
    """Nearest point of a chamber vector in the face sector.

    The sector consists of chamber vectors constant on the blocks of the
    face type.  Block averaging projects onto the linear span; if the
    averages violate the chamber order, pool-adjacent-violators finishes
    the job.  1-Lipschitz and idempotent; fixes sector points.
    """
    delta = check_cartan_vector(delta)
    sizes = np.array([hi - lo for lo, hi in face.blocks], dtype=float)
    means = np.array([delta[lo:hi].mean() for lo, hi in face.blocks])
    if np.any(np.diff(means) > 0.0):
        means = pav_nonincreasing(means, sizes)
    out = np.empty_like(delta)
    for (lo, hi), m in zip(face.blocks, means):
        out[lo:hi] = m
    return out


@dataclass(frozen=True)
class ThetaSpec:
    """A uniform-gap compact type set inside the open face interior.

    Membership for a unit chamber vector requires every kept-wall gap to
    be at least ``gap``.  The set is compact and invariant under the
    opposition involution whenever the face is.
    """

    face: FaceType
    gap: float

    def __post_init__(self):
        if not self.gap > 0.0:
            raise ValueError("gap must be positive")


def theta_membership(delta, theta: ThetaSpec, zero_tol: float = 1e-12) -> tuple[bool, float]:
    """Test scale-invariant membership of a nonzero chamber vector.

    Returns (member, margin) where margin = min kept gap of the
    normalized vector minus the required gap.  Rejects delta = 0.
    """
    delta = check_cartan_vector(delta)
    norm = float(np.linalg.norm(delta))
    if norm <= zero_tol:
        raise ValueError("type of the zero vector is undefined")
    margin = float(wall_gaps(delta / norm, theta.face).min()) - theta.gap
    return margin >= 0.0, margin


def block_sort(v, face: FaceType) -> np.ndarray:
    """Sort descending within each block of the face type."""
    v = np.asarray(v, dtype=float)
    out = v.copy()
    for lo, hi in face.blocks:
        out[lo:hi] = np.sort(v[lo:hi])[::-1]
    return out


def flat_cone_margin(v, face: FaceType) -> float:
    """Signed membership margin for the block-symmetrized chamber cone.

    A vector belongs to the union of chambers around the face sector iff
    its block-sorted form is globally non-increasing; the margin is the
    worst consecutive difference (nonnegative iff member).
    """
    w = block_sort(v, face)
    return float(-np.max(np.diff(w))) if w.size > 1 else 0.0


def flat_cone_member(v, face: FaceType, slack: float = 0.0) -> bool:
    return flat_cone_margin(v, face) >= -slack


def flat_cone_deficit(v, face: FaceType) -> float:
    """Distance-like deficit from the block-symmetrized chamber cone.

    Zero iff member; otherwise the distance from the block-sorted vector
    to the monotone cone (an upper bound for the distance to the union
    of chambers, exact within the flat spanned by the sorted form).
    """
    w = block_sort(v, face)
    fit = pav_nonincreasing(w)
    return float(np.linalg.norm(w - fit))


def flat_finsler_margin(vectors, face: FaceType) -> float:
    """Worst pairwise cone margin along a discrete path in the model flat."""
    vs = [np.asarray(v, dtype=float) for v in vectors]
    worst = math.inf
    for i in range(len(vs)):
        for j in range(i + 1, len(vs)):
            worst = min(worst, flat_cone_margin(vs[j] - vs[i], face))
    return worst


def _chamber_circle_basis(n: int = 3) -> tuple[np.ndarray, np.ndarray]:
    # Orthonormal basis of the trace-zero plane for n = 3.
    b1 = np.array([1.0, -1.0, 0.0]) / SQRT2
    b2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)
    return b1, b2


def theta_boundary_angle(theta: ThetaSpec, samples: int = 200_000, seed: int = 0) -> float:
    """Angular distance from the type set to the forbidden chamber boundary.

    For n = 3 the boundary rays are isolated unit vectors and the type
    set is an arc, so a dense 1-d scan with local refinement is exact to
    grid resolution; for larger n the minimum is sampled.  The sine of
    this angle lower-bounds the per-unit-length drift of the projected
    distance for segments of the given type.
    """
    face = theta.face
    n = face.n
    if n == 3:
        b1, b2 = _chamber_circle_basis()
        phis = np.linspace(0.0, 2.0 * math.pi, 1 << 20, endpoint=False)
        pts = np.outer(np.cos(phis), b1) + np.outer(np.sin(phis), b2)
        sorted_ok = np.all(np.diff(pts, axis=1) <= 1e-15, axis=1)
        gaps = np.stack([pts[:, i - 1] - pts[:, i] for i in face.dims], axis=1)
        in_theta = sorted_ok & np.all(gaps >= theta.gap, axis=1)
        if not in_theta.any():
            raise ValueError("type set is empty at this gap")
        # Boundary rays of the chamber: wall 1 collapses a_1 = a_2,
        # wall 2 collapses a_2 = a_3.
        wall_rays = {1: np.array([1.0, 1.0, -2.0]), 2: np.array([2.0, -1.0, -1.0])}
        best = math.pi
        for i in face.dims:
            w = wall_rays[i] / np.linalg.norm(wall_rays[i])
            cosangles = pts[in_theta] @ w
            best = min(best, float(np.arccos(np.clip(cosangles.max(), -1.0, 1.0))))
        return best
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((samples, n))
    raw -= raw.mean(axis=1, keepdims=True)
    raw = np.sort(raw, axis=1)[:, ::-1]
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    gaps = np.stack([raw[:, i - 1] - raw[:, i] for i in face.dims], axis=1)
    theta_pts = raw[np.all(gaps >= theta.gap, axis=1)]
    best = math.pi
    for i in face.dims:
        wall_pts = raw.copy()
        mid = wall_pts[:, i - 1:i + 1].mean(axis=1)
        wall_pts[:, i - 1] = mid
        wall_pts[:, i] = mid
        wall_pts /= np.maximum(np.linalg.norm(wall_pts, axis=1, keepdims=True), 1e-300)
        cos = theta_pts @ wall_pts.T
        best = min(best, float(np.arccos(np.clip(cos.max(), -1.0, 1.0))))
    return best
