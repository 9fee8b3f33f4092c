"""Partial flag manifolds for SL(n,R).

A flag of a given face type is stored as an adapted orthonormal frame:
the subspace of dimension d is the span of the leading d frame columns,
for each d kept by the face type.  The metric is the maximum operator
norm difference of the orthogonal projectors over the nested subspaces;
it is O(n)-invariant and bilipschitz to any background Riemannian
metric.  Expansion factors are computed from the exact differential of
the group action in adapted block coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .chamber import FaceType, iota_face
from .errors import VanishingGap

GAP_TOL = 1e-9
FRAME_TOL = 1e-9


def qr_pos(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """QR with positive diagonal of R, so nested column spans are preserved."""
    q, r = np.linalg.qr(a)
    s = np.sign(np.diag(r))
    s[s == 0.0] = 1.0
    return q * s, r * s[:, None]


@dataclass(frozen=True)
class Flag:
    """A partial flag, as a face type plus an adapted orthonormal frame."""

    face: FaceType
    frame: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.frame, dtype=float)
        n = self.face.n
        if q.shape != (n, n):
            raise ValueError(f"frame must be {n}x{n}, got {q.shape}")
        if np.linalg.norm(q.T @ q - np.eye(n)) > FRAME_TOL * n:
            raise ValueError("frame is not orthonormal")
        object.__setattr__(self, "frame", q)

    @property
    def dims(self) -> tuple[int, ...]:
        return self.face.dims

    def basis(self, d: int) -> np.ndarray:
        return self.frame[:, :d]

    def projector(self, d: int) -> np.ndarray:
        b = self.frame[:, :d]
        return b @ b.T


def flag_distance(f1: Flag, f2: Flag) -> float:
    """Max operator-norm difference of subspace projectors over the type."""
    if f1.face != f2.face:
        raise ValueError("flags have different face types")
    best = 0.0
    for d in f1.dims:
        diff = f1.projector(d) - f2.projector(d)
        best = max(best, float(np.linalg.norm(diff, 2)))
    return best


def flags_equal(f1: Flag, f2: Flag, tol: float = 1e-8) -> bool:
    return flag_distance(f1, f2) <= tol


def act_on_flag(g: np.ndarray, f: Flag) -> Flag:
    """Apply a group element: orthonormalize the image of the nested spans."""
    g = np.asarray(g, dtype=float)
    q, _ = qr_pos(g @ f.frame)
    return Flag(f.face, q)


def transversality_margin(f: Flag, fop: Flag) -> float:
    """Smallest singular value over complementary subspace pairs.

    ``f`` has face type I and ``fop`` the opposite type; the margin is
    positive iff the flags are antipodal, and vanishes exactly on the
    complement of the open relative-position stratum.
    """
    if fop.face != iota_face(f.face):
        raise ValueError("second flag must have the opposite face type")
    n = f.face.n
    best = np.inf
    for d in f.dims:
        m = np.hstack([f.basis(d), fop.basis(n - d)])
        best = min(best, float(np.linalg.svd(m, compute_uv=False)[-1]))
    return float(best)


def antipodality_margin(f1: Flag, f2: Flag) -> float:
    """Transversality of two flags of the same iota-invariant type."""
    if not f1.face.is_iota_invariant:
        raise ValueError("antipodality needs an iota-invariant face type")
    if f1.face != f2.face:
        raise ValueError("flags have different face types")
    n = f1.face.n
    best = np.inf
    for d in f1.dims:
        m = np.hstack([f1.basis(d), f2.basis(n - d)])
        best = min(best, float(np.linalg.svd(m, compute_uv=False)[-1]))
    return float(best)


def attractive_flag(g: np.ndarray, face: FaceType, tol: float = GAP_TOL):
    """Attracting/repelling flag pair of a group element from its SVD.

    Returns (flag_plus, flag_minus, gaps): flag_plus of the given type is
    spanned by leading left singular vectors, flag_minus of the opposite
    type by trailing right singular vectors; gaps are the log
    singular-value gaps at the kept walls.
    """
    g = np.asarray(g, dtype=float)
    u, s, vt = np.linalg.svd(g)
    logs = np.log(np.maximum(s, 1e-300))
    idx = np.array(face.dims, dtype=int)
    gaps = logs[idx - 1] - logs[idx]
    if gaps.min() < tol:
        raise VanishingGap(f"log singular-value gap {gaps.min():.3e} below {tol:.1e}")
    plus = Flag(face, u)
    minus = Flag(iota_face(face), vt.T[:, ::-1])
    return plus, minus, gaps


def random_flag(face: FaceType, rng: np.random.Generator) -> Flag:
    """Haar-ish random flag via QR of a Gaussian matrix."""
    q, _ = qr_pos(rng.standard_normal((face.n, face.n)))
    return Flag(face, q)


def stable_product_flag(matrices, face: FaceType) -> Flag:
    """Image of a generic flag under an ordered product, accumulated stably.

    Pushes a fixed generic frame through the factors from the right; the
    nested spans equal those of the full product applied to the frame,
    without ever forming the ill-conditioned product.  For contracting
    products this converges to the attracting flag at the intrinsic rate.
    """
    n = face.n
    rng = np.random.default_rng(321)
    q, _ = qr_pos(rng.standard_normal((n, n)))
    for m in reversed(list(matrices)):
        q, _ = qr_pos(np.asarray(m, dtype=float) @ q)
    return Flag(face, q)


def _coord_blocks(face: FaceType) -> list[tuple[int, int]]:
    # Ordered strictly-lower block index pairs (row block, column block).
    nblocks = len(face.blocks)
    return [(bj, bi) for bj in range(nblocks) for bi in range(bj)]


def tangent_dim(face: FaceType) -> int:
    blocks = face.blocks
    return sum(
        (blocks[bj][1] - blocks[bj][0]) * (blocks[bi][1] - blocks[bi][0])
        for bj, bi in _coord_blocks(face)
    )


def _coord_entries(face: FaceType) -> list[tuple[int, int]]:
    # Global (row, col) positions of the tangent coordinates, in a fixed order.
    entries = []
    blocks = face.blocks
    for bj, bi in _coord_blocks(face):
        rlo, rhi = blocks[bj]
        clo, chi = blocks[bi]
        for c in range(clo, chi):
            for r in range(rlo, rhi):
                entries.append((r, c))
    return entries


def pack_lower(mat: np.ndarray, face: FaceType) -> np.ndarray:
    return np.array([mat[r, c] for r, c in _coord_entries(face)])


def unpack_lower(vec: np.ndarray, face: FaceType) -> np.ndarray:
    out = np.zeros((face.n, face.n))
    for x, (r, c) in zip(vec, _coord_entries(face)):
        out[r, c] = x
    return out


def action_differential(g: np.ndarray, f: Flag) -> np.ndarray:
    """Matrix of the differential of the g-action at a flag.

    Coordinates are the strictly-lower block entries of the adapted
    frames at the flag and at its image, orthonormal for the
    O(n)-invariant metric.  Per subspace level d the Grassmannian
    differential is X -> R22 X R11^{-1} with R the triangular factor of
    the image frame; block entries are extracted at the finest level
    containing them.
    """
    g = np.asarray(g, dtype=float)
    face = f.face
    n = face.n
    _, r = qr_pos(g @ f.frame)
    levels = face.dims
    r11_inv = {d: solve_triangular(r[:d, :d], np.eye(d)) for d in levels}
    r22 = {d: r[d:, d:] for d in levels}
    boundaries = face.boundaries
    # Each output column is read off at one canonical level: the boundary
    # closing the block that contains it.
    level_of_col = np.empty(n, dtype=int)
    for k in range(len(boundaries) - 1):
        level_of_col[boundaries[k]:boundaries[k + 1]] = boundaries[k + 1]
    entries = _coord_entries(face)
    m = len(entries)
    mat = np.zeros((m, m))
    for col_idx, (rr, cc) in enumerate(entries):
        out = np.zeros((n, n))
        for d in levels:
            if cc < d <= rr:
                # X at this level has a single entry at (rr - d, cc), so
                # the image block is an outer product.
                y = np.outer(r22[d][:, rr - d], r11_inv[d][cc, :])
                for c2 in range(d):
                    if level_of_col[c2] == d:
                        out[d:, c2] = y[:, c2]
        mat[:, col_idx] = pack_lower(out, face)
    return mat


def expansion_factor(g: np.ndarray, f: Flag) -> float:
    """Reciprocal operator norm of the inverse differential at the flag."""
    d = action_differential(g, f)
    return float(np.linalg.svd(d, compute_uv=False)[-1])


def expansion_cone_correlate(samples, face: FaceType, radius: float | None = None) -> dict:
    """Correlate infinitesimal expansion with cone-boundary penetration.

    Each sample is (g, flag, x); emitted pairs are
    (log expansion of g^{-1} at the flag, chamber-wall margin of g.x seen
    from x).  Fits an affine envelope; for configurations whose image
    point lies in the cone at the flag the margin equals the boundary
    distance, and for diagonal transvections the slope is exactly
    sqrt(2).
    """
    from .symmspace import cartan_vector, act_point

    from .chamber import face_boundary_distance

    pairs = []
    for g, flag, x in samples:
        g = np.asarray(g, dtype=float)
        gx = act_point(g, x)
        delta = cartan_vector(x, gx)
        margin = face_boundary_distance(delta, face)
        if radius is not None and margin > radius:
            continue
        log_eps = float(np.log(expansion_factor(np.linalg.inv(g), flag)))
        pairs.append((log_eps, margin))
    arr = np.array(pairs) if pairs else np.zeros((0, 2))
    out = {"pairs": arr, "count": len(pairs)}
    if len(pairs) >= 2 and float(np.ptp(arr[:, 1])) > 1e-12:
        slope, intercept = np.polyfit(arr[:, 1], arr[:, 0], 1)
        resid = arr[:, 0] - (slope * arr[:, 1] + intercept)
        out.update(
            slope=float(slope),
            intercept=float(intercept),
            envelope_upper=float(resid.max()),
            envelope_lower=float(resid.min()),
        )
    return out
