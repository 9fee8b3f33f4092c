"""Metric geometry of the symmetric space of SL(n,R).

Points are unit-determinant symmetric positive-definite matrices, with
base point the identity; the canonical group representative of a point
is its symmetric square root, which removes the rotation ambiguity from
all flag computations.  The vector-valued distance takes values in the
model chamber; a group element g acts on points by g x g^T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .chamber import (
    FaceType,
    ThetaSpec,
    face_boundary_distance,
    flat_cone_deficit,
    iota_face,
    project_to_face_sector,
    theta_membership,
)
from .errors import IllConditioned, VanishingGap
from .flags import Flag, GAP_TOL, flag_distance, qr_pos
from .reports import PropertyReport

DET_TOL = 1e-8
EIG_CLUSTER_TOL = 1e-12


def _mat(x) -> np.ndarray:
    if isinstance(x, (Point, GroupElement)):
        return x.matrix if isinstance(x, GroupElement) else x.spd
    return np.asarray(x, dtype=float)


@dataclass(frozen=True)
class GroupElement:
    """An element of SL(n,R)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        if abs(np.linalg.det(m) - 1.0) > DET_TOL:
            raise ValueError(f"determinant {np.linalg.det(m):.6f} is not 1")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class Point:
    """A point of the symmetric space: unit-determinant SPD matrix."""

    spd: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.spd, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square")
        if np.linalg.norm(m - m.T) > 1e-8 * max(1.0, np.linalg.norm(m)):
            raise ValueError("matrix is not symmetric")
        evals = np.linalg.eigvalsh(m)
        if evals[0] <= 0.0:
            raise ValueError("matrix is not positive definite")
        if abs(np.linalg.det(m) - 1.0) > DET_TOL * max(1.0, abs(np.linalg.det(m))):
            raise ValueError(f"determinant {np.linalg.det(m):.6f} is not 1")
        object.__setattr__(self, "spd", m)


def identity_point(n: int) -> np.ndarray:
    return np.eye(n)


def act_point(g, x) -> np.ndarray:
    """Isometric action of a group element on a point: g x g^T."""
    g = _mat(g)
    return g @ _mat(x) @ g.T


def normalize_det(m: np.ndarray) -> np.ndarray:
    """Rescale to unit determinant (for drifting products of unit-det factors)."""
    n = m.shape[0]
    d = np.linalg.det(m)
    if not np.isfinite(d) or d == 0.0:
        raise IllConditioned("determinant is not resolvable in double precision")
    return m / abs(d) ** (1.0 / n)


def spd_eigh(x) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of an SPD matrix, eigenvalues ascending.

    Rejects loss of positivity; gap degeneracy is policed separately by
    the vanishing-gap gates of the flag computations.
    """
    x = _mat(x)
    evals, evecs = np.linalg.eigh(0.5 * (x + x.T))
    if evals[0] <= 0.0:
        raise IllConditioned(f"eigenvalue {evals[0]:.3e} is not positive")
    return evals, evecs


def spd_power(x, p: float) -> np.ndarray:
    evals, evecs = spd_eigh(x)
    return (evecs * evals**p) @ evecs.T


def spd_sqrt(x) -> np.ndarray:
    return spd_power(x, 0.5)


def spd_inv_sqrt(x) -> np.ndarray:
    return spd_power(x, -0.5)


def cartan_vector(x, y) -> np.ndarray:
    """Vector-valued distance: sorted half-log spectrum of x^{-1} y.

    Computed through the symmetric congruence x^{-1/2} y x^{-1/2} for
    stability.  Swapping the arguments applies the opposition
    involution, and the euclidean norm is the Riemannian distance.
    """
    xi = spd_inv_sqrt(x)
    z = xi @ _mat(y) @ xi
    evals, _ = spd_eigh(z)
    delta = 0.5 * np.log(evals[::-1])
    delta -= delta.mean()  # remove unit-determinant drift
    return delta


def riemannian_distance(x, y) -> float:
    return float(np.linalg.norm(cartan_vector(x, y)))


def taumod_distance(x, y, face: FaceType) -> np.ndarray:
    """Face-projected vector-valued distance (1-Lipschitz coarsification)."""
    return project_to_face_sector(cartan_vector(x, y), face)


def relative_flag(x, y, face: FaceType, tol: float = GAP_TOL) -> tuple[Flag, np.ndarray]:
    """The flag spanned by a regular segment from x to y.

    With g the canonical square root of x, the flag consists of the
    leading left-singular subspaces of g^{-1} y^{1/2} at the kept
    dimensions, translated back by g.  Raises VanishingGap when a kept
    wall gap of the segment is below tolerance.
    """
    gx = spd_sqrt(x)
    gxi = spd_inv_sqrt(x)
    m = gxi @ spd_sqrt(y)
    u, s, _ = np.linalg.svd(m)
    logs = np.log(s)
    logs -= logs.mean()
    idx = np.array(face.dims, dtype=int)
    gaps = logs[idx - 1] - logs[idx]
    if gaps.min() < tol:
        raise VanishingGap(f"segment gap {gaps.min():.3e} below {tol:.1e} at walls {face.dims}")
    frame, _ = qr_pos(gx @ u)
    return Flag(face, frame), gaps


def x_opposite_flag(x, flag: Flag) -> Flag:
    """The unique flag opposite to the given one through the point x."""
    gx = spd_sqrt(x)
    gxi = spd_inv_sqrt(x)
    q0, _ = qr_pos(gxi @ flag.frame)
    frame, _ = qr_pos(gx @ q0[:, ::-1])
    return Flag(iota_face(flag.face), frame)


@dataclass(frozen=True)
class WeylConeRef:
    """A Weyl cone: a tip point and the flag of directions it opens toward."""

    tip: np.ndarray
    flag: Flag

    def __post_init__(self):
        object.__setattr__(self, "tip", _mat(self.tip))


@dataclass(frozen=True)
class ConeVerdict:
    kind: str  # "interior" | "boundary" | "outside"
    margin: float | None
    diagnostics: dict

    @property
    def inside(self) -> bool:
        return self.kind in ("interior", "boundary")


def _closed_cone_test(z: np.ndarray, subspaces: list[np.ndarray], tol: float) -> bool:
    # z SPD in the frame where the flag subspaces are given column spans.
    # Membership in the closed cone needs every subspace z-invariant with
    # spectrum dominating its complement.
    for w in subspaces:
        d = w.shape[1]
        u, _, _ = np.linalg.svd(w, full_matrices=True)
        comp = u[:, d:]
        off = comp.T @ z @ w
        if np.linalg.norm(off) > tol * max(1.0, np.linalg.norm(z)):
            return False
        lo = np.linalg.eigvalsh(w.T @ z @ w)[0]
        hi = np.linalg.eigvalsh(comp.T @ z @ comp)[-1]
        if lo < hi - tol * max(1.0, abs(hi)):
            return False
    return True


def cone_query(y, cone: WeylConeRef, tol: float = 1e-6) -> ConeVerdict:
    """Locate a point relative to a Weyl cone.

    Interior iff the segment from the tip is regular of the cone's type
    and its flag matches the cone flag within tolerance; the margin then
    equals the distance from the point to the cone boundary.  The tip and
    closed-boundary cases are decided by an invariant-subspace test.
    Outside verdicts carry the flag mismatch or the vanishing-gap reason.
    """
    face = cone.flag.face
    x = cone.tip
    delta = cartan_vector(x, y)
    norm = float(np.linalg.norm(delta))
    if norm <= 1e-10:
        return ConeVerdict("boundary", 0.0, {"reason": "tip"})
    try:
        seg_flag, gaps = relative_flag(x, y, face)
    except VanishingGap as exc:
        # Possibly on the cone boundary: decide by invariance of the
        # flag subspaces under the transported point.
        gxi = spd_inv_sqrt(x)
        z = gxi @ _mat(y) @ gxi
        subspaces = []
        for d in face.dims:
            w, _ = qr_pos(gxi @ cone.flag.basis(d))
            subspaces.append(w[:, :d])
        if _closed_cone_test(z, subspaces, max(tol, 1e-8)):
            return ConeVerdict("boundary", 0.0, {"reason": "vanishing-gap"})
        return ConeVerdict("outside", None, {"reason": "vanishing-gap", "detail": str(exc)})
    mismatch = flag_distance(seg_flag, cone.flag)
    if mismatch < tol:
        margin = face_boundary_distance(delta, face)
        return ConeVerdict("interior", margin, {"flag_mismatch": mismatch})
    return ConeVerdict("outside", None, {"flag_mismatch": mismatch, "gaps": gaps})


@dataclass(frozen=True)
class DiamondRef:
    """A diamond: the intersection of two opposite Weyl cones.

    ``flag_plus`` has the reference face type and sits at infinity beyond
    ``tip_plus``; ``flag_minus`` has the opposite type.  An optional type
    set restricts both cones.
    """

    tip_minus: np.ndarray
    tip_plus: np.ndarray
    flag_minus: Flag
    flag_plus: Flag
    theta: ThetaSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "tip_minus", _mat(self.tip_minus))
        object.__setattr__(self, "tip_plus", _mat(self.tip_plus))
        from .flags import transversality_margin

        if transversality_margin(self.flag_plus, self.flag_minus) <= 0.0:
            raise IllConditioned("diamond flags are not antipodal")


def make_diamond(x, y, face: FaceType, theta: ThetaSpec | None = None, tol: float = GAP_TOL) -> DiamondRef:
    """Diamond spanned by a regular segment, flags from the endpoints."""
    plus, _ = relative_flag(x, y, face, tol=tol)
    minus, _ = relative_flag(y, x, iota_face(face), tol=tol)
    return DiamondRef(_mat(x), _mat(y), minus, plus, theta)


def diamond_query(p, diamond: DiamondRef, tol: float = 1e-6) -> tuple[bool, dict]:
    """Conjunction of the two cone memberships (and type membership if set)."""
    fwd = cone_query(p, WeylConeRef(diamond.tip_minus, diamond.flag_plus), tol)
    bwd = cone_query(p, WeylConeRef(diamond.tip_plus, diamond.flag_minus), tol)
    margins = {
        "forward": fwd.margin,
        "backward": bwd.margin,
        "forward_kind": fwd.kind,
        "backward_kind": bwd.kind,
        "forward_diag": fwd.diagnostics,
        "backward_diag": bwd.diagnostics,
    }
    member = fwd.inside and bwd.inside
    if member and diamond.theta is not None:
        face = diamond.flag_plus.face
        for (a, b, key) in (
            (diamond.tip_minus, p, "theta_forward"),
            (p, diamond.tip_plus, "theta_backward"),
        ):
            delta = cartan_vector(a, b)
            if float(np.linalg.norm(delta)) <= 1e-10:
                margins[key] = 0.0
                continue
            ok, tmargin = theta_membership(delta, ThetaSpec(face, diamond.theta.gap))
            margins[key] = tmargin
            member = member and ok
    return member, margins


@dataclass(frozen=True)
class ParallelSetRef:
    """A parallel set, via a basis adapting it to block-diagonal form.

    The columns of ``basis`` send the standard coordinate flags to the
    pair of antipodal flags; conjugating a point by the inverse basis
    turns membership into block-diagonality.
    """

    flag_minus: Flag
    flag_plus: Flag
    basis: np.ndarray


def subspace_intersection(a: np.ndarray, b: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis of the intersection of two column spans."""
    pa = a @ a.T
    pb = b @ b.T
    evals, evecs = np.linalg.eigh(pa @ pb + pb @ pa)
    # intersection vectors are eigenvectors of value 2 of (PaPb + PbPa)
    return evecs[:, -dim:][:, ::-1]


def make_parallel_set(flag_minus: Flag, flag_plus: Flag, margin_floor: float = 1e-6) -> ParallelSetRef:
    """Assemble the adapted basis from an antipodal flag pair."""
    from .flags import transversality_margin

    if transversality_margin(flag_plus, flag_minus) < margin_floor:
        raise IllConditioned("transversality margin below floor")
    face = flag_plus.face
    n = face.n
    bounds = face.boundaries
    cols = []
    for k in range(len(bounds) - 1):
        lo, hi = bounds[k], bounds[k + 1]
        v = flag_plus.basis(hi)
        w = flag_minus.basis(n - lo) if lo > 0 else np.eye(n)
        inter = subspace_intersection(v, w, hi - lo)
        cols.append(inter)
    basis = np.hstack(cols)
    det = np.linalg.det(basis)
    if abs(det) < 1e-12:
        raise IllConditioned("adapted basis is singular")
    if det < 0:
        basis = basis.copy()
        basis[:, 0] = -basis[:, 0]
        det = -det
    basis = basis / det ** (1.0 / n)
    return ParallelSetRef(flag_minus, flag_plus, basis)


def _block_diag_part(z: np.ndarray, face: FaceType) -> np.ndarray:
    out = np.zeros_like(z)
    for lo, hi in face.blocks:
        out[lo:hi, lo:hi] = z[lo:hi, lo:hi]
    return out


def factored_block_coords(w: np.ndarray, face: FaceType) -> tuple[np.ndarray, float]:
    """Flat coordinates and off-set distance of a factored point.

    The point is w w^T in coordinates where the parallel set is the
    block-diagonal model.  Returns (coords, off): coords are the centered
    block log singular values of the factor (the flat coordinates of the
    block-diagonal part), off is the distance from the point to that
    part.  Working with the factor instead of w w^T avoids squaring the
    condition number on long segments.
    """
    n = w.shape[0]
    v = np.empty(n)
    rows = []
    for lo, hi in face.blocks:
        if hi - lo == 1:
            s1 = float(np.linalg.norm(w[lo]))
            if s1 <= 0.0:
                raise IllConditioned("singular factor block")
            v[lo] = np.log(s1)
            rows.append(w[lo:lo + 1] / s1)
            continue
        u, s, vt = np.linalg.svd(w[lo:hi, :], full_matrices=False)
        if s[-1] <= 0.0:
            raise IllConditioned("singular factor block")
        v[lo:hi] = np.log(s)
        rows.append(u @ vt)
    v -= v.mean()
    whitened = np.vstack(rows)
    sig = np.linalg.svd(whitened, compute_uv=False)
    logs = np.log(np.maximum(sig, 1e-300))
    logs -= logs.mean()
    off = float(np.linalg.norm(logs))
    return v, off


def factored_off_inverse(winv: np.ndarray, face: FaceType) -> float:
    """Off-parallel-set distance computed from the inverse factor.

    Column-blockwise orthonormalization of the inverse factor inverts the
    whitened matrix of the direct factor, so the centered log spectrum
    has the same norm; reliable exactly where the direct factor loses its
    small singular values.
    """
    cols = []
    for lo, hi in face.blocks:
        block = winv[:, lo:hi]
        if hi - lo == 1:
            s1 = float(np.linalg.norm(block))
            if s1 <= 0.0:
                raise IllConditioned("singular inverse-factor block")
            cols.append(block / s1)
            continue
        u, s, vt = np.linalg.svd(block, full_matrices=False)
        if s[-1] <= 0.0:
            raise IllConditioned("singular inverse-factor block")
        cols.append(u @ vt)
    chat = np.hstack(cols)
    sig = np.linalg.svd(chat, compute_uv=False)
    logs = np.log(np.maximum(sig, 1e-300))
    logs -= logs.mean()
    return float(np.linalg.norm(logs))


def factored_coords_pair(w: np.ndarray, winv: np.ndarray, face: FaceType) -> tuple[np.ndarray, float]:
    """Two-sided flat coordinates and off-set distance.

    Per block the log singular values are taken from whichever factor
    resolves them (the direct factor loses values below its noise floor,
    the inverse factor the reciprocal ones); the off distance is the
    smaller of the two complete estimates.
    """
    n = w.shape[0]
    v = np.empty(n)
    norm_w = max(float(np.abs(w).max()), 1e-300)
    norm_wi = max(float(np.abs(winv).max()), 1e-300)
    rows = []
    cols = []
    for lo, hi in face.blocks:
        if hi - lo == 1:
            s1 = max(float(np.linalg.norm(w[lo])), 1e-300)
            s1i = max(float(np.linalg.norm(winv[:, lo])), 1e-300)
            v[lo] = np.log(s1) if s1 / norm_w >= s1i / norm_wi else -np.log(s1i)
            rows.append(w[lo:lo + 1] / s1)
            cols.append(winv[:, lo:lo + 1] / s1i)
            continue
        ud, sd, vtd = np.linalg.svd(w[lo:hi, :], full_matrices=False)
        ui, si, vti = np.linalg.svd(winv[:, lo:hi], full_matrices=False)
        sd = np.maximum(sd, 1e-300)
        si = np.maximum(si, 1e-300)
        if sd[-1] / norm_w >= si[-1] / norm_wi:
            v[lo:hi] = np.log(sd)
        else:
            v[lo:hi] = -np.log(si)[::-1]
        rows.append(ud @ vtd)
        cols.append(ui @ vti)
    v -= v.mean()
    offs = []
    for mat in (np.vstack(rows), np.hstack(cols)):
        sig = np.linalg.svd(mat, compute_uv=False)
        logs = np.log(np.maximum(sig, 1e-300))
        logs -= logs.mean()
        offs.append(float(np.linalg.norm(logs)))
    return v, min(offs)


def parallel_set_distance(p, pset: ParallelSetRef, descent: bool = True) -> tuple[float, float]:
    """Distance from a point to a parallel set: certified upper bound + descent.

    The upper bound is the distance to the normalized block-diagonal part
    of the conjugated point; the refinement runs a local minimization over
    block-diagonal SPD matrices started there.  Near-zero refined values
    certify membership; there is no closed form for the exact projection.
    """
    face = pset.flag_plus.face
    n = face.n
    binv = np.linalg.inv(pset.basis)
    w = binv @ spd_sqrt(p)
    coords, upper = factored_block_coords(w, face)
    if not descent:
        return upper, upper
    # Parameterize candidates by symmetric log-blocks (det-normalized).
    blocks = face.blocks
    z = w @ w.T
    dnorm = normalize_det(_block_diag_part(z, face))
    packs = []
    for lo, hi in blocks:
        b = hi - lo
        evals, evecs = np.linalg.eigh(dnorm[lo:hi, lo:hi])
        logm = (evecs * np.log(np.maximum(evals, 1e-300))) @ evecs.T
        packs.append(logm[np.triu_indices(b)])
    x0 = np.concatenate(packs)

    def inv_sqrt_blocks(params):
        mats = []
        pos = 0
        logdet = 0.0
        for lo, hi in blocks:
            b = hi - lo
            k = b * (b + 1) // 2
            sym = np.zeros((b, b))
            sym[np.triu_indices(b)] = params[pos:pos + k]
            sym = sym + sym.T - np.diag(np.diag(sym))
            pos += k
            mats.append(sym)
            logdet += np.trace(sym)
        shift = logdet / n
        out = np.zeros((n, n))
        for (lo, hi), sym in zip(blocks, mats):
            evals, evecs = np.linalg.eigh(sym - shift * np.eye(hi - lo))
            out[lo:hi, lo:hi] = (evecs * np.exp(-0.5 * evals)) @ evecs.T
        return out

    def objective(params):
        c = inv_sqrt_blocks(params) @ w
        logs = np.log(np.maximum(np.linalg.svd(c, compute_uv=False), 1e-300))
        logs -= logs.mean()
        return float(logs @ logs)

    res = minimize(objective, x0, method="Nelder-Mead",
                   options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000})
    refined = min(upper, math.sqrt(max(res.fun, 0.0)))
    return upper, refined


def adapted_coordinates(x, flag_plus: Flag):
    """Orthogonal adapted frame at a point for the parallel set through it.

    Returns (basis Q, opposite flag): Q maps the standard flags to the
    pair (opposite flag, flag) and takes x to the identity, so the
    parallel set through x toward the flag becomes the block-diagonal
    model with tip coordinates zero.
    """
    gxi = spd_inv_sqrt(x)
    gx = spd_sqrt(x)
    q0, _ = qr_pos(gxi @ flag_plus.frame)
    basis = gx @ q0
    opp = Flag(iota_face(flag_plus.face), np.asarray(qr_pos(gx @ q0[:, ::-1])[0]))
    return basis, opp


def cone_deficit(p, cone: WeylConeRef) -> float:
    """Distance-like deficit of a point from a Weyl cone.

    Combines the off-parallel-set upper bound with the in-flat chamber
    deficit of the block coordinates; zero for cone members.
    """
    face = cone.flag.face
    basis, _ = adapted_coordinates(cone.tip, cone.flag)
    w = np.linalg.inv(basis) @ spd_sqrt(p)
    v, off = factored_block_coords(w, face)
    return max(off, flat_cone_deficit(v, face))


def diamond_deficit(p, diamond: DiamondRef) -> dict:
    """Deficit of a point from a diamond, in adapted coordinates.

    Returns the off-parallel-set bound, the two flat cone deficits
    relative to the tips, and their max; all vanish for members.
    """
    face = diamond.flag_plus.face
    basis, _ = adapted_coordinates(diamond.tip_minus, diamond.flag_plus)
    binv = np.linalg.inv(basis)
    v, off = factored_block_coords(binv @ spd_sqrt(p), face)
    a_plus, _ = factored_block_coords(binv @ spd_sqrt(diamond.tip_plus), face)
    fwd = flat_cone_deficit(v, face)
    bwd = flat_cone_deficit(a_plus - v, face)
    total = max(off, fwd, bwd)
    return {"off_parallel": off, "forward": fwd, "backward": bwd, "deficit": total}


def finsler_verify(path, face: FaceType, theta: ThetaSpec | None = None,
                   tol: float = 1e-6) -> PropertyReport:
    """Check the cone-nesting property of a discrete path.

    The governing flags are estimated from the endpoints; every ordered
    pair must lie in the forward cone (and be of the required type when a
    type set is given).  Reports the worst margins.
    """
    pts = [_mat(p) for p in path]
    if len(pts) < 2:
        raise ValueError("need a path of length >= 2")
    plus, _ = relative_flag(pts[0], pts[-1], face)
    minus, _ = relative_flag(pts[-1], pts[0], iota_face(face))
    worst_face = math.inf
    worst_flag = 0.0
    worst_theta = math.inf
    ok = True
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            verdict = cone_query(pts[j], WeylConeRef(pts[i], plus), tol)
            if not verdict.inside:
                ok = False
                worst_flag = max(worst_flag, verdict.diagnostics.get("flag_mismatch", math.inf))
                continue
            if verdict.margin is not None:
                worst_face = min(worst_face, verdict.margin)
            worst_flag = max(worst_flag, verdict.diagnostics.get("flag_mismatch", 0.0))
            if theta is not None:
                delta = cartan_vector(pts[i], pts[j])
                _, tmargin = theta_membership(delta, theta)
                worst_theta = min(worst_theta, tmargin)
                if tmargin < 0.0:
                    ok = False
    report = PropertyReport(
        name="finsler-geodesic",
        verdict=ok,
        constants={
            "worst_face_margin": None if worst_face is math.inf else worst_face,
            "worst_flag_mismatch": worst_flag,
            "worst_theta_margin": None if worst_theta is math.inf else worst_theta,
        },
        thresholds={"tol": tol, "theta_gap": None if theta is None else theta.gap},
        details={"length": len(pts)},
    )
    return report


def delta_projection(path, face: FaceType) -> tuple[np.ndarray, np.ndarray]:
    """Chamber-valued and face-projected paths seen from the first point."""
    pts = [_mat(p) for p in path]
    if not pts:
        raise ValueError("need a path of length >= 1")
    deltas = np.stack([cartan_vector(pts[0], p) for p in pts])
    taus = np.stack([project_to_face_sector(d, face) for d in deltas])
    return deltas, taus
