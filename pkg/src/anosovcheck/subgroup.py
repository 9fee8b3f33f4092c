"""Subgroup-level property checkers for matrix-generated free groups.

Only free groups with reduced-word geodesics are supported: reduced
words over the generators and their inverses are taken as the intrinsic
geodesics of the word metric.  Boundary points are represented by
prefix schemes whose flag values carry recorded Cauchy residuals.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .chamber import (
    FaceType,
    face_boundary_distance,
    flat_cone_deficit,
    flat_cone_margin,
)
from .dynamics import conical_check
from .errors import BudgetExceeded, PingPongFailed, TransversalityTooSmall, VanishingGap
from .flags import (
    Flag,
    act_on_flag,
    action_differential,
    antipodality_margin,
    attractive_flag,
    expansion_factor,
    flag_distance,
    qr_pos,
    stable_product_flag,
    tangent_dim,
)
from .reports import PropertyReport
from .symmspace import (
    diamond_query,
    factored_coords_pair,
    identity_point,
    make_diamond,
    normalize_det,
)

GAP_TOL = 1e-9


@dataclass(frozen=True)
class ReducedWord:
    """A reduced word: signed 1-based generator indices, no cancellation."""

    letters: tuple[int, ...]

    def __post_init__(self):
        ls = tuple(int(x) for x in self.letters)
        if any(x == 0 for x in ls):
            raise ValueError("letters are nonzero signed indices")
        if any(a == -b for a, b in zip(ls, ls[1:])):
            raise ValueError("word is not reduced")
        object.__setattr__(self, "letters", ls)

    def __len__(self):
        return len(self.letters)

    def inverse(self) -> "ReducedWord":
        return ReducedWord(tuple(-x for x in reversed(self.letters)))


@dataclass(frozen=True)
class FreeGroupPresentation:
    """Matrix generators assumed (or certified) to generate freely."""

    generators: tuple[np.ndarray, ...]
    assumed_free: bool = True

    def __post_init__(self):
        gens = tuple(np.asarray(g, dtype=float) for g in self.generators)
        if not gens:
            raise ValueError("need at least one generator")
        n = gens[0].shape[0]
        for g in gens:
            if g.shape != (n, n):
                raise ValueError("generators must share a common size")
            if abs(np.linalg.det(g) - 1.0) > 1e-8:
                raise ValueError(f"generator determinant {np.linalg.det(g):.8f} is not 1")
        object.__setattr__(self, "generators", gens)

    @property
    def rank(self) -> int:
        return len(self.generators)

    @property
    def n(self) -> int:
        return self.generators[0].shape[0]

    def letter_matrix(self, letter: int) -> np.ndarray:
        g = self.generators[abs(letter) - 1]
        return g if letter > 0 else np.linalg.inv(g)

    def word_matrix(self, word: ReducedWord) -> np.ndarray:
        m = np.eye(self.n)
        for lt in word.letters:
            m = m @ self.letter_matrix(lt)
        return m


def _letter_order(rank: int) -> list[int]:
    out = []
    for i in range(1, rank + 1):
        out.extend((i, -i))
    return out


def word_count(rank: int, length: int) -> int:
    """Number of reduced words of length 1..length."""
    if rank == 0:
        return 0
    total = 0
    per = 2 * rank
    for _ in range(length):
        total += per
        per *= 2 * rank - 1
    return total


def enumerate_geodesics(pres: FreeGroupPresentation, length: int,
                        max_words: int = 2_000_000):
    """All reduced words of length 1..length, in depth-first letter order."""
    if length < 1:
        raise ValueError("need length >= 1")
    if word_count(pres.rank, length) > max_words:
        raise BudgetExceeded(
            f"{word_count(pres.rank, length)} words exceed budget {max_words}")
    order = _letter_order(pres.rank)
    letters: list[int] = []

    def recurse():
        if letters:
            yield ReducedWord(tuple(letters))
        if len(letters) == length:
            return
        for lt in order:
            if letters and lt == -letters[-1]:
                continue
            letters.append(lt)
            yield from recurse()
            letters.pop()

    yield from recurse()


def _iter_prefix_paths(pres: FreeGroupPresentation, length: int):
    """DFS over reduced words carrying the full prefix-matrix stack."""
    order = _letter_order(pres.rank)
    mats = {lt: pres.letter_matrix(lt) for lt in order}
    letters: list[int] = []
    stack = [np.eye(pres.n)]

    def recurse():
        if letters:
            yield tuple(letters), stack
        if len(letters) == length:
            return
        for lt in order:
            if letters and lt == -letters[-1]:
                continue
            letters.append(lt)
            stack.append(stack[-1] @ mats[lt])
            yield from recurse()
            stack.pop()
            letters.pop()

    yield from recurse()


def _centered_log_svals(m: np.ndarray) -> np.ndarray:
    s = np.linalg.svd(m, compute_uv=False)
    logs = np.log(np.maximum(s, 1e-300))
    return logs - logs.mean()


def _two_sided_log_svals(m: np.ndarray, minv: np.ndarray) -> np.ndarray:
    """Centered log singular values, each read from the resolving side.

    A direct SVD loses values below eps times the top one; for a
    unit-determinant matrix with an exactly accumulated inverse, the
    small values are the reciprocals of the inverse's large ones.
    """
    s = np.linalg.svd(m, compute_uv=False)
    si = np.linalg.svd(minv, compute_uv=False)
    n = len(s)
    logs = np.empty(n)
    for i in range(n):
        logs[i] = np.log(s[i]) if s[i] >= 1.0 else -np.log(si[n - 1 - i])
    return logs - logs.mean()


def power_probe(pres: FreeGroupPresentation, face: FaceType,
                max_power: int = 256, norm_cap: float = 1e6):
    """Orbit growth along generator powers, stopped before precision loss.

    Yields (generator index, power, chamber vector).  Distorted cyclic
    subgroups keep the norms small and are probed deep; strongly
    proximal generators hit the cap after a few steps, where the
    enumerated words already witness linear growth.
    """
    for i, g in enumerate(pres.generators, start=1):
        m = np.eye(pres.n)
        for k in range(1, max_power + 1):
            m = m @ g
            if k % 16 == 0:
                m = normalize_det(m)
            s = np.linalg.svd(m, compute_uv=False)
            if s[0] > norm_cap:
                break
            logs = np.log(s)
            yield i, k, logs - logs.mean()


def uru_check(pres: FreeGroupPresentation, face: FaceType, length: int,
              c_floor: float = 0.05, ratio_floor: float = 0.02,
              power_depth: int = 256, max_words: int = 2_000_000) -> PropertyReport:
    """Undistortion and uniform regularity over all geodesic words.

    Fits the best linear lower bound on orbit distance versus word
    length; the certificate slope is the worst distance/length ratio on
    tail lengths and along deep generator-power probes.  Uniform
    regularity takes the worst wall-margin/norm ratio on the tail.
    """
    if length < 4:
        raise ValueError("need length >= 4")
    if word_count(pres.rank, length) > max_words:
        raise BudgetExceeded("word budget exceeded")
    order = _letter_order(pres.rank)
    mats = {lt: pres.letter_matrix(lt) for lt in order}
    dims = np.array(face.dims, dtype=int)
    sqrt2 = math.sqrt(2.0)
    per_len_min = np.full(length + 1, np.inf)
    per_len_argmin: dict[int, tuple[int, ...]] = {}
    tail_start = max(2, length // 2 + 1)
    ratio_min = np.inf
    ratio_witness: tuple[int, ...] = ()

    letters: list[int] = []

    def recurse(m: np.ndarray, minv: np.ndarray):
        nonlocal ratio_min, ratio_witness
        el = len(letters)
        if el:
            delta = _two_sided_log_svals(m, minv)
            dist = float(np.linalg.norm(delta))
            if dist < per_len_min[el]:
                per_len_min[el] = dist
                per_len_argmin[el] = tuple(letters)
            if el >= tail_start and dist > 0:
                margin = float((delta[dims - 1] - delta[dims]).min()) / sqrt2
                ratio = margin / dist
                if ratio < ratio_min:
                    ratio_min = ratio
                    ratio_witness = tuple(letters)
        if el == length:
            return
        for lt in order:
            if letters and lt == -letters[-1]:
                continue
            letters.append(lt)
            recurse(m @ mats[lt], mats[-lt] @ minv)
            letters.pop()

    recurse(np.eye(pres.n), np.eye(pres.n))

    probe_pts = []
    for i, k, delta in power_probe(pres, face, max_power=power_depth):
        dist = float(np.linalg.norm(delta))
        ratio = face_boundary_distance(np.sort(delta)[::-1], face) / max(dist, 1e-300)
        probe_pts.append((i, k, dist, ratio))

    lengths = np.arange(1, length + 1, dtype=float)
    mins = per_len_min[1:]
    c_fit, intercept = np.polyfit(lengths, mins, 1)
    c_prime = float(max(0.0, np.max(c_fit * lengths - mins)))
    cert_pts = [(el, per_len_min[el]) for el in range(tail_start, length + 1)]
    cert_pts += [(k, d) for _, k, d, _ in probe_pts if k >= tail_start]
    c_certificate = min(d / el for el, d in cert_pts)
    probe_ratio_min = min((r for _, k, _, r in probe_pts if k >= tail_start), default=np.inf)
    ratio_all = float(min(ratio_min, probe_ratio_min))

    undistorted = bool(c_certificate >= c_floor)
    uniformly_regular = bool(ratio_all >= ratio_floor)
    return PropertyReport(
        name="uru",
        verdict=undistorted and uniformly_regular,
        constants={
            "c": float(c_fit),
            "c_prime": c_prime,
            "c_certificate": float(c_certificate),
            "uniform_ratio_min": ratio_all,
            "per_length_min": per_len_min[1:],
        },
        thresholds={
            "c_floor": c_floor,
            "ratio_floor": ratio_floor,
            "length": length,
            "tail_start": tail_start,
            "power_depth": power_depth,
        },
        witnesses={
            "ratio_word": list(ratio_witness),
            "slowest_words": {str(el): list(w) for el, w in sorted(per_len_argmin.items())},
            "probe_tail": [list(p) for p in probe_pts[-4:]],
        },
        details={
            "undistorted": undistorted,
            "uniformly_regular": uniformly_regular,
            "probe_points": [list(p) for p in probe_pts],
        },
    )


def morse_check(pres: FreeGroupPresentation, face: FaceType, length: int,
                rho_cap: float = 1.0, theta_floor: float = 0.02,
                gap_tol: float = GAP_TOL, query_stride: int = 29,
                max_words: int = 2_000_000, threads: int = 1) -> PropertyReport:
    """Closeness of orbit segments to diamonds, quantified by a deficit.

    Every reduced word is the canonical representative of all its
    translates, so scanning each word once with the base point and its
    endpoint as tips covers every sub-segment of every longer geodesic.
    The deficit of an interior orbit point combines its off-parallel-set
    distance with the in-flat chamber deficits toward both tips; a word
    and its inverse describe one segment seen from either tip, so each
    configuration takes the better-resolved of the two evaluations.  The
    fitted rho is the worst deficit, the fitted type gap the worst
    normalized wall gap.  Irregular words are Morse failures.
    """
    if word_count(pres.rank, length) > max_words:
        raise BudgetExceeded("word budget exceeded")
    dims = np.array(face.dims, dtype=int)

    def scan_branch(first: int) -> dict:
        out = {
            "raw": {},
            "theta_gap": np.inf,
            "vanishing": [],
            "query_checked": 0,
            "query_failed": 0,
        }
        counter = 0
        order = _letter_order(pres.rank)
        mats = {lt: pres.letter_matrix(lt) for lt in order}
        letters = [first]
        stack = [np.eye(pres.n), mats[first]]
        inv_stack = [np.eye(pres.n), mats[-first]]

        def handle_word():
            nonlocal counter
            m = stack[-1]
            minv = inv_stack[-1]
            el = len(letters)
            u, s, _ = np.linalg.svd(m)
            logs = _two_sided_log_svals(m, minv)
            gaps = logs[dims - 1] - logs[dims]
            if gaps.min() < gap_tol:
                out["vanishing"].append(list(letters))
                return
            norm = float(np.linalg.norm(logs))
            out["theta_gap"] = min(out["theta_gap"], float(gaps.min()) / norm)
            ut = u.T
            a_plus, _ = factored_coords_pair(ut @ m, minv @ u, face)
            word = tuple(letters)
            deficits = np.empty(el - 1) if el > 1 else np.empty(0)
            for t in range(1, el):
                v, off = factored_coords_pair(ut @ stack[t], inv_stack[t] @ u, face)
                fwd = flat_cone_deficit(v, face)
                bwd = flat_cone_deficit(a_plus - v, face)
                deficits[t - 1] = max(off, fwd, bwd)
            if el > 1:
                out["raw"][word] = deficits
            counter += 1
            # Sampled consistency of the query route against the deficit:
            # strict members must have near-zero deficit and vice versa.
            if el >= 2 and counter % query_stride == 0 and s[0] < 1e6:
                try:
                    dia = make_diamond(np.eye(pres.n), m @ m.T, face, tol=gap_tol)
                    mid = stack[el // 2]
                    member, _ = diamond_query(mid @ mid.T, dia, tol=0.25)
                    deficit_mid = deficits[el // 2 - 1]
                    out["query_checked"] += 1
                    if (member and deficit_mid > 0.25) or (not member and deficit_mid < 1e-8):
                        out["query_failed"] += 1
                except Exception:
                    pass

        def recurse():
            handle_word()
            if len(letters) == length:
                return
            for lt in order:
                if lt == -letters[-1]:
                    continue
                letters.append(lt)
                stack.append(stack[-1] @ mats[lt])
                inv_stack.append(mats[-lt] @ inv_stack[-1])
                recurse()
                stack.pop()
                inv_stack.pop()
                letters.pop()

        recurse()
        return out

    firsts = _letter_order(pres.rank)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            branch_results = list(ex.map(scan_branch, firsts))
    else:
        branch_results = [scan_branch(f) for f in firsts]

    raw: dict[tuple[int, ...], np.ndarray] = {}
    theta_gap = np.inf
    vanishing: list[list[int]] = []
    checked = failed = 0
    for res in branch_results:
        raw.update(res["raw"])
        theta_gap = min(theta_gap, res["theta_gap"])
        vanishing.extend(res["vanishing"])
        checked += res["query_checked"]
        failed += res["query_failed"]

    # Aggregate each configuration with its mirror: word w at interior
    # index t is the same segment as w^{-1} at index len(w) - t.
    rho_per_len = np.zeros(length + 1)
    worst = (None, None, -1.0)
    for word, deficits in raw.items():
        el = len(word)
        mirror = tuple(-x for x in reversed(word))
        mirror_deficits = raw.get(mirror)
        for t in range(1, el):
            val = deficits[t - 1]
            if mirror_deficits is not None:
                val = min(val, mirror_deficits[el - t - 1])
            if val > rho_per_len[el]:
                rho_per_len[el] = val
            if val > worst[2]:
                worst = (list(word), t, float(val))

    rho_cumulative = np.maximum.accumulate(rho_per_len)
    rho_star = float(rho_cumulative[length])
    verdict = bool(not vanishing and rho_star <= rho_cap and theta_gap >= theta_floor)
    return PropertyReport(
        name="morse",
        verdict=verdict,
        constants={
            "rho": rho_star,
            "theta_gap": float(theta_gap),
            "rho_by_length": rho_cumulative[1:],
        },
        thresholds={
            "rho_cap": rho_cap,
            "theta_floor": theta_floor,
            "length": length,
            "gap_tol": gap_tol,
        },
        witnesses={
            "worst_word": worst[0],
            "worst_interior_index": worst[1],
            "worst_deficit": worst[2],
            "vanishing_gap_words": vanishing[:8],
        },
        details={
            "diamond_queries_checked": checked,
            "diamond_queries_failed": failed,
            "vanishing_gap_count": len(vanishing),
        },
    )


@dataclass(frozen=True)
class BoundaryRaySample:
    """A boundary point sampled as a nested reduced-word prefix scheme."""

    letters: tuple[int, ...]
    scheme: str  # "power" | "random"

    def __post_init__(self):
        ReducedWord(self.letters)  # validates reducedness


def sample_rays(pres: FreeGroupPresentation, count: int, depth: int,
                seed: int) -> list[BoundaryRaySample]:
    """Deterministic ray sample: all generator-power rays, then random ones."""
    rays: list[BoundaryRaySample] = []
    for lt in _letter_order(pres.rank):
        if len(rays) >= count:
            break
        rays.append(BoundaryRaySample(tuple([lt] * depth), "power"))
    rng = np.random.default_rng(seed)
    order = _letter_order(pres.rank)
    seen = {r.letters for r in rays}
    tries = 0
    while len(rays) < count and tries < 100 * count:
        tries += 1
        letters: list[int] = []
        while len(letters) < depth:
            choices = [lt for lt in order if not letters or lt != -letters[-1]]
            letters.append(int(choices[rng.integers(len(choices))]))
        key = tuple(letters)
        if key in seen:
            continue
        seen.add(key)
        rays.append(BoundaryRaySample(key, "random"))
    if len(rays) < count:
        raise ValueError("not enough distinct rays at this depth")
    return rays


def ray_prefix_matrices(pres: FreeGroupPresentation, ray: BoundaryRaySample,
                        with_inverses: bool = False):
    out = []
    inv = []
    m = np.eye(pres.n)
    mi = np.eye(pres.n)
    for lt in ray.letters:
        m = m @ pres.letter_matrix(lt)
        out.append(m)
        if with_inverses:
            mi = pres.letter_matrix(-lt) @ mi
            inv.append(mi)
    return (out, inv) if with_inverses else out


def limit_report(pres: FreeGroupPresentation, face: FaceType, depth: int,
                 ray_count: int, seed: int, antipodal_floor: float = 0.01,
                 conical_rho: float = 2.0, residual_tol: float = 1e-3,
                 separation: float = 1e-3) -> tuple[PropertyReport, list[dict]]:
    """Sampled boundary map: antipodality, conicality, continuity probes.

    Boundary points are prefix schemes; their flag values are prefix
    limits with recorded Cauchy residuals.  Antipodality is the least
    pairwise transversality margin over distinct samples, conicality is
    checked along each ray, and the continuity probe tracks how limit
    flags of rays sharing prefixes of depth k approach each other.
    """
    if ray_count < 2:
        raise ValueError("need ray_count >= 2")
    if not face.is_iota_invariant:
        raise ValueError("antipodality needs an iota-invariant face type")
    rays = sample_rays(pres, ray_count, depth, seed)
    samples: list[dict] = []
    failures: list[dict] = []
    for ray in rays:
        mats, invs = ray_prefix_matrices(pres, ray, with_inverses=True)
        try:
            flags = [attractive_flag(m, face)[0] for m in mats]
        except VanishingGap as exc:
            failures.append({"letters": list(ray.letters), "reason": str(exc)})
            continue
        residuals = [flag_distance(a, b) for a, b in zip(flags, flags[1:])]
        deltas = [_two_sided_log_svals(m, mi) for m, mi in zip(mats, invs)]
        conic = conical_check(mats, flags[-1], identity_point(pres.n),
                              rho=conical_rho, gs_inv=invs,
                              letters=list(ray.letters), pres=pres)
        samples.append({
            "letters": list(ray.letters),
            "scheme": ray.scheme,
            "limit_flag_frame": flags[-1].frame,
            "residuals": residuals,
            "converged": bool(residuals and max(residuals[-max(1, len(residuals) // 4):]) < residual_tol),
            "deltas": deltas,
            "conical": conic.verdict,
            "conical_geometric_sup": conic.constants["geometric_sup"],
        })

    # Rays are pairwise distinct reduced words, hence distinct boundary
    # points; their transversality margin shrinks with the depth at which
    # the words diverge, so the antipodality verdict is taken over pairs
    # diverging within half the sampled depth (deeper pairs cannot be
    # resolved from depth-limited flags and are recorded separately).
    min_margin = math.inf
    all_pairs_min = math.inf
    closest_pair = None
    flag_objs = [Flag(face, np.asarray(s["limit_flag_frame"])) for s in samples]
    for i in range(len(samples)):
        for j in range(i):
            m = antipodality_margin(flag_objs[i], flag_objs[j])
            all_pairs_min = min(all_pairs_min, m)
            # The verdict margin is taken over rays with disjoint first
            # letters; pairs sharing prefixes have margins shrinking with
            # the divergence depth and are tracked by the continuity probe.
            if samples[i]["letters"][0] == samples[j]["letters"][0]:
                continue
            if m < min_margin:
                min_margin = m
                closest_pair = (samples[i]["letters"], samples[j]["letters"])
    reps: list[Flag] = []
    for f in flag_objs:
        if all(flag_distance(f, r) > separation for r in reps):
            reps.append(f)
    sep_count = len(reps)

    # Continuity probe: pairs of rays sharing prefixes of increasing depth.
    rng = np.random.default_rng(seed + 1)
    order = _letter_order(pres.rank)
    probe = []
    for k in range(1, max(2, depth - 1)):
        letters: list[int] = []
        while len(letters) < k:
            choices = [lt for lt in order if not letters or lt != -letters[-1]]
            letters.append(int(choices[rng.integers(len(choices))]))
        exts = []
        tries = 0
        while len(exts) < 2 and tries < 100:
            tries += 1
            tail: list[int] = list(letters)
            while len(tail) < depth:
                choices = [lt for lt in order if lt != -tail[-1]]
                tail.append(int(choices[rng.integers(len(choices))]))
            if len(exts) == 1 and tail[k] == exts[0][k]:
                continue
            exts.append(tail)
        if len(exts) < 2:
            continue
        fl = []
        try:
            for tail in exts:
                m = np.eye(pres.n)
                for lt in tail:
                    m = m @ pres.letter_matrix(lt)
                fl.append(attractive_flag(m, face)[0])
        except VanishingGap:
            continue
        probe.append((k, flag_distance(fl[0], fl[1])))

    if not samples:
        raise VanishingGap("no sampled ray has a regular prefix")
    all_conical = all(s["conical"] for s in samples)
    antipodal = bool(not math.isinf(min_margin) and min_margin >= antipodal_floor)
    verdict = bool(not failures and antipodal and all_conical)
    report = PropertyReport(
        name="limit-set",
        verdict=verdict,
        constants={
            "antipodality_margin": None if math.isinf(min_margin) else float(min_margin),
            "all_pairs_margin_min": None if math.isinf(all_pairs_min) else float(all_pairs_min),
            "conical_sup": max((s["conical_geometric_sup"] for s in samples), default=None),
            "limit_set_cardinality_lower_bound": sep_count,
        },
        thresholds={
            "antipodal_floor": antipodal_floor,
            "conical_rho": conical_rho,
            "residual_tol": residual_tol,
            "separation": separation,
            "depth": depth,
            "ray_count": ray_count,
        },
        witnesses={"closest_pair": closest_pair, "failures": failures},
        details={
            "all_conical": all_conical,
            "antipodal": antipodal,
            "continuity_probe": [[k, float(d)] for k, d in probe],
            "rays": [
                {k: v for k, v in s.items() if k != "deltas"} for s in samples
            ],
            "deltas": {str(i): s["deltas"] for i, s in enumerate(samples)},
        },
        seed=seed,
    )
    return report, samples


def stable_ray_flag(pres: FreeGroupPresentation, letters, face: FaceType) -> Flag:
    """Boundary flag of a word ray by backward QR accumulation."""
    return stable_product_flag([pres.letter_matrix(lt) for lt in letters], face)


def anosov_check(pres: FreeGroupPresentation, face: FaceType, rays: int,
                 depth: int, seed: int, uniform_dev: float = 0.2,
                 divergence_logeps: float = float(np.log(100.0)),
                 expansion_floor: float = 0.05, cea_depth: int = 2,
                 beta_pad: int = 8, threads: int = 1) -> PropertyReport:
    """Expansion growth along boundary rays.

    For each sampled ray the inverse prefixes must expand at the ray's
    limit flag; the uniform verdict requires positive fitted slopes that
    agree across rays within the stated deviation, the non-uniform
    verdict only divergence beyond a threshold, and the stratum-expansion
    verdict asks for a short word expanding at every sampled limit flag.
    The limit flag is evaluated a padding deeper than the tested
    prefixes, since the expansion factor at the flag resolves it to the
    scale of the deepest prefix.
    """
    ray_list = sample_rays(pres, rays, depth + beta_pad, seed)

    def eval_ray(ray: BoundaryRaySample) -> dict | None:
        try:
            attractive_flag(ray_prefix_matrices(pres, ray)[depth - 1], face)
        except VanishingGap:
            return None
        beta = stable_ray_flag(pres, ray.letters, face)
        # Chain rule: the differential of the inverse prefix at the flag
        # is the ordered product of single-letter differentials along the
        # pulled-back flag orbit.  The orbit flags are the boundary flags
        # of the shifted rays; iterating them forward would be dynamically
        # unstable (the flag is repelling for the inverse flow), so each
        # is recomputed from its own tail letters.
        tail_flags = [beta] + [
            stable_ray_flag(pres, ray.letters[k:], face) for k in range(1, depth)
        ]
        dtotal = np.eye(tangent_dim(face))
        log_eps = []
        for n, lt in enumerate(ray.letters[:depth]):
            li = pres.letter_matrix(-lt)
            dtotal = action_differential(li, tail_flags[n]) @ dtotal
            log_eps.append(float(np.log(np.linalg.svd(dtotal, compute_uv=False)[-1])))
        ns = np.arange(1, depth + 1, dtype=float)
        lo = max(1, depth // 3)
        slope, intercept = np.polyfit(ns[lo:], np.array(log_eps)[lo:], 1)
        return {
            "letters": list(ray.letters),
            "scheme": ray.scheme,
            "log_eps": log_eps,
            "slope": float(slope),
            "intercept": float(intercept),
            "max_log_eps": float(max(log_eps)),
            "beta_frame": beta.frame,
        }

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            evaluated = list(ex.map(eval_ray, ray_list))
    else:
        evaluated = [eval_ray(r) for r in ray_list]
    ray_data = [r for r in evaluated if r is not None]
    if not ray_data:
        raise VanishingGap("no sampled ray has a regular prefix")
    irregular = len(evaluated) - len(ray_data)
    slopes = np.array([r["slope"] for r in ray_data])
    mean_slope = float(slopes.mean()) if len(slopes) else 0.0
    max_dev = (float(np.max(np.abs(slopes - mean_slope)) / abs(mean_slope))
               if mean_slope > 0 else math.inf)
    uniform = bool(len(ray_data) > 0 and irregular == 0 and slopes.min() > 0.0
                   and max_dev <= uniform_dev)
    c_const = float(slopes.min()) if len(slopes) else 0.0
    log_a = float(min(
        (min(le - c_const * (i + 1) for i, le in enumerate(r["log_eps"])) for r in ray_data),
        default=0.0,
    ))
    nonuniform = bool(len(ray_data) > 0 and irregular == 0 and
                      all(r["max_log_eps"] >= divergence_logeps for r in ray_data))

    # Stratum expansion: some short word expands at every sampled limit flag.
    cea_ok = True
    cea_records = []
    for r in ray_data:
        beta = Flag(face, np.asarray(r["beta_frame"]))
        best = -np.inf
        best_word = None
        for word in enumerate_geodesics(pres, cea_depth):
            eps = expansion_factor(pres.word_matrix(word), beta)
            if eps > best:
                best = eps
                best_word = list(word.letters)
        cea_records.append({"letters": r["letters"], "best_eps": float(best),
                            "best_word": best_word})
        if best < 1.0 + expansion_floor:
            cea_ok = False
    return PropertyReport(
        name="anosov",
        verdict=uniform,
        constants={
            "C": c_const,
            "log_A": log_a,
            "mean_slope": mean_slope,
            "max_slope_deviation": None if math.isinf(max_dev) else max_dev,
            "irregular_rays": irregular,
        },
        thresholds={
            "uniform_dev": uniform_dev,
            "divergence_logeps": divergence_logeps,
            "expansion_floor": expansion_floor,
            "cea_depth": cea_depth,
            "rays": rays,
            "depth": depth,
        },
        witnesses={
            "slowest_ray": min(ray_data, key=lambda r: r["slope"])["letters"] if ray_data else None,
        },
        details={
            "uniform": uniform,
            "non_uniform": nonuniform,
            "cea": cea_ok,
            "cea_records": cea_records,
            "rays": ray_data,
        },
        seed=seed,
    )


def _matrix_power(m: np.ndarray, k: int) -> np.ndarray:
    out = np.eye(m.shape[0])
    base = m.copy()
    while k:
        if k & 1:
            out = out @ base
        base = base @ base
        k >>= 1
    return normalize_det(out)


def _repelling_transversality(flag: Flag, vt_rows: np.ndarray, d: int) -> float:
    # Smallest singular value of V1^T Y: the angle to the repelling stratum.
    y = flag.basis(d)
    return float(np.linalg.svd(vt_rows[:d, :] @ y, compute_uv=False)[-1])


def schottky_build(elements, face: FaceType, margin_floor: float = 0.05,
                   max_power: int = 256, ball_samples: int = 24,
                   seed: int = 0) -> tuple[FreeGroupPresentation, PropertyReport]:
    """Certify a ping-pong system on the flag manifold by a doubling search.

    Inputs are hyperbolic matrices (or (flag_plus, flag_minus, strength)
    axis triples, which are realized as transvections).  Neighborhoods
    are metric balls around the attracting/repelling flags of the powered
    generators with radius half the minimal pairwise flag separation; the
    criterion moves every other ball of the table into the attracting
    ball, certified by a singular-value contraction bound (the ball's
    transversality to the repelling stratum is lower-bounded through the
    CS decomposition) plus sampling.  Raises TransversalityTooSmall for
    non-transverse axes and PingPongFailed past the power budget.
    """
    if not face.is_iota_invariant:
        raise ValueError("ping-pong on a single flag manifold needs an iota-invariant type")
    mats = []
    for el in elements:
        if isinstance(el, (tuple, list)) and len(el) == 3 and isinstance(el[0], Flag):
            plus, minus, strength = el
            from .symmspace import make_parallel_set

            pset = make_parallel_set(minus, plus)
            n = face.n
            direction = np.arange(n, 0, -1, dtype=float)
            direction -= direction.mean()
            direction /= np.linalg.norm(direction)
            diag = np.diag(np.exp(float(strength) * direction))
            mats.append(pset.basis @ diag @ np.linalg.inv(pset.basis))
        else:
            mats.append(np.asarray(el, dtype=float))

    # Axis transversality from powers kept inside the precision budget.
    axis_flags: list[Flag] = []
    for m in mats:
        probe = m.copy()
        nxt = probe
        for _ in range(16):
            nxt = nxt @ m
            if np.abs(nxt).max() > 1e6 or abs(np.linalg.det(nxt)) < 1e-8:
                break
            probe = nxt
        probe = normalize_det(probe)
        try:
            plus, _, _ = attractive_flag(probe, face)
            minus_plus, _, _ = attractive_flag(np.linalg.inv(probe), face)
        except VanishingGap as exc:
            raise TransversalityTooSmall(f"element is not proximal enough: {exc}") from exc
        axis_flags.extend([plus, minus_plus])
    for i in range(len(axis_flags)):
        for j in range(i + 1, len(axis_flags)):
            if antipodality_margin(axis_flags[i], axis_flags[j]) < margin_floor:
                raise TransversalityTooSmall(
                    f"axis flags {i} and {j} below transversality floor {margin_floor}")

    rng = np.random.default_rng(seed)
    power = 1
    history = []
    norm_cap = 1e8
    while power <= max_power:
        if any(np.linalg.svd(m, compute_uv=False)[0] ** power > norm_cap for m in mats):
            raise PingPongFailed(
                f"power {power} exceeds the floating-point budget before certification")
        gens = [_matrix_power(m, power) for m in mats]
        signed = []
        for g in gens:
            signed.append(g)
            signed.append(np.linalg.inv(g))
        try:
            flags = [attractive_flag(h, face)[0] for h in signed]
        except VanishingGap:
            power *= 2
            continue
        # signed[2i] = g_i with attracting flags[2i], repelling flags[2i+1].
        npairs = len(signed)
        pairwise = min(
            flag_distance(flags[i], flags[j])
            for i in range(npairs) for j in range(i + 1, npairs)
        )
        rad = pairwise / 2.0
        ok = rad > 0.0
        worst_bound = 0.0
        worst_sample = 0.0
        for idx, h in enumerate(signed):
            att = flags[idx]
            rep_idx = idx + 1 if idx % 2 == 0 else idx - 1
            u, s, vt = np.linalg.svd(h)
            kappa = max(s[d] / s[d - 1] for d in face.dims)
            for sidx in range(npairs):
                if sidx == rep_idx:
                    continue
                center = flags[sidx]
                s_raw = min(
                    _repelling_transversality(center, vt, d) for d in face.dims
                )
                s_lb = s_raw * math.sqrt(max(0.0, 1.0 - rad * rad)) - rad
                if s_lb <= 0.0:
                    ok = False
                    break
                bound = kappa / s_lb
                worst_bound = max(worst_bound, bound)
                if bound > rad:
                    ok = False
                    break
                for _ in range(ball_samples):
                    skew = rng.standard_normal((face.n, face.n))
                    skew = (skew - skew.T) * (rad / (2.0 * face.n))
                    pert, _ = qr_pos(center.frame @ _expm_skew(skew))
                    sample = Flag(face, pert)
                    if flag_distance(sample, center) > rad:
                        continue
                    dist = flag_distance(act_on_flag(h, sample), att)
                    worst_sample = max(worst_sample, dist)
                    if dist > rad:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        history.append({"power": power, "radius": rad, "ok": ok,
                        "worst_bound": worst_bound, "worst_sample": worst_sample})
        if ok:
            pres = FreeGroupPresentation(tuple(gens), assumed_free=True)
            report = PropertyReport(
                name="schottky-ping-pong",
                verdict=True,
                constants={"power": power, "radius": rad,
                           "worst_bound": worst_bound, "worst_sample": worst_sample,
                           "pairwise_separation": pairwise},
                thresholds={"margin_floor": margin_floor, "max_power": max_power,
                            "ball_samples": ball_samples},
                details={"history": history},
                seed=seed,
            )
            return pres, report
        power *= 2
    raise PingPongFailed(f"no admissible power up to {max_power}; history: {history}")


def _expm_skew(a: np.ndarray) -> np.ndarray:
    from scipy.linalg import expm

    return expm(a)


def synthesize_finsler_ray(pres: FreeGroupPresentation, letters, tau: Flag,
                           margin: float = 0.0):
    """Greedy cone-respecting polygonal approximation of an orbit ray.

    Projects the prefix orbit into the block-diagonal model of the
    parallel set through the base point toward the flag, then keeps a
    subsequence whose consecutive differences lie in the symmetrized
    chamber cone; the polygonal chain through the projections is a flat
    geodesic of the model.  Returns (indices, chain coordinates,
    hausdorff): the orbit-to-chain distance estimate (off-set distance
    plus in-flat distance to the chain).  The chain-to-orbit direction
    is bounded by half the step size by construction.
    """
    face = tau.face
    binv = tau.frame.T
    coords = [np.zeros(face.n)]
    offs = [0.0]
    m = np.eye(face.n)
    mi = np.eye(face.n)
    for lt in letters:
        m = m @ pres.letter_matrix(lt)
        mi = pres.letter_matrix(-lt) @ mi
        v, off = factored_coords_pair(binv @ m, mi @ tau.frame, face)
        coords.append(v)
        offs.append(off)
    chosen = [0]
    for t in range(1, len(coords)):
        if flat_cone_margin(coords[t] - coords[chosen[-1]], face) >= margin:
            chosen.append(t)
    chain = [coords[t] for t in chosen]

    def dist_to_chain(v):
        if len(chain) == 1:
            return float(np.linalg.norm(v - chain[0]))
        best = np.inf
        for a, b in zip(chain, chain[1:]):
            ab = b - a
            denom = float(ab @ ab)
            s = 0.0 if denom == 0 else float(np.clip((v - a) @ ab / denom, 0.0, 1.0))
            best = min(best, float(np.linalg.norm(v - (a + s * ab))))
        return best

    orbit_to_chain = max(offs[t] + dist_to_chain(coords[t]) for t in range(len(coords)))
    return chosen, np.array(chain), float(orbit_to_chain)


def symmetric_square(m: np.ndarray) -> np.ndarray:
    """Irreducible 3-dimensional image of a 2x2 matrix.

    In the orthonormal basis (x^2, sqrt(2) x y, y^2): takes SL(2) into
    SL(3), rotations to rotations, and diag(s, 1/s) to diag(s^2, 1, s^-2).
    """
    a, b = float(m[0, 0]), float(m[0, 1])
    c, d = float(m[1, 0]), float(m[1, 1])
    r2 = np.sqrt(2.0)
    return np.array([
        [a * a, r2 * a * b, b * b],
        [r2 * a * c, a * d + b * c, r2 * b * d],
        [c * c, r2 * c * d, d * d],
    ])
