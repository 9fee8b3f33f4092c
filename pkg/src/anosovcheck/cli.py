"""Batch experiment runner and report emitter.

A config names a group, a face type and a checker pipeline; the runner
executes the checkers in dependency order and writes one JSON report per
checker plus a summary.  Reports are deterministic given the seed (no
timestamps, sorted keys); plots are CSV plus hand-written SVG so no
raster toolchain is involved.

Exit codes: 0 on success (negative verdicts included), 1 on a checker
hard failure, 2 on a config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .chamber import FaceType
from .errors import BudgetExceeded, IllConditioned, PingPongFailed, VanishingGap
from .reports import jsonable
from .subgroup import (
    FreeGroupPresentation,
    anosov_check,
    limit_report,
    morse_check,
    uru_check,
)

CHECKER_ORDER = ("uru", "morse", "limit", "anosov")
RANDOMIZED_CHECKERS = {"limit", "anosov"}
PLOT_KINDS = ("limit-set-rp2", "expansion-growth", "margin-histogram", "delta-projection")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One experiment: group, face type, checker pipeline, knobs."""

    name: str
    n: int
    generators: list  # row-major n x n matrices
    face: list[int]
    theta_gap: float
    depth: int            # word enumeration depth L
    ray_count: int
    ray_depth: int        # prefix depth N for boundary rays
    seed: int | None
    checkers: list[str]
    out_dir: str
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict, path: str = "<config>") -> "ExperimentConfig":
        try:
            cfg = cls(
                name=str(raw["name"]),
                n=int(raw["n"]),
                generators=raw["generators"],
                face=[int(i) for i in raw["face"]],
                theta_gap=float(raw.get("theta_gap", 0.05)),
                depth=int(raw["depth"]),
                ray_count=int(raw.get("ray_count", 20)),
                ray_depth=int(raw.get("ray_depth", raw.get("N", 10))),
                seed=None if raw.get("seed") is None else int(raw["seed"]),
                checkers=list(raw.get("checkers", list(CHECKER_ORDER))),
                out_dir=str(raw.get("out_dir", "reports")),
                options=dict(raw.get("options", {})),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        cfg.validate(path)
        return cfg

    def validate(self, path: str = "<config>"):
        if self.n < 2:
            raise ConfigError(f"{path}: n must be >= 2")
        mats = []
        for k, rows in enumerate(self.generators):
            m = np.asarray(rows, dtype=float)
            if m.shape != (self.n, self.n):
                raise ConfigError(f"{path}: generator {k} is not {self.n}x{self.n}")
            det = float(np.linalg.det(m))
            if abs(det - 1.0) > 1e-6:
                raise ConfigError(f"{path}: generator {k} determinant {det:.8f} is not 1")
            mats.append(m)
        if not self.face or not all(1 <= i <= self.n - 1 for i in self.face):
            raise ConfigError(f"{path}: face indices must lie in 1..{self.n - 1}")
        unknown = [c for c in self.checkers if c not in CHECKER_ORDER]
        if unknown:
            raise ConfigError(f"{path}: unknown checkers {unknown}")
        if self.seed is None and RANDOMIZED_CHECKERS.intersection(self.checkers):
            raise ConfigError(f"{path}: a seed is mandatory for randomized checkers")
        if self.depth < 4:
            raise ConfigError(f"{path}: depth must be >= 4")

    def presentation(self) -> FreeGroupPresentation:
        return FreeGroupPresentation(tuple(np.asarray(g, dtype=float) for g in self.generators))

    def face_type(self) -> FaceType:
        return FaceType.make(self.n, self.face)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        raw = json.loads(p.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return ExperimentConfig.from_dict(raw, str(path))


def bundled_config_path(name: str) -> Path:
    """Path of a config shipped with the package (e.g. 'sl2-schottky')."""
    fname = name if name.endswith(".json") else f"{name}.json"
    return Path(str(resources.files("anosovcheck").joinpath("configs", fname)))


def _dump_json(payload: dict, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(jsonable(payload), sort_keys=True, indent=2) + "\n")


def run_config(path, seed: int | None = None, threads: int = 1,
               out_dir: str | None = None) -> int:
    """Execute the pipeline of a config; returns the process exit code."""
    try:
        cfg = load_config(path)
        if seed is not None:
            cfg.seed = seed
            cfg.validate(str(path))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    pres = cfg.presentation()
    face = cfg.face_type()
    opts = cfg.options
    reports: dict[str, dict] = {}
    ordered = [c for c in CHECKER_ORDER if c in cfg.checkers]
    try:
        for checker in ordered:
            if checker == "uru":
                rep = uru_check(
                    pres, face, cfg.depth,
                    c_floor=float(opts.get("c_floor", 0.05)),
                    ratio_floor=float(opts.get("ratio_floor", 0.02)),
                    power_depth=int(opts.get("power_depth", 256)),
                )
            elif checker == "morse":
                rep = morse_check(
                    pres, face, int(opts.get("morse_depth", min(cfg.depth, 8))),
                    rho_cap=float(opts.get("rho_cap", 1.0)),
                    theta_floor=float(opts.get("theta_floor", cfg.theta_gap)),
                    threads=threads,
                )
            elif checker == "limit":
                rep, _ = limit_report(
                    pres, face, cfg.ray_depth, cfg.ray_count, cfg.seed,
                    antipodal_floor=float(opts.get("antipodal_floor", 0.01)),
                    conical_rho=float(opts.get("conical_rho", 2.0)),
                )
            else:
                rep = anosov_check(
                    pres, face, cfg.ray_count, cfg.ray_depth, cfg.seed,
                    uniform_dev=float(opts.get("uniform_dev", 0.2)),
                    expansion_floor=float(opts.get("expansion_floor", 0.05)),
                    threads=threads,
                )
            payload = rep.as_dict()
            payload["config"] = {"name": cfg.name, "n": cfg.n, "face": cfg.face,
                                 "seed": cfg.seed, "depth": cfg.depth,
                                 "ray_depth": cfg.ray_depth, "ray_count": cfg.ray_count}
            reports[checker] = payload
            _dump_json(payload, out / f"{checker}.json")
    except (VanishingGap, IllConditioned, PingPongFailed, BudgetExceeded) as exc:
        _dump_json({"error": type(exc).__name__, "message": str(exc)}, out / "error.json")
        print(f"checker hard failure: {exc}", file=sys.stderr)
        return 1
    summary = {
        "name": cfg.name,
        "verdicts": {k: reports[k]["verdict"] for k in reports},
        "seed": cfg.seed,
        "checkers": ordered,
    }
    _dump_json(summary, out / "summary.json")
    for checker in ordered:
        print(f"{cfg.name}: {checker} -> {reports[checker]['verdict']}")
    return 0


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _write_csv(path: Path, header: list[str], rows: list[list]):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) if isinstance(v, float) else v for v in row])


def _svg_scatter(path: Path, pts: list[tuple[float, float]], title: str,
                 polylines: list[list[tuple[float, float]]] | None = None):
    w, h, pad = 640, 640, 48
    xs = [p[0] for p in pts] + [q[0] for line in (polylines or []) for q in line]
    ys = [p[1] for p in pts] + [q[1] for line in (polylines or []) for q in line]
    if not xs:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    sx = (w - 2 * pad) / max(x1 - x0, 1e-12)
    sy = (h - 2 * pad) / max(y1 - y0, 1e-12)

    def tx(x):
        return pad + (x - x0) * sx

    def ty(y):
        return h - pad - (y - y0) * sy

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{pad}" y="24" font-family="monospace" font-size="14">{title}</text>',
    ]
    for line in polylines or []:
        d = " ".join(f"{_fmt(tx(x))},{_fmt(ty(y))}" for x, y in line)
        parts.append(f'<polyline points="{d}" fill="none" stroke="#888" stroke-width="1"/>')
    for x, y in pts:
        parts.append(f'<circle cx="{_fmt(tx(x))}" cy="{_fmt(ty(y))}" r="2.5" fill="#1a66cc"/>')
    parts.append("</svg>")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")


def _svg_bars(path: Path, edges: list[float], counts: list[int], title: str):
    w, h, pad = 640, 480, 48
    top = max(counts) if counts else 1
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">',
        f'<rect width="{w}" height="{h}" fill="white"/>',
        f'<text x="{pad}" y="24" font-family="monospace" font-size="14">{title}</text>',
    ]
    nb = len(counts)
    for k, c in enumerate(counts):
        bw = (w - 2 * pad) / max(nb, 1)
        bh = (h - 2 * pad) * (c / max(top, 1))
        parts.append(
            f'<rect x="{_fmt(pad + k * bw)}" y="{_fmt(h - pad - bh)}" '
            f'width="{_fmt(bw * 0.9)}" height="{_fmt(bh)}" fill="#1a66cc"/>'
        )
    parts.append("</svg>")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")


def emit_plot(report_path, kind: str, out_dir: str | None = None) -> list[Path]:
    """Emit a CSV + SVG rendering of one report aspect."""
    if kind not in PLOT_KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    rp = Path(report_path)
    report = json.loads(rp.read_text())
    out = Path(out_dir) if out_dir is not None else rp.parent
    stem = f"{rp.stem}-{kind}"
    csv_path = out / f"{stem}.csv"
    svg_path = out / f"{stem}.svg"

    if kind == "limit-set-rp2":
        rows = []
        pts = []
        rays = report.get("details", {}).get("rays", [])
        for i, ray in enumerate(rays):
            frame = np.asarray(ray.get("limit_flag_frame", []), dtype=float)
            if frame.size == 0 or frame.shape[0] != 3:
                continue
            v = frame[:, 0]
            if abs(v[0]) < 1e-6:
                rows.append([i, "", "", "at-infinity"])
                continue
            x, y = float(v[1] / v[0]), float(v[2] / v[0])
            rows.append([i, x, y, "ok"])
            pts.append((x, y))
        _write_csv(csv_path, ["ray", "x", "y", "status"], rows)
        _svg_scatter(svg_path, pts, "limit set, affine chart of the projective plane")
    elif kind == "expansion-growth":
        rows = []
        lines = []
        pts = []
        for i, ray in enumerate(report.get("details", {}).get("rays", [])):
            les = ray.get("log_eps", [])
            slope = ray.get("slope", 0.0)
            intercept = ray.get("intercept", 0.0)
            line = []
            for n, le in enumerate(les, start=1):
                rows.append([i, n, float(le), float(slope * n + intercept)])
                pts.append((float(n), float(le)))
                line.append((float(n), float(slope * n + intercept)))
            if line:
                lines.append(line)
        _write_csv(csv_path, ["ray", "n", "log_expansion", "fit"], rows)
        _svg_scatter(svg_path, pts, "log expansion factor vs prefix length", lines)
    elif kind == "margin-histogram":
        vals = []
        det = report.get("details", {})
        for p in det.get("probe_points", []):
            vals.append(float(p[3]))
        if not vals:
            for ray in det.get("rays", []):
                if "conical_geometric_sup" in ray:
                    vals.append(float(ray["conical_geometric_sup"]))
        rows = []
        if vals:
            arr = np.array(vals)
            span = (float(arr.min()), float(arr.max()))
            if span[1] - span[0] <= 1e-9 * max(1.0, abs(span[1])):
                span = (span[0] - 0.5, span[1] + 0.5)
            counts, edges = np.histogram(arr, bins=16, range=span)
            for k in range(len(counts)):
                rows.append([float(edges[k]), float(edges[k + 1]), int(counts[k])])
            _write_csv(csv_path, ["lo", "hi", "count"], rows)
            _svg_bars(svg_path, list(edges), list(counts), "margin histogram")
        else:
            _write_csv(csv_path, ["lo", "hi", "count"], [])
            _svg_bars(svg_path, [], [], "margin histogram (empty)")
    else:  # delta-projection
        rows = []
        lines = []
        pts = []
        b1 = np.array([1.0, -1.0, 0.0]) / math.sqrt(2.0)
        b2 = np.array([1.0, 1.0, -2.0]) / math.sqrt(6.0)
        deltas = report.get("details", {}).get("deltas", {})
        for key in sorted(deltas, key=lambda s: int(s)):
            line = []
            for step, d in enumerate(deltas[key]):
                d = np.asarray(d, dtype=float)
                if d.size != 3:
                    continue
                x, y = float(d @ b1), float(d @ b2)
                rows.append([int(key), step, x, y])
                line.append((x, y))
                pts.append((x, y))
            if line:
                lines.append(line)
        _write_csv(csv_path, ["ray", "step", "x", "y"], rows)
        _svg_scatter(svg_path, pts, "chamber projection paths", lines)
    return [csv_path, svg_path]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="anosovcheck",
                                     description="run subgroup property checkers")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run a config pipeline")
    p_run.add_argument("config")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--threads", type=int, default=1)
    p_run.add_argument("--out-dir", default=None)
    p_plot = sub.add_parser("plot", help="emit a plot from a report")
    p_plot.add_argument("report")
    p_plot.add_argument("--kind", required=True, choices=PLOT_KINDS)
    p_plot.add_argument("--out-dir", default=None)
    args = parser.parse_args(argv)
    if args.command == "run":
        return run_config(args.config, seed=args.seed, threads=args.threads,
                          out_dir=args.out_dir)
    try:
        paths = emit_plot(args.report, args.kind, args.out_dir)
    except (ValueError, OSError) as exc:
        print(f"plot error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
