"""Command-line front end: ``raylength <command> --scene <path> [options]``.

Every command writes UTF-8 CSV tables plus ``manifest.json`` (configuration,
library version, timestamp) into ``--out``. CSV bodies depend only on the
configuration and seed; the timestamp lives in the manifest alone. Failures
exit with status 1 and write ``error.json``; usage errors exit with 2.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .billiard import PhasePoint
from .crosssection import jacobian_fd, jacobian_linearized
from .errors import RayLengthError, ValidationError
from .geometry import unit
from .rayfinder import find_rays
from .sceneio import load_scene
from .spectrum import length_spectrum
from .trapscan import (boundary_bisection, escape_scan, find_trapped_seed, nondegenerate_filter,
                       two_sphere_bracket, weak_nondegeneracy_estimate)
from .waveoracle import amplitude_grid, filtered_kernel, validate_sphere

COMMANDS = ("spectrum", "trapscan", "validate-sphere", "cross-check", "weakndg")
SPECTRUM_COLUMNS = ("ray_id", "m", "t_singular", "det_dJ", "coeff_magnitude", "separated")
SEQUENCE_COLUMNS = ("stage", "omega", "theta", "sojourn", "det_dJ")


@dataclass
class RunConfig:
    scene_path: str = "two_spheres"
    omega: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    theta: Tuple[float, float, float] = (0.0, 0.0, -1.0)
    out: str = "raylength_out"
    seed: int = 0
    budget: float = 500.0
    band: Tuple[float, float] = (20.0, 60.0)
    m_max: int = 4
    grid_density: int = 24
    direction_density: int = 100
    budgets: Tuple[float, ...] = (10.0, 20.0, 40.0, 80.0, 160.0, 320.0)
    radius: float = 0.05
    samples: int = 10_000
    n_rays: int = 100
    tol: float = 1e-8
    sphere_radius: Optional[float] = None
    compare_radius: Optional[float] = 2.0

    def validate(self, command):
        for name in ("budget", "radius", "tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if any(b <= 0 for b in self.budgets) or list(self.budgets) != sorted(set(self.budgets)):
            raise ValidationError("budgets must be positive and strictly increasing")
        if not 0 < self.band[0] < self.band[1]:
            raise ValidationError("band must satisfy 0 < lam_min < lam_max")
        if command in ("spectrum", "validate-sphere"):
            if np.linalg.norm(unit(self.omega) - unit(self.theta)) < 1e-12:
                raise ValidationError("theta must differ from omega")


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(c) for c in v)
    return str(v)


def write_csv(path: Path, columns, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(row[c]) for c in columns])
    return path


def _manifest(out: Path, command, config: RunConfig, files, extra=None):
    doc = {
        "command": command,
        "version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": config.seed,
        "config": dataclasses.asdict(config),
        "files": sorted(p.name for p in files),
    }
    if extra:
        doc["summary"] = extra
    (out / "manifest.json").write_text(json.dumps(doc, indent=2, default=_json_default) + "\n",
                                       encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


# ---------------------------------------------------------------------------
# commands

def cmd_spectrum(config, out):
    scene = load_scene(config.scene_path)
    entries = length_spectrum(scene, config.omega, config.theta, config.m_max, config.grid_density)
    rows = [{"ray_id": k, "m": e.m_gamma, "t_singular": e.t_singular, "det_dJ": e.det_dJ,
             "coeff_magnitude": e.coeff_magnitude, "separated": e.separated} for k, e in enumerate(entries)]
    return [write_csv(out / "spectrum.csv", SPECTRUM_COLUMNS, rows)], {"n_entries": len(rows)}


def cmd_trapscan(config, out):
    scene = load_scene(config.scene_path)
    extra, files, summary = (), [], {}
    spheres = [i for i, b in enumerate(scene.bodies) if b.kind == "sphere"]
    seed = None
    if len(spheres) >= 2:
        za, zb, side = two_sphere_bracket(scene, spheres[0], spheres[1])
        # the seed must outlast both the field budget and the last bisection stage
        need = max(2 * max(config.budgets), config.budget)
        seed = find_trapped_seed(scene, za, zb, need, side=side)
        extra = (seed.point,)
    field_ = escape_scan(scene, config.direction_density, config.budget, extra=extra)
    rows = [{"x": p.x, "xi": p.xi, "T": t, "censored": c}
            for p, t, c in zip(field_.points, field_.T, field_.censored)]
    files.append(write_csv(out / "escape_field.csv", ("x", "xi", "T", "censored"), rows))
    summary["censored_fraction"] = field_.censored_fraction
    if seed is not None:
        seq = boundary_bisection(scene, seed.point, za, config.budgets)
        seq = nondegenerate_filter(scene, seq, config.tol)
        rows = []
        for k, ray in enumerate(seq.rays):
            rows.append({"stage": k, "omega": ray.omega, "theta": ray.theta, "sojourn": ray.sojourn,
                         "det_dJ": jacobian_linearized(scene, ray).det})
        files.append(write_csv(out / "sequence.csv", SEQUENCE_COLUMNS, rows))
        summary["stages"] = len(rows)
        summary["report"] = list(seq.report)
    return files, summary


def _sphere_radius(config):
    if config.sphere_radius is not None:
        return float(config.sphere_radius)
    scene = load_scene(config.scene_path)
    if len(scene.bodies) != 1 or scene.bodies[0].kind != "sphere":
        raise ValidationError("validate-sphere needs a single-sphere scene or --radius")
    return float(scene.bodies[0].radii[0])


def cmd_validate_sphere(config, out):
    R = _sphere_radius(config)
    omega, theta = unit(config.omega), unit(config.theta)
    rep = validate_sphere(R, theta, omega, config.band, config.compare_radius)
    cols = ("R", "cos_angle", "t_singular", "t_peak", "peak_time_error", "resolution",
            "peak_magnitude", "coeff_magnitude", "n_spurious")
    rows = []
    for r in [rep] + ([rep["compare"]] if "compare" in rep else []):
        rows.append({**{c: r.get(c) for c in cols}, "n_spurious": len(r["spurious_peaks"]),
                     "measured_ratio": rep.get("measured_ratio"),
                     "predicted_ratio": rep.get("predicted_ratio")})
    files = [write_csv(out / "validate_sphere.csv", cols + ("measured_ratio", "predicted_ratio"), rows)]
    grid = amplitude_grid(R, float(np.clip(theta @ omega, -1, 1)), config.band)
    files.append(write_csv(out / "amplitude.csv", ("lambda", "re", "im"),
                           [{"lambda": l, "re": v.real, "im": v.imag}
                            for l, v in zip(grid.lambdas, grid.values)]))
    ker = filtered_kernel(grid)
    files.append(write_csv(out / "kernel.csv", ("t", "re", "im", "abs"),
                           [{"t": t, "re": v.real, "im": v.imag, "abs": abs(v)}
                            for t, v in zip(ker.ts, ker.values)]))
    return files, {"peak_time_error": rep["peak_time_error"], "resolution": rep["resolution"]}


def _random_pairs(rng, n):
    v = rng.normal(size=(n, 2, 3))
    return v / np.linalg.norm(v, axis=2)[..., None]


def cmd_cross_check(config, out):
    scene = load_scene(config.scene_path)
    rng = np.random.default_rng(config.seed)
    rows, worst = [], 0.0
    while len(rows) < config.n_rays:
        omega, theta = _random_pairs(rng, 1)[0]
        if np.linalg.norm(omega - theta) < 1e-3:
            continue
        for ray in find_rays(scene, omega, theta, config.m_max, config.grid_density):
            if len(rows) >= config.n_rays:
                break
            fd = jacobian_fd(scene, ray)
            lin = jacobian_linearized(scene, ray)
            rel = abs(fd.det - lin.det) / abs(lin.det)
            worst = max(worst, rel)
            rows.append({"ray_id": len(rows), "m": ray.m, "omega": ray.omega, "theta": ray.theta,
                         "det_fd": fd.det, "det_linearized": lin.det, "rel_diff": rel})
    cols = ("ray_id", "m", "omega", "theta", "det_fd", "det_linearized", "rel_diff")
    return [write_csv(out / "cross_check.csv", cols, rows)], {"worst_rel_diff": worst}


def cmd_weakndg(config, out):
    scene = load_scene(config.scene_path)
    if scene.name == "two_spheres":
        from .sceneio import reference_trapped_point
        z = reference_trapped_point()
    else:
        za, zb, side = two_sphere_bracket(scene)
        z = find_trapped_seed(scene, za, zb, 100.0, side=side).point
    y = PhasePoint(z.x, z.xi)
    p, hw = weak_nondegeneracy_estimate(scene, y, config.radius, config.samples, config.seed,
                                        config.budget)
    row = {"radius": config.radius, "n_samples": config.samples, "seed": config.seed,
           "fraction": p, "ci_halfwidth": hw}
    cols = ("radius", "n_samples", "seed", "fraction", "ci_halfwidth")
    return [write_csv(out / "weakndg.csv", cols, [row])], {"fraction": p, "ci_halfwidth": hw}


_HANDLERS = {"spectrum": cmd_spectrum, "trapscan": cmd_trapscan,
             "validate-sphere": cmd_validate_sphere, "cross-check": cmd_cross_check,
             "weakndg": cmd_weakndg}


def run(command: str, config: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    if command not in _HANDLERS:
        print(f"raylength: unknown command {command!r}; choose from {', '.join(COMMANDS)}",
              file=sys.stderr)
        return 2
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        config.validate(command)
        files, summary = _HANDLERS[command](config, out)
    except (RayLengthError, ValueError, OSError) as exc:
        err = {"command": command, "error": type(exc).__name__, "message": str(exc)}
        (out / "error.json").write_text(json.dumps(err, indent=2) + "\n", encoding="utf-8")
        print(json.dumps(err), file=sys.stderr)
        return 1
    _manifest(out, command, config, files, summary)
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def _floats(n=None):
    def conv(text):
        try:
            vals = tuple(float(v) for v in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
        if n is not None and len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} numbers, got {len(vals)}")
        return vals
    return conv


def build_parser():
    d = RunConfig()
    p = argparse.ArgumentParser(prog="raylength",
                                description="Scattering length spectrum experiments.")
    p.add_argument("--version", action="version", version=f"raylength {__version__}")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--scene", default=d.scene_path,
                   help="scene file, or a reference name (unit_sphere, two_spheres)")
    p.add_argument("--omega", type=_floats(3), default=d.omega, help="incoming direction x,y,z")
    p.add_argument("--theta", type=_floats(3), default=d.theta, help="outgoing direction x,y,z")
    p.add_argument("--budget", type=float, default=d.budget, help="escape-time budget")
    p.add_argument("--budgets", type=_floats(), default=d.budgets,
                   help="bisection stage budgets (trapscan)")
    p.add_argument("--band", type=_floats(2), default=d.band, help="frequency band lo,hi")
    p.add_argument("--seed", type=int, default=d.seed, help="random seed")
    p.add_argument("--out", default=d.out, help="output directory")
    p.add_argument("--m-max", type=int, default=d.m_max, help="maximum reflections per ray")
    p.add_argument("--grid-density", type=int, default=d.grid_density,
                   help="shooting grid points per side")
    p.add_argument("--direction-density", type=int, default=d.direction_density,
                   help="escape grid is density^2 points")
    p.add_argument("--radius", type=float, default=d.radius, help="weakndg neighbourhood radius")
    p.add_argument("--samples", type=int, default=d.samples, help="weakndg Monte-Carlo samples")
    p.add_argument("--n-rays", type=int, default=d.n_rays, help="rays compared by cross-check")
    p.add_argument("--tol", type=float, default=d.tol, help="degeneracy threshold on |det dJ|")
    p.add_argument("--sphere-radius", type=float, default=None,
                   help="validate-sphere radius (default: scene sphere)")
    p.add_argument("--compare-radius", type=float, default=d.compare_radius,
                   help="second radius for the magnitude ratio")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    config = RunConfig(scene_path=args.scene, omega=args.omega, theta=args.theta, out=args.out,
                       seed=args.seed, budget=args.budget, band=args.band, m_max=args.m_max,
                       grid_density=args.grid_density, direction_density=args.direction_density,
                       budgets=args.budgets, radius=args.radius, samples=args.samples,
                       n_rays=args.n_rays, tol=args.tol, sphere_radius=args.sphere_radius,
                       compare_radius=args.compare_radius)
    return run(args.command, config)


if __name__ == "__main__":
    sys.exit(main())
