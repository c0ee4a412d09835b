"""Trapping detection and sequences of rays with unbounded sojourn times.

Trapped initial conditions on the reference sphere C form a closed set of
measure zero: for disjoint convex bodies they lie on stable manifolds of
hyperbolic periodic orbits. Escape times near such a point grow only
logarithmically in the distance to it, so every construction here that needs
long escape times runs on one-parameter chords of initial conditions traced
in multiprecision (see :func:`raylength.billiard.trace_extended`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence

import gmpy2
import numpy as np

from .billiard import (PhasePoint, default_precision, escape_time, trace,
                       trace_extended)
from .crosssection import jacobian_linearized
from .errors import (DegenerateSegment, NoConvergence, ObstructedPath, RefinementFailed,
                     SeedNotFree, SeedNotTrapped, TangentRay, ThetaEqualsOmega)
from .geometry import Scene, implicit_eval, tangent_frame, unit
from .rayfinder import ReflectingRay, refine_ray

DEFAULT_BUDGET = 500.0


@dataclass
class EscapeField:
    points: List[PhasePoint]
    T: np.ndarray
    censored: np.ndarray
    budget: float

    @property
    def samples(self):
        return list(zip(self.points, self.T, self.censored))

    @property
    def censored_fraction(self):
        return float(np.mean(self.censored)) if len(self.censored) else 0.0


def fibonacci_sphere(n):
    """Quasi-uniform unit vectors (golden-angle spiral)."""
    k = np.arange(n) + 0.5
    z = 1 - 2 * k / n
    r = np.sqrt(1 - z * z)
    phi = math.pi * (3 - math.sqrt(5)) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def fibonacci_hemisphere(n):
    """Quasi-uniform unit vectors with positive z component."""
    k = np.arange(n) + 0.5
    z = 1 - k / n
    r = np.sqrt(1 - z * z)
    phi = math.pi * (3 - math.sqrt(5)) * k
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def inward_grid(scene: Scene, density: int):
    """``density**2`` phase points: density positions on C times density inward directions."""
    pos = fibonacci_sphere(density) * scene.a
    dirs = fibonacci_hemisphere(density)
    out = []
    for x in pos:
        n = -x / scene.a
        e1, e2 = tangent_frame(n)
        R = np.column_stack([e1, e2, n])
        for v in dirs:
            out.append(PhasePoint(x, R @ v))
    return out


def escape_scan(scene: Scene, direction_grid_density: int = 100, budget: float = DEFAULT_BUDGET,
                extra: Sequence[PhasePoint] = ()) -> EscapeField:
    """Escape times over a quasi-uniform grid of inward phase points on C.

    ``extra`` phase points (for example a multiprecision trapped seed) are
    appended to the grid and traced with the tracer their representation
    calls for.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    pts = inward_grid(scene, direction_grid_density) + list(extra)
    T = np.empty(len(pts))
    cens = np.zeros(len(pts), dtype=bool)
    for i, z in enumerate(pts):
        T[i], cens[i] = escape_time(scene, z, budget)
    return EscapeField(pts, T, cens, float(budget))


# ---------------------------------------------------------------------------
# chords of initial conditions


def _mp_vec(v):
    return [gmpy2.mpfr(float(c)) if not isinstance(c, type(gmpy2.mpfr(0))) else c for c in v]


def _coords(z: PhasePoint):
    if z.hp is not None:
        return list(z.hp[0]), list(z.hp[1])
    return _mp_vec(z.x), _mp_vec(z.xi)


@dataclass
class Chord:
    """Great-circle family between two inward phase points on C, s in [0, 1]."""

    scene: Scene
    start: PhasePoint
    end: PhasePoint

    def at(self, s) -> PhasePoint:
        if not isinstance(s, type(gmpy2.mpfr(0))):
            s = gmpy2.mpfr(s)
        xa, da = _coords(self.start)
        xb, db = _coords(self.end)
        x = [(1 - s) * p + s * q for p, q in zip(xa, xb)]
        d = [(1 - s) * p + s * q for p, q in zip(da, db)]
        nx = gmpy2.sqrt(sum(c * c for c in x))
        a = gmpy2.mpfr(self.scene.a)
        return PhasePoint.from_mpfr([a * c / nx for c in x], d)


@dataclass
class TrappedSeed:
    point: PhasePoint
    chord: Chord
    s: object
    budget: float
    steps: int


def exit_side(axis):
    axis = np.asarray(axis, dtype=float)

    def side(res):
        return res.exit_x is not None and float(res.exit_x @ axis) > 0
    return side


def two_sphere_bracket(scene: Scene, i: int = 0, j: int = 1, angle: float = math.pi / 6,
                       spread=(-0.01, 0.02), normal=(0.0, 0.0, 1.0)):
    """Two inward phase points on C whose exits straddle the bouncing-ball orbit.

    Both start at the same point of C. The reference direction reaches sphere
    ``i`` at polar ``angle`` from the axis towards sphere ``j`` and reflects
    parallel to that axis; the returned directions are rotated by ``spread``
    (radians) within the plane spanned by the axis and ``normal``. Returns
    ``(z_a, z_b, side)`` with ``side`` suited to :func:`find_trapped_seed`.
    """
    b1, b2 = scene.bodies[i], scene.bodies[j]
    if b1.kind != "sphere" or b2.kind != "sphere":
        raise ValueError("bracket construction needs two spheres")
    u = unit(b2.c - b1.c)
    v = np.asarray(normal, dtype=float)
    v = unit(v - (v @ u) * u)
    n = math.cos(angle) * u + math.sin(angle) * v
    p = b1.c + b1.r[0] * n
    din = u - 2 * (u @ n) * n              # reflects into +u at p
    B, C = p @ -din, p @ p - scene.a ** 2
    x0 = p - (-B + math.sqrt(B * B - C)) * din
    phi0 = math.atan2(din @ v, din @ u)
    za, zb = (PhasePoint(x0, math.cos(phi0 + s) * u + math.sin(phi0 + s) * v) for s in spread)
    return za, zb, exit_side(v)


def find_trapped_seed(scene: Scene, z_a: PhasePoint, z_b: PhasePoint, budget: float,
                      side: Optional[Callable] = None, precision_bits: Optional[int] = None,
                      max_steps: int = 20000) -> TrappedSeed:
    """Bisect a chord whose ends escape on different sides until a point is censored.

    ``side`` maps an escaped :class:`ExtendedTrace` to a boolean; the default
    is the sign of the exit point's z coordinate. The returned seed carries
    multiprecision coordinates and is censored at ``budget``.
    """
    side = side or exit_side((0.0, 0.0, 1.0))
    prec = precision_bits or default_precision(budget)
    chord = Chord(scene, z_a, z_b)
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        ends = [trace_extended(scene, chord.at(s), budget, prec) for s in (0, 1)]
        if any(r.censored for r in ends):
            raise SeedNotFree("chord endpoints must escape")
        if side(ends[0]) == side(ends[1]):
            raise SeedNotFree("chord endpoints escape on the same side")
        lo, hi = gmpy2.mpfr(0), gmpy2.mpfr(1)
        lo_side = side(ends[0])
        for step in range(1, max_steps + 1):
            mid = (lo + hi) / 2
            z = chord.at(mid)
            res = trace_extended(scene, z, budget, prec)
            if res.censored:
                return TrappedSeed(z, chord, mid, float(budget), step)
            if side(res) == lo_side:
                lo = mid
            else:
                hi = mid
    raise SeedNotTrapped(f"no censored point after {max_steps} bisection steps")


# ---------------------------------------------------------------------------
# sequences with growing sojourn times


@dataclass
class StageRecord:
    budget: float
    escape_time: float
    steps: int
    bracket: List[float]
    reflections: int
    ok: bool
    message: str = ""


@dataclass
class TrappedApproxSequence:
    rays: List[ReflectingRay]
    stages: List[StageRecord] = field(default_factory=list)
    report: List[str] = field(default_factory=list)

    @property
    def directions(self):
        return [(r.omega, r.theta) for r in self.rays]

    @property
    def sojourns(self):
        return np.array([r.sojourn for r in self.rays])

    @property
    def gaps(self):
        return np.diff(self.sojourns)

    @property
    def gaps_per_reflection(self):
        """Sojourn increments divided by the added number of reflections."""
        m = np.array([r.m for r in self.rays], dtype=float)
        return np.diff(self.sojourns) / np.diff(m)


def _palindromic_seed(points, indices, omega, scene):
    """Close a trajectory by time reversal at its most nearly normal reflection."""
    m = len(points)
    sines = np.empty(m)
    for k in range(m):
        u = omega if k == 0 else unit(points[k] - points[k - 1])
        _, g, _ = implicit_eval(scene.bodies[indices[k]], points[k])
        sines[k] = np.linalg.norm(np.cross(u, g)) / np.linalg.norm(g)
    # deep in the trapped phase the incidence angles sit at rounding level;
    # among those, the middle reflection is the deepest one
    close = np.flatnonzero(sines <= sines.min() + 1e-12)
    j = int(close[np.argmin(np.abs(close - (m - 1) / 2))])
    pts = np.vstack([points[: j + 1], points[:j][::-1]])
    seq = tuple(indices[: j + 1]) + tuple(indices[:j][::-1])
    return pts, seq


def extract_ray(scene: Scene, res, omega, closure="reversed", tol=1e-11) -> ReflectingRay:
    """Turn a long escaping trajectory into an ordinary reflecting ray.

    ``closure="observed"`` refines with the trajectory's own exit direction.
    ``closure="reversed"`` keeps the approach to the trapped set, closes it
    by time reversal and refines a ray with theta = -omega; its sojourn time
    grows by exactly one segment length per added reflection.
    """
    omega = unit(omega)
    if closure == "observed":
        return refine_ray(scene, omega, res.exit_xi, res.points, res.body_indices, tol=tol)
    if closure != "reversed":
        raise ValueError(f"unknown closure {closure!r}")
    pts, seq = _palindromic_seed(res.points, res.body_indices, omega, scene)
    return refine_ray(scene, omega, -omega, pts, seq, tol=tol)


def boundary_bisection(scene: Scene, z_trapped: PhasePoint, z_free: PhasePoint,
                       budgets: Sequence[float], closure: str = "reversed",
                       precision_bits: Optional[int] = None,
                       max_steps: int = 5000) -> TrappedApproxSequence:
    """Rays from initial conditions converging to a trapped one.

    Stage k bisects the chord from ``z_free`` to ``z_trapped`` until a point
    with escape time in [B_k, 2 B_k] appears, then converts that trajectory
    into an ordinary reflecting ray. Brackets are nested across stages.
    """
    budgets = [float(b) for b in budgets]
    if any(b2 <= b1 for b1, b2 in zip(budgets, budgets[1:])):
        raise ValueError("budgets must increase")
    top = 2 * budgets[-1]
    prec = precision_bits or default_precision(top)
    T_free, c_free = escape_time(scene, z_free, budgets[0], precision_bits=prec)
    if c_free:
        raise SeedNotFree("z_free does not escape within the first budget")
    if not escape_time(scene, z_trapped, top, precision_bits=prec)[1]:
        raise SeedNotTrapped("z_trapped escapes before the largest budget")

    chord = Chord(scene, z_free, z_trapped)
    seq = TrappedApproxSequence([])
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        lo, hi = gmpy2.mpfr(0), gmpy2.mpfr(1)
        for B in budgets:
            found, steps, widths = None, 0, []
            while steps < max_steps:
                steps += 1
                mid = (lo + hi) / 2
                z = chord.at(mid)
                res = trace_extended(scene, z, 2 * B, prec)
                widths.append(float(hi - lo))
                if res.censored:
                    hi = mid
                elif res.length < B:
                    lo = mid
                else:
                    found = (z, res)
                    lo = mid
                    break
            if found is None:
                seq.stages.append(StageRecord(B, math.nan, steps, widths, 0, False, "bracket exhausted"))
                seq.report.append(f"budget {B:g}: no escape time in [B, 2B]")
                continue
            z, res = found
            stage = StageRecord(B, res.length, steps, widths, len(res.body_indices), True)
            try:
                ray = extract_ray(scene, res, z.xi, closure)
            except (NoConvergence, ObstructedPath, TangentRay, DegenerateSegment,
                    ThetaEqualsOmega) as exc:
                stage.ok, stage.message = False, f"refinement failed: {exc}"
                seq.stages.append(stage)
                seq.report.append(f"budget {B:g}: {stage.message}")
                continue
            if seq.rays and ray.sojourn <= seq.rays[-1].sojourn:
                stage.ok, stage.message = False, "sojourn not increasing"
                seq.stages.append(stage)
                seq.report.append(f"budget {B:g}: {stage.message}")
                continue
            seq.stages.append(stage)
            seq.rays.append(ray)
    return seq


def _linearized_det(scene):
    return lambda ray: jacobian_linearized(scene, ray).det


def nondegenerate_filter(scene: Scene, sequence: TrappedApproxSequence, tol: float = 1e-8,
                         radius: float = 1e-3, grid: int = 2,
                         det_of: Optional[Callable] = None) -> TrappedApproxSequence:
    """Keep rays with |det dJ| > tol, repairing degenerate ones by perturbing directions.

    A repair must stay within 1% of the original sojourn time. Rays that
    cannot be repaired are dropped; both outcomes are written to the report.
    """
    if not sequence.rays:
        raise ValueError("sequence is empty")
    out = TrappedApproxSequence([], list(sequence.stages), list(sequence.report))
    if tol <= 0:
        out.rays = list(sequence.rays)
        return out
    det_of = det_of or _linearized_det(scene)
    fresh = _linearized_det(scene)
    for k, ray in enumerate(sequence.rays):
        if abs(det_of(ray)) > tol:
            out.rays.append(ray)
            continue
        repaired = None
        e = tangent_frame(ray.omega)
        f = tangent_frame(ray.theta)
        offsets = [(i, j) for i in range(-grid, grid + 1) for j in range(-grid, grid + 1) if i or j]
        offsets.sort(key=lambda ij: ij[0] ** 2 + ij[1] ** 2)
        for i, j in offsets:
            step = radius / grid
            w = unit(ray.omega + step * (i * e[0] + j * e[1]))
            th = unit(ray.theta + step * (j * f[0] - i * f[1]))
            try:
                cand = refine_ray(scene, w, th, ray.points, ray.body_indices)
            except (NoConvergence, ObstructedPath, TangentRay, DegenerateSegment, ThetaEqualsOmega):
                continue
            if abs(cand.sojourn - ray.sojourn) <= 0.01 * abs(ray.sojourn) and abs(fresh(cand)) > tol:
                repaired = cand
                break
        if repaired is None:
            out.report.append(f"ray {k}: degenerate, dropped")
        else:
            out.report.append(f"ray {k}: degenerate, replaced by perturbed directions")
            out.rays.append(repaired)
    return out


def weak_nondegeneracy_estimate(scene: Scene, y_eta: PhasePoint, radius: float,
                                n_samples: int, seed: int = 0, budget: float = DEFAULT_BUDGET,
                                max_reflections: int = 10_000):
    """Fraction of phase points near ``y_eta`` that leave as ordinary reflecting rays.

    Samples (x, omega) uniformly in a ball of the given radius in the four
    tangent coordinates of C x S^2 around ``y_eta``. Returns the fraction and
    the half-width of the 95% Wilson score interval.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    if radius <= 0:
        raise ValueError("radius must be positive")
    rng = np.random.default_rng(seed)
    x0, xi0 = y_eta.x, y_eta.xi
    e1, e2 = tangent_frame(x0)
    f1, f2 = tangent_frame(xi0)
    v = rng.normal(size=(n_samples, 4))
    v /= np.linalg.norm(v, axis=1)[:, None]
    v *= radius * rng.random(n_samples)[:, None] ** 0.25
    hits = 0
    for dx1, dx2, dw1, dw2 in v:
        x = x0 + dx1 * e1 + dx2 * e2
        x *= scene.a / np.linalg.norm(x)
        w = unit(xi0 + dw1 * f1 + dw2 * f2)
        if x @ w >= 0:
            continue
        tr = trace(scene, PhasePoint(x, w), max_reflections=max_reflections, budget=budget)
        if tr.status == "escaped" and tr.hits:
            hits += 1
    p = hits / n_samples
    return p, wilson_halfwidth(hits, n_samples)


def wilson_halfwidth(hits: int, n: int, z: float = 1.96) -> float:
    """Half-width of the Wilson score interval; stays positive at p = 0 or 1."""
    p = hits / n
    return z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
