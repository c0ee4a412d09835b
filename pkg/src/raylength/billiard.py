"""Exterior billiard flow: specular reflection, tracing and escape times.

Two tracers share one contract. The double precision tracer serves ray
statistics and shooting maps. Near a hyperbolic trapped orbit a perturbation
of size eps survives only about log(1/eps)/log(expansion) reflections, so
escape times far beyond ~50 length units are meaningless in double precision;
phase points carrying a multiprecision copy (``PhasePoint.hp``) are traced
with gmpy2 instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import gmpy2
import numpy as np

from .geometry import (MIN_TRAVEL, TANGENCY_TOL, Scene, SurfacePoint, exit_distance,
                       first_hit)

DEFAULT_BUDGET = 1000.0


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    xi: np.ndarray
    hp: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        xi = np.asarray(self.xi, dtype=float)
        n = np.linalg.norm(xi)
        if not n > 0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi / n)

    @classmethod
    def from_mpfr(cls, x, xi):
        """Phase point backed by multiprecision coordinates (tuples of mpfr)."""
        norm = gmpy2.sqrt(sum(v * v for v in xi))
        xi = tuple(v / norm for v in xi)
        return cls([float(v) for v in x], [float(v) for v in xi], hp=(tuple(x), xi))


@dataclass
class Trajectory:
    start: PhasePoint
    hits: List[SurfacePoint]
    directions: List[np.ndarray]
    exit: Optional[PhasePoint]
    path_length: float
    status: str
    segments: List[float] = field(default_factory=list)

    @property
    def body_sequence(self):
        return [h.body_index for h in self.hits]


def reflect(d, nu):
    """Specular reflection d - 2 <d, nu> nu; broadcasts over leading axes."""
    d = np.asarray(d, dtype=float)
    nu = np.asarray(nu, dtype=float)
    return d - 2.0 * np.sum(d * nu, axis=-1, keepdims=True) * nu


def trace(scene: Scene, z: PhasePoint, max_reflections: int = 10_000,
          budget: Optional[float] = None, tangency_tol=TANGENCY_TOL) -> Trajectory:
    """Follow the billiard flow from ``z`` until it leaves the ball of radius ``scene.a``.

    Stops early on a grazing hit (status ``tangency``), after
    ``max_reflections`` reflections, or once the path length reaches
    ``budget`` (both ``budget_exhausted``).
    """
    x, d = z.x.copy(), z.xi.copy()
    hits, dirs, segs = [], [d], []
    path = 0.0
    while True:
        hit = first_hit(scene, x, d, tangency_tol=tangency_tol)
        if hit is None:
            t = exit_distance(scene.a, x, d)
            if budget is not None and path + t >= budget:
                segs.append(budget - path)
                return Trajectory(z, hits, dirs, None, budget, "budget_exhausted", segs)
            segs.append(t)
            path += t
            return Trajectory(z, hits, dirs, PhasePoint(x + t * d, d), path, "escaped", segs)
        if budget is not None and path + hit.travel >= budget:
            segs.append(budget - path)
            return Trajectory(z, hits, dirs, None, budget, "budget_exhausted", segs)
        path += hit.travel
        segs.append(hit.travel)
        hits.append(hit.point)
        x = hit.point.x
        if hit.tangency:
            return Trajectory(z, hits, dirs, None, path, "tangency", segs)
        d = reflect(d, hit.point.nu)
        d /= np.linalg.norm(d)
        dirs.append(d)
        if len(hits) >= max_reflections:
            return Trajectory(z, hits, dirs, None, path, "budget_exhausted", segs)


def _check_on_sphere(scene, z):
    r = np.linalg.norm(z.x)
    if abs(r - scene.a) > 1e-9 * max(1.0, scene.a):
        raise ValueError("phase point must start on the reference sphere C")
    if z.x @ z.xi >= 0:
        raise ValueError("direction must point into the reference ball")


def escape_time(scene: Scene, z: PhasePoint, budget: float = DEFAULT_BUDGET,
                precision_bits: Optional[int] = None):
    """Path length until the trajectory from ``z`` on C first leaves the ball.

    Returns ``(T, censored)``; a censored result has ``T == budget`` and stands
    in for an infinite escape time. Phase points with multiprecision
    coordinates, or an explicit ``precision_bits``, use the gmpy2 tracer.
    """
    _check_on_sphere(scene, z)
    if z.hp is not None or precision_bits is not None:
        res = trace_extended(scene, z, budget, precision_bits)
        return res.length, res.censored
    traj = trace(scene, z, budget=budget)
    if traj.status == "budget_exhausted":
        return float(budget), True
    return traj.path_length, False


# ---------------------------------------------------------------------------
# multiprecision tracing


@dataclass
class ExtendedTrace:
    length: float
    censored: bool
    tangency: bool
    points: np.ndarray          # reflection points rounded to double
    body_indices: List[int]
    exit_x: Optional[np.ndarray]
    exit_xi: Optional[np.ndarray]


def default_precision(budget):
    # ~2.5 bits are lost per unit length near the reference bouncing-ball orbit
    return int(256 + 4 * math.ceil(budget))


def trace_extended(scene: Scene, z: PhasePoint, budget: float = DEFAULT_BUDGET,
                   precision_bits: Optional[int] = None, max_reflections: int = 10**6,
                   tangency_tol=TANGENCY_TOL) -> ExtendedTrace:
    prec = precision_bits or default_precision(budget)
    with gmpy2.context(gmpy2.get_context(), precision=prec):
        mp = gmpy2.mpfr
        if z.hp is not None:
            x = [mp(v) for v in z.hp[0]]
            d = [mp(v) for v in z.hp[1]]
        else:
            x = [mp(float(v)) for v in z.x]
            d = [mp(float(v)) for v in z.xi]
        nd = gmpy2.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        d = [v / nd for v in d]
        bodies = [([mp(c) for c in b.center], [1 / mp(r) for r in b.radii]) for b in scene.bodies]
        a2 = mp(scene.a) ** 2
        tmin = mp(MIN_TRAVEL)
        path = mp(0)
        pts, idx = [], []
        while True:
            best_t, best_i = None, -1
            for i, (c, ir) in enumerate(bodies):
                y0 = (x[0] - c[0]) * ir[0]
                y1 = (x[1] - c[1]) * ir[1]
                y2 = (x[2] - c[2]) * ir[2]
                e0, e1, e2 = d[0] * ir[0], d[1] * ir[1], d[2] * ir[2]
                A = e0 * e0 + e1 * e1 + e2 * e2
                B = y0 * e0 + y1 * e1 + y2 * e2
                C = y0 * y0 + y1 * y1 + y2 * y2 - 1
                disc = B * B - A * C
                if disc < 0:
                    continue
                sq = gmpy2.sqrt(disc)
                q = -(B + sq) if B >= 0 else -(B - sq)
                if q == 0:
                    continue
                r1, r2 = q / A, C / q
                lo, hi = (r1, r2) if r1 <= r2 else (r2, r1)
                t = lo if lo > tmin else (hi if hi > tmin else None)
                if t is not None and (best_t is None or t < best_t):
                    best_t, best_i = t, i
            if best_t is None:
                B = x[0] * d[0] + x[1] * d[1] + x[2] * d[2]
                C = x[0] * x[0] + x[1] * x[1] + x[2] * x[2] - a2
                disc = B * B - C
                t = -B + gmpy2.sqrt(disc) if disc > 0 else mp(0)
                if t < 0:
                    t = mp(0)
                if path + t >= budget:
                    return ExtendedTrace(float(budget), True, False, np.array(pts).reshape(-1, 3), idx, None, None)
                path += t
                xe = np.array([float(x[k] + t * d[k]) for k in range(3)])
                return ExtendedTrace(float(path), False, False, np.array(pts).reshape(-1, 3), idx,
                                     xe, np.array([float(v) for v in d]))
            if path + best_t >= budget:
                return ExtendedTrace(float(budget), True, False, np.array(pts).reshape(-1, 3), idx, None, None)
            path += best_t
            x = [x[k] + best_t * d[k] for k in range(3)]
            c, ir = bodies[best_i]
            g = [(x[k] - c[k]) * ir[k] * ir[k] for k in range(3)]
            gn = gmpy2.sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2])
            n = [v / gn for v in g]
            dn = d[0] * n[0] + d[1] * n[1] + d[2] * n[2]
            pts.append([float(v) for v in x])
            idx.append(best_i)
            if abs(dn) < tangency_tol:
                return ExtendedTrace(float(path), False, True, np.array(pts).reshape(-1, 3), idx, None, None)
            d = [d[k] - 2 * dn * n[k] for k in range(3)]
            if len(pts) >= max_reflections:
                return ExtendedTrace(float(path), True, False, np.array(pts).reshape(-1, 3), idx, None, None)
