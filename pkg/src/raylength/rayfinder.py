"""Reflecting (omega, theta)-rays as critical points of the broken-path length.

For reflection points x_1..x_m the functional

    F = <x_1, omega> + sum ||x_i - x_{i+1}|| - <x_m, theta>

restricted to the product of the boundary surfaces is stationary exactly when
every reflection is specular, and its critical value is the sojourn time.
Critical points are located with a Riemannian Newton iteration: steps live in
the tangent planes and iterates are pulled back onto the surfaces.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .billiard import PhasePoint, reflect, trace
from .errors import (DegenerateSegment, NoConvergence, NotOnSurface, ObstructedPath,
                     TangentRay, ThetaEqualsOmega)
from .geometry import (SURFACE_TOL, TANGENCY_TOL, Body, Scene, first_hit, implicit_eval,
                       project_to_surface, tangent_frame, unit)

MERGE_TOL = 1e-6
MAX_ITER = 100


@dataclass
class ReflectingRay:
    omega: np.ndarray
    theta: np.ndarray
    points: np.ndarray
    body_indices: tuple
    sojourn: float
    residual: float
    gradient_norm: float = 0.0
    iterations: int = 0

    @property
    def m(self):
        return len(self.points)

    @property
    def t_singular(self):
        return -self.sojourn


def check_directions(omega, theta):
    omega, theta = unit(omega), unit(theta)
    if np.linalg.norm(theta - omega) < 1e-12:
        raise ThetaEqualsOmega("theta must differ from omega")
    return omega, theta


def _segments(points):
    s = np.diff(points, axis=0)
    L = np.linalg.norm(s, axis=1)
    if np.any(L == 0):
        raise DegenerateSegment("consecutive reflection points coincide")
    return s, L


def fermat_value(omega, theta, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _, L = _segments(points)
    return float(points[0] @ np.asarray(omega, float) + L.sum() - points[-1] @ np.asarray(theta, float))


def _directions(omega, theta, points):
    """Unit directions u_0 = omega, u_i along segment i, u_m = theta."""
    s, L = _segments(points)
    return np.vstack([omega, s / L[:, None], theta]), L


def fermat_full_gradient(omega, theta, points):
    u, _ = _directions(omega, theta, points)
    return u[:-1] - u[1:]


def fermat_gradient(omega, theta, points, bodies: Sequence[Body], tol=SURFACE_TOL):
    """Tangential part of dF/dx_i at each reflection point, shape (m, 3)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    grad = fermat_full_gradient(np.asarray(omega, float), np.asarray(theta, float), points)
    out = np.empty_like(grad)
    for i, (x, body) in enumerate(zip(points, bodies)):
        value, g, _ = implicit_eval(body, x)
        if abs(value) >= tol:
            raise NotOnSurface(f"reflection point {i} is off its surface")
        n = g / np.linalg.norm(g)
        out[i] = grad[i] - (grad[i] @ n) * n
    return out


def _tangent_system(omega, theta, points, bodies):
    """Gradient and Riemannian Hessian in per-point tangent frames."""
    m = len(points)
    u, L = _directions(omega, theta, points)
    grad = u[:-1] - u[1:]
    hess = np.zeros((3 * m, 3 * m))
    for i in range(m - 1):
        A = (np.eye(3) - np.outer(u[i + 1], u[i + 1])) / L[i]
        a, b = slice(3 * i, 3 * i + 3), slice(3 * i + 3, 3 * i + 6)
        hess[a, a] += A
        hess[b, b] += A
        hess[a, b] -= A
        hess[b, a] -= A
    E = np.zeros((3 * m, 2 * m))
    for i, (x, body) in enumerate(zip(points, bodies)):
        _, g, H = implicit_eval(body, x)
        mu = (grad[i] @ g) / (g @ g)
        sl = slice(3 * i, 3 * i + 3)
        hess[sl, sl] -= mu * H
        e1, e2 = tangent_frame(g)
        E[sl, 2 * i] = e1
        E[sl, 2 * i + 1] = e2
    return E.T @ grad.ravel(), E.T @ hess @ E, E


def fermat_hessian(omega, theta, points, bodies):
    """Riemannian Hessian of the Fermat functional on the product of surfaces."""
    _, H, _ = _tangent_system(np.asarray(omega, float), np.asarray(theta, float),
                              np.asarray(points, float), bodies)
    return H


def reflection_residual(omega, theta, points, bodies):
    u, _ = _directions(omega, theta, points)
    worst = 0.0
    for i, (x, body) in enumerate(zip(points, bodies)):
        _, g, _ = implicit_eval(body, x)
        n = g / np.linalg.norm(g)
        worst = max(worst, np.linalg.norm(u[i + 1] - reflect(u[i], n)))
    return float(worst)


def _project_all(points, bodies):
    return np.array([project_to_surface(b, x) for x, b in zip(points, bodies)])


def _nearest_bodies(scene, points):
    idx = []
    for x in points:
        vals = [abs(implicit_eval(b, x)[0]) for b in scene.bodies]
        idx.append(int(np.argmin(vals)))
    return tuple(idx)


def validate_ray(scene: Scene, omega, theta, points, body_indices, tangency_tol=TANGENCY_TOL):
    """Re-trace every segment: unobstructed, transversal, entering from outside."""
    u, L = _directions(omega, theta, points)
    m = len(points)
    for i in range(m):
        body = scene.bodies[body_indices[i]]
        _, g, _ = implicit_eval(body, points[i])
        n = g / np.linalg.norm(g)
        cin, cout = u[i] @ n, u[i + 1] @ n
        if min(abs(cin), abs(cout)) < tangency_tol:
            raise TangentRay(f"grazing segment at reflection {i}")
        if cin > 0 or cout < 0:
            raise ObstructedPath(f"segment passes through body at reflection {i}")
    if first_hit(scene, points[0], -u[0], tangency_tol=0.0) is not None:
        raise ObstructedPath("incoming line is blocked")
    if first_hit(scene, points[-1], u[-1], tangency_tol=0.0) is not None:
        raise ObstructedPath("outgoing line is blocked")
    for i in range(m - 1):
        hit = first_hit(scene, points[i], u[i + 1], tangency_tol=0.0)
        if (hit is None or hit.point.body_index != body_indices[i + 1]
                or abs(hit.travel - L[i]) > 1e-7 * max(1.0, L[i])):
            raise ObstructedPath(f"segment {i} does not reach the next reflection point")


def refine_ray(scene: Scene, omega, theta, initial_points, body_indices=None,
               tol=1e-11, max_iter=MAX_ITER, validate=True) -> ReflectingRay:
    """Damped Newton on the tangential gradient of the Fermat functional."""
    omega, theta = check_directions(omega, theta)
    points = np.atleast_2d(np.asarray(initial_points, dtype=float)).copy()
    if body_indices is None:
        body_indices = _nearest_bodies(scene, points)
    body_indices = tuple(int(i) for i in body_indices)
    bodies = [scene.bodies[i] for i in body_indices]
    points = _project_all(points, bodies)

    def merit(p):
        try:
            g, _, _ = _tangent_system(omega, theta, p, bodies)
        except DegenerateSegment:
            return np.inf
        return g @ g

    it = 0
    for it in range(max_iter + 1):
        g, H, E = _tangent_system(omega, theta, points, bodies)
        gn = np.max(np.abs(g)) if g.size else 0.0
        if gn < tol:
            break
        if it == max_iter:
            raise NoConvergence(f"gradient {gn:.2e} after {max_iter} iterations")
        try:
            step = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, -g, rcond=None)[0]
        f0 = g @ g
        alpha = 1.0
        for _ in range(40):
            trial = _project_all(points + (E @ (alpha * step)).reshape(-1, 3), bodies)
            if merit(trial) <= (1 - 1e-4 * alpha) * f0:
                break
            alpha *= 0.5
        else:
            # Newton direction is not a descent direction for |g|^2 here
            if f0 < (1e3 * tol) ** 2:
                break
            raise NoConvergence(f"line search failed at gradient {gn:.2e}")
        points = trial
    if validate:
        validate_ray(scene, omega, theta, points, body_indices)
    return ReflectingRay(
        omega=omega, theta=theta, points=points, body_indices=body_indices,
        sojourn=fermat_value(omega, theta, points),
        residual=reflection_residual(omega, theta, points, bodies),
        gradient_norm=float(gn), iterations=it)


def sojourn_hyperplane(scene: Scene, ray: ReflectingRay, a: Optional[float] = None):
    """Sojourn time from the tangent hyperplanes of the ball of radius ``a``."""
    a = scene.a if a is None else float(a)
    w, th = ray.omega, ray.theta
    x1, xm = ray.points[0], ray.points[-1]
    # Z_omega = {<x, omega> = -a}, Z_{-theta} = {<x, theta> = a}
    pi_in = x1 - (x1 @ w + a) * w
    pi_out = xm - (xm @ th - a) * th
    inner = np.linalg.norm(np.diff(ray.points, axis=0), axis=1).sum()
    return float(np.linalg.norm(pi_in - x1) + inner + np.linalg.norm(xm - pi_out) - 2 * a)


# ---------------------------------------------------------------------------
# enumeration


class RayList(list):
    """List of rays plus seeding statistics in ``stats``."""

    def __init__(self, rays=(), stats=None):
        super().__init__(rays)
        self.stats = stats or {}


def _radial_point(body: Body, v):
    v = unit(v)
    return body.c + v / np.sqrt(np.sum((v / body.r) ** 2))


def sequence_seed(scene: Scene, omega, theta, sequence):
    """Initial reflection points for a prescribed body itinerary."""
    pts = []
    m = len(sequence)
    for k, bi in enumerate(sequence):
        body = scene.bodies[bi]
        back = -omega if k == 0 else unit(scene.bodies[sequence[k - 1]].c - body.c)
        ahead = theta if k == m - 1 else unit(scene.bodies[sequence[k + 1]].c - body.c)
        v = back + ahead
        if np.linalg.norm(v) < 1e-8:
            v = back
        pts.append(_radial_point(body, v))
    return np.array(pts)


def itineraries(n_bodies, m_max, limit=5000):
    """Body sequences without immediate repeats (convex bodies), shortest first."""
    out = []
    for m in range(1, m_max + 1):
        for first in range(n_bodies):
            for rest in itertools.product(range(n_bodies - 1), repeat=m - 1):
                seq = [first]
                for r in rest:
                    seq.append(r if r < seq[-1] else r + 1)
                out.append(tuple(seq))
                if len(out) >= limit:
                    return out
    return out


def launch_point(scene: Scene, omega, u2):
    """Point of the plane Z_omega with in-plane coordinates ``u2``."""
    e1, e2 = tangent_frame(omega)
    return -scene.a * omega + u2[0] * e1 + u2[1] * e2


def find_rays(scene: Scene, omega, theta, m_max: int = 4, grid_density: int = 24,
              tol=1e-11) -> RayList:
    """Ordinary reflecting (omega, theta)-rays with at most ``m_max`` reflections.

    Seeds come from a shooting grid on Z_omega and from every body itinerary
    up to ``m_max``; each is refined, validated and merged. Sorted by sojourn.
    """
    omega, theta = check_directions(omega, theta)
    stats = {"seeds": 0, "converged": 0, "discarded": 0, "failed": 0, "shooting_only": 0}
    if m_max < 1:
        return RayList([], stats)
    seeds = []
    # (i) shooting grid: per itinerary keep the launch whose exit is closest to theta
    best = {}
    if grid_density > 0:
        s = np.linspace(-scene.rho, scene.rho, grid_density)
        for s1 in s:
            for s2 in s:
                if s1 * s1 + s2 * s2 > scene.rho ** 2:
                    continue
                x0 = launch_point(scene, omega, (s1, s2))
                tr = trace(scene, PhasePoint(x0, omega), max_reflections=m_max + 1)
                if tr.status != "escaped" or not 1 <= len(tr.hits) <= m_max:
                    continue
                miss = np.linalg.norm(tr.exit.xi - theta)
                key = tuple(tr.body_sequence)
                if key not in best or miss < best[key][0]:
                    best[key] = (miss, np.array([h.x for h in tr.hits]))
    shooting_keys = set(best)
    for key, (_, pts) in best.items():
        seeds.append((key, pts))
    # (ii) combinatorial itineraries
    for seq in itineraries(len(scene.bodies), m_max):
        seeds.append((seq, sequence_seed(scene, omega, theta, seq)))

    rays: List[ReflectingRay] = []
    for seq, pts in seeds:
        stats["seeds"] += 1
        try:
            ray = refine_ray(scene, omega, theta, pts, seq, tol=tol)
        except (ObstructedPath, TangentRay):
            stats["discarded"] += 1
            continue
        except (NoConvergence, DegenerateSegment, np.linalg.LinAlgError):
            stats["failed"] += 1
            continue
        stats["converged"] += 1
        if any(r.body_indices == ray.body_indices
               and np.max(np.abs(r.points - ray.points)) < MERGE_TOL for r in rays):
            continue
        rays.append(ray)
    rays.sort(key=lambda r: r.sojourn)
    stats["unique"] = len(rays)
    stats["shooting_itineraries"] = len(shooting_keys)
    return RayList(rays, stats)
