"""Implicit convex bodies (spheres and ellipsoids) and ray intersection.

Every body is described by the quadratic implicit function

    f(x) = sum_k ((x_k - c_k) / r_k)**2 - 1,

negative inside, zero on the boundary and positive in the exterior domain.
Spheres are ellipsoids with equal radii, so a single code path handles both
and the derivatives are exact.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize

from .errors import NotOnSurface, ValidationError

SURFACE_TOL = 1e-9
TANGENCY_TOL = 1e-7
MIN_TRAVEL = 1e-9


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def tangent_frame(n):
    """Right-handed orthonormal pair (e1, e2) with e1 x e2 = n."""
    n = unit(n)
    # pick the coordinate axis least aligned with n
    k = int(np.argmin(np.abs(n)))
    helper = np.zeros(3)
    helper[k] = 1.0
    e1 = helper - n * (helper @ n)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


@dataclass(frozen=True)
class Body:
    kind: str
    center: tuple
    radii: tuple

    def __post_init__(self):
        if self.kind not in ("sphere", "ellipsoid"):
            raise ValidationError(f"unknown body kind {self.kind!r}")
        center = tuple(float(c) for c in np.ravel(self.center))
        radii = tuple(float(r) for r in np.ravel(self.radii))
        if len(center) != 3:
            raise ValidationError("center must have 3 coordinates")
        if self.kind == "sphere":
            if len(radii) == 3 and len(set(radii)) == 1:
                radii = radii[:1]
            if len(radii) != 1:
                raise ValidationError("a sphere takes exactly one radius")
            radii = radii * 3
        elif len(radii) != 3:
            raise ValidationError("an ellipsoid takes three radii")
        if not all(np.isfinite(r) and r > 0 for r in radii):
            raise ValidationError("radii must be finite and positive")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radii", radii)

    @classmethod
    def sphere(cls, center, radius):
        return cls("sphere", tuple(center), (float(radius),))

    @classmethod
    def ellipsoid(cls, center, radii):
        return cls("ellipsoid", tuple(center), tuple(radii))

    @property
    def c(self):
        return np.array(self.center)

    @property
    def r(self):
        return np.array(self.radii)

    @property
    def bounding_radius(self):
        return max(self.radii)

    def scaled(self, s):
        """The body under the dilation x -> s x."""
        radii = self.radii[:1] if self.kind == "sphere" else self.radii
        return Body(self.kind, tuple(s * c for c in self.center), tuple(s * r for r in radii))


@dataclass(frozen=True)
class SurfacePoint:
    body_index: int
    x: np.ndarray
    nu: np.ndarray
    shape: np.ndarray
    frame: tuple = field(repr=False, default=None)


@dataclass(frozen=True)
class Hit:
    point: SurfacePoint
    travel: float
    tangency: bool


def implicit_eval(body: Body, x):
    """Value, gradient and Hessian of the body's implicit function at ``x``."""
    x = np.asarray(x, dtype=float)
    inv2 = 1.0 / body.r**2
    y = x - body.c
    value = float(np.sum(y * y * inv2) - 1.0)
    return value, 2.0 * y * inv2, np.diag(2.0 * inv2)


def _check_on_surface(body, x, tol):
    value, grad, hess = implicit_eval(body, x)
    if abs(value) >= tol:
        raise NotOnSurface(f"implicit value {value:.3e} exceeds tolerance {tol:.0e}")
    return grad, hess


def unit_normal(body: Body, x, tol=SURFACE_TOL):
    """Outward unit normal at a boundary point (pointing into the exterior)."""
    grad, _ = _check_on_surface(body, x, tol)
    return grad / np.linalg.norm(grad)


def shape_operator(body: Body, x, tol=SURFACE_TOL):
    """Second fundamental form in the tangent frame returned alongside it.

    Positive definite for the supported (strictly convex) bodies.
    """
    grad, hess = _check_on_surface(body, x, tol)
    g = np.linalg.norm(grad)
    e1, e2 = tangent_frame(grad / g)
    E = np.column_stack([e1, e2])
    return E.T @ hess @ E / g, (e1, e2)


def gauss_curvature(body: Body, x, tol=SURFACE_TOL):
    shape, _ = shape_operator(body, x, tol)
    return float(np.linalg.det(shape))


def surface_point(body: Body, index: int, x, tol=SURFACE_TOL) -> SurfacePoint:
    x = np.asarray(x, dtype=float)
    nu = unit_normal(body, x, tol)
    shape, frame = shape_operator(body, x, tol)
    return SurfacePoint(index, x, nu, shape, frame)


def project_to_surface(body: Body, x, iters=50):
    """Pull a point near the boundary back onto it along the gradient."""
    x = np.asarray(x, dtype=float)
    if body.kind == "sphere":
        y = x - body.c
        return body.c + body.radii[0] * y / np.linalg.norm(y)
    for _ in range(iters):
        value, grad, _ = implicit_eval(body, x)
        if abs(value) < 1e-15:
            break
        x = x - value * grad / (grad @ grad)
    return x


def ray_body_roots(body: Body, x, d):
    """Both real roots t of f(x + t d) = 0, or None if the line misses."""
    r = body.r
    y = (np.asarray(x, dtype=float) - body.c) / r
    e = np.asarray(d, dtype=float) / r
    A = e @ e
    B = y @ e
    C = y @ y - 1.0
    disc = B * B - A * C
    if disc < 0.0:
        return None
    sq = np.sqrt(disc)
    # numerically stable pair of roots
    q = -(B + np.copysign(sq, B))
    if q == 0.0:
        return 0.0, 0.0
    t1, t2 = q / A, C / q
    return (t1, t2) if t1 <= t2 else (t2, t1)


@dataclass(frozen=True)
class Scene:
    """A finite union of disjoint convex bodies inside the ball of radius ``rho``.

    ``a`` is the radius of the reference ball centred at the origin; its
    boundary sphere is where trajectories start and escape.
    """

    bodies: tuple
    rho: Optional[float] = None
    a: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        bodies = tuple(self.bodies)
        if not bodies:
            raise ValidationError("scene needs at least one body")
        object.__setattr__(self, "bodies", bodies)
        reach = max(np.linalg.norm(b.c) + b.bounding_radius for b in bodies)
        rho = float(reach) if self.rho is None else float(self.rho)
        a = rho if self.a is None else float(self.a)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "a", a)
        if not (rho > 0 and np.isfinite(rho)):
            raise ValidationError("rho must be positive")
        for i, b in enumerate(bodies):
            if np.linalg.norm(b.c) + b.bounding_radius > rho * (1 + 1e-12):
                raise ValidationError(f"body {i} is not contained in the ball of radius rho")
        if a < rho:
            raise ValidationError("reference radius a must satisfy a >= rho")
        for i in range(len(bodies)):
            for j in range(i + 1, len(bodies)):
                if not bodies_disjoint(bodies[i], bodies[j]):
                    raise ValidationError(f"bodies overlap ({i} and {j})")

    def scaled(self, s):
        return Scene(tuple(b.scaled(s) for b in self.bodies), s * self.rho, s * self.a, self.name)

    def with_radius(self, a):
        return Scene(self.bodies, self.rho, a, self.name)


def bodies_disjoint(b1: Body, b2: Body, gap=1e-9) -> bool:
    dist = np.linalg.norm(b1.c - b2.c)
    if dist > b1.bounding_radius + b2.bounding_radius + gap:
        return True
    if b1.kind == "sphere" and b2.kind == "sphere":
        return False
    # min over x of max(f1, f2) is positive exactly when the convex bodies are disjoint
    cons = [
        {"type": "ineq", "fun": lambda z, b=b: z[3] - implicit_eval(b, z[:3])[0]}
        for b in (b1, b2)
    ]
    w = b2.bounding_radius / (b1.bounding_radius + b2.bounding_radius)
    z0 = np.append(w * b1.c + (1 - w) * b2.c, 1.0)
    res = minimize(lambda z: z[3], z0, constraints=cons, method="SLSQP",
                   options={"ftol": 1e-14, "maxiter": 500})
    return bool(res.x[3] > gap)


def first_hit(scene: Scene, x, d, min_travel=MIN_TRAVEL, tangency_tol=TANGENCY_TOL) -> Optional[Hit]:
    """Nearest boundary crossing along ``x + t d`` with ``t > min_travel``."""
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    best_t, best_i = np.inf, -1
    for i, body in enumerate(scene.bodies):
        roots = ray_body_roots(body, x, d)
        if roots is None:
            continue
        for t in roots:
            if t > min_travel:
                if t < best_t:
                    best_t, best_i = t, i
                break
    if best_i < 0:
        return None
    body = scene.bodies[best_i]
    t = best_t
    value, grad, _ = implicit_eval(body, x + t * d)
    slope = grad @ d
    if abs(slope) > 1e-3 * np.linalg.norm(grad):
        t -= value / slope
    hit = x + t * d
    # surface test uses a relaxed tolerance here; the point is a computed root
    point = surface_point(body, best_i, hit, tol=max(SURFACE_TOL, 1e3 * abs(value) + 1e-12))
    tangency = abs(d @ point.nu) < tangency_tol
    return Hit(point, float(t), bool(tangency))


def exit_distance(a, x, d):
    """Travel until the line ``x + t d`` leaves the ball of radius ``a`` (0 if outside)."""
    B = x @ d
    C = x @ x - a * a
    disc = B * B - C
    if disc <= 0:
        return 0.0
    return max(0.0, -B + np.sqrt(disc))


def sample_surface(body: Body, n, rng):
    """Uniformly random directions mapped onto the boundary (not area-uniform)."""
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return body.c + v * body.r
