"""Differential cross sections: the shooting map u -> theta(u) and its Jacobian.

Launch points u live on the plane Z_omega = {<x, omega> = -a}; directions
at theta are expressed in a tangent frame of the unit sphere at theta. Both
frames are right-handed (e1 x e2 equals the frame normal), which fixes the
sign of the determinant; comparisons use |det|.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .billiard import PhasePoint, trace
from .errors import (NotApplicable, SingularHit, TangencyEncountered, WrongReflectionCount)
from .geometry import TANGENCY_TOL, Scene, gauss_curvature, implicit_eval, tangent_frame
from .rayfinder import ReflectingRay


@dataclass
class CrossSectionRecord:
    ray: ReflectingRay
    u_gamma: np.ndarray
    dJ: np.ndarray
    det: float
    method: str
    frame: dict
    step: Optional[float] = None

    @property
    def abs_det(self):
        return abs(self.det)

    @property
    def log_abs_det(self):
        return float(np.linalg.slogdet(self.dJ)[1])


def default_frames(omega, theta):
    e = np.column_stack(tangent_frame(omega))
    f = np.column_stack(tangent_frame(theta))
    return e, f


def _u_coords(scene, ray, E):
    return E.T @ ray.points[0]


def shooting_map(scene: Scene, omega, u, m_expected: int, sequence=None,
                 tangency_tol=TANGENCY_TOL):
    """Exit direction of the ray launched from ``u`` on Z_omega along omega.

    ``u`` is either a 3-D point of Z_omega or its two coordinates in the
    default frame of Z_omega.
    """
    omega = np.asarray(omega, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.shape == (2,):
        e1, e2 = tangent_frame(omega)
        u = -scene.a * omega + u[0] * e1 + u[1] * e2
    tr = trace(scene, PhasePoint(u, omega), max_reflections=m_expected + 1,
               tangency_tol=tangency_tol)
    if tr.status == "tangency":
        raise TangencyEncountered("grazing reflection along the shooting ray")
    if tr.status != "escaped" or len(tr.hits) != m_expected:
        raise WrongReflectionCount(f"expected {m_expected} reflections, got {len(tr.hits)}")
    if sequence is not None and tuple(tr.body_sequence) != tuple(sequence):
        raise WrongReflectionCount("reflection itinerary changed")
    return tr.exit.xi


def _fd_matrix(scene, ray, E, F, h):
    base = -scene.a * ray.omega + E @ (E.T @ ray.points[0])
    cols = []
    for j in range(2):
        tp = shooting_map(scene, ray.omega, base + h * E[:, j], ray.m, ray.body_indices)
        tm = shooting_map(scene, ray.omega, base - h * E[:, j], ray.m, ray.body_indices)
        cols.append(F.T @ (tp - tm) / (2 * h))
    return np.column_stack(cols)


def _richardson(scene, ray, E, F, h):
    return (4 * _fd_matrix(scene, ray, E, F, h / 2) - _fd_matrix(scene, ray, E, F, h)) / 3


def jacobian_fd(scene: Scene, ray: ReflectingRay, h: Optional[float] = None, frames=None,
                retries: int = 3, consistency: float = 1e-6) -> CrossSectionRecord:
    """dJ by central differences of the shooting map (Richardson-extrapolated).

    The base step ``h`` (default 1e-4 * a) is divided by the norm of a pilot
    estimate so that strongly expanding multi-bounce rays are resolved, then
    shrunk tenfold up to ``retries`` times until halving it changes the
    determinant by less than ``consistency`` (relative).
    """
    E, F = frames if frames is not None else default_frames(ray.omega, ray.theta)
    base = 1e-4 * scene.a if h is None else float(h)
    h, scaled = base, False
    # pilot estimates until the step matches the local expansion rate
    for _ in range(retries + 6):
        try:
            pilot = _fd_matrix(scene, ray, E, F, h)
        except (WrongReflectionCount, TangencyEncountered):
            h *= 0.1
            continue
        target = base / max(1.0, np.linalg.norm(pilot, 2))
        if target >= 0.5 * h:
            scaled = True
            break
        h = target
    if not scaled:
        raise WrongReflectionCount("shooting map unstable for every step tried")
    D, used, err = None, h, None
    for _ in range(retries + 1):
        try:
            D1 = _richardson(scene, ray, E, F, h)
            D2 = _richardson(scene, ray, E, F, h / 2)
        except (WrongReflectionCount, TangencyEncountered) as exc:
            err = exc
            h *= 0.1
            continue
        D, used = D2, h / 2
        d1, d2 = np.linalg.det(D1), np.linalg.det(D2)
        if abs(d1 - d2) <= consistency * abs(d2):
            break
        h *= 0.1
    if D is None:
        raise err
    return CrossSectionRecord(ray, E.T @ ray.points[0], D, float(np.linalg.det(D)),
                              "finite_difference", {"z_omega": E, "theta": F}, step=used)


def linearized_flow(scene: Scene, ray: ReflectingRay, tangency_tol=TANGENCY_TOL):
    """Exact derivative of the exit direction w.r.t. the launch point, 3x3.

    Chains implicit differentiation of each hit equation with the derivative
    of the reflection law along the ray's own reflection points.
    """
    d = ray.omega.copy()
    x = -scene.a * ray.omega + (ray.points[0] - (ray.points[0] @ ray.omega) * ray.omega)
    dX = np.eye(3) - np.outer(d, d)  # launch variations within Z_omega
    dD = np.zeros((3, 3))
    for k, (p, bi) in enumerate(zip(ray.points, ray.body_indices)):
        body = scene.bodies[bi]
        t = np.linalg.norm(p - x)
        _, g, H = implicit_eval(body, p)
        gn = np.linalg.norm(g)
        n = g / gn
        dn = d @ n
        if abs(dn) < tangency_tol:
            raise SingularHit(f"grazing incidence at reflection {k}")
        moved = dX + t * dD
        dt = -(g @ moved) / (g @ d)
        dX = moved + np.outer(d, dt)
        dN = (np.eye(3) - np.outer(n, n)) @ H @ dX / gn
        dD = dD - 2 * (np.outer(n, n @ dD + d @ dN) + dn * dN)
        d = d - 2 * dn * n
        x = p
    return dD


def jacobian_linearized(scene: Scene, ray: ReflectingRay, frames=None) -> CrossSectionRecord:
    E, F = frames if frames is not None else default_frames(ray.omega, ray.theta)
    dJ = F.T @ linearized_flow(scene, ray) @ E
    return CrossSectionRecord(ray, E.T @ ray.points[0], dJ, float(np.linalg.det(dJ)),
                              "linearized_map", {"z_omega": E, "theta": F})


def majda_det(scene: Scene, ray: ReflectingRay):
    """Closed form |det dJ| = 4 K(x+) for one reflection off a single convex body (n = 3)."""
    if len(scene.bodies) != 1 or ray.m != 1:
        raise NotApplicable("closed form holds for a single convex body and one reflection")
    return 4.0 * gauss_curvature(scene.bodies[0], ray.points[0])


def is_nondegenerate(record: CrossSectionRecord, tol: float = 1e-8) -> bool:
    return bool(abs(record.det) > tol)
