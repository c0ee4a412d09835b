"""Scattering length spectrum and leading singularity magnitudes (n = 3).

Each non-degenerate ordinary reflecting ray contributes a singularity of the
scattering kernel at t = -T_gamma whose delta' prefactor has magnitude

    (2 pi)^-1 * | det dJ * <nu(q_1), omega> / <nu(q_m), theta> |^(-1/2).

Only magnitudes are computed. The phase involves an integer index that is
estimated here by the Morse index of the Fermat functional, unvalidated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .crosssection import CrossSectionRecord, is_nondegenerate, jacobian_linearized
from .errors import DegenerateRay, GrazingExit, SingularHessian
from .geometry import Scene, implicit_eval
from .rayfinder import ReflectingRay, check_directions, fermat_hessian, find_rays

GAP_TOL = 1e-6
GRAZING_TOL = 1e-12


@dataclass
class SpectrumEntry:
    ray_id: int
    t_singular: float
    coeff_magnitude: Optional[float]
    m_gamma: int
    det_dJ: float
    beta_experimental: Optional[int] = None
    separated_within_found_set: bool = True
    min_gap: float = math.inf
    flag: str = ""
    sign: int = 1
    ray: Optional[ReflectingRay] = field(default=None, repr=False)

    @property
    def separated(self):
        return self.separated_within_found_set


def _normal(scene, ray, k):
    _, g, _ = implicit_eval(scene.bodies[ray.body_indices[k]], ray.points[k])
    return g / np.linalg.norm(g)


def singularity_coefficient(record: CrossSectionRecord, scene: Scene, tol=1e-8):
    """Magnitude of the leading delta' coefficient for the record's ray."""
    ray = record.ray
    if not is_nondegenerate(record, tol):
        raise DegenerateRay(f"|det dJ| = {abs(record.det):.3e} is below {tol:.0e}")
    c_in = _normal(scene, ray, 0) @ ray.omega
    c_out = _normal(scene, ray, -1) @ ray.theta
    if abs(c_out) < GRAZING_TOL:
        raise GrazingExit("last reflection leaves tangentially")
    # log space: |det| grows geometrically with the number of reflections
    log_inner = record.log_abs_det + math.log(abs(c_in)) - math.log(abs(c_out))
    return math.exp(-0.5 * log_inner) / (2 * math.pi)


def morse_index(scene: Scene, ray: ReflectingRay, tol=1e-10) -> int:
    """Number of negative eigenvalues of the Fermat Hessian at the ray."""
    bodies = [scene.bodies[i] for i in ray.body_indices]
    eig = np.linalg.eigvalsh(fermat_hessian(ray.omega, ray.theta, ray.points, bodies))
    if np.min(np.abs(eig)) < tol:
        raise SingularHessian(f"Hessian eigenvalue {np.min(np.abs(eig)):.2e} below {tol:.0e}")
    return int(np.sum(eig < 0))


def mark_separation(entries: Sequence[SpectrumEntry], gap_tol=GAP_TOL):
    t = np.array([e.t_singular for e in entries])
    for i, e in enumerate(entries):
        others = np.delete(t, i)
        e.min_gap = float(np.min(np.abs(others - t[i]))) if others.size else math.inf
        e.separated_within_found_set = bool(e.min_gap > gap_tol)
    return entries


def spectrum_from_rays(scene: Scene, rays: Sequence[ReflectingRay], gap_tol=GAP_TOL,
                       det_tol=1e-8) -> List[SpectrumEntry]:
    entries = []
    for k, ray in enumerate(rays):
        record = jacobian_linearized(scene, ray)
        coeff, flag = None, ""
        try:
            coeff = singularity_coefficient(record, scene, det_tol)
        except DegenerateRay:
            flag = "degenerate"
        except GrazingExit:
            flag = "grazing_exit"
        try:
            beta = morse_index(scene, ray)
        except SingularHessian:
            beta = None
        entries.append(SpectrumEntry(
            ray_id=k, t_singular=-ray.sojourn, coeff_magnitude=coeff, m_gamma=ray.m,
            det_dJ=record.det, beta_experimental=beta, flag=flag,
            sign=(-1) ** (ray.m - 1), ray=ray))
    entries.sort(key=lambda e: e.t_singular)
    return mark_separation(entries, gap_tol)


def length_spectrum(scene: Scene, omega, theta, m_max: int = 4, grid_density: int = 24,
                    gap_tol=GAP_TOL) -> List[SpectrumEntry]:
    """Singular times -T_gamma and coefficient magnitudes for one direction pair."""
    omega, theta = check_directions(omega, theta)
    rays = find_rays(scene, omega, theta, m_max, grid_density)
    return spectrum_from_rays(scene, rays, gap_tol)
