import math

import numpy as np
import pytest

from conftest import random_pair
from raylength.crosssection import CrossSectionRecord, jacobian_linearized
from raylength.errors import DegenerateRay, GrazingExit, SingularHessian, ThetaEqualsOmega
from raylength.geometry import Body, Scene, implicit_eval, project_to_surface, tangent_frame
from raylength.rayfinder import ReflectingRay, fermat_value, find_rays, refine_ray
from raylength.spectrum import (SpectrumEntry, length_spectrum, mark_separation, morse_index,
                                singularity_coefficient)

DOWN, UP = np.array([0.0, 0, -1]), np.array([0.0, 0, 1])


def sphere_scene(R):
    return Scene((Body.sphere((0, 0, 0), R),), a=1.5 * R)


@pytest.mark.parametrize("R, inner", [(1.0, 0.5), (2.0, 1.0)])
def test_coefficient_backscatter(R, inner):
    scene = sphere_scene(R)
    ray = refine_ray(scene, DOWN, UP, [(0, 0, R)])
    rec = jacobian_linearized(scene, ray)
    assert singularity_coefficient(rec, scene) == pytest.approx(inner / (2 * math.pi), rel=1e-12)


def test_coefficient_guards(unit_sphere):
    ray = refine_ray(unit_sphere, DOWN, UP, [(0, 0, 1)])
    rec = jacobian_linearized(unit_sphere, ray)
    dead = CrossSectionRecord(ray, rec.u_gamma, np.zeros((2, 2)), 0.0, "manual", rec.frame)
    with pytest.raises(DegenerateRay):
        singularity_coefficient(dead, unit_sphere)
    graze = ReflectingRay(DOWN, UP, np.array([[1.0, 0, 0]]), (0,), 0.0, 0.0)
    rec2 = CrossSectionRecord(graze, rec.u_gamma, np.eye(2), 1.0, "manual", rec.frame)
    with pytest.raises(GrazingExit):
        singularity_coefficient(rec2, unit_sphere)


def test_single_sphere_spectrum(unit_sphere, rng):
    for _ in range(10):
        w, t = random_pair(rng)
        entries = length_spectrum(unit_sphere, w, t)
        assert len(entries) == 1
        e = entries[0]
        assert e.t_singular == pytest.approx(np.linalg.norm(t - w), abs=1e-10)
        assert e.separated and e.coeff_magnitude > 0


def test_two_sphere_transverse_spectrum(two_spheres):
    entries = length_spectrum(two_spheres, (0, 1, 0), (0, -0.6, 0.8), m_max=6)
    assert len({round(e.t_singular, 9) for e in entries}) >= 4
    for e in entries:
        assert e.t_singular == -fermat_value(e.ray.omega, e.ray.theta, e.ray.points)


def test_spectrum_guards(two_spheres):
    assert length_spectrum(two_spheres, DOWN, UP, m_max=0) == []
    with pytest.raises(ThetaEqualsOmega):
        length_spectrum(two_spheres, UP, UP)


def test_separation_flags_symmetric():
    entries = [SpectrumEntry(k, t, 1.0, 1, 1.0) for k, t in enumerate([0.0, 5e-7, 3.0, 3.1])]
    mark_separation(entries, 1e-6)
    assert [e.separated for e in entries] == [False, False, True, True]
    assert entries[0].min_gap == entries[1].min_gap


@pytest.mark.parametrize("s", [0.5, 2.0])
def test_scale_covariance(unit_sphere, rng, s):
    big = unit_sphere.scaled(s)
    for _ in range(10):
        w, t = random_pair(rng)
        e0 = length_spectrum(unit_sphere, w, t)[0]
        e1 = length_spectrum(big, w, t)[0]
        assert e1.t_singular == pytest.approx(s * e0.t_singular, rel=1e-8)
        assert abs(e1.det_dJ) == pytest.approx(abs(e0.det_dJ) / s**2, rel=1e-8)
        assert e1.coeff_magnitude == pytest.approx(s * e0.coeff_magnitude, rel=1e-8)


def _chart_hessian_index(scene, ray, h=1e-4):
    """Negative eigenvalues of the FD Hessian of F in tangent-plane charts."""
    bodies = [scene.bodies[i] for i in ray.body_indices]
    frames = []
    for b, x in zip(bodies, ray.points):
        n = implicit_eval(b, x)[1]
        frames.append(tangent_frame(n / np.linalg.norm(n)))

    def F(c):
        pts = [project_to_surface(b, x + c[2 * i] * e[0] + c[2 * i + 1] * e[1])
               for i, (b, x, e) in enumerate(zip(bodies, ray.points, frames))]
        return fermat_value(ray.omega, ray.theta, np.array(pts))

    k = 2 * ray.m
    H = np.zeros((k, k))
    I = np.eye(k) * h
    for i in range(k):
        for j in range(k):
            H[i, j] = (F(I[i] + I[j]) - F(I[i] - I[j]) - F(-I[i] + I[j]) + F(-I[i] - I[j])) / (4 * h * h)
    return int(np.sum(np.linalg.eigvalsh(0.5 * (H + H.T)) < 0))


def test_morse_index_unit_backscatter(unit_sphere):
    ray = refine_ray(unit_sphere, DOWN, UP, [(0, 0, 1)])
    assert morse_index(unit_sphere, ray) == 0


def test_morse_index_matches_chart_hessian(two_spheres, rng):
    checked = 0
    for _ in range(5):
        w, t = random_pair(rng)
        for ray in find_rays(two_spheres, w, t, 3):
            assert morse_index(two_spheres, ray) == _chart_hessian_index(two_spheres, ray)
            checked += 1
    assert checked >= 10


def test_morse_index_guard(unit_sphere):
    ray = refine_ray(unit_sphere, DOWN, UP, [(0, 0, 1)])
    with pytest.raises(SingularHessian):
        morse_index(unit_sphere, ray, tol=1e3)
