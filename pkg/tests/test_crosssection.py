import math

import numpy as np
import pytest

from conftest import random_pair
from raylength.crosssection import (CrossSectionRecord, default_frames, is_nondegenerate,
                                    jacobian_fd, jacobian_linearized, majda_det, shooting_map)
from raylength.errors import NotApplicable, WrongReflectionCount
from raylength.geometry import Body, Scene
from raylength.rayfinder import find_rays, refine_ray

DOWN, UP = np.array([0.0, 0, -1]), np.array([0.0, 0, 1])


def sphere_scene(R):
    return Scene((Body.sphere((0, 0, 0), R),), a=1.5 * R)


def backscatter(scene):
    R = scene.bodies[0].radii[0]
    return refine_ray(scene, DOWN, UP, [(0, 0, R)])


def rotation(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def test_shooting_map_normal_incidence(unit_sphere):
    theta = shooting_map(unit_sphere, DOWN, (0, 0, unit_sphere.a), 1)
    np.testing.assert_allclose(theta, UP, atol=1e-15)


@pytest.mark.parametrize("b", [0.1, 0.5, 0.9])
def test_shooting_map_deflection(unit_sphere, b):
    theta = shooting_map(unit_sphere, DOWN, (b, 0, unit_sphere.a), 1)
    assert theta @ DOWN == pytest.approx(math.cos(math.pi - 2 * math.asin(b)), abs=1e-13)


def test_shooting_map_miss(unit_sphere):
    with pytest.raises(WrongReflectionCount):
        shooting_map(unit_sphere, DOWN, (1.2, 0, unit_sphere.a), 1)


@pytest.mark.parametrize("R, det", [(1.0, 4.0), (2.0, 1.0)])
def test_backscatter_determinants(R, det):
    scene = sphere_scene(R)
    ray = backscatter(scene)
    assert abs(jacobian_fd(scene, ray).det) == pytest.approx(det, rel=1e-6)
    assert abs(jacobian_linearized(scene, ray).det) == pytest.approx(det, rel=1e-10)


def test_fd_step_halving_consistency(unit_sphere, rng):
    for _ in range(5):
        w, t = random_pair(rng, 0.3)
        ray = find_rays(unit_sphere, w, t, 1)[0]
        d1 = jacobian_fd(unit_sphere, ray, h=1e-4).det
        d2 = jacobian_fd(unit_sphere, ray, h=5e-5).det
        assert abs(d1 - d2) < 1e-6 * abs(d2)


def test_ellipsoid_long_axis():
    scene = Scene((Body.ellipsoid((0, 0, 0), (2.0, 1.0, 1.0)),), a=3.0)
    ray = refine_ray(scene, (-1, 0, 0), (1, 0, 0), [(2, 0, 0)])
    assert abs(jacobian_linearized(scene, ray).det) == pytest.approx(16.0, rel=1e-10)
    assert abs(jacobian_fd(scene, ray).det) == pytest.approx(16.0, rel=1e-5)
    assert majda_det(scene, ray) == pytest.approx(16.0, rel=1e-12)


def test_majda_examples(two_spheres):
    assert majda_det(sphere_scene(1.0), backscatter(sphere_scene(1.0))) == pytest.approx(4.0)
    assert majda_det(sphere_scene(3.0), backscatter(sphere_scene(3.0))) == pytest.approx(4 / 9)
    ray = find_rays(two_spheres, DOWN, UP, 1)[0]
    with pytest.raises(NotApplicable):
        majda_det(two_spheres, ray)


def test_is_nondegenerate(unit_sphere):
    rec = jacobian_linearized(unit_sphere, backscatter(unit_sphere))
    assert is_nondegenerate(rec)
    zero = CrossSectionRecord(rec.ray, rec.u_gamma, np.zeros((2, 2)), 0.0, "manual", rec.frame)
    assert not is_nondegenerate(zero)
    small = CrossSectionRecord(rec.ray, rec.u_gamma, 1e-5 * np.eye(2), 1e-10, "manual", rec.frame)
    assert not is_nondegenerate(small, tol=1e-8)


def test_majda_consistency_ellipsoid(rng):
    scene = Scene((Body.ellipsoid((0.2, 0, -0.1), (1.4, 0.9, 0.7)),), a=2.5)
    for _ in range(100):
        w, t = random_pair(rng, 0.05)
        ray = find_rays(scene, w, t, 1, grid_density=6)[0]
        K4 = majda_det(scene, ray)
        assert abs(jacobian_linearized(scene, ray).det) == pytest.approx(K4, rel=1e-10)
        assert abs(jacobian_fd(scene, ray).det) == pytest.approx(K4, rel=1e-5)


def test_frame_invariance(two_spheres, rng):
    w, t = random_pair(rng)
    for ray in find_rays(two_spheres, w, t, 4):
        E, F = default_frames(ray.omega, ray.theta)
        base = abs(jacobian_linearized(two_spheres, ray).det)
        for a1, a2 in [(0.3, -1.1), (2.0, 0.7)]:
            rec = jacobian_linearized(two_spheres, ray, frames=(E @ rotation(a1), F @ rotation(a2)))
            assert abs(rec.det) == pytest.approx(base, rel=1e-10)


def test_cross_method_both_scenes(unit_sphere, two_spheres, rng):
    for scene in (unit_sphere, two_spheres):
        n = 0
        while n < 30:
            w, t = random_pair(rng)
            for ray in find_rays(scene, w, t, 4):
                fd, lin = jacobian_fd(scene, ray).det, jacobian_linearized(scene, ray).det
                assert abs(fd - lin) < 1e-5 * abs(lin)
                n += 1


def test_multibounce_growth(two_spheres):
    rays = find_rays(two_spheres, DOWN, UP, m_max=10)
    by_m = {}
    for r in rays:
        by_m.setdefault(r.m, []).append(abs(jacobian_linearized(two_spheres, r).det))
    assert sorted(by_m) == list(range(1, 11))
    dets = [min(by_m[m]) for m in range(2, 11)]
    assert all(b > a for a, b in zip(dets, dets[1:]))
