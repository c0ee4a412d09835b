import numpy as np
import pytest

from conftest import random_pair
from raylength.billiard import PhasePoint, trace
from raylength.errors import DegenerateSegment, ThetaEqualsOmega
from raylength.geometry import Body, implicit_eval, project_to_surface, tangent_frame
from raylength.rayfinder import (fermat_gradient, fermat_value, find_rays, refine_ray,
                                 reflection_residual, sojourn_hyperplane)

UNIT = Body.sphere((0, 0, 0), 1.0)
DOWN, UP = np.array([0.0, 0, -1]), np.array([0.0, 0, 1])


def test_fermat_value_examples():
    assert fermat_value(DOWN, UP, [(0, 0, 1)]) == -2.0
    assert fermat_value((1, 0, 0), (0, 1, 0), [(0, 0, 0)]) == 0.0
    assert fermat_value((1, 0, 0), (0, 1, 0), [(-1, 0, 0), (1, 0, 0)]) == 1.0
    with pytest.raises(DegenerateSegment):
        fermat_value((1, 0, 0), (0, 1, 0), [(1, 0, 0), (1, 0, 0)])


def test_fermat_gradient_vanishes_at_backscatter():
    assert np.max(np.abs(fermat_gradient(DOWN, UP, [(0, 0, 1)], [UNIT]))) < 1e-15


def test_fermat_gradient_nonzero_off_critical():
    p = [(np.sin(0.1), 0, np.cos(0.1))]
    assert np.linalg.norm(fermat_gradient(DOWN, UP, p, [UNIT])) > 0.1


def test_fermat_gradient_matches_finite_differences(two_spheres, rng):
    bodies = list(two_spheres.bodies)
    for _ in range(20):
        w, t = random_pair(rng)
        pts = np.array([project_to_surface(b, b.c + rng.normal(size=3)) for b in bodies])
        g = fermat_gradient(w, t, pts, bodies)
        h = 1e-6
        for i in range(len(pts)):
            n = implicit_eval(bodies[i], pts[i])[1]
            for e in tangent_frame(n / np.linalg.norm(n)):
                plus, minus = pts.copy(), pts.copy()
                plus[i] += h * e
                minus[i] -= h * e
                fd = (fermat_value(w, t, plus) - fermat_value(w, t, minus)) / (2 * h)
                assert g[i] @ e == pytest.approx(fd, rel=1e-6, abs=1e-8)


def test_refine_ray_backscatter(unit_sphere):
    ray = refine_ray(unit_sphere, DOWN, UP, [(np.sin(0.2), 0, np.cos(0.2))])
    np.testing.assert_allclose(ray.points[0], [0, 0, 1], atol=1e-12)
    assert ray.sojourn == pytest.approx(-2.0, abs=1e-14)


def test_refine_ray_rejects_equal_directions(unit_sphere):
    with pytest.raises(ThetaEqualsOmega):
        refine_ray(unit_sphere, UP, UP, [(0, 0, 1)])
    with pytest.raises(ThetaEqualsOmega):
        find_rays(unit_sphere, UP, UP)


@pytest.mark.parametrize("R", [1.0, 2.5])
def test_single_sphere_closed_form(R, rng):
    scene_body = Body.sphere((0, 0, 0), R)
    from raylength.geometry import Scene
    scene = Scene((scene_body,), a=1.5 * R)
    for _ in range(100):
        w, t = random_pair(rng)
        rays = find_rays(scene, w, t, m_max=2, grid_density=6)
        assert len(rays) == 1 and rays[0].m == 1
        x = R * (t - w) / np.linalg.norm(t - w)
        np.testing.assert_allclose(rays[0].points[0], x, atol=1e-10)
        assert rays[0].sojourn == pytest.approx(-R * np.linalg.norm(t - w), abs=1e-10)


def test_two_sphere_rays(two_spheres):
    rays = find_rays(two_spheres, DOWN, UP, m_max=4)
    singles = [r for r in rays if r.m == 1]
    assert len(singles) >= 2
    assert {r.body_indices for r in singles} == {(0,), (1,)}
    assert max(r.m for r in rays) > 1
    only = find_rays(two_spheres, DOWN, UP, m_max=1)
    assert len(only) == 2 and all(r.m == 1 for r in only)
    assert find_rays(two_spheres, DOWN, UP, m_max=0) == []


def test_found_rays_retrace(two_spheres, rng):
    for _ in range(10):
        w, t = random_pair(rng)
        for ray in find_rays(two_spheres, w, t, m_max=4):
            x1 = ray.points[0]
            start = x1 - (x1 @ w + two_spheres.a) * w
            tr = trace(two_spheres, PhasePoint(start, w), max_reflections=ray.m + 1)
            assert tr.status == "escaped" and len(tr.hits) == ray.m
            np.testing.assert_allclose([h.x for h in tr.hits], ray.points, atol=1e-8)
            np.testing.assert_allclose(tr.exit.xi, t, atol=1e-8)


def test_criticality_iff_specularity(two_spheres, rng):
    for _ in range(10):
        w, t = random_pair(rng)
        for ray in find_rays(two_spheres, w, t, m_max=3):
            bodies = [two_spheres.bodies[i] for i in ray.body_indices]
            g0 = np.linalg.norm(fermat_gradient(w, t, ray.points, bodies))
            assert g0 < 1e-9
            assert reflection_residual(w, t, ray.points, bodies) < 1e-9
            for i in range(ray.m):
                n = implicit_eval(bodies[i], ray.points[i])[1]
                e = tangent_frame(n / np.linalg.norm(n))[0]
                moved = ray.points.copy()
                moved[i] = project_to_surface(bodies[i], moved[i] + 1e-3 * e)
                g1 = np.linalg.norm(fermat_gradient(w, t, moved, bodies))
                assert g1 > g0
                assert reflection_residual(w, t, moved, bodies) > 1e-6


@pytest.mark.parametrize("a", [1.0, 2.0, 10.0])
def test_sojourn_hyperplane_backscatter(unit_sphere, a):
    ray = refine_ray(unit_sphere, DOWN, UP, [(0, 0, 1)])
    assert sojourn_hyperplane(unit_sphere, ray, a) == pytest.approx(-2.0, abs=1e-14)
