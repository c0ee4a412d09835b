# coding: utf-8

# # Rays near a trapped trajectory

# Perturbing the initial condition of a trapped trajectory inside a small ball
# produces trajectories that escape after many reflections. The fraction of
# perturbations that exit through an ordinary reflecting ray estimates whether
# such rays fill a set of positive measure.

from raylength import reference_scene
from raylength.billiard import PhasePoint
from raylength.sceneio import reference_trapped_point
from raylength.trapscan import weak_nondegeneracy_estimate

scene = reference_scene("two_spheres")
z = reference_trapped_point()
y = PhasePoint(z.x, z.xi)
for radius in (0.2, 0.05, 0.01):
    p, hw = weak_nondegeneracy_estimate(scene, y, radius, 2000, seed=0)
    print(f"radius {radius:5.2f}   fraction {p:.4f} +- {hw:.4f}")
