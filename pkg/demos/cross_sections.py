# coding: utf-8

# # Differential cross sections

# The Jacobian of the map from launch offset to outgoing direction is computed
# twice: by differencing the shooting map and by propagating wavefront curvature
# along the ray. On a convex body the determinant is four times the Gauss
# curvature at the reflection point.

import numpy as np

from raylength import find_rays, reference_scene
from raylength.crosssection import jacobian_fd, jacobian_linearized, majda_det

# ## One sphere

sphere = reference_scene("unit_sphere")
rng = np.random.default_rng(1)
for _ in range(3):
    w, t = rng.normal(size=(2, 3))
    w, t = w / np.linalg.norm(w), t / np.linalg.norm(t)
    ray = find_rays(sphere, w, t, 1)[0]
    print(f"4K = {majda_det(sphere, ray):.10f}   fd = {abs(jacobian_fd(sphere, ray).det):.10f}"
          f"   linearized = {abs(jacobian_linearized(sphere, ray).det):.10f}")

# ## Two spheres

# Each extra bounce between the spheres stretches the cross section, so the
# determinant grows with the number of reflections.

scene = reference_scene("two_spheres")
down, up = np.array([0.0, 0, -1]), np.array([0.0, 0, 1])
for ray in find_rays(scene, down, up, m_max=6):
    fd, lin = jacobian_fd(scene, ray).det, jacobian_linearized(scene, ray).det
    print(f"m={ray.m}  det={lin:+.6e}  relative fd difference={abs(fd - lin) / abs(lin):.1e}")
