# coding: utf-8

# # Reflecting rays as critical points

# A reflecting ray with incoming direction omega and outgoing direction theta is a
# critical point of the broken-path length functional over tuples of boundary
# points. This script finds every such ray on two unit spheres and checks that
# criticality and the law of reflection agree.

import numpy as np

from raylength import find_rays, reference_scene
from raylength.rayfinder import fermat_gradient, fermat_value, reflection_residual

scene = reference_scene("two_spheres")
omega = np.array([0.0, 1.0, 0.0])
theta = np.array([0.0, -0.6, 0.8])

# ## All rays with at most five reflections

rays = find_rays(scene, omega, theta, m_max=5)
for ray in rays:
    print(f"m={ray.m}  bodies={ray.body_indices}  sojourn={ray.sojourn:+.12f}")

# ## Criticality versus specularity

# At a ray the tangential gradient vanishes and every reflection is specular.
# The sojourn time is the critical value of the functional.

for ray in rays[:3]:
    bodies = [scene.bodies[i] for i in ray.body_indices]
    g = np.linalg.norm(fermat_gradient(omega, theta, ray.points, bodies))
    r = reflection_residual(omega, theta, ray.points, bodies)
    F = fermat_value(omega, theta, ray.points)
    print(f"|grad F| = {g:.1e}   reflection residual = {r:.1e}   F - sojourn = {F - ray.sojourn:.1e}")
