# coding: utf-8

# # The length spectrum for one direction pair

# Every ray contributes a singularity of the scattering kernel at minus its
# sojourn time. Its strength depends on the cross section and on the incidence
# angles at the first and last reflection.

from raylength import length_spectrum, reference_scene

scene = reference_scene("two_spheres")
entries = length_spectrum(scene, (0.0, 1.0, 0.0), (0.0, -0.6, 0.8), m_max=4)
print(" m   t_singular        |det dJ|      coefficient   separated")
for e in entries:
    print(f"{e.ray.m:2d}   {e.t_singular:+.9f}   {abs(e.det_dJ):.4e}   {e.coeff_magnitude:.4e}   {e.separated}")

# ## Scaling

# Scaling the scene by s multiplies singular times and coefficients by s.

big = length_spectrum(scene.scaled(2.0), (0.0, 1.0, 0.0), (0.0, -0.6, 0.8), m_max=4)
for a, b in zip(entries[:3], big[:3]):
    print(f"time ratio {b.t_singular / a.t_singular:.12f}   coefficient ratio {b.coeff_magnitude / a.coeff_magnitude:.12f}")
