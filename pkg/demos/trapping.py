# coding: utf-8

# # Trapped trajectories and rays with growing sojourn times

# One sphere traps nothing. Two spheres trap the bouncing ball along their
# common axis, and trajectories started close to it stay for a long time.

import numpy as np

from raylength import reference_scene
from raylength.sceneio import reference_trapped_point
from raylength.trapscan import (boundary_bisection, escape_scan, find_trapped_seed,
                                two_sphere_bracket)

# ## Escape times

sphere = reference_scene("unit_sphere")
pair = reference_scene("two_spheres")
print("censored, one sphere :", int(escape_scan(sphere, 30, 500).censored.sum()))
field = escape_scan(pair, 30, 500, extra=[reference_trapped_point()])
print("censored, two spheres:", int(field.censored.sum()), "of", len(field.T))

# ## Bisection toward the trapped set

# A chord of initial conditions joins a point that escapes quickly to one that
# stays past the largest budget. Halving the chord at each budget yields
# trajectories with ever longer escape times, and each one is closed into an
# ordinary reflecting ray.

budgets = (10, 20, 40, 80)
za, zb, side = two_sphere_bracket(pair)
seed = find_trapped_seed(pair, za, zb, 2 * max(budgets), side=side)
seq = boundary_bisection(pair, seed.point, za, budgets)
for st, ray in zip(seq.stages, seq.rays):
    print(f"budget {st.budget:4g}  escape {st.escape_time:8.3f}  reflections {ray.m:3d}  sojourn {ray.sojourn:+.6f}")

# The sojourn gap per extra reflection approaches the gap between the spheres.

print("gap per reflection:", np.round(seq.gaps_per_reflection, 8))
