"""Scattering length spectra of trapping obstacles in R^3.

Geometry of convex implicit bodies, billiard tracing, the Fermat ray finder,
differential cross sections, spectrum coefficients, trapping sequences and an
exact partial-wave oracle for the sphere.
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .geometry import Body, Hit, Scene, SurfacePoint, first_hit, implicit_eval
from .billiard import PhasePoint, Trajectory, escape_time, reflect, trace
from .rayfinder import (ReflectingRay, fermat_gradient, fermat_value, find_rays, refine_ray,
                        sojourn_hyperplane)
from .crosssection import (CrossSectionRecord, jacobian_fd, jacobian_linearized, majda_det,
                           shooting_map)
from .spectrum import SpectrumEntry, length_spectrum, morse_index, singularity_coefficient
from .trapscan import (EscapeField, TrappedApproxSequence, boundary_bisection, escape_scan,
                       find_trapped_seed, nondegenerate_filter, two_sphere_bracket,
                       weak_nondegeneracy_estimate)
from .waveoracle import (AmplitudeGrid, FilteredKernel, amplitude_grid, filtered_kernel,
                         locate_peaks, sphere_amplitude, validate_sphere)
from .sceneio import emit_scene, load_scene, parse_scene, reference_scene
