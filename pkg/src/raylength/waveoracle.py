"""Exact Dirichlet scattering by a sphere and the filtered scattering kernel.

Conventions follow the obstacle problem with incident wave exp(-i lam <x, omega>)
and outgoing behaviour exp(-i lam r) / r. For a sphere of radius R the far
field coefficient is

    a(lam, cos) = (-i / lam) * sum_l (2l + 1) j_l(lam R) / h2_l(lam R) * P_l(cos),

with h2_l = j_l - i y_l. Its high-frequency backscattering modulus tends to
R / 2. The scattering kernel is the inverse Fourier transform of
(i lam / 2 pi) * conj(a), here band-limited by a smooth window so that its
singularities become finite peaks at t = -T_gamma = R |theta - omega|.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import BandTooNarrow, RecurrenceOverflow, ThetaEqualsOmega, TruncationNotConverged
from .geometry import Body, Scene
from .rayfinder import unit

_BIG = 1e150
MIN_BAND_POINTS = 64


def min_lmax(lam, R):
    return int(math.ceil(np.max(lam) * R)) + 20


def default_lmax(lam, R):
    # the transition zone l ~ lam R has width ~ (lam R)^(1/3)
    x = float(np.max(lam) * R)
    return min_lmax(lam, R) + 4 * int(math.ceil(x ** (1 / 3)))


def _y_upward(L, x):
    """Spherical y_l(x), l = 0..L, as mantissa * BIG**exponent (upward recurrence)."""
    ym = np.empty((L + 1, x.size))
    ye = np.zeros((L + 1, x.size), dtype=int)
    prev = -np.cos(x) / x
    ym[0] = prev
    if L == 0:
        return ym, ye
    cur = -np.cos(x) / x**2 - np.sin(x) / x
    ym[1] = cur
    e = np.zeros(x.size, dtype=int)
    for l in range(1, L):
        prev, cur = cur, (2 * l + 1) / x * cur - prev
        big = np.abs(cur) > _BIG
        if np.any(big):
            prev = np.where(big, prev / _BIG, prev)
            cur = np.where(big, cur / _BIG, cur)
            e = e + big
        ym[l + 1] = cur
        ye[l + 1] = e
    if not np.all(np.isfinite(ym)):
        raise RecurrenceOverflow("upward recurrence for y_l overflowed")
    return ym, ye


def _j_downward(L, x):
    """Spherical j_l(x), l = 0..L, by Miller's downward recurrence with renormalisation."""
    N = L + int(math.sqrt(40 * (L + 1))) + 20
    jm = np.empty((L + 2, x.size))
    count = np.zeros((L + 2, x.size), dtype=int)
    nxt = np.zeros(x.size)
    cur = np.full(x.size, 1e-30)
    s = np.zeros(x.size, dtype=int)
    for l in range(N, 0, -1):
        # cur holds j_l (unnormalised), produce j_{l-1}
        nxt, cur = cur, (2 * l + 1) / x * cur - nxt
        big = np.abs(cur) > _BIG
        if np.any(big):
            nxt = np.where(big, nxt / _BIG, nxt)
            cur = np.where(big, cur / _BIG, cur)
            s = s + big
        if l - 1 <= L + 1:
            jm[l - 1] = cur
            count[l - 1] = s
    je = count - s[None, :]          # <= 0: stored before later renormalisations
    j0 = np.sin(x) / x
    j1 = np.sin(x) / x**2 - np.cos(x) / x
    use0 = (np.abs(j0) >= np.abs(j1)) | (je[1] != 0)
    factor = np.where(use0, j0 / jm[0], j1 / np.where(jm[1] == 0, 1.0, jm[1]))
    jm = jm[: L + 1] * factor
    if not np.all(np.isfinite(jm)):
        raise RecurrenceOverflow("downward recurrence for j_l failed")
    return jm, je[: L + 1]


def spherical_jy(L, x):
    """Plain arrays j_l(x), y_l(x) for l = 0..L (overflowing entries become inf/0)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    jm, je = _j_downward(L, x)
    ym, ye = _y_upward(L, x)
    with np.errstate(over="ignore", under="ignore"):
        return jm * _BIG ** je.astype(float), ym * _BIG ** ye.astype(float)


def dirichlet_ratios(L, x):
    """c_l = j_l / (j_l - i y_l) for l = 0..L, shape (L + 1, len(x))."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    jm, je = _j_downward(L, x)
    ym, ye = _y_upward(L, x)
    diff = ye - je
    ok = (diff <= 1) & (jm != 0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        r = np.where(ok, ym / np.where(jm == 0, 1.0, jm) * _BIG ** np.minimum(diff, 1), 0.0)
        c = np.where(ok, 1.0 / (1.0 - 1j * r), 0.0)
    return c


def legendre_table(L, c):
    P = np.empty(L + 1)
    P[0] = 1.0
    if L >= 1:
        P[1] = c
    for l in range(1, L):
        P[l + 1] = ((2 * l + 1) * c * P[l] - l * P[l - 1]) / (l + 1)
    return P


def _series(R, cos_angle, lam, L):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    c = dirichlet_ratios(L, lam * R)
    P = legendre_table(L, cos_angle)
    w = (2 * np.arange(L + 1) + 1) * P
    return (-1j / lam) * (w @ c)


def sphere_amplitude(R, cos_angle, lam, l_max: Optional[int] = None, check: bool = False):
    """Scattering amplitude of a Dirichlet sphere; vectorised over ``lam``.

    With ``check`` the series is re-summed at twice the truncation order and
    TruncationNotConverged is raised if any value moves by 1e-10 or more.
    """
    lam_arr = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam_arr <= 0):
        raise ValueError("frequency must be positive")
    if not -1.0 <= cos_angle <= 1.0:
        raise ValueError("cos_angle must lie in [-1, 1]")
    need = min_lmax(lam_arr, R)
    L = default_lmax(lam_arr, R) if l_max is None else int(l_max)
    if L < need:
        raise ValueError(f"l_max must be at least ceil(lam R) + 20 = {need}")
    vals = _series(R, cos_angle, lam_arr, L)
    if check:
        ref = _series(R, cos_angle, lam_arr, 2 * L)
        rel = np.max(np.abs(ref - vals) / np.abs(ref))
        if not rel < 1e-10:
            raise TruncationNotConverged(f"relative change {rel:.2e} on doubling l_max")
    return vals if np.ndim(lam) else complex(vals[0])


@dataclass
class AmplitudeGrid:
    R: float
    cos_angle: float
    lambdas: np.ndarray
    values: np.ndarray
    l_max: int

    @property
    def band(self):
        return float(self.lambdas[0]), float(self.lambdas[-1])


def amplitude_grid(R, cos_angle, band, n: Optional[int] = None, check=True) -> AmplitudeGrid:
    lo, hi = map(float, band)
    if not 0 < lo < hi:
        raise ValueError("band must satisfy 0 < lam_min < lam_max")
    if n is None:
        # frequency spacing must keep the time aliasing period beyond the window
        span = 8 * R * max(1.0, math.sqrt(max(0.0, 2 - 2 * cos_angle)))
        n = max(256, int(math.ceil(2 * span * (hi - lo) / (2 * math.pi))) + 1)
    lams = np.linspace(lo, hi, n)
    vals = sphere_amplitude(R, cos_angle, lams, check=check)
    return AmplitudeGrid(float(R), float(cos_angle), lams, vals, default_lmax(lams, R))


@dataclass
class FilteredKernel:
    ts: np.ndarray
    values: np.ndarray
    window: dict
    band: tuple
    coefficients: np.ndarray = field(repr=False, default=None)
    lambdas: np.ndarray = field(repr=False, default=None)

    @property
    def resolution(self):
        return 2 * math.pi / (self.band[1] - self.band[0])

    @property
    def magnitude(self):
        return np.abs(self.values)


def band_window(lams, name="gaussian", width=None):
    lo, hi = lams[0], lams[-1]
    if name == "gaussian":
        width = (hi - lo) / 6 if width is None else width
        return np.exp(-0.5 * ((lams - 0.5 * (lo + hi)) / width) ** 2), width
    if name == "hann":
        return 0.5 * (1 - np.cos(2 * math.pi * (lams - lo) / (hi - lo))), hi - lo
    raise ValueError(f"unknown window {name!r}")


def synthesize(coefficients, lambdas, ts):
    """sum_k c_k exp(i t lam_k), evaluated at each t."""
    return np.exp(1j * np.outer(ts, lambdas)) @ coefficients


def filtered_kernel(grid: AmplitudeGrid, window_width: Optional[float] = None,
                    window: str = "gaussian", ts: Optional[np.ndarray] = None) -> FilteredKernel:
    """Windowed band-limited scattering kernel on a uniform time grid."""
    lams = grid.lambdas
    if lams.size < MIN_BAND_POINTS:
        raise BandTooNarrow(f"need at least {MIN_BAND_POINTS} frequency samples")
    w, width = band_window(lams, window, window_width)
    dlam = lams[1] - lams[0]
    # (2 pi)^-1 * integral exp(i t lam) (i lam / 2 pi) conj(a) d lam, windowed
    coef = w * (1j * lams / (2 * math.pi)) * np.conj(grid.values) * dlam / (2 * math.pi)
    if ts is None:
        chord = math.sqrt(max(0.0, 2 - 2 * grid.cos_angle))
        half = 4 * grid.R * max(1.0, chord)
        dt = 2 * math.pi / (lams[-1] - lams[0]) / 16
        ts = np.linspace(-half, half, int(math.ceil(2 * half / dt)) + 1)
    vals = synthesize(coef, lams, ts)
    return FilteredKernel(ts, vals, {"name": window, "center": float(0.5 * (lams[0] + lams[-1])),
                                     "width": float(width)},
                          grid.band, coef, lams)


def parseval_residual(kernel: FilteredKernel) -> float:
    """Relative mismatch between band energy and time energy over one alias period."""
    lams, coef = kernel.lambdas, kernel.coefficients
    n = lams.size
    period = 2 * math.pi / (lams[1] - lams[0])
    t = np.arange(n) * period / n
    s = synthesize(coef, lams, t)
    time_energy = period * np.mean(np.abs(s) ** 2)
    band_energy = period * np.sum(np.abs(coef) ** 2)
    return float(abs(time_energy - band_energy) / band_energy)


def locate_peaks(kernel: FilteredKernel, threshold_ratio: float = 0.3):
    """Local maxima of |s| above ``threshold_ratio * max``, refined by a parabola.

    Returns ``[(t_peak, magnitude), ...]`` sorted by decreasing magnitude.
    """
    mag = kernel.magnitude
    top = mag.max()
    if top == 0:
        return []
    ts = kernel.ts
    dt = ts[1] - ts[0]
    peaks = []
    for i in range(len(mag)):
        left = mag[i - 1] if i > 0 else -np.inf
        right = mag[i + 1] if i + 1 < len(mag) else -np.inf
        if mag[i] >= left and mag[i] > right and mag[i] >= threshold_ratio * top:
            t, m = ts[i], mag[i]
            if 0 < i < len(mag) - 1:
                denom = left - 2 * mag[i] + right
                if denom < 0:
                    off = 0.5 * (left - right) / denom
                    t = ts[i] + off * dt
                    m = mag[i] - 0.25 * (left - right) * off
            peaks.append((float(t), float(m)))
    peaks.sort(key=lambda p: -p[1])
    return peaks


def _sphere_run(R, theta, omega, band, window="gaussian", n=None):
    from .spectrum import length_spectrum

    scene = Scene((Body.sphere((0.0, 0.0, 0.0), R),), a=1.5 * R)
    entries = length_spectrum(scene, omega, theta, m_max=1, grid_density=0)
    cos_angle = float(np.clip(theta @ omega, -1.0, 1.0))
    kernel = filtered_kernel(amplitude_grid(R, cos_angle, band, n), window=window)
    peaks = locate_peaks(kernel, 0.3)
    return entries, kernel, peaks


def validate_sphere(R, theta, omega, band=(20.0, 60.0), R_compare: Optional[float] = None,
                    window: str = "gaussian") -> dict:
    """Cross-check the geometric spectrum of a sphere against the exact wave kernel.

    Reports the distance of the dominant kernel peak from -T_gamma, any other
    peak above 30% of the maximum outside that resolution cell, and, when
    ``R_compare`` is given, measured against predicted peak magnitude ratios.
    """
    theta, omega = unit(theta), unit(omega)
    if np.linalg.norm(theta - omega) < 1e-12:
        raise ThetaEqualsOmega("theta must differ from omega")
    entries, kernel, peaks = _sphere_run(R, theta, omega, band, window)
    t_sing = entries[0].t_singular
    cell = kernel.resolution
    t_peak, mag = peaks[0]
    report = {
        "R": float(R), "cos_angle": float(theta @ omega), "band": tuple(band),
        "resolution": cell, "n_entries": len(entries), "n_peaks": len(peaks),
        "t_singular": t_sing, "t_peak": t_peak, "peak_time_error": abs(t_peak - t_sing),
        "peak_magnitude": mag, "coeff_magnitude": entries[0].coeff_magnitude,
        "spurious_peaks": [p for p in peaks if abs(p[0] - t_sing) > cell],
    }
    if R_compare is not None:
        other = validate_sphere(R_compare, theta, omega, band, None, window)
        report["compare"] = other
        report["measured_ratio"] = other["peak_magnitude"] / mag
        report["predicted_ratio"] = other["coeff_magnitude"] / entries[0].coeff_magnitude
        report["ratio_error"] = abs(report["measured_ratio"] / report["predicted_ratio"] - 1)
    return report
