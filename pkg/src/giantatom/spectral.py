"""Frequency-dependent relaxation rates and Lamb shifts of a single giant atom.

The coupling factor ``A_m(w) = sum_k g_km exp(i w x_k / v)`` is a discrete
Fourier transform of the coupling points.  The relaxation rate of the
transition ``m+1 -> m`` is ``4 pi J0 |A_m|^2`` evaluated at its frequency.

Lamb shifts are computed under the usual simplifications (constant density
of states, lower integration limit pushed to minus infinity, only the
resonant term kept), which turns the shift into half the Hilbert transform
of the rate:

    Delta(w0) = -(1/2pi) P int Gamma(w) / (w - w0) dw

Three independent routes are provided: the pairwise closed form
(:func:`lamb_shift`), a principal-value quadrature
(:func:`lamb_shift_integral`) and an FFT Hilbert transform of sampled rates
(:func:`lamb_from_kramers_kronig`).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.signal import hilbert

from .core import (
    DEFAULT_WAVEGUIDE,
    AtomSpec,
    ConvergenceError,
    Layout,
    StrengthScaling,
    ValidationError,
    WaveguideModel,
    reference_spacing,
)

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SpectralResponse:
    omega: np.ndarray
    coupling: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray

    def __post_init__(self):
        n = len(self.omega)
        if not (len(self.coupling) == len(self.gamma) == len(self.delta) == n):
            raise ValidationError("spectral arrays must share the frequency grid")
        if np.any(np.asarray(self.gamma) < 0):
            raise ValidationError("relaxation rates must be non-negative")


@dataclass(frozen=True)
class KramersKronigResult:
    omega: np.ndarray
    delta: np.ndarray
    edge_warning: bool
    interior: np.ndarray  # boolean mask of samples away from the grid edges


@dataclass(frozen=True)
class MarkovDiagnostic:
    ratio: float
    regime: str
    relaxation_rate: float
    travel_time: float


def coupling_factor(
    layout: Layout,
    m: int,
    omega,
    waveguide: WaveguideModel = DEFAULT_WAVEGUIDE,
    scaling: StrengthScaling = StrengthScaling.BOSONIC,
):
    """``A_m(omega)``; vectorised over ``omega``."""
    w = np.asarray(omega, dtype=float)
    if np.any(w <= 0):
        raise ValidationError("coupling factor needs positive frequencies")
    g = layout.strengths(m, scaling)
    phase = np.multiply.outer(w, layout.positions / waveguide.v)
    out = np.exp(1j * phase) @ g
    return out[()] if out.ndim == 0 else out


def relaxation_rate(
    layout: Layout,
    atom: AtomSpec,
    m: int = 0,
    omega=None,
    waveguide: WaveguideModel = DEFAULT_WAVEGUIDE,
    scaling: StrengthScaling = StrengthScaling.BOSONIC,
):
    """Relaxation rate of transition ``m+1 -> m``.

    ``omega`` defaults to the atom's own transition frequency; pass an array
    to sweep the transition frequency.
    """
    if omega is None:
        omega = atom.transition_frequency(m)
    a = coupling_factor(layout, m, omega, waveguide, scaling)
    return 4.0 * math.pi * waveguide.J0 * np.abs(a) ** 2


def _wrap(phi):
    """Distance to the nearest multiple of 2 pi."""
    return phi - TWO_PI * np.round(phi / TWO_PI)


def _sinpi(x):
    """``sin(pi x)`` with exact zeros at integer ``x``."""
    r = x - 2.0 * np.round(x / 2.0)  # exact reduction to [-1, 1]
    r = np.where(r > 0.5, 1.0 - r, np.where(r < -0.5, -1.0 - r, r))
    return np.sin(np.pi * r)


def relaxation_rate_equidistant(n: int, phi, gamma: float = 1.0):
    """``gamma (1 - cos N phi) / (1 - cos phi)``, continued to ``N^2 gamma``."""
    if n < 1:
        raise ValidationError("N must be at least 1")
    phi = np.asarray(phi, dtype=float)
    eps = _wrap(phi)  # reduced phase keeps N * phi accurate for large arguments
    x = eps / math.pi
    s = _sinpi(x / 2.0)
    near = np.abs(eps) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(near, 0.0, _sinpi(n * x / 2.0) ** 2 / np.where(near, 1.0, s**2))
    series = n**2 * (1.0 - (n**2 - 1) * eps**2 / 12.0)
    out = gamma * np.where(near, series, out)
    return out[()] if out.ndim == 0 else out


def lamb_shift_equidistant(n: int, phi, gamma: float = 1.0):
    """``gamma [N sin phi - sin N phi] / (2 [1 - cos phi])``, continued to 0."""
    if n < 1:
        raise ValidationError("N must be at least 1")
    phi = np.asarray(phi, dtype=float)
    eps = _wrap(phi)
    near = np.abs(eps) * max(n, 1) < 1e-3
    x = eps / math.pi
    denom = 4.0 * _sinpi(x / 2.0) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        direct = (n * _sinpi(x) - _sinpi(n * x)) / np.where(near, 1.0, denom)
    # odd series about the removable singularity
    series = (n**3 - n) * eps / 6.0 * (1.0 + eps**2 / 12.0) - (n**5 - n) * eps**3 / 120.0
    out = gamma * np.where(near, series, direct)
    return out[()] if out.ndim == 0 else out


def peak_half_max_width(n: int) -> float:
    """Full width at half maximum (in phi) of the rate peak at phi = 2 pi."""
    if n < 2:
        return math.inf
    half = n**2 / 2.0
    # first zero of the peak sits at 2 pi / N from the centre
    right = brentq(lambda p: relaxation_rate_equidistant(n, TWO_PI + p) - half, 1e-12, TWO_PI / n)
    return 2.0 * right


def lamb_shift(
    layout: Layout,
    atom: AtomSpec,
    level: int = 1,
    omega=None,
    waveguide: WaveguideModel = DEFAULT_WAVEGUIDE,
    scaling: StrengthScaling = StrengthScaling.BOSONIC,
):
    """Shift of ``level`` from its coupling to the level below.

    Pairwise form ``2 pi J0 sum_{k != n} g_k g_n sin(w |x_k - x_n| / v)``, with
    ``w`` the frequency of the ``level -> level-1`` transition.  The ground
    level is not shifted in this approximation.
    """
    if level == 0:
        return 0.0
    m = level - 1
    if omega is None:
        omega = atom.transition_frequency(m)
    g = layout.strengths(m, scaling)
    x = layout.positions / waveguide.v
    tau = np.abs(x[:, None] - x[None, :])
    w = np.asarray(omega, dtype=float)
    out = 2.0 * math.pi * waveguide.J0 * np.einsum("k,n,...kn->...", g, g, np.sin(np.multiply.outer(w, tau)))
    return out[()] if np.ndim(out) == 0 else out


def _raised_cosine_taper(u, start, stop):
    w = np.ones_like(u)
    mid = (u > start) & (u < stop)
    w[mid] = 0.5 * (1.0 + np.cos(math.pi * (u[mid] - start) / (stop - start)))
    w[u >= stop] = 0.0
    return w


def _folded_pv(rate, omega0, h, cutoff):
    """Midpoint rule for ``int_0^cutoff [rate(w0-u) - rate(w0+u)]/u * taper``."""
    n = int(math.ceil(2.0 * cutoff / h))
    u = (np.arange(n) + 0.5) * h
    taper = _raised_cosine_taper(u, cutoff, 2.0 * cutoff)
    vals = (rate(omega0 - u) - rate(omega0 + u)) / u
    return float(np.sum(vals * taper) * h) / TWO_PI


def lamb_shift_integral(
    layout: Layout,
    atom: AtomSpec,
    level: int = 1,
    waveguide: WaveguideModel = DEFAULT_WAVEGUIDE,
    scaling: StrengthScaling = StrengthScaling.BOSONIC,
    cycles: float = 200.0,
    points_per_cycle: int = 32,
    tol: float = 1e-6,
) -> float:
    """Principal-value quadrature of the Lamb shift of ``level``.

    The pole is removed by folding the integrand about it; the remaining
    regular integrand is summed with the midpoint rule and Richardson
    extrapolated in the step.  The oscillatory tail is cut off smoothly after
    ``cycles`` periods of the shortest delay and cross-checked against a 1.5x
    longer cutoff.  Raises :class:`ConvergenceError` if the two disagree by
    more than ``tol`` times the peak rate.
    """
    if level == 0:
        return 0.0
    m = level - 1
    omega0 = atom.transition_frequency(m)
    g = layout.strengths(m, scaling)
    x = layout.positions / waveguide.v
    tau = np.abs(x[:, None] - x[None, :])
    nonzero = tau[(tau > 0) & (np.abs(g[:, None] * g[None, :]) > 0)]
    if nonzero.size == 0:
        return 0.0
    tau_min, tau_max = nonzero.min(), nonzero.max()
    pref = 4.0 * math.pi * waveguide.J0

    def rate(w):
        # the frequency integral runs over the whole real line
        a = np.exp(1j * np.multiply.outer(w, x)) @ g
        return pref * np.abs(a) ** 2

    h = TWO_PI / tau_max / points_per_cycle
    scale = pref * float(np.sum(np.abs(g))) ** 2

    def estimate(cut):
        coarse = _folded_pv(rate, omega0, h, cut)
        fine = _folded_pv(rate, omega0, h / 2.0, cut)
        return (4.0 * fine - coarse) / 3.0, abs(fine - coarse)

    cutoff = cycles * TWO_PI / tau_min
    value, step_err = estimate(cutoff)
    check, _ = estimate(1.5 * cutoff)
    cut_err = abs(check - value)
    if max(step_err / 3.0, cut_err) > tol * scale:
        raise ConvergenceError(
            "principal-value quadrature did not converge",
            {"value": value, "step_error": step_err, "cutoff_error": cut_err, "scale": scale},
        )
    return value


def lamb_from_kramers_kronig(response: SpectralResponse | tuple, edge_fraction: float = 0.1) -> KramersKronigResult:
    """Lamb shift as half the discrete Hilbert transform of sampled rates.

    The FFT treats the samples as one period of a periodic signal, so the
    result is exact for rates that are periodic over the grid and degrades
    near the edges otherwise.  ``edge_warning`` is set (and a warning
    emitted) when the periodic continuation of the samples jumps.
    """
    if isinstance(response, SpectralResponse):
        omega, gamma = np.asarray(response.omega), np.asarray(response.gamma)
    else:
        omega, gamma = (np.asarray(a, dtype=float) for a in response)
    if omega.size < 16:
        raise ValidationError("need at least 16 samples for a Hilbert transform")
    steps = np.diff(omega)
    if np.any(steps <= 0) or np.ptp(steps) > 1e-6 * abs(steps.mean()):
        raise ValidationError("Kramers-Kronig transform needs a uniform increasing grid")
    delta = 0.5 * np.imag(hilbert(gamma))
    scale = max(float(np.max(np.abs(gamma))), 1e-300)
    predicted = gamma[-1] + (gamma[-1] - gamma[-2])
    edge_warning = bool(abs(predicted - gamma[0]) > 1e-2 * scale)
    if edge_warning:
        warnings.warn("rate samples are not periodic over the grid; edge effects expected", RuntimeWarning)
    k = int(edge_fraction * omega.size)
    interior = np.zeros(omega.size, dtype=bool)
    interior[k : omega.size - k] = True
    return KramersKronigResult(omega, delta, edge_warning, interior)


def spectral_response(
    layout: Layout,
    omega,
    m: int = 0,
    waveguide: WaveguideModel = DEFAULT_WAVEGUIDE,
    scaling: StrengthScaling = StrengthScaling.BOSONIC,
) -> SpectralResponse:
    """Sample ``A_m``, the rate and the Lamb shift of transition ``m`` on a grid."""
    omega = np.asarray(omega, dtype=float)
    atom = AtomSpec.two_level(1.0) if m == 0 else AtomSpec(tuple(float(i) for i in range(m + 2)))
    a = coupling_factor(layout, m, omega, waveguide, scaling)
    gamma = 4.0 * math.pi * waveguide.J0 * np.abs(a) ** 2
    delta = lamb_shift(layout, atom, m + 1, omega, waveguide, scaling)
    return SpectralResponse(omega, np.atleast_1d(a), np.atleast_1d(gamma), np.atleast_1d(delta))


def markovian_validity(
    layout: Layout,
    atom: AtomSpec,
    gamma: float | None = None,
    waveguide: WaveguideModel = DEFAULT_WAVEGUIDE,
) -> MarkovDiagnostic:
    """Ratio ``Gamma_10 * 2 pi N / omega_10``; small means Markovian is fine.

    ``gamma`` overrides the waveguide's unit rate.  The relaxation rate is
    computed from the layout at the atom frequency.
    """
    if gamma is not None:
        waveguide = WaveguideModel.for_rate(gamma, waveguide.v)
    n = layout.n_points
    rate = float(relaxation_rate(layout, atom, 0, waveguide=waveguide))
    travel = layout.extent / waveguide.v
    if n == 1 or travel == 0:
        return MarkovDiagnostic(0.0, "always Markovian at fixed Gamma", rate, 0.0)
    ratio = rate * TWO_PI * n / atom.transition_frequency(0)
    if ratio < 0.1:
        regime = "markovian"
    elif ratio < 1.0:
        regime = "marginal"
    else:
        regime = "non-markovian"
    return MarkovDiagnostic(ratio, regime, rate, travel)


def phase_response(layout: Layout, phi, waveguide: WaveguideModel = DEFAULT_WAVEGUIDE):
    """Rate and shift of the lowest transition against ``phi = w d / v``.

    ``d`` is the smallest gap between coupling points.  Unlike
    :func:`relaxation_rate` this accepts ``phi = 0`` (the formulas are even
    and odd in ``phi`` respectively).
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    g = layout.strengths(0)
    x = layout.positions / reference_spacing(layout) if layout.n_points > 1 else layout.positions * 0.0
    pref = 4.0 * math.pi * waveguide.J0
    gamma = pref * np.abs(np.exp(1j * np.outer(phi, x)) @ g) ** 2
    dist = np.abs(x[:, None] - x[None, :])
    delta = 0.5 * pref * np.einsum("k,n,pkn->p", g, g, np.sin(np.multiply.outer(phi, dist)))
    return gamma, delta
