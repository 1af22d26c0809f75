"""Master-equation coefficients for several giant atoms on one waveguide.

For degenerate two-level atoms at frequency ``w`` the waveguide-mediated
coefficients follow from sums over pairs of coupling points,

    Gamma_jl = gamma * sum_{k in j, n in l} s_k s_n cos(w |x_k - x_n| / v)
    g_jl     = gamma/2 * sum_{k in j, n in l} s_k s_n sin(w |x_k - x_n| / v)

``Gamma_jj`` is the individual rate, ``Gamma_jl`` (j != l) the collective
rate and ``g_jl`` the exchange coupling.  The diagonal of the sine sum is the
Lamb shift of each atom.  With these signs the single-excitation effective
Hamiltonian has elements ``g_jl - i Gamma_jl / 2``, which is what the
discretised-mode oracle produces.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .core import (
    DEFAULT_WAVEGUIDE,
    Layout,
    ValidationError,
    WaveguideModel,
    reference_spacing,
)

MAX_ATOMS = 12


@dataclass(frozen=True)
class MultiAtomCoefficients:
    omega_shifted: np.ndarray  # (n,) Lamb-shifted transition frequencies
    exchange: np.ndarray  # (n, n) symmetric, zero diagonal
    rates: np.ndarray  # (n,) individual relaxation rates
    collective: np.ndarray  # (n, n) symmetric, zero diagonal

    @property
    def n_atoms(self) -> int:
        return self.rates.size

    @property
    def relaxation_matrix(self) -> np.ndarray:
        return self.collective + np.diag(self.rates)

    # two-atom conveniences
    @property
    def g(self) -> float:
        return float(self.exchange[0, 1])

    @property
    def gamma_a(self) -> float:
        return float(self.rates[0])

    @property
    def gamma_b(self) -> float:
        return float(self.rates[1])

    @property
    def gamma_coll(self) -> float:
        return float(self.collective[0, 1])


def _pair_sums(a: Layout, b: Layout, omega: float, v: float):
    sa, sb = a.strengths(0), b.strengths(0)
    dist = np.abs(a.positions[:, None] - b.positions[None, :]) / v
    w = np.outer(sa, sb)
    phase = omega * dist
    return float(np.sum(w * np.cos(phase))), float(np.sum(w * np.sin(phase)))


def many_atom_coefficients(
    layouts: Sequence[Layout],
    omega: float,
    gamma: float | None = None,
    waveguide: WaveguideModel = DEFAULT_WAVEGUIDE,
) -> MultiAtomCoefficients:
    """Coefficients for degenerate two-level atoms at frequency ``omega``.

    ``gamma`` is the rate of a unit-strength point; it defaults to the
    waveguide's unit rate.
    """
    layouts = list(layouts)
    n = len(layouts)
    if n == 0:
        raise ValidationError("need at least one atom")
    if n > MAX_ATOMS:
        raise ValidationError(f"at most {MAX_ATOMS} atoms are supported, got {n}")
    if omega <= 0:
        raise ValidationError("omega must be positive")
    if gamma is None:
        gamma = waveguide.unit_rate
    cos_m = np.empty((n, n))
    sin_m = np.empty((n, n))
    for j in range(n):
        for l in range(j, n):
            c, s = _pair_sums(layouts[j], layouts[l], omega, waveguide.v)
            cos_m[j, l] = cos_m[l, j] = c
            sin_m[j, l] = sin_m[l, j] = s
    rates = gamma * np.diag(cos_m).copy()
    shifts = 0.5 * gamma * np.diag(sin_m)
    collective = gamma * cos_m
    exchange = 0.5 * gamma * sin_m
    np.fill_diagonal(collective, 0.0)
    np.fill_diagonal(exchange, 0.0)
    return MultiAtomCoefficients(omega + shifts, exchange, rates, collective)


def two_atom_coefficients(
    a: Layout,
    b: Layout,
    omega: float,
    gamma: float | None = None,
    waveguide: WaveguideModel = DEFAULT_WAVEGUIDE,
) -> MultiAtomCoefficients:
    return many_atom_coefficients([a, b], omega, gamma, waveguide)


def coefficients_vs_phase(
    a: Layout,
    b: Layout,
    phi,
    gamma: float = 1.0,
    v: float = 1.0,
) -> dict[str, np.ndarray]:
    """Sweep ``g, Gamma_a, Gamma_b, Gamma_coll`` over ``phi = w d / v``.

    ``d`` is the smallest gap between neighbouring coupling points.
    """
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    d = reference_spacing(a, b)
    xa, xb = a.positions / d, b.positions / d
    sa, sb = a.strengths(0), b.strengths(0)

    def pair(x1, s1, x2, s2):
        dist = np.abs(x1[:, None] - x2[None, :])
        ph = np.multiply.outer(phi, dist)
        w = np.outer(s1, s2)
        return np.einsum("kn,pkn->p", w, np.cos(ph)), np.einsum("kn,pkn->p", w, np.sin(ph))

    caa, _ = pair(xa, sa, xa, sa)
    cbb, _ = pair(xb, sb, xb, sb)
    cab, sab = pair(xa, sa, xb, sb)
    return {
        "phi": phi,
        "g": 0.5 * gamma * sab,
        "Gamma_a": gamma * caa,
        "Gamma_b": gamma * cbb,
        "Gamma_coll": gamma * cab,
    }


@dataclass(frozen=True)
class DecoherenceFreePoint:
    phi: float
    g: float
    gamma_a: float
    gamma_b: float
    gamma_coll: float


def decoherence_free_points(
    a: Layout,
    b: Layout,
    phi_grid,
    gamma: float = 1.0,
    threshold: float = 1e-8,
    xtol: float = 1e-10,
    merge_tol: float = 1e-6,
) -> list[DecoherenceFreePoint]:
    """Phases where both atoms and their collective channel stop decaying.

    Candidate minima of ``max(|A_a|, |A_b|)``, the moduli of the atoms'
    coupling factors, are bracketed on the grid, refined by bounded scalar
    minimisation and polished by golden-section search.  ``Gamma_j`` is
    ``gamma |A_j|^2`` and ``|Gamma_coll| <= gamma |A_a| |A_b|``, so this
    objective vanishes exactly at the decoherence-free points; unlike the
    rates it is linear (not quadratic) near a zero and so localises to
    ``xtol`` instead of ``sqrt(eps)``.
    """
    grid = np.asarray(phi_grid, dtype=float)
    if grid.size < 3:
        raise ValidationError("phase grid needs at least three samples")

    d = reference_spacing(a, b)
    xa, xb = a.positions / d, b.positions / d
    sa, sb = a.strengths(0), b.strengths(0)

    def badness(p):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        amp_a = np.abs(np.exp(1j * np.outer(p, xa)) @ sa)
        amp_b = np.abs(np.exp(1j * np.outer(p, xb)) @ sb)
        return np.maximum(amp_a, amp_b)

    h = badness(grid)
    candidates = []
    for i in range(grid.size):
        left = h[i - 1] if i > 0 else math.inf
        right = h[i + 1] if i < grid.size - 1 else math.inf
        if h[i] <= left and h[i] <= right:
            candidates.append(i)

    found: list[DecoherenceFreePoint] = []
    for i in candidates:
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, grid.size - 1)]
        if hi > lo:
            res = minimize_scalar(lambda p: float(badness(p)[0]), bounds=(lo, hi), method="bounded",
                                  options={"xatol": xtol})
            p = float(res.x)
            if lo < p < hi:
                try:
                    polished = minimize_scalar(lambda q: float(badness(q)[0]), bracket=(lo, p, hi),
                                               method="golden", tol=xtol / max(abs(p), 1.0))
                    if lo < polished.x < hi and badness(polished.x)[0] <= badness(p)[0]:
                        p = float(polished.x)
                except ValueError:  # bracket lost to rounding at the minimum
                    pass
            if badness(p)[0] > badness(grid[i])[0]:
                p = float(grid[i])
        else:
            p = float(grid[i])
        c = coefficients_vs_phase(a, b, p, gamma)
        worst = max(abs(c["Gamma_a"][0]), abs(c["Gamma_b"][0]), abs(c["Gamma_coll"][0]))
        if worst >= threshold * gamma:
            continue
        if found and abs(p - found[-1].phi) < merge_tol:
            continue
        found.append(DecoherenceFreePoint(p, float(c["g"][0]), float(c["Gamma_a"][0]),
                                          float(c["Gamma_b"][0]), float(c["Gamma_coll"][0])))
    return found
