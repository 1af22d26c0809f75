"""Brute-force ground truth from a discretised waveguide.

The waveguide is a ring of length ``L`` whose modes ``k_j = 2 pi j / L``
propagate right (``k > 0``) or left (``k < 0``) at frequency ``v |k|``.  Only
modes inside a window around the atomic frequency are kept.  In the
single-excitation sector, with counter-rotating terms dropped, atom ``a``
couples to mode ``j`` through

    <j|H|a> = sqrt(gamma v / 2L) * sum_k s_k exp(i k_j x_k)

which makes a single unit-strength point decay at ``gamma`` by Fermi's
golden rule.  Nothing here uses the closed-form rate or coupling formulas;
the module is meant to check them.

Two probes are offered:

* time-domain evolution of the full Hamiltonian (:func:`build_hamiltonian`,
  :func:`extract_rates`), good for decay rates and delay dynamics;
* adiabatic elimination of the modes by direct summation
  (:func:`effective_atom_block`), good for exchange couplings and Lamb
  shifts, which need a frequency window much wider than ``1/tau``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import curve_fit
from scipy.sparse.linalg import expm_multiply

from .core import ConvergenceError, Layout, ValidationError, as_layouts
from .multiatom import MultiAtomCoefficients

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ModeBasis:
    length: float
    k: np.ndarray
    v: float = 1.0

    def __post_init__(self):
        if self.k.size % 2:
            raise ValidationError("mode count must be even (right and left movers)")

    @classmethod
    def around(cls, omega_center: float, window: float, n_modes: int = 4096, v: float = 1.0) -> "ModeBasis":
        """``n_modes`` modes (half per direction) spanning ``window`` around ``omega_center``."""
        if n_modes < 2 or n_modes % 2:
            raise ValidationError("n_modes must be a positive even number")
        per_dir = n_modes // 2
        spacing = window / per_dir
        return cls._build(omega_center, spacing, per_dir, v)

    @classmethod
    def with_spacing(cls, omega_center: float, window: float, spacing: float, v: float = 1.0) -> "ModeBasis":
        per_dir = int(math.ceil(window / spacing))
        return cls._build(omega_center, spacing, per_dir, v)

    @classmethod
    def _build(cls, omega_center, spacing, per_dir, v):
        length = TWO_PI * v / spacing
        j0 = int(round(omega_center / spacing)) - per_dir // 2
        if j0 < 1:
            raise ValidationError("mode window reaches zero frequency; raise the centre frequency")
        j = np.arange(j0, j0 + per_dir)
        kr = TWO_PI * j / length
        return cls(length, np.concatenate([kr, -kr]), v)

    @property
    def n_modes(self) -> int:
        return self.k.size

    @property
    def omega(self) -> np.ndarray:
        return self.v * np.abs(self.k)

    @property
    def spacing(self) -> float:
        return TWO_PI * self.v / self.length

    @property
    def window(self) -> float:
        w = self.omega
        return float(w.max() - w.min() + self.spacing)

    @property
    def center(self) -> float:
        w = self.omega
        return 0.5 * float(w.max() + w.min())

    @property
    def revival_time(self) -> float:
        return self.length / self.v


def _couplings(layouts: Sequence[Layout], k: np.ndarray, gamma: float, length: float, v: float) -> np.ndarray:
    """``V[j, a] = <j|H|a>`` for every mode ``j`` and atom ``a``."""
    amp = math.sqrt(gamma * v / (2.0 * length))
    cols = [np.exp(1j * np.multiply.outer(k, lay.positions)) @ lay.strengths(0) for lay in layouts]
    return amp * np.stack(cols, axis=1)


def build_hamiltonian(
    layouts: Layout | Sequence[Layout],
    basis: ModeBasis,
    omega_atoms,
    gamma: float = 1.0,
    frame: float | None = None,
    check_window: bool = True,
) -> sp.csr_matrix:
    """Single-excitation Hamiltonian, atoms first, then modes.

    Energies are measured from ``frame`` (default: the window centre) so
    the matrix stays well scaled.
    """
    layouts = as_layouts(layouts)
    n = len(layouts)
    w_at = np.broadcast_to(np.asarray(omega_atoms, dtype=float), (n,))
    if frame is None:
        frame = basis.center
    if check_window:
        bare = gamma * max(float(np.sum(lay.strengths(0) ** 2)) for lay in layouts)
        if basis.window < 50.0 * bare:
            raise ValidationError(
                f"mode window {basis.window:.3g} is narrower than 50x the bare rate {bare:.3g}"
            )
        for w in w_at:
            if not (basis.omega.min() < w < basis.omega.max()):
                raise ValidationError("atomic frequency lies outside the mode window")
    V = _couplings(layouts, basis.k, gamma, basis.length, basis.v)
    m = basis.n_modes
    diag = np.concatenate([w_at - frame, basis.omega - frame])
    rows = np.repeat(np.arange(m) + n, n)
    cols = np.tile(np.arange(n), m)
    vals = V.reshape(-1)
    H = sp.coo_matrix((vals, (rows, cols)), shape=(n + m, n + m))
    H = H + H.conj().T + sp.diags(diag.astype(complex))
    return H.tocsr()


def evolve_state(H, psi0, t_end: float, n_times: int):
    """Exact propagation ``exp(-i H t) psi0`` on a uniform time grid."""
    times = np.linspace(0.0, t_end, n_times)
    states = expm_multiply(-1j * H, np.asarray(psi0, dtype=complex), start=0.0, stop=t_end,
                           num=n_times, endpoint=True)
    return times, states


def initial_excitation(H, atom: int = 0) -> np.ndarray:
    psi = np.zeros(H.shape[0], dtype=complex)
    psi[atom] = 1.0
    return psi


@dataclass(frozen=True)
class RateFit:
    gamma: float
    delta: float
    residual: float
    times: np.ndarray
    amplitude: np.ndarray
    norm_error: float


def extract_rates(
    H,
    basis: ModeBasis,
    omega_atom: float,
    t_end: float,
    n_times: int = 400,
    fit_start: float = 0.0,
    atom: int = 0,
    frame: float | None = None,
    max_residual: float = 0.05,
) -> RateFit:
    """Fit ``|c(t)|^2 = A exp(-Gamma t)`` and the phase drift of one atom.

    ``delta`` is the shift of the oscillation frequency from ``omega_atom``;
    it only captures the part of the Lamb shift generated inside the mode
    window.
    """
    if t_end >= 0.4 * basis.revival_time:
        raise ValidationError(
            f"fit window {t_end:.3g} exceeds 0.4 of the ring revival time {basis.revival_time:.3g}"
        )
    if frame is None:
        frame = basis.center
    times, states = evolve_state(H, initial_excitation(H, atom), t_end, n_times)
    c = states[:, atom]
    norm_err = float(np.max(np.abs(np.linalg.norm(states, axis=1) - 1.0)))
    pop = np.abs(c) ** 2
    sel = (times >= fit_start) & (pop > 1e-10)
    if sel.sum() < 5:
        raise ConvergenceError("too few usable samples for a decay fit", {"samples": int(sel.sum())})
    A = np.vstack([np.ones(sel.sum()), -times[sel]]).T
    coef, *_ = np.linalg.lstsq(A, np.log(pop[sel]), rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - np.log(pop[sel])) ** 2)))
    if resid > max_residual:
        raise ConvergenceError("decay is not exponential over the fit window",
                               {"rms_log_residual": resid, "gamma": coef[1]})
    phase = np.unwrap(np.angle(c[sel]))
    slope = np.polyfit(times[sel], phase, 1)[0]
    delta = -slope - (omega_atom - frame)
    return RateFit(float(coef[1]), float(delta), resid, times, c, norm_err)


def effective_atom_block(
    layouts: Layout | Sequence[Layout],
    basis: ModeBasis,
    omega: float,
    gamma: float = 1.0,
    eta: float | None = None,
    chunk: int = 1 << 18,
) -> np.ndarray:
    """Self-energy ``Sigma_ab(w) = sum_j <a|H|j><j|H|b> / (w - w_j + i eta)``.

    The broadening ``eta`` (default five mode spacings) is removed to first
    order by Richardson extrapolation between ``eta`` and ``2 eta``.
    """
    layouts = as_layouts(layouts)
    if eta is None:
        eta = 5.0 * basis.spacing
    n = len(layouts)
    out1 = np.zeros((n, n), dtype=complex)
    out2 = np.zeros((n, n), dtype=complex)
    k_all = basis.k
    for start in range(0, k_all.size, chunk):
        k = k_all[start : start + chunk]
        V = _couplings(layouts, k, gamma, basis.length, basis.v)
        det = omega - basis.v * np.abs(k)
        w1 = 1.0 / (det + 1j * eta)
        w2 = 1.0 / (det + 2j * eta)
        out1 += (V.conj().T * w1) @ V
        out2 += (V.conj().T * w2) @ V
    return 2.0 * out1 - out2


def wide_basis(layouts: Sequence[Layout], omega: float, v: float = 1.0,
               cycles: float = 300.0, resolution: float = 1000.0) -> ModeBasis:
    """Basis for mode summation: window of ``cycles`` periods of the shortest
    delay, spacing of ``1/resolution`` of the longest delay's period."""
    xs = np.concatenate([lay.positions for lay in layouts])
    d = np.abs(xs[:, None] - xs[None, :]) / v
    d = d[d > 0]
    if d.size == 0:
        tau_min = tau_max = 1.0 / omega
    else:
        tau_min, tau_max = d.min(), d.max()
    half = cycles * TWO_PI / tau_min
    spacing = TWO_PI / tau_max / resolution
    if omega - half <= 0:
        raise ValidationError("frequency too low for the mode-summation window")
    return ModeBasis.with_spacing(omega, 2.0 * half, spacing, v)


def oracle_coefficients(
    layouts: Sequence[Layout],
    omega: float,
    gamma: float = 1.0,
    v: float = 1.0,
    basis: ModeBasis | None = None,
) -> MultiAtomCoefficients:
    """Multi-atom coefficients read off the mode-summed self-energy."""
    layouts = as_layouts(layouts)
    if basis is None:
        basis = wide_basis(layouts, omega, v)
    sigma = effective_atom_block(layouts, basis, omega, gamma)
    gam = -2.0 * sigma.imag
    ex = sigma.real.copy()
    rates = np.diag(gam).copy()
    shifts = np.diag(ex).copy()
    coll = 0.5 * (gam + gam.T)
    ex = 0.5 * (ex + ex.T)
    np.fill_diagonal(coll, 0.0)
    np.fill_diagonal(ex, 0.0)
    return MultiAtomCoefficients(omega + shifts, ex, rates, coll)


@dataclass(frozen=True)
class CouplingFit:
    g: float
    period: float
    times: np.ndarray
    transfer: np.ndarray


def extract_coupling(block: np.ndarray, t_end: float | None = None, n_times: int = 2000,
                     source: int = 0, target: int = 1) -> CouplingFit:
    """Fit the excitation swap ``P(t) = A sin^2(g t)`` generated by an
    effective atom block (e.g. from :func:`effective_atom_block`)."""
    block = np.asarray(block, dtype=complex)
    sub = block[np.ix_([source, target], [source, target])]
    guess = abs(sub[0, 1].real) or abs(sub[0, 1]) or 1.0
    if t_end is None:
        t_end = 3.0 * math.pi / guess
    times = np.linspace(0.0, t_end, n_times)
    vals, vecs = np.linalg.eig(sub - np.trace(sub).real / 2 * np.eye(2))
    inv = np.linalg.inv(vecs)
    amp = np.einsum("k,tk->t", vecs[1, :] * inv[:, 0], np.exp(-1j * np.outer(times, vals)))
    transfer = np.abs(amp) ** 2
    (a, g), _ = curve_fit(lambda t, a, g: a * np.sin(g * t) ** 2, times, transfer, p0=[transfer.max(), guess])
    return CouplingFit(float(abs(g)), float(math.pi / abs(g)), times, transfer)


def convergence_table(
    layout: Layout,
    omega_atom: float,
    gamma: float = 1.0,
    window: float | None = None,
    mode_counts: Sequence[int] = (1024, 2048, 4096, 8192),
    t_end: float | None = None,
    v: float = 1.0,
) -> list[dict]:
    """Decay rate from the time-domain oracle for increasing mode counts."""
    if window is None:
        window = 100.0 * gamma * float(np.sum(layout.strengths(0) ** 2))
    bases = [ModeBasis.around(omega_atom, window, m, v) for m in mode_counts]
    if t_end is None:
        t_end = min(0.39 * bases[0].revival_time, 8.0 / gamma)
    rows = []
    prev = None
    for m, basis in zip(mode_counts, bases):
        H = build_hamiltonian(layout, basis, omega_atom, gamma)
        fit = extract_rates(H, basis, omega_atom, t_end, fit_start=0.1 * t_end)
        rel = None if prev is None else abs(fit.gamma - prev) / max(abs(prev), 1e-300)
        rows.append({"n_modes": m, "gamma_fit": fit.gamma, "rel_change": rel, "norm_error": fit.norm_error})
        prev = fit.gamma
    return rows



def _arrowhead_spectrum(eps: float, omega: np.ndarray, weight: np.ndarray, iters: int = 30,
                        block: int = 1024):
    """Eigenvalues and atomic overlaps of one level coupled to a set of modes.

    Solves ``E - eps = sum_j weight_j / (E - omega_j)``.  There is exactly one
    root between neighbouring mode frequencies and one beyond each end;
    bisection brackets it and a few Newton steps polish it.
    """
    keep = weight > 1e-14 * weight.max()  # decoupled modes are eigenvectors on their own
    order = np.argsort(omega[keep])
    w, g = omega[keep][order], weight[keep][order]
    total = float(g.sum())
    pad = abs(eps) + (w[-1] - w[0]) + total / max(np.min(np.diff(w)), 1e-300) + 1.0
    lo_all = np.concatenate([[w[0] - pad], w])
    hi_all = np.concatenate([w, [w[-1] + pad]])
    E_all = np.empty_like(lo_all)
    p_all = np.empty_like(lo_all)
    for start in range(0, lo_all.size, block):
        lo = lo_all[start : start + block]
        hi = hi_all[start : start + block]
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            up = mid - eps - (g / (mid[:, None] - w)).sum(axis=1) > 0
            hi = np.where(up, mid, hi)
            lo = np.where(up, lo, mid)
        E = 0.5 * (lo + hi)
        for _ in range(3):
            inv = 1.0 / (E[:, None] - w)
            f = E - eps - (g * inv).sum(axis=1)
            df = 1.0 + (g * inv**2).sum(axis=1)
            E = np.clip(E - f / df, lo, hi)
        inv = 1.0 / (E[:, None] - w)
        E_all[start : start + block] = E
        p_all[start : start + block] = 1.0 / (1.0 + (g * inv**2).sum(axis=1))
    return E_all, p_all


def oracle_amplitude(
    layout: Layout,
    omega_atom: float,
    gamma: float = 1.0,
    t_end: float = 10.0,
    n_times: int = 1001,
    window: float | None = None,
    v: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Atomic amplitude ``c(t)`` in the frame rotating at ``omega_atom``.

    The default window is 400 bare rates or 40 feedback frequencies
    ``2 pi / tau``, whichever is wider; the ring is just long enough that
    nothing returns around it before ``t_end``.  With a single atom the
    single-excitation Hamiltonian is an arrowhead matrix whose spectrum is
    found from its secular equation, which is exact and much cheaper than
    propagating the full state.
    """
    bare = gamma * float(np.sum(layout.strengths(0) ** 2))
    ext = layout.extent / v
    if window is None:
        window = max(400.0 * bare, 40.0 * TWO_PI / ext if ext > 0 else 0.0)
    spacing = TWO_PI * 0.35 / t_end
    basis = ModeBasis.with_spacing(omega_atom, window, spacing, v)
    V = _couplings([layout], basis.k, gamma, basis.length, basis.v)[:, 0]
    # right and left movers share a frequency: only their combined weight enters
    half = basis.n_modes // 2
    weight = np.abs(V[:half]) ** 2 + np.abs(V[half:]) ** 2
    omega = basis.omega[:half] - omega_atom
    E, p = _arrowhead_spectrum(0.0, omega, weight)
    times = np.linspace(0.0, t_end, n_times)
    c = np.exp(-1j * np.outer(times, E)) @ p
    return times, c
