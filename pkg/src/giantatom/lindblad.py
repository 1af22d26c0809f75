"""Master-equation dynamics for driven multilevel and coupled giant atoms.

Density matrices are plain ``numpy`` arrays.  The Liouvillian acts on
row-major vectorised matrices, ``vec(A rho B) = kron(A, B.T) vec(rho)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .core import (
    DEFAULT_WAVEGUIDE,
    AtomSpec,
    ConvergenceError,
    Layout,
    StrengthScaling,
    ValidationError,
    WaveguideModel,
)
from .multiatom import MultiAtomCoefficients
from .spectral import lamb_shift, relaxation_rate, relaxation_rate_equidistant

MAX_DIM = 4096
MAX_STEADY_DIM = 256
MAX_LEVELS = 12


@dataclass(frozen=True)
class Drive:
    """Coherent drive ``(rabi/2)(|lower><upper| + h.c.)`` in the drive frame.

    ``detuning`` is the drive frequency minus the (shifted) transition
    frequency.
    """

    rabi: float
    lower: int = 0
    upper: int = 2
    detuning: float = 0.0


@dataclass(frozen=True)
class LindbladSystem:
    hamiltonian: np.ndarray
    jumps: tuple[np.ndarray, ...] = ()
    rates: tuple[float, ...] = ()
    drive: Drive | None = None
    labels: tuple[str, ...] = field(default=())

    def __post_init__(self):
        H = np.asarray(self.hamiltonian, dtype=complex)
        if H.ndim != 2 or H.shape[0] != H.shape[1]:
            raise ValidationError("Hamiltonian must be square")
        if H.shape[0] > MAX_DIM:
            raise ValidationError(f"dimension {H.shape[0]} exceeds {MAX_DIM}")
        if np.max(np.abs(H - H.conj().T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(H))):
            raise ValidationError("Hamiltonian is not Hermitian")
        if len(self.jumps) != len(self.rates):
            raise ValidationError("need one rate per jump operator")
        jumps = tuple(np.asarray(L, dtype=complex) for L in self.jumps)
        for L in jumps:
            if L.shape != H.shape:
                raise ValidationError("jump operator dimension mismatch")
        if any(r < 0 for r in self.rates):
            raise ValidationError("rates must be non-negative")
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "jumps", jumps)
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    def effective_hamiltonian(self) -> np.ndarray:
        H = self.hamiltonian.copy()
        for r, L in zip(self.rates, self.jumps):
            H -= 0.5j * r * (L.conj().T @ L)
        return H

    def rhs(self, rho: np.ndarray) -> np.ndarray:
        Heff = self.effective_hamiltonian()
        return _rhs(Heff, self.jumps, self.rates, rho)

    def liouvillian(self) -> sp.csr_matrix:
        d = self.dim
        eye = sp.identity(d, dtype=complex, format="csr")
        Heff = sp.csr_matrix(self.effective_hamiltonian())
        Lv = -1j * (sp.kron(Heff, eye) - sp.kron(eye, Heff.conj()))
        for r, L in zip(self.rates, self.jumps):
            if r == 0:
                continue
            Ls = sp.csr_matrix(L)
            Lv = Lv + r * sp.kron(Ls, Ls.conj())
        return Lv.tocsr()


def _rhs(Heff, jumps, rates, rho):
    out = -1j * (Heff @ rho - rho @ Heff.conj().T)
    for r, L in zip(rates, jumps):
        if r:
            out += r * (L @ rho @ L.conj().T)
    return out


def dissipator(X, rho) -> np.ndarray:
    """``X rho X^dag - (X^dag X rho + rho X^dag X) / 2``."""
    X = np.asarray(X)
    rho = np.asarray(rho)
    if X.shape != rho.shape or X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValidationError(f"dimension mismatch: {X.shape} vs {rho.shape}")
    XdX = X.conj().T @ X
    return X @ rho @ X.conj().T - 0.5 * (XdX @ rho + rho @ XdX)


def build_giant_atom_system(
    layout: Layout,
    atom: AtomSpec,
    drive: Drive | None = None,
    waveguide: WaveguideModel = DEFAULT_WAVEGUIDE,
    scaling: StrengthScaling = StrengthScaling.BOSONIC,
    rotating_frame: bool = True,
) -> LindbladSystem:
    """Master equation of one giant atom: shifted levels, nearest-level decay.

    Rates and shifts of each transition are evaluated at its own frequency.
    Without a drive and with ``rotating_frame`` the level energies are
    measured from the ground level; with a drive the levels it connects are
    moved to the drive frame and every other level sits at zero energy
    (valid because the dissipators are invariant under diagonal frame
    changes).
    """
    M = atom.n_levels
    if M > MAX_LEVELS:
        raise ValidationError(f"at most {MAX_LEVELS} levels, got {M}")
    shifts = [lamb_shift(layout, atom, lvl, waveguide=waveguide, scaling=scaling) for lvl in range(M)]
    energies = np.array(atom.levels) + np.array(shifts, dtype=float)
    jumps, rates = [], []
    for m in range(M - 1):
        jumps.append(atom.lowering(m))
        rates.append(float(relaxation_rate(layout, atom, m, waveguide=waveguide, scaling=scaling)))
    if drive is None:
        H = np.diag(energies - (energies[0] if rotating_frame else 0.0))
    else:
        lo, hi = drive.lower, drive.upper
        if not (0 <= lo < hi < M):
            raise ValidationError(f"drive on undefined transition {lo}<->{hi} of a {M}-level atom")
        diag = np.zeros(M)
        diag[hi] = -drive.detuning
        H = np.diag(diag).astype(complex)
        H[lo, hi] = H[hi, lo] = 0.5 * drive.rabi
    labels = tuple(f"pop_{m}" for m in range(M))
    return LindbladSystem(H, tuple(jumps), tuple(rates), drive, labels)


def _two_level_ops(n_atoms: int):
    sm = np.array([[0.0, 1.0], [0.0, 0.0]])  # |g><e| with basis (g, e)
    sz = np.diag([-1.0, 1.0])
    eye = np.eye(2)

    def embed(op, j):
        out = np.array([[1.0]])
        for i in range(n_atoms):
            out = np.kron(out, op if i == j else eye)
        return out

    return [embed(sm, j) for j in range(n_atoms)], [embed(sz, j) for j in range(n_atoms)]


def build_multi_atom_system(coeffs: MultiAtomCoefficients, frame: float | None = None) -> LindbladSystem:
    """Master equation for two-level atoms with exchange and collective decay.

    Each atom is ordered (g, e); the tensor order follows the atom order.
    The collective dissipator with relaxation matrix ``Gamma_jl`` is
    diagonalised into independent jump operators.  Energies are measured in
    a frame rotating at ``frame`` (default: mean shifted frequency).
    """
    n = coeffs.n_atoms
    if 2**n > MAX_DIM:
        raise ValidationError(f"{n} atoms exceed the dimension limit")
    sms, szs = _two_level_ops(n)
    if frame is None:
        frame = float(np.mean(coeffs.omega_shifted))
    H = sum(0.5 * (w - frame) * sz for w, sz in zip(coeffs.omega_shifted, szs))
    for j in range(n):
        for l in range(j + 1, n):
            g = coeffs.exchange[j, l]
            if g:
                H = H + g * (sms[j].T @ sms[l] + sms[l].T @ sms[j])
    vals, vecs = np.linalg.eigh(coeffs.relaxation_matrix)
    if vals.min() < -1e-10 * max(1.0, abs(vals).max()):
        raise ValidationError("relaxation matrix is not positive semidefinite")
    jumps, rates = [], []
    for lam, u in zip(vals, vecs.T):
        if lam <= 0:
            continue
        jumps.append(sum(c * s for c, s in zip(u, sms)))
        rates.append(float(lam))
    labels = tuple(f"pop_{i}" for i in range(2**n))
    return LindbladSystem(np.asarray(H, dtype=complex), tuple(jumps), tuple(rates), None, labels)


def collective_dissipator(sa, sb, rho) -> np.ndarray:
    """``(sa rho sb^dag - {sb^dag sa, rho}/2) + h.c.``, the collective term."""
    term = sa @ rho @ sb.conj().T - 0.5 * (sb.conj().T @ sa @ rho + rho @ sb.conj().T @ sa)
    return term + term.conj().T


@dataclass(frozen=True)
class DensityTrajectory:
    times: np.ndarray
    states: np.ndarray  # (n_times, D, D)
    trace_error: np.ndarray
    step_halving_error: float | None = None

    @property
    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.states))

    def min_eigenvalues(self) -> np.ndarray:
        herm = 0.5 * (self.states + np.conj(np.swapaxes(self.states, 1, 2)))
        return np.linalg.eigvalsh(herm)[:, 0]


def _stability_bound(system: LindbladSystem) -> float:
    h = np.linalg.norm(system.hamiltonian, 2)
    d = sum(r * np.linalg.norm(L, 2) ** 2 for r, L in zip(system.rates, system.jumps))
    return 2.0 * h + 2.0 * d


def _rk4(system, rho0, t_end, dt, store_every=1):
    n_steps = int(round(t_end / dt))
    if n_steps < 1 or abs(n_steps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValidationError("t_end must be a positive multiple of dt")
    Heff = system.effective_hamiltonian()
    f = lambda r: _rhs(Heff, system.jumps, system.rates, r)
    rho = np.array(rho0, dtype=complex)
    out = [rho.copy()]
    for i in range(1, n_steps + 1):
        k1 = f(rho)
        k2 = f(rho + 0.5 * dt * k1)
        k3 = f(rho + 0.5 * dt * k2)
        k4 = f(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if i % store_every == 0:
            out.append(rho.copy())
    times = np.arange(len(out)) * dt * store_every
    return times, np.array(out)


def _validate_density(rho, dim):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (dim, dim):
        raise ValidationError("initial state dimension mismatch")
    if abs(np.trace(rho) - 1) > 1e-9 or np.max(np.abs(rho - rho.conj().T)) > 1e-12:
        raise ValidationError("initial state must be a Hermitian matrix with unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValidationError("initial state must be positive semidefinite")
    return rho


def evolve(
    system: LindbladSystem,
    rho0,
    t_end: float,
    dt: float,
    store_every: int = 1,
    check_step: bool = False,
    trace_tol: float = 1e-9,
) -> DensityTrajectory:
    """Fixed-step classical Runge-Kutta integration of the master equation.

    ``check_step`` re-runs with ``dt/2`` and records the largest difference
    between the two runs at the stored times.
    """
    rho0 = _validate_density(rho0, system.dim)
    if dt * _stability_bound(system) > 2.5:
        raise ConvergenceError(
            f"dt={dt:.3g} is outside the Runge-Kutta stability region; use dt < "
            f"{2.5 / _stability_bound(system):.3g}",
            {"dt": dt},
        )
    times, states = _rk4(system, rho0, t_end, dt, store_every)
    tr = np.abs(np.einsum("tii->t", states) - 1.0)
    if not np.all(np.isfinite(states)) or tr.max() > trace_tol:
        raise ConvergenceError(
            f"trace drift {tr.max():.3g} exceeds {trace_tol:.1g}; reduce dt",
            {"dt": dt, "trace_error": float(tr.max())},
        )
    halving = None
    if check_step:
        _, fine = _rk4(system, rho0, t_end, dt / 2.0, 2 * store_every)
        halving = float(np.max(np.abs(fine - states)))
    return DensityTrajectory(times, states, tr, halving)


def steady_state(system: LindbladSystem, degeneracy_tol: float = 1e-9, residual_tol: float = 1e-10) -> np.ndarray:
    """Null vector of the Liouvillian normalised to unit trace.

    The trace condition replaces one row of the linear system.  For small
    systems (``D**2 <= 4096``) the null space dimension is checked with an
    SVD first.
    """
    d = system.dim
    if d > MAX_STEADY_DIM:
        raise ValidationError(f"steady state limited to dimension {MAX_STEADY_DIM}")
    Lv = system.liouvillian()
    if d * d <= 4096:
        sv = np.linalg.svd(Lv.toarray(), compute_uv=False)
        scale = max(sv[0], 1e-300)
        nullity = int(np.sum(sv < degeneracy_tol * scale))
        if nullity > 1:
            raise ValidationError(f"steady state is not unique: null space has dimension {nullity}")
    trace_row = np.eye(d).reshape(-1)
    A = Lv.tolil()
    b = np.zeros(d * d, dtype=complex)
    # the rho_00 row is redundant with the others (trace preservation)
    A[0, :] = trace_row
    b[0] = 1.0
    x = spsolve(A.tocsr(), b)
    rho = x.reshape(d, d)
    rho = 0.5 * (rho + rho.conj().T)
    res = float(np.linalg.norm(Lv @ rho.reshape(-1)))
    if not np.isfinite(res) or res > residual_tol:
        raise ConvergenceError("steady-state residual too large", {"residual": res})
    return rho


@dataclass(frozen=True)
class InversionRow:
    phi: float
    omega_d: float
    gamma_10: float
    gamma_21: float
    populations: tuple[float, float, float]

    @property
    def inverted(self) -> bool:
        return self.populations[1] > self.populations[0]


def three_level_atom(phi: float, anharmonicity_phase: float, spacing: float = 1.0, v: float = 1.0) -> AtomSpec:
    """Ladder whose lowest transition has phase ``phi`` across one spacing.

    ``anharmonicity_phase`` is ``(omega_21 - omega_10) * spacing / v``.
    """
    w10 = phi * v / spacing
    return AtomSpec.anharmonic(w10, anharmonicity_phase * v / spacing, 3)


def inversion_scan(
    n: int,
    anharmonicity: float,
    rabi_grid: Sequence[float],
    phi_grid: Sequence[float],
    gamma: float = 1.0,
    scaling: StrengthScaling = StrengthScaling.BOSONIC,
) -> list[InversionRow]:
    """Steady-state populations of a driven three-level giant atom.

    ``anharmonicity`` is ``omega_21 - omega_10`` in units of ``2 pi v / d``
    (``d`` the point spacing), so ``-0.1`` reproduces the usual population
    inversion setting.  The drive is resonant with the shifted ``0 <-> 2``
    transition.
    """
    if n < 2:
        raise ValidationError("inversion scan needs at least two coupling points")
    layout = Layout.from_positions(np.arange(n, dtype=float))
    wg = WaveguideModel.for_rate(gamma)
    alpha = 2.0 * math.pi * anharmonicity
    rows = []
    for phi in phi_grid:
        if phi <= 0 or phi + alpha <= 0:
            raise ValidationError("phases must keep both transition frequencies positive")
        atom = three_level_atom(float(phi), alpha)
        for rabi in rabi_grid:
            system = build_giant_atom_system(layout, atom, Drive(float(rabi), 0, 2), wg, scaling)
            if rabi == 0:
                # undriven: the atom stays in (or relaxes to) the ground level
                pops = (1.0, 0.0, 0.0)
            else:
                rho = steady_state(system)
                pops = tuple(float(p) for p in np.real(np.diag(rho)))
            rows.append(InversionRow(float(phi), float(rabi), system.rates[0], system.rates[1], pops))
    return rows


def equidistant_rate_ratio(n: int, phi, anharmonicity: float, gamma: float = 1.0,
                           scaling: StrengthScaling = StrengthScaling.BOSONIC):
    """``Gamma_21 / Gamma_10`` from the closed form, same conventions as
    :func:`inversion_scan`."""
    phi = np.asarray(phi, dtype=float)
    factor = 2.0 if StrengthScaling(scaling) is StrengthScaling.BOSONIC else 1.0
    g10 = relaxation_rate_equidistant(n, phi, gamma)
    g21 = factor * relaxation_rate_equidistant(n, phi + 2.0 * math.pi * anharmonicity, gamma)
    with np.errstate(divide="ignore"):
        return g21 / g10
