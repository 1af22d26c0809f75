import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from giantatom.core import (
    AtomSpec,
    ConvergenceError,
    Layout,
    StrengthScaling,
    ValidationError,
    WaveguideModel,
    equidistant_layout,
    topology_layouts,
)
from giantatom.lindblad import (
    Drive,
    LindbladSystem,
    build_giant_atom_system,
    build_multi_atom_system,
    dissipator,
    equidistant_rate_ratio,
    evolve,
    inversion_scan,
    steady_state,
    three_level_atom,
)
from giantatom.multiatom import MultiAtomCoefficients, two_atom_coefficients


def _excited(d, level=1):
    rho = np.zeros((d, d), dtype=complex)
    rho[level, level] = 1.0
    return rho


def test_dissipator_examples():
    sm = np.array([[0, 1], [0, 0]], dtype=complex)
    out = dissipator(sm, _excited(2))
    assert np.allclose(out, np.diag([1.0, -1.0]))
    rho = np.array([[0.3, 0.1j], [-0.1j, 0.7]])
    assert np.allclose(dissipator(np.eye(2), rho), 0.0)
    with pytest.raises(ValidationError):
        dissipator(np.eye(3), rho)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 6))
def test_dissipator_is_traceless(seed, d):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    B = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = B @ B.conj().T
    rho /= np.trace(rho)
    assert abs(np.trace(dissipator(X, rho))) < 1e-12 * max(1.0, np.linalg.norm(X) ** 2)


def test_system_validation():
    with pytest.raises(ValidationError):
        LindbladSystem(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValidationError):
        LindbladSystem(np.eye(2), (np.eye(2),), (-1.0,))
    with pytest.raises(ValidationError):
        LindbladSystem(np.eye(2), (np.eye(3),), (1.0,))


def test_giant_atom_system_rates():
    protected = build_giant_atom_system(equidistant_layout(2, 1.0), AtomSpec.two_level(math.pi))
    assert protected.rates[0] == pytest.approx(0.0, abs=1e-15)
    small = build_giant_atom_system(equidistant_layout(1, 1.0), AtomSpec.two_level(3.0))
    assert small.rates[0] == pytest.approx(1.0)
    alpha = -0.1 * 2 * math.pi
    atom = three_level_atom(2.2 * math.pi, alpha)
    sys3 = build_giant_atom_system(equidistant_layout(10, 1.0), atom)
    from giantatom.spectral import relaxation_rate_equidistant as eq
    assert sys3.rates[0] == pytest.approx(eq(10, 2.2 * math.pi), rel=1e-10, abs=1e-12)
    assert sys3.rates[1] == pytest.approx(2 * eq(10, 2.2 * math.pi + alpha), rel=1e-10)
    flat = build_giant_atom_system(equidistant_layout(10, 1.0), atom, scaling=StrengthScaling.FLAT)
    assert flat.rates[1] == pytest.approx(sys3.rates[1] / 2)


def test_drive_on_undefined_transition():
    with pytest.raises(ValidationError):
        build_giant_atom_system(equidistant_layout(1, 1.0), AtomSpec.two_level(1.0), Drive(1.0, 0, 2))


def test_two_level_decay():
    system = build_giant_atom_system(equidistant_layout(1, 1.0), AtomSpec.two_level(2.0))
    traj = evolve(system, _excited(2), 5.0, 1e-3, store_every=100, check_step=True)
    assert np.max(np.abs(traj.populations[:, 1] - np.exp(-traj.times))) < 1e-6
    assert traj.step_halving_error < 1e-9
    assert traj.trace_error.max() < 1e-9


def test_decay_rate_fit_within_a_tenth_of_a_percent():
    rate = 0.37
    system = LindbladSystem(np.zeros((2, 2)), (np.array([[0, 1], [0, 0]]),), (rate,))
    traj = evolve(system, _excited(2), 5.0 / rate, 1e-3 / rate, store_every=50)
    fit = -np.polyfit(traj.times, np.log(traj.populations[:, 1]), 1)[0]
    assert fit == pytest.approx(rate, rel=1e-3)


def test_pure_hamiltonian_preserves_purity():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    system = LindbladSystem(A + A.conj().T)
    traj = evolve(system, np.outer(psi, psi.conj()), 2.0, 1e-3, store_every=100)
    purity = np.real(np.einsum("tij,tji->t", traj.states, traj.states))
    assert np.max(np.abs(purity - 1.0)) < 1e-9


def test_exchange_only_swap():
    a, b = topology_layouts("braided")
    coeffs = two_atom_coefficients(a, b, math.pi / 2)
    system = build_multi_atom_system(coeffs)
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[2, 2] = 1.0  # |e, g>
    t_swap = math.pi / (2 * abs(coeffs.g))
    n = 2000
    traj = evolve(system, rho0, t_swap, t_swap / n, store_every=n)
    assert traj.populations[-1, 1] >= 1 - 1e-6


def test_dark_state_under_maximal_collective_decay():
    for sign in (1.0, -1.0):
        coeffs = MultiAtomCoefficients(np.array([1.0, 1.0]), np.zeros((2, 2)), np.array([1.0, 1.0]),
                                       sign * np.array([[0.0, 1.0], [1.0, 0.0]]))
        system = build_multi_atom_system(coeffs)
        psi = np.zeros(4, dtype=complex)
        psi[2], psi[1] = 1.0, -sign  # (|eg> - sign |ge>) / sqrt 2
        psi /= np.linalg.norm(psi)
        traj = evolve(system, np.outer(psi, psi.conj()), 5.0, 1e-3, store_every=5000)
        assert np.real(psi.conj() @ traj.states[-1] @ psi) == pytest.approx(1.0, abs=1e-9)


def test_multi_atom_rejects_unphysical_matrix():
    bad = MultiAtomCoefficients(np.ones(2), np.zeros((2, 2)), np.array([1.0, 1.0]), 2 * np.array([[0, 1.0], [1.0, 0]]))
    with pytest.raises(ValidationError):
        build_multi_atom_system(bad)


def test_evolve_rejects_large_step_and_bad_state():
    system = build_giant_atom_system(equidistant_layout(1, 1.0), AtomSpec.two_level(2.0))
    with pytest.raises(ConvergenceError):
        evolve(system, _excited(2), 10.0, 5.0)
    with pytest.raises(ValidationError):
        evolve(system, 2 * _excited(2), 1.0, 0.1)
    with pytest.raises(ValidationError):
        evolve(system, _excited(3), 1.0, 0.1)


def _random_system(rng):
    d = int(rng.integers(2, 7))
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    jumps = tuple(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)) for _ in range(int(rng.integers(1, 4))))
    rates = tuple(rng.uniform(0, 1, len(jumps)))
    B = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = B @ B.conj().T
    return LindbladSystem(0.5 * (A + A.conj().T), jumps, rates), rho / np.trace(rho)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_trajectory_invariants(seed):
    rng = np.random.default_rng(seed)
    system, rho0 = _random_system(rng)
    scale = np.linalg.norm(system.hamiltonian, 2) + sum(r * np.linalg.norm(L, 2) ** 2
                                                        for r, L in zip(system.rates, system.jumps))
    dt = 0.1 / scale
    traj = evolve(system, rho0, 100 * dt, dt, store_every=5)
    assert traj.trace_error.max() < 1e-9
    assert np.max(np.abs(traj.states - np.conj(np.transpose(traj.states, (0, 2, 1))))) < 1e-12
    assert traj.min_eigenvalues().min() >= -1e-8


def test_steady_state_examples():
    system = build_giant_atom_system(equidistant_layout(1, 1.0), AtomSpec.two_level(2.0))
    rho = steady_state(system)
    assert np.allclose(rho, np.diag([1.0, 0.0]), atol=1e-12)
    assert np.linalg.norm(system.liouvillian() @ rho.reshape(-1)) < 1e-10


def test_steady_state_degenerate():
    with pytest.raises(ValidationError):
        steady_state(LindbladSystem(np.diag([0.0, 1.0])))


def test_inversion_with_engineered_rates():
    phi_grid = np.linspace(0.01, 4 * math.pi, 4000)
    ratio = equidistant_rate_ratio(10, phi_grid, -0.1)
    best = phi_grid[np.argmax(ratio)]
    assert ratio.max() > 100
    rows = inversion_scan(10, -0.1, [0.3], [best])
    assert rows[0].inverted
    assert rows[0].gamma_21 / rows[0].gamma_10 == pytest.approx(ratio.max(), rel=1e-6)


def _rate_equation_populations(g10, g21, rabi):
    # weak resonant drive on 0<->2: pumping rate W = rabi^2 / Gamma_2
    w = rabi**2 / g21
    m = np.array([[-w, g10, g21 + w], [0.0, -g10, g21], [w, 0.0, -(g21 + w)]])
    m[0] = 1.0
    return np.linalg.solve(m, [1.0, 0.0, 0.0])


def test_equal_rates_weak_drive_no_inversion():
    layout = equidistant_layout(1, 1.0)
    atom = AtomSpec.anharmonic(5.0, -0.2, 3)
    drive = Drive(0.05, 0, 2)
    system = build_giant_atom_system(layout, atom, drive, scaling=StrengthScaling.FLAT)
    assert system.rates[0] == pytest.approx(system.rates[1])
    pops = np.real(np.diag(steady_state(system)))
    assert pops[1] < pops[0]
    assert np.allclose(pops, _rate_equation_populations(1.0, 1.0, 0.05), atol=1e-3)


def test_inversion_scan_edge_cases():
    rows = inversion_scan(10, -0.1, [0.0], np.linspace(6.0, 7.5, 5))
    assert not any(r.inverted for r in rows)
    with pytest.raises(ValidationError):
        inversion_scan(1, -0.1, [0.1], [1.0])
    with pytest.raises(ValidationError):
        inversion_scan(10, -0.1, [0.1], [0.1])


def test_single_point_ratio_is_scaling_constant():
    phi = np.linspace(0.7, 12, 50)
    bos = equidistant_rate_ratio(1, phi, -0.1)
    flat = equidistant_rate_ratio(1, phi, -0.1, scaling=StrengthScaling.FLAT)
    assert np.allclose(bos, 2.0) and np.allclose(flat, 1.0)
