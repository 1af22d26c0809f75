"""Single-excitation dynamics of a giant atom with non-negligible travel times.

Eliminating the waveguide from the single-excitation Schrodinger equation
(Wigner-Weisskopf, rotating frame at the atomic frequency ``w_a``) gives a
delay differential equation for the atomic amplitude,

    dc/dt = -(gamma/2) sum_{k,n} s_k s_n exp(i w_a tau_kn) c(t - tau_kn),

with ``tau_kn = |x_k - x_n| / v``, ``c(0) = 1`` and ``c(t < 0) = 0``.  Pairs
sharing a delay are merged, so the right-hand side is a short sum over
distinct delays.

Field energy bookkeeping.  Each coupling point radiates an amplitude
``sqrt(gamma/2) s_k c`` in both directions.  The right-moving field just to
the right of point ``i`` is therefore, up to a phase,

    R_i(t) = sqrt(gamma/2) sum_{k<=i} s_k exp(i w_a tau_ki) c(t - tau_ki)

and analogously ``L_i`` collects the points to the right of ``i``.  A
segment between points ``i`` and ``i+1`` (travel time ``T_i``) stores

    int_0^{T_i} |R_i(t-u)|^2 + |L_{i+1}(t-u)|^2 du.

The total energy is ``|c|^2`` plus the sum over segments; the open interval
between the outermost points is counted, radiation that has left it is not.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .core import Layout, ValidationError, equidistant_layout

SNAP_TOL = 1e-9
PEAK_PROMINENCE = 0.01
MIN_CYCLES = 4


@dataclass(frozen=True)
class DelayKernel:
    """Distinct delays and their complex weights in the delay equation."""

    delays: np.ndarray  # ascending, delays[0] == 0
    weights: np.ndarray  # complex, (gamma/2) sum s_k s_n exp(i w_a tau)
    tau: np.ndarray  # (N, N) pairwise delays
    phases: np.ndarray  # (N, N) exp(i w_a tau_kn)
    strengths: np.ndarray
    gamma: float
    omega_a: float

    @classmethod
    def from_layout(cls, layout: Layout, gamma: float, omega_a: float, v: float = 1.0) -> "DelayKernel":
        if not gamma > 0:
            raise ValidationError("gamma must be positive")
        if v <= 0:
            raise ValidationError("velocity must be positive")
        x = layout.positions
        s = layout.strengths(0)
        tau = np.abs(x[:, None] - x[None, :]) / v
        phases = np.exp(1j * omega_a * tau)
        pair = 0.5 * gamma * np.outer(s, s) * phases
        # merge pairs with equal delays (equidistant layouts share many)
        flat_t = tau.ravel()
        order = np.argsort(flat_t, kind="stable")
        delays, weights = [], []
        for idx in order:
            t = flat_t[idx]
            if delays and abs(t - delays[-1]) <= SNAP_TOL * max(1.0, t):
                weights[-1] += pair.ravel()[idx]
            else:
                delays.append(t)
                weights.append(pair.ravel()[idx])
        if delays[0] != 0.0:
            delays.insert(0, 0.0)
            weights.insert(0, 0.0)
        return cls(np.array(delays), np.array(weights, dtype=complex), tau, phases, s, float(gamma),
                   float(omega_a))

    @property
    def min_delay(self) -> float:
        d = self.delays[self.delays > 0]
        return float(d.min()) if d.size else math.inf

    @property
    def bare_rate(self) -> float:
        """Decay rate before any feedback arrives, ``gamma * sum s_k^2``."""
        return self.gamma * float(np.sum(self.strengths**2))

    def markov_rate(self, detuning: float = 0.0) -> float:
        return 2.0 * float(np.real(self.transfer_denominator(np.array([detuning]))[0]))

    def transfer_denominator(self, delta) -> np.ndarray:
        """``-i delta + sum_d w_d exp(i delta tau_d)``."""
        delta = np.asarray(delta, dtype=float)
        return -1j * delta + np.exp(1j * np.multiply.outer(delta, self.delays)) @ self.weights


@dataclass(frozen=True)
class AmplitudeTrajectory:
    t: np.ndarray
    c: np.ndarray
    dc_right: np.ndarray = None  # derivative limits used for Hermite history
    dc_left: np.ndarray = None
    kernel: DelayKernel | None = None
    energy: np.ndarray | None = None

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def population(self) -> np.ndarray:
        return np.abs(self.c) ** 2

    def __call__(self, s, left: bool = False) -> np.ndarray:
        """Amplitude at arbitrary times via cubic Hermite interpolation.

        ``left`` selects the left limit at ``t = 0``, where ``c`` switches on.
        """
        u = np.asarray(s, dtype=float) / self.dt
        out = _hermite(self.c, self.dc_right, self.dc_left, u)
        if left:
            out[np.abs(np.atleast_1d(u)) <= SNAP_TOL] = 0.0
        return out


def _hermite(c, dr, dl, u, strict=True):
    """Interpolate ``c`` at fractional grid positions ``u`` (units of dt).

    Derivatives are stored pre-multiplied by dt.  ``c`` vanishes for u < 0.
    """
    u = np.atleast_1d(u)
    out = np.zeros(u.shape, dtype=complex)
    n = c.size
    j = np.floor(u + SNAP_TOL).astype(int)
    f = u - j
    on_grid = np.abs(f) <= SNAP_TOL
    ok = (j >= 0) & (j < n)
    g = ok & on_grid
    out[g] = c[j[g]]
    m = ok & ~on_grid & (j + 1 < n)
    jj, ff = j[m], f[m]
    h00 = (1 + 2 * ff) * (1 - ff) ** 2
    h10 = ff * (1 - ff) ** 2
    h01 = ff**2 * (3 - 2 * ff)
    h11 = ff**2 * (ff - 1)
    out[m] = h00 * c[jj] + h10 * dr[jj] + h01 * c[jj + 1] + h11 * dl[jj + 1]
    if strict and np.any((j >= n) | (~on_grid & (j + 1 >= n))):
        raise ValidationError("requested time beyond the integrated trajectory")
    return out


def _stage_lookup(delays: np.ndarray, dt: float):
    """Per delay and RK stage (theta = 0, 1/2, 1): grid offset and fraction."""
    out = []
    for theta in (0.0, 0.5, 1.0):
        rows = []
        for tau in delays[1:]:
            q = tau / dt
            if abs(q - round(q)) <= SNAP_TOL * max(1.0, q):
                q = float(round(q))
            u = theta - q
            j = math.floor(u)
            f = u - j
            if f <= SNAP_TOL:
                f = 0.0
            rows.append((j, f))
        out.append(rows)
    return out


def dde_evolve(
    layout: Layout,
    gamma: float,
    omega_a: float,
    t_end: float,
    dt: float,
    v: float = 1.0,
    c0: complex = 1.0,
) -> AmplitudeTrajectory:
    """Integrate the delay equation with classical RK4 and Hermite history.

    Delays that are integer multiples of ``dt`` (to 1e-9) are read straight
    from the grid; others use cubic Hermite interpolation between stored
    samples.  The derivative jumps at ``t = tau`` caused by the switch-on at
    ``t = 0`` are tracked with separate left and right derivative limits.
    """
    kernel = DelayKernel.from_layout(layout, gamma, omega_a, v)
    if not (dt > 0 and t_end > 0):
        raise ValidationError("dt and t_end must be positive")
    if dt > kernel.min_delay / 10:
        raise ValidationError(f"dt={dt} exceeds a tenth of the shortest delay {kernel.min_delay}")
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > 1e-9 * t_end:
        n_steps = int(math.ceil(t_end / dt))
    a0 = kernel.weights[0]
    ad = kernel.weights[1:]
    lookup = _stage_lookup(kernel.delays, dt)

    c = np.zeros(n_steps + 1, dtype=complex)
    dr = np.zeros_like(c)  # dt * right derivative
    dl = np.zeros_like(c)  # dt * left derivative
    c[0] = c0

    def history(n, stage, left):
        vals = np.empty(ad.size, dtype=complex)
        for i, (off, f) in enumerate(lookup[stage]):
            j = n + off
            if j < 0:
                vals[i] = 0.0
            elif f == 0.0:
                vals[i] = 0.0 if (left and j == 0) else c[j]
            else:
                h00 = (1 + 2 * f) * (1 - f) ** 2
                h10 = f * (1 - f) ** 2
                h01 = f**2 * (3 - 2 * f)
                h11 = f**2 * (f - 1)
                vals[i] = h00 * c[j] + h10 * dr[j] + h01 * c[j + 1] + h11 * dl[j + 1]
        return vals

    def rhs(cc, hist):
        return -a0 * cc - ad @ hist

    def history_at(time, left):
        u = (time - kernel.delays[1:]) / dt
        vals = _hermite(c, dr, dl, u, strict=False)
        if left:
            vals[np.abs(u) <= SNAP_TOL] = 0.0
        return vals

    def substep(c_start, ta, tb):
        h = tb - ta
        k1 = rhs(c_start, history_at(ta, False))
        h_mid = history_at(ta + 0.5 * h, False)
        k2 = rhs(c_start + 0.5 * h * k1, h_mid)
        k3 = rhs(c_start + 0.5 * h * k2, h_mid)
        k4 = rhs(c_start + h * k3, history_at(tb, True))
        return c_start + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    # off-grid delays put the switch-on jump of c(t - tau) inside a step;
    # such steps are split at the jump to keep the scheme fourth order
    breaks = {}
    for tau in kernel.delays[1:]:
        q = tau / dt
        if abs(q - round(q)) > SNAP_TOL * max(1.0, q):
            breaks.setdefault(int(math.floor(q)), []).append(tau)

    dr[0] = dt * rhs(c[0], history(0, 0, False))
    for n in range(n_steps):
        h_end = history(n, 2, True)
        if n in breaks:
            ta, cc = n * dt, c[n]
            for tb in sorted(breaks[n]) + [(n + 1) * dt]:
                cc = substep(cc, ta, tb)
                ta = tb
            c[n + 1] = cc
        else:
            h_mid = history(n, 1, False)
            k1 = dr[n] / dt
            k2 = rhs(c[n] + 0.5 * dt * k1, h_mid)
            k3 = rhs(c[n] + 0.5 * dt * k2, h_mid)
            k4 = rhs(c[n] + dt * k3, h_end)
            c[n + 1] = c[n] + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        dl[n + 1] = dt * rhs(c[n + 1], h_end)
        dr[n + 1] = dt * rhs(c[n + 1], history(n + 1, 0, False))
    t = dt * np.arange(n_steps + 1)
    return AmplitudeTrajectory(t, c, dr, dl, kernel)


def total_energy(trajectory: AmplitudeTrajectory, layout: Layout | None = None, v: float = 1.0) -> np.ndarray:
    """Atomic population plus field energy stored between the coupling points.

    ``layout`` defaults to the one the trajectory was computed for.  Segment
    integrals use Simpson's rule on the grid and the step midpoints.
    """
    kernel = trajectory.kernel
    if layout is not None:
        kernel = DelayKernel.from_layout(layout, kernel.gamma, kernel.omega_a, v)
    x_tau = kernel.tau[0]  # travel times from the leftmost point
    n_pts = x_tau.size
    energy = np.abs(trajectory.c) ** 2
    if n_pts == 1:
        return energy
    dt = trajectory.dt
    t = trajectory.t
    if t[-1] < kernel.tau[0, -1]:
        raise ValidationError("trajectory is shorter than the travel time across the atom")
    t_half = t[:-1] + 0.5 * dt
    s = kernel.strengths
    pref = 0.5 * kernel.gamma

    def field_sq(i, times, rightward, left=False):
        ks = range(i + 1) if rightward else range(i, n_pts)
        acc = np.zeros(times.size, dtype=complex)
        for k in ks:
            acc += s[k] * kernel.phases[k, i] * trajectory(times - kernel.tau[k, i], left)
        return pref * np.abs(acc) ** 2

    for i in range(n_pts - 1):
        seg = kernel.tau[i, i + 1]
        if seg <= 0:
            continue
        for src, rightward in ((i, True), (i + 1, False)):
            # each Simpson panel takes right limits at its start, left limits at its end
            f_start = field_sq(src, t[:-1], rightward)
            f_end = field_sq(src, t[1:], rightward, left=True)
            f_mid = field_sq(src, t_half, rightward)
            cum = np.concatenate([[0.0], np.cumsum(dt / 6.0 * (f_start + 4 * f_mid + f_end))])
            lag = np.interp(t - seg, t, cum, left=0.0)
            energy = energy + cum - lag
    return energy


def energy_slope(t, energy, t_min: float, t_max: float) -> float:
    """Least-squares slope of ``log E`` against ``log t`` on ``[t_min, t_max]``."""
    t = np.asarray(t)
    sel = (t >= t_min) & (t <= t_max)
    if t[-1] < t_max * (1 - 1e-12) or sel.sum() < 3:
        raise ValidationError("trajectory too short for the requested window")
    e = np.asarray(energy)[sel]
    if np.any(e <= 0):
        raise ValidationError("energy must be positive for a log-log fit")
    return float(np.polyfit(np.log(t[sel]), np.log(e), 1)[0])


@dataclass(frozen=True)
class ProbeSpectrum:
    delta: np.ndarray
    chi2: np.ndarray
    n_peaks: int
    peak_detunings: np.ndarray


def count_peaks(y, prominence: float = PEAK_PROMINENCE) -> np.ndarray:
    """Indices of resolved local maxima.

    Neighbouring maxima are merged (the lower one dropped) until every dip
    between two survivors lies at least ``prominence * max(y)`` below the
    lower of them.  Unlike a per-peak prominence this treats two exactly
    equal peaks over a shallow dip as one, independent of rounding.
    """
    y = np.asarray(y, dtype=float)
    peaks, _ = find_peaks(np.concatenate([[-np.inf], y, [-np.inf]]))
    peaks = list(peaks - 1)
    depth = prominence * y.max()
    merged = True
    while merged and len(peaks) > 1:
        merged = False
        for j in range(len(peaks) - 1):
            a, b = peaks[j], peaks[j + 1]
            if min(y[a], y[b]) - y[a:b + 1].min() < depth:
                peaks.pop(j + 1 if y[a] >= y[b] else j)
                merged = True
                break
    return np.array(peaks, dtype=int)


def probe_response(layout: Layout, gamma: float, omega_a: float, delta, v: float = 1.0) -> ProbeSpectrum:
    """``|chi(delta)|^2`` with ``chi = 1 / (-i delta + sum_d w_d exp(i delta tau_d))``.

    This is the Fourier transform of the amplitude ``c(t)`` evaluated at
    ``w_a + delta``; its peaks are the resonances seen by a weak probe.
    """
    kernel = DelayKernel.from_layout(layout, gamma, omega_a, v)
    delta = np.asarray(delta, dtype=float)
    if delta.ndim != 1 or delta.size < 3:
        raise ValidationError("detuning grid needs at least three samples")
    chi2 = 1.0 / np.abs(kernel.transfer_denominator(delta)) ** 2
    peaks = count_peaks(chi2)
    return ProbeSpectrum(delta, chi2, int(peaks.size), delta[peaks])


def spectrum_from_trajectory(trajectory: AmplitudeTrajectory, delta) -> np.ndarray:
    """``|int_0^T c(t) exp(i delta t) dt|^2`` by trapezoidal quadrature."""
    delta = np.asarray(delta, dtype=float)
    t, c = trajectory.t, trajectory.c
    w = np.full(t.size, trajectory.dt)
    w[0] = w[-1] = 0.5 * trajectory.dt
    return np.abs(np.exp(1j * np.multiply.outer(delta, t)) @ (w * c)) ** 2


def two_point_layout(tau: float, v: float = 1.0) -> Layout:
    return equidistant_layout(2, tau * v)


def default_probe_grid(bare_rate: float, tau: float, n: int = 4001) -> np.ndarray:
    """Detuning grid that covers the central resonance structure.

    Spans the larger of a few bare rates and the first feedback period.
    """
    half = max(4.0 * bare_rate, 1.5 * math.pi / tau) if tau > 0 else 4.0 * bare_rate
    return np.linspace(-half, half, n)


@dataclass(frozen=True)
class ThresholdResult:
    gamma_tau: np.ndarray  # bare rate times delay
    n_peaks: np.ndarray
    transition: float | None  # refined Gamma*tau where one peak becomes two
    monotone: bool  # no 2 -> 1 -> 2 flapping along the grid


def _peak_count(value, n_points, phase, gamma, n_delta):
    bare = gamma * n_points
    tau = value / bare
    lay = equidistant_layout(n_points, tau)
    # any carrier works; only w_a * tau mod 2 pi enters the dynamics
    omega_a = (phase % (2 * math.pi) + 2 * math.pi) / tau
    grid = default_probe_grid(bare, tau, n_delta)
    return probe_response(lay, gamma, omega_a, grid).n_peaks


def threshold_scan(gamma_tau, n_points: int = 2, phase: float = 0.0, gamma: float = 1.0,
                   n_delta: int = 4001, tol: float = 1e-4) -> ThresholdResult:
    """Probe peak counts of an equidistant atom as the delay grows.

    ``gamma_tau`` is ``Gamma * tau`` with ``Gamma = gamma * N`` the bare
    decay rate (before any feedback arrives) and ``tau`` the neighbour delay.
    ``phase`` is ``w_a * tau`` modulo 2 pi, held fixed across the scan.  The
    first 1 -> 2 change on the grid is refined by bisection to ``tol``.
    """
    gt = np.asarray(gamma_tau, dtype=float)
    if gt.ndim != 1 or gt.size == 0 or np.any(gt <= 0):
        raise ValidationError("Gamma*tau grid must be positive and non-empty")
    if np.any(np.diff(gt) <= 0):
        raise ValidationError("Gamma*tau grid must be strictly increasing")
    counts = np.array([_peak_count(x, n_points, phase, gamma, n_delta) for x in gt])
    split = counts >= 2
    monotone = not np.any(split[:-1] & ~split[1:])
    transition = None
    hits = np.nonzero(split)[0]
    if hits.size and hits[0] > 0:
        lo, hi = gt[hits[0] - 1], gt[hits[0]]
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if _peak_count(mid, n_points, phase, gamma, n_delta) >= 2:
                hi = mid
            else:
                lo = mid
        transition = 0.5 * (lo + hi)
    return ThresholdResult(gt, counts, transition, bool(monotone))


@dataclass(frozen=True)
class BoundStateReport:
    persistent: bool
    frequency: float  # angular frequency of the dominant population oscillation
    floor: float  # min |c|^2 over the last quarter
    amplitude: float  # peak-to-peak |c|^2 over the last quarter
    trajectory: AmplitudeTrajectory


def oscillating_bound_state_scan(
    layout: Layout,
    gamma: float,
    omega_a: float,
    t_end: float | None = None,
    dt: float | None = None,
    v: float = 1.0,
    floor: float = 1e-3,
) -> BoundStateReport:
    """Decide whether the atomic population settles into a persistent oscillation.

    Persistent means: over the last quarter of a run of at least ``100/gamma``
    the population stays above ``floor``, swings by more than ``floor`` in
    both halves of that window, and its spectrum has a dominant non-zero
    frequency.
    """
    if layout.n_points < 3:
        raise ValidationError("an oscillating bound state requires at least three coupling points")
    return _bound_state_check(layout, gamma, omega_a, t_end, dt, v, floor)


def _bound_state_check(layout, gamma, omega_a, t_end, dt, v, floor):
    if not gamma > 0:
        raise ValidationError("gamma must be positive")
    t_end = max(t_end or 0.0, 100.0 / gamma)
    kernel = DelayKernel.from_layout(layout, gamma, omega_a, v)
    if dt is None:
        dt = min(kernel.min_delay / 20, 0.05 / kernel.bare_rate)
        dt = kernel.min_delay / math.ceil(kernel.min_delay / dt)
    traj = dde_evolve(layout, gamma, omega_a, t_end, dt, v)
    pop = traj.population
    n_tail = pop.size // 4
    tail, t_tail = pop[-n_tail:], traj.t[-n_tail:]
    low = float(tail.min())
    # remove slow drift so a decaying background is not mistaken for oscillation
    wiggle = tail - np.polyval(np.polyfit(t_tail, tail, 1), t_tail)
    half = n_tail // 2
    swing = [float(np.ptp(wiggle[:half])), float(np.ptp(wiggle[half:]))]
    spec = np.abs(np.fft.rfft(wiggle * np.hanning(n_tail)))
    freqs = 2 * math.pi * np.fft.rfftfreq(n_tail, traj.dt)
    k = int(np.argmax(spec))
    # at least a few full periods inside the window, and a clear spectral line
    dominant = k >= MIN_CYCLES and spec[k] > 5 * np.median(spec[1:])
    oscillating = min(swing) > floor and min(swing) > 0.8 * max(swing) and dominant
    persistent = bool(low > floor and oscillating)
    return BoundStateReport(persistent, float(freqs[k]) if dominant else 0.0, low, min(swing), traj)


def two_point_bound_state_check(layout: Layout, gamma: float, omega_a: float, t_end: float | None = None,
                                dt: float | None = None, v: float = 1.0, floor: float = 1e-3) -> BoundStateReport:
    """Same test as :func:`oscillating_bound_state_scan` without the N >= 3 guard (controls)."""
    return _bound_state_check(layout, gamma, omega_a, t_end, dt, v, floor)


@dataclass(frozen=True)
class BoundStateCandidate:
    phase: float  # w_a * tau mod 2 pi
    gamma_tau: float  # gamma * tau for the neighbour delay tau
    report: BoundStateReport


def bound_state_search(
    n_points: int,
    phases,
    gamma_taus,
    gamma: float = 1.0,
    t_end: float | None = None,
    floor: float = 1e-3,
) -> list[BoundStateCandidate]:
    """Scan equidistant layouts over phase and delay; return every run, best floor first.

    ``n_points = 2`` is accepted here so the same scan can serve as a control.
    """
    if n_points < 2:
        raise ValidationError("need at least two coupling points")
    out = []
    for gt in np.atleast_1d(gamma_taus):
        tau = float(gt) / gamma
        lay = equidistant_layout(n_points, tau)
        for ph in np.atleast_1d(phases):
            omega_a = (float(ph) % (2 * math.pi) + 2 * math.pi) / tau
            rep = _bound_state_check(lay, gamma, omega_a, t_end, None, 1.0, floor)
            out.append(BoundStateCandidate(float(ph), float(gt), rep))
    out.sort(key=lambda c: (not c.report.persistent, -c.report.floor))
    return out
