"""Inverse design: choose coupling strengths (and positions) for a target rate profile.

The model rate of a two-level giant atom is ``gamma |A(w)|^2`` with
``A(w) = sum_k s_k exp(i w x_k / v)``.  Its derivatives are

    dGamma/ds_k = 2 gamma Re(conj(A) e_k)
    dGamma/dx_k = 2 gamma Re(conj(A) i (w/v) s_k e_k),   e_k = exp(i w x_k / v)

Fitting uses a Levenberg-Marquardt loop that only accepts steps lowering the
cost, so the recorded cost history is monotone.  In positions mode the first
point is pinned at its initial coordinate, leaving ``2N - 1`` free knobs
(a global translation does not change the rate).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import Layout, ValidationError


class DesignMode(str, enum.Enum):
    STRENGTHS = "strengths"
    POSITIONS = "strengths-and-positions"


@dataclass(frozen=True)
class DesignProblem:
    omega: np.ndarray
    target: np.ndarray
    n_points: int
    mode: DesignMode = DesignMode.STRENGTHS
    regularization: float = 0.0
    positions: np.ndarray | None = None  # fixed (or initial) positions; default equidistant, unit spacing
    gamma: float = 1.0
    v: float = 1.0

    def __post_init__(self):
        omega = np.atleast_1d(np.asarray(self.omega, dtype=float))
        target = np.atleast_1d(np.asarray(self.target, dtype=float))
        mode = DesignMode(self.mode)
        if omega.shape != target.shape or omega.ndim != 1 or omega.size == 0:
            raise ValidationError("need matching, non-empty omega and target arrays")
        if np.any(target < 0):
            raise ValidationError("target relaxation rates must be non-negative")
        if np.any(omega <= 0):
            raise ValidationError("target frequencies must be positive")
        if self.n_points < 1:
            raise ValidationError("need at least one coupling point")
        if mode is DesignMode.POSITIONS and omega.size < 2 * self.n_points - 1:
            raise ValidationError(
                f"positions mode needs at least {2 * self.n_points - 1} samples, got {omega.size}"
            )
        if self.regularization < 0 or self.gamma <= 0 or self.v <= 0:
            raise ValidationError("regularization must be >= 0; gamma and v positive")
        pos = self.positions
        pos = np.arange(self.n_points, dtype=float) if pos is None else np.asarray(pos, dtype=float)
        if pos.shape != (self.n_points,):
            raise ValidationError("need one position per coupling point")
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "mode", mode)
        object.__setattr__(self, "positions", pos)

    @property
    def n_params(self) -> int:
        n = self.n_points
        return n if self.mode is DesignMode.STRENGTHS else 2 * n - 1

    def pack(self, strengths, positions=None) -> np.ndarray:
        s = np.asarray(strengths, dtype=float)
        if self.mode is DesignMode.STRENGTHS:
            return s.copy()
        x = self.positions if positions is None else np.asarray(positions, dtype=float)
        return np.concatenate([s, x[1:]])

    def unpack(self, p) -> tuple[np.ndarray, np.ndarray]:
        n = self.n_points
        s = np.asarray(p[:n], dtype=float)
        if self.mode is DesignMode.STRENGTHS:
            return s, self.positions
        return s, np.concatenate([self.positions[:1], p[n:]])

    def model(self, p) -> np.ndarray:
        s, x = self.unpack(p)
        return self.gamma * np.abs(np.exp(1j * np.outer(self.omega, x) / self.v) @ s) ** 2

    def residuals(self, p) -> np.ndarray:
        r = self.model(p) - self.target
        if self.regularization:
            r = np.concatenate([r, math.sqrt(self.regularization) * np.asarray(p[: self.n_points])])
        return r

    def jacobian(self, p) -> np.ndarray:
        s, x = self.unpack(p)
        n = self.n_points
        e = np.exp(1j * np.outer(self.omega, x) / self.v)  # (samples, N)
        A = e @ s
        J_s = 2.0 * self.gamma * np.real(np.conj(A)[:, None] * e)
        blocks = [J_s]
        if self.mode is DesignMode.POSITIONS:
            J_x = 2.0 * self.gamma * np.real(np.conj(A)[:, None] * 1j * (self.omega[:, None] / self.v) * s * e)
            blocks.append(J_x[:, 1:])
        J = np.hstack(blocks)
        if self.regularization:
            reg = np.zeros((n, J.shape[1]))
            reg[:, :n] = math.sqrt(self.regularization) * np.eye(n)
            J = np.vstack([J, reg])
        return J

    def cost(self, p) -> float:
        r = self.residuals(p)
        return float(r @ r)

    def gradient(self, p) -> np.ndarray:
        return 2.0 * self.jacobian(p).T @ self.residuals(p)

    def layout(self, p, label: str = "a") -> Layout:
        s, x = self.unpack(p)
        order = np.argsort(x, kind="stable")
        return Layout.from_positions(x[order], s[order], label)

    def params_from_layout(self, layout: Layout) -> np.ndarray:
        if layout.n_points != self.n_points:
            raise ValidationError("layout has the wrong number of coupling points")
        if self.mode is DesignMode.STRENGTHS:
            if not np.allclose(layout.positions, np.sort(self.positions)):
                raise ValidationError("layout positions differ from the fixed design positions")
            return layout.strengths(0)
        x = layout.positions - layout.positions[0] + self.positions[0]  # pin the first point
        return np.concatenate([layout.strengths(0), x[1:]])


@dataclass(frozen=True)
class FitResult:
    layout: Layout
    params: np.ndarray
    residual: float
    converged: bool
    start: int
    iterations: int
    history: tuple[float, ...] = field(repr=False)
    start_residuals: tuple[float, ...] = field(default=(), repr=False)


def _levenberg_marquardt(problem: DesignProblem, p0, max_iter: int, ftol: float, gtol: float):
    p = np.asarray(p0, dtype=float).copy()
    r = problem.residuals(p)
    cost = float(r @ r)
    history = [cost]
    mu = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = problem.jacobian(p)
        g = J.T @ r
        if cost < 1e-30 or np.max(np.abs(g)) <= gtol * max(1.0, cost):
            converged = True
            break
        JtJ = J.T @ J
        scale = np.diag(JtJ).copy()
        scale[scale <= 0] = 1.0
        accepted = False
        while mu < 1e16:
            try:
                step = np.linalg.solve(JtJ + mu * np.diag(scale), -g)
            except np.linalg.LinAlgError:
                mu *= 10.0
                continue
            trial = p + step
            r_trial = problem.residuals(trial)
            c_trial = float(r_trial @ r_trial)
            if c_trial < cost:
                accepted = True
                break
            mu *= 10.0
        if not accepted:
            converged = True  # no descent direction left at machine precision
            break
        improvement = cost - c_trial
        p, r, cost = trial, r_trial, c_trial
        history.append(cost)
        mu = max(mu / 10.0, 1e-12)
        if improvement <= ftol * max(cost, 1e-300) and cost < 1e-20:
            converged = True
            break
    return p, cost, converged, it, history


def _initial_guesses(problem: DesignProblem, n_starts: int, seed: int):
    rng = np.random.default_rng(seed)
    n = problem.n_points
    scale = math.sqrt(max(float(problem.target.max()), 1e-12) / problem.gamma) / n
    starts = []
    for i in range(n_starts):
        s = scale * (1.0 + rng.standard_normal(n)) if i else np.full(n, scale)
        if problem.mode is DesignMode.STRENGTHS:
            starts.append(s)
        else:
            spacing = np.median(np.diff(problem.positions)) if n > 1 else 1.0
            x = problem.positions + (0.1 * spacing * rng.standard_normal(n) if i else 0.0)
            x[0] = problem.positions[0]
            starts.append(np.concatenate([s, x[1:]]))
    return starts


def fit_layout(
    problem: DesignProblem,
    n_starts: int = 16,
    seed: int = 0,
    max_iter: int = 500,
    ftol: float = 1e-15,
    gtol: float = 1e-14,
    initial=None,
) -> FitResult:
    """Least-squares fit of a layout to the target rates, best of several starts.

    Ties in the final residual go to the lowest start index.  If no start
    converges within ``max_iter`` the best point found is still returned,
    with ``converged = False``.
    """
    if n_starts < 1:
        raise ValidationError("need at least one start")
    starts = [np.asarray(initial, dtype=float)] if initial is not None else []
    starts += _initial_guesses(problem, n_starts - len(starts), seed)
    best = None
    finals = []
    for i, p0 in enumerate(starts):
        p, cost, conv, it, hist = _levenberg_marquardt(problem, p0, max_iter, ftol, gtol)
        finals.append(cost)
        if best is None or cost < best[1]:
            best = (p, cost, conv, it, hist, i)
    p, cost, conv, it, hist, i = best
    return FitResult(problem.layout(p), p, cost, bool(conv), i, it, tuple(hist), tuple(finals))


def gradient_check(problem: DesignProblem, layout: Layout | np.ndarray, rel_step: float = 1e-6) -> float:
    """Largest deviation between analytic and central-difference gradients.

    The error is reported relative to the largest gradient component; when
    the analytic gradient vanishes the absolute deviation is returned.
    """
    p = problem.params_from_layout(layout) if isinstance(layout, Layout) else np.asarray(layout, dtype=float)
    analytic = problem.gradient(p)
    numeric = np.empty_like(analytic)
    for k in range(p.size):
        h = rel_step * max(abs(p[k]), 1.0)
        up, dn = p.copy(), p.copy()
        up[k] += h
        dn[k] -= h
        numeric[k] = (problem.cost(up) - problem.cost(dn)) / (2.0 * h)
    err = float(np.max(np.abs(analytic - numeric)))
    norm = float(np.max(np.abs(analytic)))
    return err / norm if norm > 0 else err
