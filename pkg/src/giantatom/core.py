"""Domain types for giant atoms, waveguides and coupling-point layouts.

Conventions used throughout the package:

* ``hbar = 1``; frequencies are angular frequencies.
* The waveguide is bidirectional with velocity ``v`` and a constant density
  of states ``J0``.  A coupling point of strength ``s`` on its own relaxes at
  ``4*pi*J0*s**2``.  The default ``J0 = 1/(4*pi)`` therefore makes a unit
  strength point decay at rate 1, which is the ``gamma`` used in the
  closed-form expressions.
* Strengths are per transition: ``CouplingPoint.strengths[m]`` couples the
  transition ``m+1 -> m``.  Missing entries are generated from the first one
  with a :class:`StrengthScaling` rule.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GiantAtomError(Exception):
    """Base class for package errors."""


class ValidationError(GiantAtomError, ValueError):
    """Invalid input (bad layout, inconsistent units, impossible request)."""


class ConvergenceError(GiantAtomError, RuntimeError):
    """A numerical procedure failed to reach its tolerance."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StrengthScaling(str, enum.Enum):
    """How per-transition strengths are generated from the lowest one."""

    BOSONIC = "bosonic"  # g_m = sqrt(m+1) g_0, transmon-like
    FLAT = "flat"  # g_m = g_0


@dataclass(frozen=True)
class WaveguideModel:
    v: float = 1.0
    J0: float = 1.0 / (4.0 * math.pi)
    bidirectional: bool = True

    def __post_init__(self):
        if not (self.v > 0 and math.isfinite(self.v)):
            raise ValidationError(f"waveguide velocity must be positive, got {self.v}")
        if not (self.J0 > 0 and math.isfinite(self.J0)):
            raise ValidationError(f"density of states must be positive, got {self.J0}")
        if not self.bidirectional:
            raise ValidationError("only bidirectional waveguides are supported")

    @classmethod
    def for_rate(cls, gamma: float, v: float = 1.0) -> "WaveguideModel":
        """Waveguide in which a unit-strength point relaxes at ``gamma``."""
        if gamma <= 0:
            raise ValidationError("gamma must be positive")
        return cls(v=v, J0=gamma / (4.0 * math.pi))

    @property
    def unit_rate(self) -> float:
        """Relaxation rate of a single point with unit strength."""
        return 4.0 * math.pi * self.J0


DEFAULT_WAVEGUIDE = WaveguideModel()


@dataclass(frozen=True)
class CouplingPoint:
    x: float
    strengths: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        s = tuple(float(g) for g in np.atleast_1d(self.strengths))
        if not s:
            raise ValidationError("a coupling point needs at least one strength")
        if not all(math.isfinite(g) for g in s) or not math.isfinite(self.x):
            raise ValidationError("coupling point position and strengths must be finite")
        object.__setattr__(self, "strengths", s)
        object.__setattr__(self, "x", float(self.x))

    def strength(self, m: int, scaling: StrengthScaling = StrengthScaling.BOSONIC) -> float:
        if m < 0:
            raise ValidationError("transition index must be non-negative")
        if m < len(self.strengths):
            return self.strengths[m]
        base = self.strengths[0]
        if StrengthScaling(scaling) is StrengthScaling.BOSONIC:
            return math.sqrt(m + 1) * base
        return base


@dataclass(frozen=True)
class Layout:
    """Ordered coupling points of one atom."""

    points: tuple[CouplingPoint, ...]
    label: str = "a"

    def __post_init__(self):
        pts = tuple(self.points)
        if not pts:
            raise ValidationError("a layout needs at least one coupling point")
        xs = [p.x for p in pts]
        if any(b < a for a, b in zip(xs, xs[1:])):
            raise ValidationError("coupling point positions must be sorted ascending")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_positions(
        cls,
        positions: Iterable[float],
        strengths: Iterable[float] | float = 1.0,
        label: str = "a",
    ) -> "Layout":
        xs = [float(x) for x in positions]
        if np.isscalar(strengths):
            ss = [float(strengths)] * len(xs)
        else:
            ss = [float(s) for s in strengths]
        if len(ss) != len(xs):
            raise ValidationError("need one strength per position")
        order = np.argsort(xs, kind="stable")
        return cls(tuple(CouplingPoint(xs[i], (ss[i],)) for i in order), label)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.x for p in self.points])

    def strengths(self, m: int = 0, scaling: StrengthScaling = StrengthScaling.BOSONIC) -> np.ndarray:
        return np.array([p.strength(m, scaling) for p in self.points])

    def translated(self, shift: float) -> "Layout":
        return Layout(tuple(CouplingPoint(p.x + shift, p.strengths) for p in self.points), self.label)

    def relabeled(self, label: str) -> "Layout":
        return Layout(self.points, label)

    @property
    def extent(self) -> float:
        """Distance between the outermost coupling points."""
        xs = self.positions
        return float(xs[-1] - xs[0])


@dataclass(frozen=True)
class AtomSpec:
    """Multilevel atom with level energies ``levels[m]`` (m = 0 .. M-1)."""

    levels: tuple[float, ...]

    def __post_init__(self):
        lv = tuple(float(w) for w in self.levels)
        if len(lv) < 2:
            raise ValidationError("an atom needs at least two levels")
        if any(b <= a for a, b in zip(lv, lv[1:])):
            raise ValidationError("level energies must be strictly increasing")
        object.__setattr__(self, "levels", lv)

    @classmethod
    def two_level(cls, omega: float) -> "AtomSpec":
        return cls((0.0, float(omega)))

    @classmethod
    def anharmonic(cls, omega: float, anharmonicity: float, n_levels: int = 3) -> "AtomSpec":
        """Ladder with ``omega_{m+1,m} = omega + m*anharmonicity``."""
        lv = [0.0]
        for m in range(n_levels - 1):
            lv.append(lv[-1] + omega + m * anharmonicity)
        return cls(tuple(lv))

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    def transition(self, a: int, b: int) -> float:
        """``omega_{a,b} = omega_a - omega_b``."""
        return self.levels[a] - self.levels[b]

    def transition_frequency(self, m: int) -> float:
        """Frequency of the ``m+1 -> m`` transition."""
        if not 0 <= m < self.n_levels - 1:
            raise ValidationError(f"no transition {m + 1}->{m} in a {self.n_levels}-level atom")
        return self.transition(m + 1, m)

    def lowering(self, m: int) -> np.ndarray:
        """Matrix unit ``|m><m+1|``."""
        op = np.zeros((self.n_levels, self.n_levels))
        op[m, m + 1] = 1.0
        return op

    def raising(self, m: int) -> np.ndarray:
        return self.lowering(m).T.copy()


class Topology(str, enum.Enum):
    SMALL = "small"
    SEPARATE = "separate"
    BRAIDED = "braided"
    NESTED = "nested"
    UNCLASSIFIED = "unclassified"

    @property
    def ordering(self) -> str:
        return _ORDERINGS[self]


_ORDERINGS = {
    Topology.SMALL: "ab",
    Topology.SEPARATE: "aabb",
    Topology.BRAIDED: "abab",
    Topology.NESTED: "abba",
    Topology.UNCLASSIFIED: "",
}


@dataclass(frozen=True)
class PhaseGrid:
    """Strictly increasing phase samples ``phi = omega * spacing / v``."""

    phi: np.ndarray = field(repr=False)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 1 or phi.size == 0:
            raise ValidationError("phase grid must be a non-empty 1D array")
        if phi.size > 1 and np.any(np.diff(phi) <= 0):
            raise ValidationError("phase grid must be strictly increasing")
        object.__setattr__(self, "phi", phi)

    @classmethod
    def from_frequencies(cls, omega, spacing: float, v: float = 1.0) -> "PhaseGrid":
        return cls(np.asarray(omega, dtype=float) * spacing / v)

    def frequencies(self, spacing: float, v: float = 1.0) -> np.ndarray:
        if spacing <= 0:
            raise ValidationError("spacing must be positive to convert phases to frequencies")
        return self.phi * v / spacing

    def __len__(self):
        return self.phi.size


def wavelength(atom: AtomSpec, waveguide: WaveguideModel = DEFAULT_WAVEGUIDE) -> float:
    """Wavelength ``2*pi*v/omega_{1,0}`` of the lowest transition."""
    return 2.0 * math.pi * waveguide.v / atom.transition_frequency(0)


def equidistant_layout(
    n: int, spacing: float, strength: float = 1.0, label: str = "a", start: float = 0.0
) -> Layout:
    if n < 1:
        raise ValidationError("need at least one coupling point")
    if spacing < 0:
        raise ValidationError("spacing must be non-negative")
    return Layout.from_positions(start + spacing * np.arange(n), strength, label)


def classify_topology(a: Layout, b: Layout) -> Topology:
    """Classify two atoms by the ordering of their coupling points."""
    xa, xb = a.positions, b.positions
    if np.intersect1d(xa, xb).size:
        raise ValidationError("atoms share a coupling-point coordinate; ordering is ambiguous")
    if a.n_points == 1 and b.n_points == 1:
        return Topology.SMALL
    if a.n_points != 2 or b.n_points != 2:
        return Topology.UNCLASSIFIED
    tagged = sorted([(x, "a") for x in xa] + [(x, "b") for x in xb])
    order = "".join(t for _, t in tagged)
    if order[0] == "b":  # label swap symmetry
        order = order.translate(str.maketrans("ab", "ba"))
    return {
        "aabb": Topology.SEPARATE,
        "abab": Topology.BRAIDED,
        "abba": Topology.NESTED,
    }[order]


def topology_layouts(topology: Topology | str, spacing: float = 1.0, strength: float = 1.0) -> tuple[Layout, Layout]:
    """Two-atom layouts with equal neighbour spacing for each ordering."""
    topology = Topology(topology)
    if topology is Topology.UNCLASSIFIED:
        raise ValidationError("no canonical layout for an unclassified topology")
    order = topology.ordering
    xa = [i * spacing for i, t in enumerate(order) if t == "a"]
    xb = [i * spacing for i, t in enumerate(order) if t == "b"]
    return (
        Layout.from_positions(xa, strength, "a"),
        Layout.from_positions(xb, strength, "b"),
    )


def reference_spacing(*layouts: Layout) -> float:
    """Smallest non-zero gap between neighbouring coupling points of all atoms.

    This is the length that turns a frequency into the phase ``phi`` used by
    the equal-spacing closed forms.
    """
    xs = np.unique(np.concatenate([lay.positions for lay in layouts]))
    gaps = np.diff(xs)
    gaps = gaps[gaps > 0]
    if gaps.size == 0:
        raise ValidationError("all coupling points coincide; no reference spacing")
    return float(gaps.min())


def as_layouts(layouts: Layout | Sequence[Layout]) -> list[Layout]:
    if isinstance(layouts, Layout):
        return [layouts]
    return list(layouts)
