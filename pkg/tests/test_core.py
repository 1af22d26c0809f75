import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from giantatom.core import (
    AtomSpec,
    CouplingPoint,
    Layout,
    PhaseGrid,
    StrengthScaling,
    Topology,
    ValidationError,
    WaveguideModel,
    classify_topology,
    equidistant_layout,
    reference_spacing,
    topology_layouts,
    wavelength,
)
from giantatom.spectral import relaxation_rate


def test_wavelength_definition():
    assert wavelength(AtomSpec.two_level(2 * math.pi)) == pytest.approx(1.0)
    saw = wavelength(AtomSpec.two_level(2 * math.pi * 5e9), WaveguideModel(v=3000.0))
    assert saw == pytest.approx(6e-7)
    atom = AtomSpec.two_level(3.0)
    assert wavelength(atom, WaveguideModel(v=2.0)) == pytest.approx(2 * wavelength(atom))


def test_waveguide_rejects_bad_values():
    with pytest.raises(ValidationError):
        WaveguideModel(v=0.0)
    with pytest.raises(ValidationError):
        WaveguideModel(J0=-1.0)
    with pytest.raises(ValidationError):
        WaveguideModel(bidirectional=False)
    assert WaveguideModel.for_rate(2.5).unit_rate == pytest.approx(2.5)


def test_coupling_point_scaling():
    p = CouplingPoint(0.0, (0.5,))
    assert p.strength(0) == 0.5
    assert p.strength(2) == pytest.approx(0.5 * math.sqrt(3))
    assert p.strength(2, StrengthScaling.FLAT) == 0.5
    assert CouplingPoint(0.0, (0.5, 0.1)).strength(1) == 0.1
    with pytest.raises(ValidationError):
        CouplingPoint(math.nan)
    with pytest.raises(ValidationError):
        CouplingPoint(0.0, (math.inf,))


def test_layout_sorting_and_validation():
    lay = Layout.from_positions([2.0, 0.0, 1.0], [3.0, 1.0, 2.0])
    assert lay.positions.tolist() == [0.0, 1.0, 2.0]
    assert lay.strengths().tolist() == [1.0, 2.0, 3.0]
    assert lay.extent == 2.0
    with pytest.raises(ValidationError):
        Layout((CouplingPoint(1.0), CouplingPoint(0.0)))
    with pytest.raises(ValidationError):
        Layout(())
    with pytest.raises(ValidationError):
        Layout.from_positions([0.0, 1.0], [1.0])


def test_atom_spec():
    atom = AtomSpec.anharmonic(5.0, -0.5, 4)
    assert atom.levels == (0.0, 5.0, 9.5, 13.5)
    assert atom.transition_frequency(1) == pytest.approx(4.5)
    assert atom.transition(2, 0) == pytest.approx(9.5)
    assert atom.lowering(0)[0, 1] == 1.0
    assert np.array_equal(atom.raising(1), atom.lowering(1).T)
    with pytest.raises(ValidationError):
        AtomSpec((0.0,))
    with pytest.raises(ValidationError):
        AtomSpec((0.0, 2.0, 1.0))
    with pytest.raises(ValidationError):
        atom.transition_frequency(3)


def test_equidistant_layout():
    assert equidistant_layout(1, 1.0).positions.tolist() == [0.0]
    assert equidistant_layout(3, 1.0).positions.tolist() == [0.0, 1.0, 2.0]
    with pytest.raises(ValidationError):
        equidistant_layout(0, 1.0)
    with pytest.raises(ValidationError):
        equidistant_layout(2, -1.0)


def test_coincident_points_add_constructively():
    lay = equidistant_layout(2, 0.0)
    assert relaxation_rate(lay, AtomSpec.two_level(1.3)) == pytest.approx(4.0)


@pytest.mark.parametrize(
    "xa, xb, expected",
    [
        ([0, 1], [2, 3], Topology.SEPARATE),
        ([0, 2], [1, 3], Topology.BRAIDED),
        ([0, 3], [1, 2], Topology.NESTED),
        ([0], [1], Topology.SMALL),
        ([0, 1, 2], [3, 4], Topology.UNCLASSIFIED),
    ],
)
def test_classify_topology(xa, xb, expected):
    assert classify_topology(Layout.from_positions(xa), Layout.from_positions(xb, label="b")) is expected


def test_classify_rejects_shared_coordinate():
    with pytest.raises(ValidationError):
        classify_topology(Layout.from_positions([0, 1]), Layout.from_positions([1, 2]))


@pytest.mark.parametrize("top", ["small", "separate", "braided", "nested"])
def test_topology_layouts_round_trip(top):
    a, b = topology_layouts(top)
    assert classify_topology(a, b) is Topology(top)
    assert reference_spacing(a, b) == 1.0


@settings(max_examples=200, deadline=None)
@given(
    xs=st.lists(st.integers(-1000, 1000), min_size=4, max_size=4, unique=True),
    shift=st.floats(-1e3, 1e3, allow_nan=False),
    scale=st.floats(0.01, 100.0),
)
def test_classification_invariant_under_translation_scaling_and_swap(xs, shift, scale):
    a = Layout.from_positions(xs[:2])
    b = Layout.from_positions(xs[2:], label="b")
    top = classify_topology(a, b)
    assert top in (Topology.SEPARATE, Topology.BRAIDED, Topology.NESTED)
    assert classify_topology(b, a) is top
    moved_a = Layout.from_positions(np.array(xs[:2]) * scale + shift)
    moved_b = Layout.from_positions(np.array(xs[2:]) * scale + shift, label="b")
    assert classify_topology(moved_a, moved_b) is top


@settings(max_examples=100, deadline=None)
@given(n=st.integers(1, 50), d=st.floats(0.0, 10.0))
def test_equidistant_layout_sorted_with_full_extent(n, d):
    lay = equidistant_layout(n, d)
    assert np.all(np.diff(lay.positions) >= 0)
    assert lay.extent == pytest.approx((n - 1) * d)
    assert np.all(lay.strengths() == 1.0)


def test_phase_grid():
    g = PhaseGrid.from_frequencies([1.0, 2.0], spacing=0.5, v=2.0)
    assert g.phi.tolist() == [0.25, 0.5]
    assert np.allclose(g.frequencies(0.5, 2.0), [1.0, 2.0])
    with pytest.raises(ValidationError):
        PhaseGrid(np.array([1.0, 1.0]))
    with pytest.raises(ValidationError):
        g.frequencies(0.0)
