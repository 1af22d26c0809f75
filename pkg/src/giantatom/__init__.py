"""Giant atoms in waveguide QED.

Frequency-dependent relaxation and Lamb shifts, multi-atom exchange and
decoherence-free interaction, driven multilevel master equations,
non-Markovian delay dynamics, inverse design and a discretised-waveguide
oracle for checking all of the above.
"""
from .core import (
    DEFAULT_WAVEGUIDE,
    AtomSpec,
    ConvergenceError,
    CouplingPoint,
    GiantAtomError,
    Layout,
    PhaseGrid,
    StrengthScaling,
    Topology,
    ValidationError,
    WaveguideModel,
    classify_topology,
    equidistant_layout,
    topology_layouts,
    wavelength,
)
from .delay import (
    AmplitudeTrajectory,
    DelayKernel,
    dde_evolve,
    oscillating_bound_state_scan,
    probe_response,
    threshold_scan,
    total_energy,
)
from .design import DesignProblem, fit_layout, gradient_check
from .lindblad import Drive, LindbladSystem, build_giant_atom_system, evolve, steady_state
from .multiatom import (
    MultiAtomCoefficients,
    decoherence_free_points,
    many_atom_coefficients,
    two_atom_coefficients,
)
from .spectral import (
    lamb_from_kramers_kronig,
    lamb_shift,
    lamb_shift_integral,
    markovian_validity,
    relaxation_rate,
    spectral_response,
)

__version__ = "0.1.0"
