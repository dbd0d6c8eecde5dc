"""Density-matrix reconstruction from rank-1 projectors onto one or two basis states."""
__version__ = "0.1.0"

from .errors import TomographyError
from .measurement import (
    PhotonCountDistribution,
    ShotConfig,
    bernoulli_loss,
    exact_expectations,
    inverse_bernoulli,
    sample_expectation,
    sample_expectations,
)
from .optics import (
    BeamSplitterParams,
    JointPhotonDistribution,
    OpticsConfig,
    ProbeSpec,
    bs_amplitude,
    extract_M,
    joint_distribution,
    optics_tomography,
    probe_shift_equivalence_check,
    reconstruct_band,
)
from .representations import (
    AnglePair,
    Diagonal,
    ExpectationMap,
    ExpectationRecord,
    MeasurementPlan,
    ReconstructionReport,
    TwoState,
    minimal_plan,
    operator_basis_plan,
    reconstruct_minimal,
    reconstruct_operator_basis,
    redundant_plan,
)
from .state import (
    DensityMatrix,
    Projector,
    PureState,
    SuperpositionSpec,
    expectation,
    fidelity,
    make_superposition,
    nearest_physical,
    random_density,
    trace_distance,
)
