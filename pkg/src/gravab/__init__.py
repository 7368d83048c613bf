"""Gravitational phase shifts in matter-wave interferometers.

Three routes to the phase of a test particle near a source mass (potential
integral, field-energy quadrature, expectation-value-sourced dynamics),
quantum-reference-frame transforms of branch states, and the statistics used
to tell the quantum and semiclassical predictions apart.
"""

from .analysis import (
    BackactionBounds,
    FitResult,
    PhaseDataPoint,
    backaction_bounds,
    reduced_chi_squared,
    weighted_linear_fit,
)
from .core import CONSTANTS, Constants, TimeGrid, integrate_time, load_constants, refine_until_converged
from .errors import (
    AccuracyError,
    ConfigurationError,
    ConsistencyError,
    ConvergenceError,
    GeometryError,
    GravabError,
    NumericError,
    ProximityError,
    RankError,
    ScenarioError,
    SingularityError,
    ValidationError,
)
from .kinematics import (
    InterferometerSpec,
    SemiclassicalEvolution,
    Trajectory,
    beamsplitter_amplitudes,
    mach_zehnder_arms,
    parabolic_source,
    pulse_separation_for,
    rk4,
    semiclassical_evolve,
    semiclassical_evolve_many,
    wavenumber_for_order,
)
from .phase import (
    PhaseMethod,
    PhaseResult,
    PortProbabilities,
    fringe_scan,
    phase_from_field_energy,
    phase_potential_integral,
    phase_semiclassical,
    ports_from_phase,
    schrodinger_newton_energy,
    source_backreaction_phase,
)
from .qrf import (
    Accelerometer,
    BranchState,
    EntanglementReport,
    FrameTransform,
    bmv_port_probabilities,
    bmv_state,
    entanglement_partition,
    equivalence_principle_scenario,
    make_state,
    phase_in_frame,
    qrf_transform,
)
from .sources import (
    Composite,
    Coupling,
    EnergyResult,
    PointMass,
    QuadratureSpec,
    RingArc,
    UniformField,
    coulomb,
    field_at,
    gravity,
    interaction_energy,
    potential_at,
)

__version__ = "0.1.0"
