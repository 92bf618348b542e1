"""Quasi-static analysis of underactuated, tendon-driven robot fingers.

Units throughout: N, mm, rad, N*mm, N/mm.
"""

from .compliance import (
    AdjointMap,
    ComplianceEllipse,
    ComplianceMatrix,
    center_of_compliance,
    compliance_field,
    full_closing_excursions,
    joint_space_compliance,
    offset_cartesian_compliance,
    principal_direction_alignment,
    transport,
)
from .equilibrium import (
    Circle,
    EquilibriumProblem,
    EquilibriumSolution,
    HalfPlane,
    closing_trajectory,
    solve,
    solve_contact_equilibrium,
    solve_free_closing,
)
from .exceptions import (
    InfeasibleGeometry,
    NonConvergence,
    ParseError,
    RankDeficientData,
    SingularConfiguration,
    TendonFingerError,
    UnstableEquilibrium,
    ValidationError,
)
from .finger import (
    ContactRecord,
    FingerParams,
    FingerState,
    Link,
    Phase,
    elastic_energy,
    forward_kinematics,
    tendon_jacobian,
)
from .grasp import (
    EnergyWell,
    FingerBase,
    FingerSpec,
    ForceExcursionCurve,
    GraspObject,
    GraspScenario,
    GraspStiffness,
    GraspType,
    energy_well,
    equilibrium_offset,
    grasp_stiffness,
    predicted_pinch_slope,
    segment_fits,
    simulate_pinch_grasp,
    simulate_power_grasp,
    static_deflection,
)
from .scenario import bundled_scenario, parse_scenario, serialize_scenario
from .stiffness import (
    CycleDataset,
    StiffnessEstimator,
    StiffnessFit,
    conditioning_report,
    fit_stiffness,
    synthesize_cycles,
)

__version__ = "0.1.0"
