"""Interdependent power-grid / cellular / street-network simulator.

Builds seeded scenarios coupling a street grid, a hexagonal cell layout and
a bipartite supply grid, quantifies how station power shortfalls deviate
street flows, and solves the budgeted backup-power allocation game against
stealth-constrained attackers.
"""

from .coverage import (
    BaseStation,
    CoverageMap,
    Hexagon,
    build_coverage,
    clip_segment_to_hex,
    coverage_fraction,
    hex_tiling,
)
from .errors import (
    DisconnectedError,
    FormatError,
    IcisimError,
    InfeasibleError,
    NoLineError,
    OverlapError,
    RankError,
    SingularError,
    TopologyError,
)
from .game import (
    AttackStrategy,
    DefenseStrategy,
    GameInstance,
    GameOutcome,
    StealthLevel,
    attacker_best_response,
    attacker_payoff,
    defender_caps,
    defender_payoff,
    detection_prob,
    equal_allocation,
    evaluate_profile,
    solve_defender_lp,
    stackelberg_equilibrium,
)
from .impact import (
    ImpactModel,
    bs_impact,
    build_impact_model,
    export_impact_csv,
    its_deviation,
    street_impact_vector,
)
from .power import Generator, PowerAssignment, build_assignment, line_capacity
from .scenario import Scenario, ScenarioConfig, generate, load, loads, save, scenarios_equal
from .traffic import (
    FlowNetwork,
    FlowSolution,
    Intersection,
    Street,
    build_flow_matrix,
    make_street,
    network_from_matrix,
    propagate_deviation,
    solve_flows,
)

__version__ = "0.1.0"
