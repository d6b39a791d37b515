"""fscsynth: finite-memory controller synthesis for POMDPs through
parametric Markov chains.

The package turns a POMDP plus a memory bound into a parametric Markov
chain whose well-defined parameter values are exactly the k-node stochastic
controllers, then analyzes and searches that chain: exact model checking,
closed forms by state elimination, sound region bounds, absence proofs, and
particle-swarm synthesis.
"""

from .polynomials import (
    MissingParameterError,
    Polynomial,
    RationalFunction,
)
from .models import (
    EXPECTED_REWARD,
    INFINITE,
    Instantiation,
    Mc,
    Mdp,
    ModelError,
    ParameterTable,
    PmcT,
    Pomdp,
    Pmdp,
    REACH_AVOID,
    Specification,
    WellDefinedness,
    apply_instantiation,
    check_well_defined,
    is_infinite,
    parse_spec,
    poly_eval,
)
from .fsc import (
    Fsc,
    FscTopology,
    SimulationResult,
    fsc_from_instantiation,
    induced_mc,
    lift_fsc,
    simulate,
    uniform_fsc,
)
from .transforms import (
    action_restricted_pmc,
    fsc_from_substituted,
    induced_pmc,
    insert_intermediate_states,
    make_binary,
    make_simple,
    map_unfolding_instantiation,
    next_obs_pmc,
    param_count,
    pmc_to_pomdp,
    product_state,
    substituted_pmc,
    unfold,
)
from .analysis import (
    AbsenceResult,
    ExactPmcEvaluator,
    FloatPmcEvaluator,
    MdpResult,
    QualitativeSets,
    Region,
    RegionBounds,
    check_mc,
    expected_reward,
    mdp_optimal,
    prove_absence,
    qualitative_precompute,
    reach_avoid_prob,
    region_bounds,
    solve_exact,
    state_eliminate,
    state_eliminate_reward,
)
from .synthesis import (
    OracleResult,
    PermissiveCandidate,
    SearchConfig,
    SearchResult,
    brute_force_oracle,
    certify,
    find_permissive,
    permissive_from_witnesses,
    pso_search,
)

__version__ = "0.1.0"

__all__ = [
    "AbsenceResult",
    "EXPECTED_REWARD",
    "ExactPmcEvaluator",
    "FloatPmcEvaluator",
    "Fsc",
    "FscTopology",
    "INFINITE",
    "Instantiation",
    "Mc",
    "Mdp",
    "MdpResult",
    "MissingParameterError",
    "ModelError",
    "OracleResult",
    "ParameterTable",
    "PermissiveCandidate",
    "PmcT",
    "Pomdp",
    "Pmdp",
    "Polynomial",
    "QualitativeSets",
    "REACH_AVOID",
    "RationalFunction",
    "Region",
    "RegionBounds",
    "SearchConfig",
    "SearchResult",
    "SimulationResult",
    "Specification",
    "WellDefinedness",
    "action_restricted_pmc",
    "apply_instantiation",
    "brute_force_oracle",
    "certify",
    "check_mc",
    "check_well_defined",
    "expected_reward",
    "find_permissive",
    "fsc_from_instantiation",
    "fsc_from_substituted",
    "induced_mc",
    "induced_pmc",
    "insert_intermediate_states",
    "is_infinite",
    "lift_fsc",
    "make_binary",
    "make_simple",
    "map_unfolding_instantiation",
    "mdp_optimal",
    "next_obs_pmc",
    "param_count",
    "parse_spec",
    "permissive_from_witnesses",
    "pmc_to_pomdp",
    "poly_eval",
    "product_state",
    "prove_absence",
    "pso_search",
    "qualitative_precompute",
    "reach_avoid_prob",
    "region_bounds",
    "simulate",
    "solve_exact",
    "state_eliminate",
    "state_eliminate_reward",
    "substituted_pmc",
    "unfold",
    "uniform_fsc",
    "__version__",
]
