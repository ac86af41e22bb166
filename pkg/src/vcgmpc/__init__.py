"""MPC-based load frequency control with a VCG-style online tax mechanism."""

from .bounds import (
    AdmissibilityEnvelope,
    EfficiencyCertificate,
    certificate_table,
    certify,
    certify_sandwich,
    compute_alpha,
    compute_eps,
    compute_gamma,
    compute_rho,
    validate_type_bounds,
    validate_type_rate,
)
from .lq_solver import (
    RiccatiLadder,
    brute_force_open_loop,
    dare_fixed_point,
    evaluate_agent_costs,
    riccati_finite,
)
from .mechanism import (
    CounterfactualRun,
    TaxLedger,
    VCGMechanism,
    compute_taxes,
    incentive_gap,
    marginal_k,
    misreport_search,
    net_cost,
    run_counterfactual,
)
from .mpc import (
    LQRController,
    RecedingHorizonController,
    openloop_step,
    run_lqr,
    run_mpc,
)
from .power_model import (
    AreaParams,
    ContinuousPlant,
    DiscretePlant,
    NetworkModel,
    TieLine,
    assemble_network,
    build_area_block,
    discretize,
)
from .profiles import CostWeights, TrajectoryRecord, TypeProfile, TypeVector, stage_cost
from .scenario import Scenario, load_scenario, parse_scenario, serialize_scenario

__version__ = "0.1.0"
