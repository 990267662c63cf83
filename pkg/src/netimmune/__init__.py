"""Cost-vs-benefit node immunization: exact epsilon-constraint QP sweeps,
NetShield baselines and multi-objective evolutionary search on eigen-drop."""

__version__ = "0.1.0"

from .graph import (  # noqa: E402
    ConvergenceError,
    EigenPair,
    Graph,
    GraphError,
    degree_costs,
    eigen_drop,
    generate_barabasi_albert,
    generate_barbell,
    generate_erdos_renyi,
    load_bundled,
    load_edge_list,
    principal_eigenpair,
    remove_nodes,
)
from .pareto import Front, ObjectivePoint, first_attainment_curve, hypervolume_2d, nondominated_filter  # noqa: E402
from .shield import netshield_greedy, netshield_plus, shield_value  # noqa: E402
from .exact_qp import build_qp, epsilon_sweep, epsilon_sweep_batched, solve_budget_qp  # noqa: E402
from .moea import GaConfig, make_hybrid_init, nsga2_run, sms_emoa_run  # noqa: E402
