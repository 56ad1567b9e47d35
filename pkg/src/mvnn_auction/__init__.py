"""Monotone-value networks, MILP winner determination, and the
machine-learning-powered combinatorial auction."""

from .core import (
    Allocation,
    Bundle,
    ReportSet,
    TableOracle,
    ValueOracle,
    efficiency_loss,
    is_feasible,
    relative_revenue,
    reported_social_welfare,
    social_welfare,
)
from .construct import ValueTable, exact_mvnn, interpolate
from .milp import big_m, encode_wdp, encode_wdp_relu, export_lp, ia_bounds, prune
from .lpformat import parse_lp, write_lp
from .mlca import (
    AuctionResult,
    MlcaConfig,
    next_queries,
    random_search,
    run_mlca,
    vcg_payments,
    wdp_over_reports,
)
from .mvnn import (
    MvnnOracle,
    MvnnParams,
    TrainConfig,
    brelu,
    forward,
    forward_batch,
    gradient,
    is_projected,
    project,
    train,
)
from .prefgen import (
    DomainSpec,
    domain_oracles,
    optimal_allocation,
    random_monotone_table,
    random_mvnn_oracle,
)
from .solver import (
    SolveConfig,
    Solution,
    brute_force,
    monotone_bnb,
    runtime_compare,
    solve_lp,
    solve_milp,
)

__version__ = "0.1.0"
