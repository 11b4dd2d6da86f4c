"""Asynchronous distributed dual coordinate ascent for L2-regularized
linear models, with a bounded-barrier/bounded-staleness aggregation
protocol, lock-free multicore local solvers, and a duality-gap
measurement harness."""

from .aggregator import (
    MasterState,
    MergeRecord,
    UpdateMsg,
    merge,
    new_master_state,
    offer,
    ready,
    receive_staleness_log,
    transmissions_per_merge,
)
from .data import (
    Dataset,
    ParseError,
    Partition,
    PartitionError,
    SparsePoint,
    dumps_libsvm,
    from_dense,
    load_libsvm,
    parse_libsvm,
    partition,
    write_libsvm,
)
from .errors import ChannelClosed, ConfigError, DivergenceError, ProtocolError
from .local_solver import (
    LocalRoundResult,
    SharedPrimal,
    WorkerState,
    build_worker_state,
    local_round,
    measure_theta,
    solve_subproblem,
    subproblem_objective,
)
from .losses import (
    FEASIBILITY_SLACK,
    LossKind,
    StepContext,
    StepError,
    conjugate,
    conjugate_array,
    coordinate_step,
    loss_kind,
    primal_loss,
    primal_loss_array,
    step_function,
)
from .metrics import (
    TraceRecord,
    contributors_mask,
    dual_from_parts,
    dual_objective,
    duality_gap,
    mask_to_contributors,
    primal_objective,
    read_trace,
    write_trace,
)
from .runtime import (
    Config,
    DelaySchedule,
    RunReport,
    inject_delays,
    load_delay_schedule,
    parse_delay_schedule,
    run,
)

__version__ = "0.1.0"
