"""Transmit power minimization under per-user SINR/rate floors for the
multi-user MIMO downlink: two iterative solvers built on MMSE receivers
and uplink-downlink duality, a multi-stream SIC extension, and a
first-order optimality verification suite."""

from .core import (
    DegenerateUserError,
    downlink_sinr,
    mmse_receiver,
    phase_normalize,
    total_power,
    uplink_mmse_direction,
    uplink_sinr,
)
from .kkt import KktReport, analytic_k1, duality_certificate, kkt_residual
from .mmse_dual import (
    MmseDualOptions,
    PowerSystemError,
    SolveResult,
    SolveStatus,
    downlink_power_solve,
    lambda_fixed_point,
)
from .multistream import (
    StreamLayout,
    StreamProblem,
    build_counterexample,
    mmse_sic_receivers,
    prop3_check,
    sic_sinr,
    solve_multistream,
    stream_targets,
    user_rate,
)
from .scenario import (
    QosTargets,
    Scenario,
    ScenarioError,
    SystemConfig,
    generate_channel,
    load_scenario,
    random_scenario,
    save_scenario,
)
from .trace import Trace, TraceRow
from .udd import InfeasibleInitializationError, uplink_power_solve

from . import mmse_dual, udd  # noqa: E402  (solver modules as namespaces)

__version__ = "0.1.0"
