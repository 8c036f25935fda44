"""Uplink-downlink power iteration.

Each iteration updates normalized MMSE(-SIC) receivers, solves the
virtual-uplink SINR-equality system for the uplink powers q, reuses the
powered receivers to form uplink-MMSE transmit directions, then solves
the downlink equality system for the transmit powers p. Needs a feasible
start: with an infeasible one the uplink system has nonpositive solutions
and the power updates are undefined. At every iteration the chain
0 <= sum p^{r+1} <= sum sigma2 q^{r+1} <= sum p^r <= sum sigma2 q^r
holds, and the limit satisfies the first-order conditions with unit dual
variables attached to the powered receivers.
"""

from __future__ import annotations

import math

import numpy as np

from .core import DegenerateUserError, phase_normalize
from .mmse_dual import (
    MmseDualOptions,
    PowerSystemError,
    SolveResult,
    SolveStatus,
    _power_system,
    _tx_directions,
    downlink_power_solve,
    initial_tx,
    warm_start,
)
from .scenario import Scenario
from .streams import StreamProblem, _receiver_pass, effective_rows
from .trace import Trace, TraceRow

__all__ = [
    "InfeasibleInitializationError",
    "uplink_power_solve",
    "downlink_power_solve_udd",
    "solve",
    "solve_streams",
]


class InfeasibleInitializationError(RuntimeError):
    """The uplink power system produced nonpositive powers; the iteration
    was started from an infeasible point."""

    def __init__(self, message, q=None):
        super().__init__(message)
        self.q = q


def _uplink_system(E, V, gamma_s, layout):
    """Row s of the uplink equality system, in the unnormalized-v form:

    (1/gamma_s) q_s |v_s^H H_{k(s)}^H ubar_s|^2
      - sum_{t in uplink interferers of s} q_t |v_s^H H_{k(t)}^H ubar_t|^2
      = ||v_s||^2.

    Equivalent to the normalized form since the uplink SINR is scale
    invariant in the transmit direction.
    """
    Vm = np.stack(V, axis=1)
    P = np.abs(E @ Vm) ** 2  # P[t, s] = |ubar_t^H H_{k(t)} v_s|^2
    A = np.where(layout.uplink_mask, -P.T, 0.0)
    np.fill_diagonal(A, np.diag(P) / gamma_s)
    rhs = np.array([np.vdot(v, v).real for v in V])
    q = np.linalg.solve(A, rhs)
    return q


def uplink_power_solve(rx_dirs, tx, channel, targets, layout=None) -> np.ndarray:
    """Uplink powers making the virtual-uplink SINR constraints active.

    ``rx_dirs`` must be unit vectors; ``tx`` are the current (unnormalized)
    transmit beamformers. Raises InfeasibleInitializationError when any
    q_k <= 0 or the system is singular, quoting the offending values.
    """
    from .streams import StreamLayout

    if layout is None:
        layout = StreamLayout((1,) * len(rx_dirs))
    E = effective_rows(rx_dirs, channel, layout)
    gamma_s = np.asarray(targets.gamma, dtype=float)
    try:
        q = _uplink_system(E, tx, gamma_s, layout)
    except np.linalg.LinAlgError as exc:
        raise InfeasibleInitializationError(f"uplink power system singular: {exc}")
    if not np.all(np.isfinite(q)) or np.any(q <= 0):
        raise InfeasibleInitializationError(
            "uplink power system has nonpositive solution q = "
            + np.array2string(q, precision=4),
            q=q,
        )
    return q


# Same equality system as the dual fixed-point solver's power step; the
# receivers just carry sqrt(q) instead of being paired with dual weights.
downlink_power_solve_udd = downlink_power_solve


def solve_streams(problem: StreamProblem, tx0,
                  opts: MmseDualOptions = MmseDualOptions()) -> SolveResult:
    """Run the uplink-downlink power iteration from explicit beamformers."""
    layout = problem.layout
    gamma_s = problem.gamma
    sig2_s = problem.stream_noise()
    S = layout.num_streams
    Vm = np.stack([np.asarray(v, dtype=complex) for v in tx0], axis=1)
    trace = Trace()
    prev_power = None
    status, message = SolveStatus.MAX_ITERS, ""
    U = None
    q = np.full(S, math.nan)
    t = 0
    for t in range(1, opts.max_outer_iters + 1):
        try:
            _, Ubar, E = _receiver_pass(Vm, problem.channel, problem.sigma2,
                                        layout)
        except DegenerateUserError as exc:
            status, message = SolveStatus.DEGENERATE_USER, f"iteration {t}: {exc}"
            break
        P = np.abs(E @ Vm) ** 2
        sig = np.diagonal(P)
        sinr = sig / ((P * layout.downlink_mask).sum(axis=1) + sig2_s)
        viol = float(max(0.0, np.max((gamma_s - sinr) / gamma_s)))
        power = float(np.einsum("ms,ms->", Vm.conj(), Vm).real)
        trace.append(TraceRow(t, power, viol, sinr, math.nan))
        A = np.where(layout.uplink_mask, -P.T, 0.0)
        np.fill_diagonal(A, sig / gamma_s)
        rhs = np.einsum("ms,ms->s", Vm.conj(), Vm).real
        try:
            qt = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            status = SolveStatus.INFEASIBLE_INITIALIZATION
            message = f"iteration {t}: uplink power system singular: {exc}"
            break
        if not np.all(np.isfinite(qt)) or np.any(qt <= 0):
            status = SolveStatus.INFEASIBLE_INITIALIZATION
            message = (f"iteration {t}: uplink powers q = "
                       + np.array2string(qt, precision=4))
            q = qt
            break
        q = qt
        trace.rows[-1].weighted_uplink_power = float((sig2_s * q).sum())
        rootq = np.sqrt(q)
        U = [rootq[s] * Ubar[s] for s in range(S)]
        Eq = E * rootq[:, None]
        try:
            dirs = _tx_directions(Eq.conj().T, np.ones(S), layout)
            p = _power_system(Eq, dirs, gamma_s, sig2_s * q,
                              layout.downlink_mask)
        except PowerSystemError as exc:
            status = SolveStatus.INFEASIBLE_POWER_SYSTEM
            message = f"iteration {t}: {exc}"
            break
        except DegenerateUserError as exc:
            status, message = SolveStatus.DEGENERATE_USER, f"iteration {t}: {exc}"
            break
        newVm = dirs * np.sqrt(p)
        dif = newVm - Vm
        delta = float(np.max(np.sqrt(
            np.einsum("ms,ms->s", dif.conj(), dif).real
            / np.einsum("ms,ms->s", newVm.conj(), newVm).real)))
        new_power = float(p.sum())
        Vm = newVm
        if (prev_power is not None
                and abs(new_power - prev_power) / new_power < opts.tolerance
                and delta < opts.direction_tol):
            status = SolveStatus.CONVERGED
            break
        prev_power = new_power

    V = [Vm[:, s] for s in range(S)]
    mu = np.full(S, math.nan)
    if status in (SolveStatus.CONVERGED, SolveStatus.MAX_ITERS) and U is not None:
        try:
            V = phase_normalize(V, U, [problem.channel[layout.user_of[s]]
                                       for s in range(S)])
        except DegenerateUserError:
            pass
        mu = np.array([np.vdot(v, v).real for v in V])
    if U is None:
        U = [np.zeros(problem.channel[layout.user_of[s]].shape[0], dtype=complex)
             for s in range(S)]
    # the limit certifies against unit duals with power-carrying receivers
    lam = np.ones(S)
    return SolveResult(tx=V, rx=U, lam=lam, mu=mu, trace=trace, status=status,
                       iterations=t, uplink_power=q, message=message)


def solve(scn: Scenario, tx0=None,
          opts: MmseDualOptions = MmseDualOptions()) -> SolveResult:
    """Solve a scenario with the uplink-downlink iteration.

    ``tx0`` must be feasible (or known good); when omitted, a feasible
    start is produced by a few iterations of the dual fixed-point solver
    seeded from ``opts``.
    """
    problem = StreamProblem.from_scenario(scn)
    if tx0 is None:
        tx0 = warm_start(problem, opts)
    return solve_streams(problem, tx0, opts)
