"""Power minimization by alternating MMSE receivers with a dual-variable
fixed point and semi-closed-form transmit updates.

One outer iteration: (1) MMSE(-SIC) receivers for the current transmit
vectors, (2) N synchronous fixed-point sweeps for the dual variables
lambda, (3) virtual-uplink MMSE transmit directions, (4) a linear system
for the downlink powers that makes every SINR constraint active. The
solver needs no feasible start: the first successful power step lands on
the constraint surface, after which total power is nonincreasing.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack as _lapack

from .core import DegenerateUserError, phase_normalize
from .scenario import Scenario
from .streams import StreamProblem, _receiver_pass, _sinrs_from, effective_rows
from .trace import Trace, TraceRow

__all__ = [
    "PowerSystemError",
    "SolveStatus",
    "MmseDualOptions",
    "SolveResult",
    "lambda_fixed_point",
    "downlink_power_solve",
    "solve",
    "solve_streams",
    "warm_start",
    "random_tx",
    "zero_forcing_tx",
]

MAX_POWER_SYSTEM_COND = 1e12
FEASIBILITY_TOL = 1e-8


class PowerSystemError(RuntimeError):
    """The power equality system is singular, ill-conditioned, or has a
    nonpositive solution (targets unsupportable on these directions)."""

    def __init__(self, message, values=None):
        super().__init__(message)
        self.values = values


class SolveStatus(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    INFEASIBLE_POWER_SYSTEM = "infeasible_power_system"
    DEGENERATE_USER = "degenerate_user"
    INFEASIBLE_INITIALIZATION = "infeasible_initialization"


@dataclass(frozen=True)
class MmseDualOptions:
    """Solver knobs.

    ``tolerance`` bounds the relative total-power change between outer
    iterations. ``direction_tol`` additionally bounds the relative change
    of every beamformer; power alone is first-order flat along the active
    constraint surface and would stop too early for the convergence
    certificate. ``fixed_point_iters`` is the inner sweep count N.
    """

    max_outer_iters: int = 500
    fixed_point_iters: int = 20
    tolerance: float = 1e-8
    direction_tol: float = 1e-7
    init_mode: str = "random"  # random | zero_forcing | from_file
    seed: int = 0

    def __post_init__(self):
        if self.fixed_point_iters < 1:
            raise ValueError("fixed_point_iters must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


@dataclass
class SolveResult:
    """Converged (or terminal) solver state, per stream.

    ``tx`` is phase-normalized (u^H H v real positive). ``lam`` are the
    dual variables under unit-norm receivers; ``mu`` the downlink powers.
    ``uplink_power`` holds UDD's q (None for the dual fixed-point path,
    where lam itself plays that role).
    """

    tx: list
    rx: list
    lam: np.ndarray
    mu: np.ndarray
    trace: Trace
    status: SolveStatus
    iterations: int
    uplink_power: np.ndarray | None = None
    message: str = ""

    @property
    def total_power(self) -> float:
        return float(sum(np.vdot(v, v).real for v in self.tx))

    @property
    def converged(self) -> bool:
        return self.status == SolveStatus.CONVERGED


# ---------------------------------------------------------------------------
# building blocks
# ---------------------------------------------------------------------------

def _solve_hpd(A, B):
    """Solve A X = B for Hermitian positive definite A (Cholesky, one
    factorization shared by all right-hand sides)."""
    _, x, info = _lapack.zposv(A, B, lower=0)
    if info != 0:
        return np.linalg.solve(A, B)
    return x


def _sm_downdate(X, w, g):
    """(A - w g g^H)^{-1} from X = A^{-1} by Sherman-Morrison."""
    Xg = X @ g
    denom = 1.0 - w * np.real(g.conj() @ Xg)
    return X + (w / denom) * np.outer(Xg, Xg.conj())


def _lambda_sweeps(G, gamma_s, lam0, n_iters, layout) -> np.ndarray:
    """N synchronous sweeps of the dual fixed point.

    lam_s <- (gamma_s / (1 + gamma_s)) / (g_s^H Ups_s g_s) where Ups_s
    inverts I + all dual-weighted outer products except the user's own
    later streams; all entries of a sweep use the same base factorization,
    per-stream variants come from rank-one downdates.
    """
    M = G.shape[0]
    Gc = G.conj()
    Gh = Gc.T
    eye = np.eye(M, dtype=complex)
    lam = np.asarray(lam0, dtype=float).copy()
    coef = gamma_s / (1.0 + gamma_s)
    for _ in range(n_iters):
        S = eye + (G * lam) @ Gh
        if layout.single_stream:
            Y = _solve_hpd(S, G)
            t = np.einsum("ms,ms->s", Gc, Y).real
        else:
            X = np.linalg.inv(S)
            t = np.empty(layout.num_streams)
            for k in range(layout.num_users):
                Xk = X
                ss = layout.streams_of(k)
                for s in reversed(ss):
                    g = G[:, s]
                    t[s] = np.real(g.conj() @ Xk @ g)
                    if s != ss.start:
                        Xk = _sm_downdate(Xk, lam[s], g)
        if np.any(t <= 0):
            bad = int(np.argmin(t))
            raise DegenerateUserError(
                f"dual fixed point: channel direction of stream {bad} invisible"
            )
        lam = coef / t
    return lam


def lambda_fixed_point(rx, channel, targets, lambda0=None, n_iters=20) -> np.ndarray:
    """Single-stream dual fixed point for given unit receivers.

    Applies ``n_iters`` synchronous iterations of
    lam_k <- (gamma_k/(1+gamma_k)) / (u_k^H H_k Ups H_k^H u_k),
    Ups = (I + sum_j lam_j H_j^H u_j u_j^H H_j)^{-1}, starting from
    all-ones when ``lambda0`` is omitted. The map is a standard
    interference function, so the fixed point is unique and positive.
    """
    from .streams import StreamLayout

    K = len(rx)
    layout = StreamLayout((1,) * K)
    G = np.stack([channel[k].conj().T @ rx[k] for k in range(K)], axis=1)
    lam0 = np.ones(K) if lambda0 is None else np.asarray(lambda0, dtype=float)
    return _lambda_sweeps(G, np.asarray(targets.gamma, dtype=float), lam0,
                          n_iters, layout)


def _tx_directions(G, lam, layout) -> np.ndarray:
    """Virtual-uplink MMSE directions, unit columns of the returned M x S
    matrix: v_s = normalize(D_s^{-1} H^H u_s).

    D_s drops the dual-weighted outer products of the stream itself and
    the user's own later streams. In the single-stream case dropping the
    stream's own term only rescales the solution positively, so the base
    factorization serves every user directly; otherwise the per-stream
    inverses come from rank-one downdates of the shared base inverse.
    """
    M = G.shape[0]
    S = np.eye(M, dtype=complex) + (G * lam) @ G.conj().T
    if layout.single_stream:
        Y = _solve_hpd(S, G)
        norms = np.sqrt(np.einsum("ms,ms->s", Y.conj(), Y).real)
        if np.any(norms == 0):
            raise DegenerateUserError("H^H u = 0 for some stream")
        return Y / norms
    X = np.linalg.inv(S)
    out = np.empty_like(G)
    for k in range(layout.num_users):
        Xk = X
        for s in reversed(layout.streams_of(k)):
            g = G[:, s]
            Xk = _sm_downdate(Xk, lam[s], g)
            vhat = Xk @ g
            n = np.linalg.norm(vhat)
            if n == 0:
                raise DegenerateUserError(f"H^H u = 0 for stream {s}")
            out[:, s] = vhat / n
    return out


def _power_system(E, dirs, gamma_s, rhs, mask):
    """Solve the SINR-equality power system on fixed unit directions
    (columns of ``dirs``).

    Row s: (1/gamma_s) p_s |u_s^H H v_s|^2
           - sum_{t interfering s} p_t |u_s^H H v_t|^2 = rhs_s.
    Raises PowerSystemError unless the solution is finite, positive, and
    the matrix is well conditioned.
    """
    P = np.abs(E @ dirs) ** 2
    A = np.where(mask, -P, 0.0)
    np.fill_diagonal(A, np.diagonal(P) / gamma_s)
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > MAX_POWER_SYSTEM_COND:
        raise PowerSystemError(
            f"power system condition number {cond:.3e} exceeds "
            f"{MAX_POWER_SYSTEM_COND:.0e}"
        )
    p = np.linalg.solve(A, rhs)
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise PowerSystemError(
            "power system has nonpositive solution "
            + np.array2string(p, precision=4),
            values=p,
        )
    return p


def downlink_power_solve(rx, tx_dirs, channel, targets, layout=None) -> np.ndarray:
    """Downlink powers making every SINR constraint active.

    Diagonal (1/gamma_k)|u_k^H H_k vbar_k|^2, off-diagonal
    -|u_k^H H_k vbar_j|^2, right-hand side sigma2_k ||u_k||^2. Shared by
    the dual fixed-point solver and the uplink-downlink power iteration.
    """
    from .streams import StreamLayout

    if layout is None:
        layout = StreamLayout((1,) * len(rx))
    E = effective_rows(rx, channel, layout)
    sigma2 = np.asarray(targets.sigma2, dtype=float)
    gamma_s = np.asarray(targets.gamma, dtype=float)
    rhs = np.array([sigma2[layout.user_of[s]] * np.vdot(rx[s], rx[s]).real
                    for s in range(layout.num_streams)])
    return _power_system(E, np.stack(tx_dirs, axis=1), gamma_s, rhs,
                         layout.downlink_mask)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def random_tx(problem: StreamProblem, seed: int):
    """Random CN(0, 1/M)-ish start: one unit-variance complex Gaussian
    vector per stream, streams in layout order."""
    rng = np.random.default_rng(seed)
    S, M = problem.layout.num_streams, problem.num_tx
    re = rng.standard_normal((S, M))
    im = rng.standard_normal((S, M))
    V = (re + 1j * im) / np.sqrt(2.0)
    return [V[s] for s in range(S)]


def zero_forcing_tx(problem: StreamProblem):
    """Interference-nulling start, feasible whenever M >= total streams.

    Receivers from an interference-free MMSE pass (the left singular
    vectors of each H_k), transmit directions as the pseudo-inverse
    columns of the stacked effective channels, powers from the equality
    system (diagonal here since cross terms vanish).
    """
    layout = problem.layout
    S, M = layout.num_streams, problem.num_tx
    if M < S:
        raise PowerSystemError(
            f"zero-forcing initialization needs M >= total streams ({M} < {S})"
        )
    U = [None] * S
    for k in range(layout.num_users):
        u_svd, _, _ = np.linalg.svd(problem.channel[k])
        for i, s in enumerate(layout.streams_of(k)):
            U[s] = u_svd[:, i]
    E = effective_rows(U, problem.channel, layout)
    pinv = np.linalg.pinv(E)
    dirs = [pinv[:, s] / np.linalg.norm(pinv[:, s]) for s in range(S)]
    p = _power_system(E, dirs, problem.gamma, problem.stream_noise(),
                      layout.downlink_mask)
    return [np.sqrt(p[s]) * dirs[s] for s in range(S)]


def initial_tx(problem: StreamProblem, opts: MmseDualOptions, tx0=None):
    if tx0 is not None:
        return [np.asarray(v, dtype=complex).copy() for v in tx0]
    if opts.init_mode == "zero_forcing":
        return zero_forcing_tx(problem)
    if opts.init_mode == "random":
        return random_tx(problem, opts.seed)
    raise ValueError(f"init_mode {opts.init_mode!r} needs explicit beamformers")


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

def solve_streams(problem: StreamProblem, opts: MmseDualOptions = MmseDualOptions(),
                  tx0=None, _stop_when_feasible=False) -> SolveResult:
    """Run the dual fixed-point solver on an expanded stream problem.

    The trace records, per outer iteration, the incoming beamformers under
    the freshly updated receivers, so an infeasible start shows up as a
    violated first row and a feasible second row. Deterministic given
    (problem, options, tx0).
    """
    layout = problem.layout
    gamma_s = problem.gamma
    noise = problem.stream_noise()
    Vm = np.stack(initial_tx(problem, opts, tx0), axis=1)
    U = None
    lam = np.ones(layout.num_streams)
    mu = np.full(layout.num_streams, math.nan)
    trace = Trace()
    prev_power = None
    status, message = SolveStatus.MAX_ITERS, ""
    t = 0
    for t in range(1, opts.max_outer_iters + 1):
        try:
            _, U, E = _receiver_pass(Vm, problem.channel, problem.sigma2, layout)
        except DegenerateUserError as exc:
            status, message = SolveStatus.DEGENERATE_USER, f"iteration {t}: {exc}"
            break
        sinr = _sinrs_from(E, Vm, noise, layout)
        viol = float(max(0.0, np.max((gamma_s - sinr) / gamma_s)))
        power = float(np.einsum("ms,ms->", Vm.conj(), Vm).real)
        trace.append(TraceRow(t, power, viol, sinr, math.nan))
        if _stop_when_feasible and viol <= FEASIBILITY_TOL:
            status = SolveStatus.CONVERGED
            break
        G = E.conj().T
        try:
            lam = _lambda_sweeps(G, gamma_s, lam, opts.fixed_point_iters, layout)
            dirs = _tx_directions(G, lam, layout)
            mu = _power_system(E, dirs, gamma_s, noise, layout.downlink_mask)
        except PowerSystemError as exc:
            status = SolveStatus.INFEASIBLE_POWER_SYSTEM
            message = f"iteration {t}: {exc}"
            break
        except DegenerateUserError as exc:
            status, message = SolveStatus.DEGENERATE_USER, f"iteration {t}: {exc}"
            break
        trace.rows[-1].weighted_uplink_power = float((noise * lam).sum())
        newVm = dirs * np.sqrt(mu)
        dif = newVm - Vm
        delta = float(np.max(np.sqrt(
            np.einsum("ms,ms->s", dif.conj(), dif).real
            / np.einsum("ms,ms->s", newVm.conj(), newVm).real)))
        new_power = float(mu.sum())
        new_sinr = _sinrs_from(E, newVm, noise, layout)
        new_viol = float(max(0.0, np.max((gamma_s - new_sinr) / gamma_s)))
        Vm = newVm
        if (prev_power is not None
                and abs(new_power - prev_power) / new_power < opts.tolerance
                and new_viol < FEASIBILITY_TOL
                and delta < opts.direction_tol):
            status = SolveStatus.CONVERGED
            break
        prev_power = new_power

    V = [Vm[:, s] for s in range(layout.num_streams)]
    if status in (SolveStatus.CONVERGED, SolveStatus.MAX_ITERS) and U is not None:
        try:
            V = phase_normalize(V, U, [problem.channel[layout.user_of[s]]
                                       for s in range(layout.num_streams)])
        except DegenerateUserError:
            pass  # stalled run with a vanished inner product; report as-is
        mu = np.array([np.vdot(v, v).real for v in V])
    else:
        mu = np.full(layout.num_streams, math.nan)
    if U is None:
        U = [np.zeros(problem.channel[layout.user_of[s]].shape[0], dtype=complex)
             for s in range(layout.num_streams)]
    return SolveResult(tx=V, rx=U, lam=lam, mu=mu, trace=trace, status=status,
                       iterations=t, message=message)


def solve(scn: Scenario, opts: MmseDualOptions = MmseDualOptions(),
          tx0=None) -> SolveResult:
    """Solve a scenario (single- or multi-stream) from any starting point."""
    return solve_streams(StreamProblem.from_scenario(scn), opts, tx0=tx0)


def warm_start(problem: StreamProblem, opts: MmseDualOptions = MmseDualOptions(),
               tx0=None, max_iters: int = 50):
    """Iterate until the first feasible transmit set and return it.

    The uplink-downlink power iteration needs a feasible start; a
    successful power step here lands exactly on the constraint surface,
    so feasibility is usually reached on the second iteration.
    """
    probe = MmseDualOptions(
        max_outer_iters=max_iters,
        fixed_point_iters=opts.fixed_point_iters,
        tolerance=opts.tolerance,
        direction_tol=opts.direction_tol,
        init_mode=opts.init_mode,
        seed=opts.seed,
    )
    res = solve_streams(problem, probe, tx0=tx0, _stop_when_feasible=True)
    if res.status != SolveStatus.CONVERGED:
        raise PowerSystemError(
            f"no feasible point within {max_iters} iterations ({res.status.value})"
        )
    return res.tx
