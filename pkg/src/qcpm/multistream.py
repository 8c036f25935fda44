"""Multi-stream solving and the stream-level optimality structure.

Per-user rate targets r_k (nats) are split evenly over d_k streams, each
stream getting the SINR target exp(r_k/d_k) - 1; the single-stream
solvers then run on the expanded stream set with the asymmetric SIC
interference graph. At a converged point the per-stream multipliers of
one user collapse to a common value whenever every later stream still
hears the user's first stream; ``build_counterexample`` constructs the
known exception where they do not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mmse_dual, udd
from .mmse_dual import MmseDualOptions, SolveResult, warm_start
from .scenario import Scenario
from .streams import (
    StreamLayout,
    StreamProblem,
    all_stream_sinrs,
    effective_rows,
    mmse_sic_receivers,
    sic_sinr,
    stream_targets,
    user_rate,
)

__all__ = [
    "StreamLayout",
    "StreamProblem",
    "stream_targets",
    "sic_sinr",
    "mmse_sic_receivers",
    "user_rate",
    "solve_multistream",
    "canonical_multipliers",
    "Prop3Report",
    "prop3_check",
    "build_counterexample",
]


def solve_multistream(scn: Scenario, algo: str = "mmse-dual",
                      opts: MmseDualOptions = MmseDualOptions(),
                      tx0=None) -> SolveResult:
    """Solve a (possibly multi-stream) scenario with the chosen algorithm.

    ``algo`` is ``"mmse-dual"`` or ``"udd"``; the latter warm-starts from
    the former when no initial beamformers are given. With all d_k = 1
    this is the single-stream solve, bit for bit.
    """
    problem = StreamProblem.from_scenario(scn)
    if algo in ("mmse-dual", "mmse_dual"):
        return mmse_dual.solve_streams(problem, opts, tx0=tx0)
    if algo == "udd":
        if tx0 is None:
            tx0 = warm_start(problem, opts)
        return udd.solve_streams(problem, tx0, opts)
    raise ValueError(f"unknown algorithm {algo!r}")


def _psi_chain(V, problem: StreamProblem, k):
    """Psi_{k,m+1} for each stream of user k, keyed by stream index.

    Psi_{k,m} adds the user's own streams i >= m on top of noise plus
    inter-user interference; Psi_{k,m+1} is what the stream-m receiver
    inverts.
    """
    layout = problem.layout
    Hk = problem.channel[k]
    N = Hk.shape[0]
    Psi = problem.sigma2[k] * np.eye(N, dtype=complex)
    for j in range(layout.num_users):
        if j != k:
            for t in layout.streams_of(j):
                hv = Hk @ V[t]
                Psi = Psi + np.outer(hv, hv.conj())
    out = {}
    for s in reversed(layout.streams_of(k)):
        out[s] = Psi
        hv = Hk @ V[s]
        Psi = Psi + np.outer(hv, hv.conj())
    return out, Psi  # Psi is now Psi_{k,1}


def canonical_multipliers(result: SolveResult, problem: StreamProblem) -> np.ndarray:
    """Multipliers rescaled to the canonical receiver normalization.

    The dual variables depend on how the receivers are scaled (scaling
    u by c rescales lam by 1/|c|^2). The stream-collapse property is
    stated for receivers u = Psi^{-1} H v / sqrt(1 + gamma); this converts
    the solver's unit-receiver multipliers to that convention.
    """
    layout = problem.layout
    lam_c = np.empty(layout.num_streams)
    for k in range(layout.num_users):
        psis, _ = _psi_chain(result.tx, problem, k)
        Hk = problem.channel[k]
        for s in layout.streams_of(k):
            uc = np.linalg.solve(psis[s], Hk @ result.tx[s])
            uc /= np.sqrt(1.0 + problem.gamma[s])
            scale = np.vdot(uc, uc).real / np.vdot(result.rx[s], result.rx[s]).real
            lam_c[s] = result.lam[s] / scale
    return lam_c


@dataclass
class Prop3Report:
    """Per-user stream-collapse diagnostics at a converged point.

    ``condition_holds``: every later stream's receiver still hears the
    user's first stream (inner product above the threshold).
    ``min_coupling``: the smallest such |u_{k,m}^H H_k v_{k,1}|, m >= 2.
    ``lambda_spread``: max_m |lam_{k,m} - lam_{k,1}| / lam_{k,1} in the
    canonical receiver scaling.
    ``collapsed_residual``: relative residual of the aggregated per-user
    first-order condition using lam_k = lam_{k,1}.
    ``rate_error``: |R_k - r_k|.
    """

    condition_holds: list
    min_coupling: np.ndarray
    lambda_spread: np.ndarray
    collapsed_residual: np.ndarray
    rate_error: np.ndarray


def prop3_check(result: SolveResult, scn, epsilon: float = 1e-8) -> Prop3Report:
    """Check whether the converged stream solution is stationary for the
    rate-constrained problem with one multiplier per user."""
    problem = scn if isinstance(scn, StreamProblem) else StreamProblem.from_scenario(scn)
    layout = problem.layout
    K = layout.num_users
    lam_c = canonical_multipliers(result, problem)
    V = result.tx

    holds, coupling = [], np.empty(K)
    spread = np.zeros(K)
    resid = np.empty(K)
    rate_err = np.empty(K)

    # Upsilon_{j,i} terms of the aggregated gradient, per user
    ups = []
    for j in range(K):
        psis, _ = _psi_chain(V, problem, j)
        Hj = problem.channel[j]
        M = problem.num_tx
        acc = np.zeros((M, M), dtype=complex)
        for s in layout.streams_of(j):
            w = Hj.conj().T @ np.linalg.solve(psis[s], Hj @ V[s])
            acc += np.outer(w, w.conj()) / (1.0 + problem.gamma[s])
        ups.append(acc)

    for k in range(K):
        ss = layout.streams_of(k)
        first = ss.start
        Hk = problem.channel[k]
        cs = [abs(np.vdot(result.rx[s], Hk @ V[first])) for s in ss if s != first]
        coupling[k] = min(cs) if cs else np.inf
        holds.append(bool(coupling[k] > epsilon))
        if layout.streams_per_user[k] > 1:
            spread[k] = max(abs(lam_c[s] - lam_c[first]) / lam_c[first] for s in ss)
        _, psi1 = _psi_chain(V, problem, k)
        Mk = np.eye(problem.num_tx, dtype=complex)
        Mk -= lam_c[first] * Hk.conj().T @ np.linalg.solve(psi1, Hk)
        for j in range(K):
            if j != k:
                Mk = Mk + lam_c[layout.streams_of(j).start] * ups[j]
        Vk = np.stack([V[s] for s in ss], axis=1)
        resid[k] = (np.linalg.norm(Mk @ Vk)
                    / (np.linalg.norm(Mk, 2) * np.linalg.norm(Vk)))
        if problem.layout.streams_per_user[k] >= 1:
            r_target = (np.log1p(problem.gamma[first])
                        * layout.streams_per_user[k])
            rate_err[k] = abs(user_rate(V, problem.channel, problem.sigma2,
                                        layout, k) - r_target)
    return Prop3Report(holds, coupling, spread, resid, rate_err)


def build_counterexample(H: np.ndarray, gamma: float):
    """Stream-KKT point of a two-stream single-user system whose
    multipliers differ, showing the collapse needs the coupling condition.

    ``H`` must be square with H^H H having two distinct positive
    eigenvalues mu_1 < mu_2 (noise variance 1). The transmit vectors sit
    on the eigenvectors, scaled so both stream SINRs equal ``gamma``; the
    receivers take the canonical MMSE scaling, and the multipliers come
    out as lam_i = (1 + gamma) / mu_i, unequal whenever mu_1 != mu_2.

    Returns (u1, u2, v1, v2, lam1, lam2).
    """
    H = np.asarray(H, dtype=complex)
    if H.shape[0] != H.shape[1]:
        raise ValueError("H must be square")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    w, Q = np.linalg.eigh(H.conj().T @ H)
    mu1, mu2 = float(w[0]), float(w[1])
    if mu1 <= 0:
        raise ValueError("H^H H must be positive definite")
    if abs(mu1 - mu2) <= 1e-12 * max(mu1, mu2):
        raise ValueError("H^H H needs two distinct eigenvalues")
    v1 = np.sqrt(gamma / mu1) * Q[:, 0]
    v2 = np.sqrt(gamma / mu2) * Q[:, 1]
    n = H.shape[0]
    Hv2 = H @ v2
    u1 = np.linalg.solve(np.eye(n, dtype=complex) + np.outer(Hv2, Hv2.conj()),
                         H @ v1) / np.sqrt(1.0 + gamma)
    u2 = Hv2 / np.sqrt(1.0 + gamma)
    lam1 = (1.0 + gamma) / mu1
    lam2 = (1.0 + gamma) / mu2
    return u1, u2, v1, v2, lam1, lam2


def counterexample_residuals(H, gamma, tuple_=None) -> dict:
    """Residuals of the two-stream KKT system at the constructed point,
    plus the single-multiplier stationarity residual of the aggregated
    problem (large: the point is not stationary for it)."""
    H = np.asarray(H, dtype=complex)
    if tuple_ is None:
        tuple_ = build_counterexample(H, gamma)
    u1, u2, v1, v2, lam1, lam2 = tuple_
    n = H.shape[0]
    eye = np.eye(n, dtype=complex)
    Hv1, Hv2 = H @ v1, H @ v2
    G1 = H.conj().T @ np.outer(u1, u1.conj()) @ H
    G2 = H.conj().T @ np.outer(u2, u2.conj()) @ H
    r = {}
    r["rx_1"] = np.linalg.norm(
        (eye + np.outer(Hv2, Hv2.conj()) - np.outer(Hv1, Hv1.conj()) / gamma) @ u1
    ) / np.linalg.norm(u1)
    r["rx_2"] = np.linalg.norm(
        (eye - np.outer(Hv2, Hv2.conj()) / gamma) @ u2) / np.linalg.norm(u2)
    r["tx_1"] = np.linalg.norm((eye - (lam1 / gamma) * G1) @ v1) / np.linalg.norm(v1)
    r["tx_2"] = np.linalg.norm(
        (eye + lam1 * G1 - (lam2 / gamma) * G2) @ v2) / np.linalg.norm(v2)
    den1 = np.real(u1.conj() @ (eye + np.outer(Hv2, Hv2.conj())) @ u1)
    r["sinr_1"] = abs(abs(np.vdot(u1, Hv1)) ** 2 / den1 - gamma) / gamma
    r["sinr_2"] = abs(abs(np.vdot(u2, Hv2)) ** 2 / np.vdot(u2, u2).real - gamma) / gamma
    Vc = np.stack([v1, v2], axis=1)
    HV = H @ Vc
    Psi1 = eye + HV @ HV.conj().T
    Mk = np.eye(n, dtype=complex) - lam1 * H.conj().T @ np.linalg.solve(Psi1, H)
    r["collapsed_stationarity"] = (np.linalg.norm(Mk @ Vc)
                                   / (np.linalg.norm(Mk, 2) * np.linalg.norm(Vc)))
    return r
