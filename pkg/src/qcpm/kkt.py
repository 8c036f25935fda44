"""Independent optimality verification.

Evaluates the first-order system of the power-minimization problem at a
given primal-dual tuple: receiver stationarity lam_s A_s u_s = 0 with
A_s = C_s - (1/gamma_s) H v_s v_s^H H^H, transmitter stationarity
B_s v_s = 0 with B_s = I + sum-of-weighted-interferer-outer-products
- (lam_s/gamma_s) H^H u_s u_s^H H, complementary slackness, primal and
dual feasibility, plus the certificates that come for free at such
points: both A_s and B_s have smallest eigenvalue zero, and total
downlink power equals the noise-weighted uplink power.

Stationarity residuals are scaled by the operand norms so thresholds are
dimensionless across target/noise regimes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .scenario import Scenario
from .streams import StreamProblem

__all__ = ["KktReport", "kkt_residual", "duality_certificate", "analytic_k1"]

_TINY = 1e-300


@dataclass
class KktReport:
    """Residuals of the first-order system, all nonnegative by construction
    except ``dual_feasibility`` which is min_s lam_s."""

    stationarity_rx: float
    stationarity_tx: float
    complementarity: float
    primal_violation: float
    dual_feasibility: float
    duality_gap: float
    min_eig_A: np.ndarray
    min_eig_B: np.ndarray
    neg_eigs_A: int = 0
    neg_eigs_B: int = 0

    def max_residual(self) -> float:
        return max(self.stationarity_rx, self.stationarity_tx,
                   self.complementarity, self.primal_violation)

    def is_kkt(self, tol: float = 1e-6) -> bool:
        return self.max_residual() < tol and self.dual_feasibility > 0

    def to_dict(self) -> dict:
        return {
            "stationarity_rx": self.stationarity_rx,
            "stationarity_tx": self.stationarity_tx,
            "complementarity": self.complementarity,
            "primal_violation": self.primal_violation,
            "dual_feasibility": self.dual_feasibility,
            "duality_gap": self.duality_gap,
            "min_eig_A": [float(x) for x in self.min_eig_A],
            "min_eig_B": [float(x) for x in self.min_eig_B],
            "neg_eigs_A": self.neg_eigs_A,
            "neg_eigs_B": self.neg_eigs_B,
        }

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def _problem_of(scn) -> StreamProblem:
    if isinstance(scn, StreamProblem):
        return scn
    return StreamProblem.from_scenario(scn)


def kkt_residual(tx, rx, lam, scn) -> KktReport:
    """Evaluate every first-order condition at (tx, rx, lam).

    ``tx``/``rx``/``lam`` are per-stream (per-user in the single-stream
    case); ``scn`` a Scenario or StreamProblem. Always returns a report.
    A point is declared KKT when all residuals are below 1e-6 and every
    multiplier is positive.
    """
    problem = _problem_of(scn)
    layout = problem.layout
    gamma_s = problem.gamma
    lam = np.asarray(lam, dtype=float)
    S = layout.num_streams
    M = problem.num_tx

    G = np.stack([problem.channel[layout.user_of[s]].conj().T @ rx[s]
                  for s in range(S)], axis=1)
    rx_res = tx_res = comp = viol = 0.0
    min_eig_A = np.empty(S)
    min_eig_B = np.empty(S)
    neg_A = neg_B = 0
    for s in range(S):
        k = layout.user_of[s]
        Hk = problem.channel[k]
        N = Hk.shape[0]
        C = problem.sigma2[k] * np.eye(N, dtype=complex)
        for t in range(S):
            if layout.downlink_mask[s, t]:
                hv = Hk @ tx[t]
                C = C + np.outer(hv, hv.conj())
        hv = Hk @ tx[s]
        A = C - np.outer(hv, hv.conj()) / gamma_s[s]
        eig = np.linalg.eigvalsh(A)
        normA = max(abs(eig[0]), abs(eig[-1])) + _TINY
        min_eig_A[s] = eig[0] / normA
        neg_A += int(np.sum(eig < -1e-9 * normA))
        if lam[s] != 0.0:
            rx_res = max(rx_res, np.linalg.norm(A @ rx[s])
                         / (normA * np.linalg.norm(rx[s]) + _TINY))

        B = np.eye(M, dtype=complex)
        for t in range(S):
            if layout.uplink_mask[s, t]:
                B = B + lam[t] * np.outer(G[:, t], G[:, t].conj())
        B = B - (lam[s] / gamma_s[s]) * np.outer(G[:, s], G[:, s].conj())
        eig = np.linalg.eigvalsh(B)
        normB = max(abs(eig[0]), abs(eig[-1])) + _TINY
        min_eig_B[s] = eig[0] / normB
        neg_B += int(np.sum(eig < -1e-9 * normB))
        tx_res = max(tx_res, np.linalg.norm(B @ tx[s])
                     / (normB * np.linalg.norm(tx[s]) + _TINY))

        e = rx[s].conj() @ Hk
        sig = abs(e @ tx[s]) ** 2
        intf = sum(abs(e @ tx[t]) ** 2 for t in range(S)
                   if layout.downlink_mask[s, t])
        noise = problem.sigma2[k] * np.vdot(rx[s], rx[s]).real
        slack = intf + noise - sig / gamma_s[s]
        scale = intf + noise + sig / gamma_s[s] + _TINY
        comp = max(comp, lam[s] * abs(slack) / ((1.0 + lam[s]) * scale))
        viol = max(viol, max(0.0, gamma_s[s] * (intf + noise) - sig)
                   / (gamma_s[s] * (intf + noise) + _TINY))

    p = sum(np.vdot(v, v).real for v in tx)
    q_eff = np.array([lam[s] * np.vdot(rx[s], rx[s]).real for s in range(S)])
    gap = abs(p - float((problem.stream_noise() * q_eff).sum())) / max(p, _TINY)
    return KktReport(
        stationarity_rx=float(rx_res),
        stationarity_tx=float(tx_res),
        complementarity=float(comp),
        primal_violation=float(viol),
        dual_feasibility=float(lam.min()),
        duality_gap=float(gap),
        min_eig_A=min_eig_A,
        min_eig_B=min_eig_B,
        neg_eigs_A=neg_A,
        neg_eigs_B=neg_B,
    )


def duality_certificate(p, q, targets) -> float:
    """|sum p - sum sigma2*q| / max(sum p, tiny): zero at paired optima."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(p < 0) or np.any(q < 0):
        raise ValueError("powers must be nonnegative")
    total = float(p.sum())
    weighted = float((np.asarray(targets.sigma2, dtype=float) * q).sum())
    return abs(total - weighted) / max(total, _TINY)


def analytic_k1(channel, targets):
    """Closed-form single-user optimum: ground truth for both solvers.

    Power gamma * sigma2 / sigma_max(H)^2, transmit direction the top
    right singular vector.
    """
    if len(channel) != 1:
        raise ValueError("analytic_k1 requires exactly one user")
    H = channel[0]
    _, svals, vh = np.linalg.svd(H)
    power = float(targets.gamma[0] * targets.sigma2[0] / svals[0] ** 2)
    return power, vh[0].conj()
