"""Shared beamforming primitives.

Transmit beamformers v_k (length M) and receive beamformers u_k
(length N_k) are plain 1-D complex arrays, one per user. Powers are
embedded in the vector norms unless a function explicitly works on
normalized directions.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "DegenerateUserError",
    "interference_covariance",
    "downlink_sinr",
    "uplink_sinr",
    "mmse_receiver",
    "uplink_mmse_direction",
    "phase_normalize",
    "total_power",
]


class DegenerateUserError(ValueError):
    """A user's effective channel vanished (H_k v_k = 0 or H_k^H u_k = 0)."""


def interference_covariance(tx, channel, sigma2, k) -> np.ndarray:
    """C_k = sum_{j != k} H_k v_j v_j^H H_k^H + sigma2_k I."""
    Hk = channel[k]
    C = sigma2[k] * np.eye(Hk.shape[0], dtype=complex)
    for j in range(len(tx)):
        if j != k:
            hv = Hk @ tx[j]
            C = C + np.outer(hv, hv.conj())
    return C


def downlink_sinr(tx, rx, channel, sigma2) -> np.ndarray:
    """Per-user downlink SINR.

    SINR_k = |u_k^H H_k v_k|^2 / (sum_{j != k} |u_k^H H_k v_j|^2
             + sigma2_k ||u_k||^2); invariant to rescaling any u_k.
    """
    K = len(tx)
    out = np.empty(K)
    for k in range(K):
        u = rx[k]
        nu = np.linalg.norm(u)
        if nu == 0:
            raise DegenerateUserError(f"receive vector of user {k} is zero")
        e = u.conj() @ channel[k]
        sig = abs(e @ tx[k]) ** 2
        intf = sum(abs(e @ tx[j]) ** 2 for j in range(K) if j != k)
        out[k] = sig / (intf + sigma2[k] * nu**2)
    return out


def uplink_sinr(q, rx_dirs, tx_dirs, channel) -> np.ndarray:
    """Per-user virtual-uplink SINR for uplink powers q and unit directions.

    SINR_k = q_k |vbar_k^H H_k^H ubar_k|^2 /
             (vbar_k^H (sum_{j != k} q_j H_j^H ubar_j ubar_j^H H_j + I) vbar_k)
    """
    K = len(q)
    g = []
    for j in range(K):
        if np.linalg.norm(rx_dirs[j]) == 0 or np.linalg.norm(tx_dirs[j]) == 0:
            raise DegenerateUserError(f"zero direction vector for user {j}")
        g.append(channel[j].conj().T @ rx_dirs[j])
    out = np.empty(K)
    for k in range(K):
        v = tx_dirs[k]
        sig = q[k] * abs(v.conj() @ g[k]) ** 2
        den = np.vdot(v, v).real
        for j in range(K):
            if j != k:
                den += q[j] * abs(g[j].conj() @ v) ** 2
        out[k] = sig / den
    return out


def mmse_receiver(tx, channel, sigma2, k):
    """MMSE receive vector of user k against the current transmitters.

    Returns (u_hat, u_bar) with u_hat = C_k^{-1} H_k v_k and
    u_bar = u_hat / ||u_hat||; u_bar maximizes user k's downlink SINR.
    """
    hv = channel[k] @ tx[k]
    if np.linalg.norm(hv) == 0:
        raise DegenerateUserError(f"H_k v_k = 0 for user {k}")
    C = interference_covariance(tx, channel, sigma2, k)
    uhat = np.linalg.solve(C, hv)
    return uhat, uhat / np.linalg.norm(uhat)


def uplink_mmse_direction(rx, weights, channel, k):
    """Virtual-uplink MMSE transmit direction for user k.

    D_k = I + sum_{j != k} w_j H_j^H u_j u_j^H H_j with nonnegative
    weights w_j (the dual variables, or all-ones when the u_j carry
    uplink power). Returns (v_hat, v_bar) with v_hat = D_k^{-1} H_k^H u_k.
    """
    M = channel[0].shape[1]
    h = channel[k].conj().T @ rx[k]
    if np.linalg.norm(h) == 0:
        raise DegenerateUserError(f"H_k^H u_k = 0 for user {k}")
    D = np.eye(M, dtype=complex)
    for j in range(len(rx)):
        if j != k:
            g = channel[j].conj().T @ rx[j]
            D = D + weights[j] * np.outer(g, g.conj())
    vhat = np.linalg.solve(D, h)
    return vhat, vhat / np.linalg.norm(vhat)


def phase_normalize(tx, rx, channel):
    """Rotate each v_k so u_k^H H_k v_k is real and positive.

    Fixes the phase ambiguity of the transmit update; SINRs and powers
    are unchanged. Idempotent.
    """
    out = []
    for k in range(len(tx)):
        c = rx[k].conj() @ channel[k] @ tx[k]
        if c == 0:
            raise DegenerateUserError(f"u_k^H H_k v_k = 0 for user {k}")
        out.append(tx[k] * (c.conjugate() / abs(c)))
    return out


def total_power(tx) -> float:
    """Total transmit power sum_k ||v_k||^2."""
    return float(sum(np.vdot(v, v).real for v in tx))
