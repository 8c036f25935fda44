"""Stream expansion: SIC interference graph and per-stream primitives.

With d_k streams per user the solvers operate on the flattened stream
list in (user, stream) lexicographic order. Stream (k, m) is interfered,
in the downlink, by every stream of every other user plus the user's own
streams with larger index (earlier streams are already cancelled by SIC).
The virtual-uplink graph is the transpose: own streams with *smaller*
index interfere. Single-stream problems are the d_k = 1 special case and
take the exact same code paths.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lapack as _lapack

from .core import DegenerateUserError
from .scenario import Scenario

__all__ = [
    "StreamLayout",
    "StreamProblem",
    "stream_targets",
    "sic_sinr",
    "mmse_sic_receivers",
    "user_rate",
    "all_stream_sinrs",
    "effective_rows",
]


@dataclass(frozen=True)
class StreamLayout:
    """Flattened stream indexing and the asymmetric interference masks."""

    streams_per_user: tuple[int, ...]
    user_of: np.ndarray = field(init=False, repr=False)
    index_of: np.ndarray = field(init=False, repr=False)  # 0-based within user
    downlink_mask: np.ndarray = field(init=False, repr=False)
    uplink_mask: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        d = self.streams_per_user
        users = np.concatenate([np.full(dk, k, dtype=int) for k, dk in enumerate(d)])
        idx = np.concatenate([np.arange(dk) for dk in d])
        S = users.size
        same = users[:, None] == users[None, :]
        later = idx[None, :] > idx[:, None]
        dl = (~same) | (same & later)
        np.fill_diagonal(dl, False)
        object.__setattr__(self, "user_of", users)
        object.__setattr__(self, "index_of", idx)
        object.__setattr__(self, "downlink_mask", dl)
        object.__setattr__(self, "uplink_mask", dl.T.copy())

    @property
    def num_users(self) -> int:
        return len(self.streams_per_user)

    @property
    def num_streams(self) -> int:
        return int(self.user_of.size)

    @property
    def single_stream(self) -> bool:
        return all(d == 1 for d in self.streams_per_user)

    def streams_of(self, k) -> range:
        first = int(np.searchsorted(self.user_of, k))
        return range(first, first + self.streams_per_user[k])


def stream_targets(targets, layout: StreamLayout) -> np.ndarray:
    """Per-stream SINR targets.

    Users with a rate target get gamma_{k,m} = exp(rate_k / d_k) - 1,
    identical across their streams; users without one (necessarily
    single-stream) keep their gamma_k as given, so the d_k = 1 reduction
    is exact.
    """
    out = np.empty(layout.num_streams)
    for k in range(layout.num_users):
        d = layout.streams_per_user[k]
        if targets.rate is not None:
            g = np.exp(targets.rate[k] / d) - 1.0
        else:
            if d != 1:
                raise ValueError(f"user {k} has d={d} streams but no rate target")
            g = targets.gamma[k]
        for s in layout.streams_of(k):
            out[s] = g
    return out


@dataclass(frozen=True)
class StreamProblem:
    """A scenario expanded onto its stream layout."""

    channel: list
    sigma2: np.ndarray
    gamma: np.ndarray  # per stream
    layout: StreamLayout

    @classmethod
    def from_scenario(cls, scn: Scenario) -> "StreamProblem":
        layout = StreamLayout(scn.config.streams)
        gamma = stream_targets(scn.targets, layout)
        return cls(scn.channel, scn.targets.sigma2, gamma, layout)

    @property
    def num_tx(self) -> int:
        return self.channel[0].shape[1]

    def stream_noise(self) -> np.ndarray:
        return self.sigma2[self.layout.user_of]


def _interference_cov(V, channel, sigma2, layout, s) -> np.ndarray:
    """sigma2 I plus interference from exactly the downlink interferers of s."""
    k = layout.user_of[s]
    Hk = channel[k]
    C = sigma2[k] * np.eye(Hk.shape[0], dtype=complex)
    for t in range(layout.num_streams):
        if layout.downlink_mask[s, t]:
            hv = Hk @ V[t]
            C = C + np.outer(hv, hv.conj())
    return C


def sic_sinr(V, U, channel, sigma2, layout, s) -> float:
    """SINR of stream s under SIC: own earlier streams are cancelled."""
    k = layout.user_of[s]
    u = U[s]
    if np.linalg.norm(u) == 0:
        raise DegenerateUserError(f"receive vector of stream {s} is zero")
    C = _interference_cov(V, channel, sigma2, layout, s)
    sig = abs(u.conj() @ channel[k] @ V[s]) ** 2
    return float(sig / np.real(u.conj() @ C @ u))


def _receiver_pass(Vm, channel, sigma2, layout):
    """MMSE-SIC receivers and effective rows for transmit columns Vm (M x S).

    Per user: the inter-user covariance comes from one Gram product, then
    the SIC chain walks the user's streams last to first, solving against
    the running covariance. Returns (U_hat, U_bar, E) with E[s] =
    ubar_s^H H_{k(s)}.
    """
    S = layout.num_streams
    M = Vm.shape[0]
    U_hat = [None] * S
    U_bar = [None] * S
    E = np.empty((S, M), dtype=complex)
    for k in range(layout.num_users):
        Hk = channel[k]
        N = Hk.shape[0]
        HV = Hk @ Vm
        own = layout.streams_of(k)
        other = HV[:, [t for t in range(S) if t not in own]]
        Psi = sigma2[k] * np.eye(N, dtype=complex) + other @ other.conj().T
        for s in reversed(own):
            hv = HV[:, s]
            nv = np.sqrt(np.real(hv.conj() @ hv))
            if nv == 0:
                raise DegenerateUserError(f"H_k v = 0 for stream {s} of user {k}")
            uhat = np.linalg.solve(Psi, hv)
            ubar = uhat / np.sqrt(np.real(uhat.conj() @ uhat))
            U_hat[s] = uhat
            U_bar[s] = ubar
            E[s] = ubar.conj() @ Hk
            if s != own.start:
                Psi = Psi + np.outer(hv, hv.conj())
    return U_hat, U_bar, E


def mmse_sic_receivers(V, channel, sigma2, layout):
    """MMSE-SIC receive vectors for every stream.

    For stream (k, m): u = Psi_{k,m+1}^{-1} H_k v_{k,m} where Psi_{k,m+1}
    is the covariance of noise plus all-but-cancelled interference.
    Returns (U_hat, U_bar) lists in stream order.
    """
    Vm = np.stack(V, axis=1)
    U_hat, U_bar, _ = _receiver_pass(Vm, channel, sigma2, layout)
    return U_hat, U_bar


def user_rate(V, channel, sigma2, layout, k) -> float:
    """Achievable rate of user k in nats: log det(I + H V_k V_k^H H^H Omega^{-1}).

    Equals the SIC decomposition sum_m log(1 + SINR_{k,m}) under MMSE-SIC
    receivers.
    """
    Hk = channel[k]
    N = Hk.shape[0]
    Om = sigma2[k] * np.eye(N, dtype=complex)
    for j in range(layout.num_users):
        if j != k:
            for t in layout.streams_of(j):
                hv = Hk @ V[t]
                Om = Om + np.outer(hv, hv.conj())
    Vk = np.stack([V[s] for s in layout.streams_of(k)], axis=1)
    HV = Hk @ Vk
    _, ld1 = np.linalg.slogdet(Om + HV @ HV.conj().T)
    _, ld0 = np.linalg.slogdet(Om)
    return float(ld1 - ld0)


def effective_rows(U, channel, layout) -> np.ndarray:
    """Matrix E with row s = u_s^H H_{k(s)}; the solvers' working quantity."""
    return np.stack([U[s].conj() @ channel[layout.user_of[s]]
                     for s in range(layout.num_streams)])


def _sinrs_from(E, Vm, noise, layout) -> np.ndarray:
    """SIC SINRs for transmit columns Vm, noise = sigma2_s ||u_s||^2."""
    P = np.abs(E @ Vm) ** 2
    sig = np.diagonal(P)
    intf = (P * layout.downlink_mask).sum(axis=1)
    return sig / (intf + noise)


def all_stream_sinrs(E, V, U, sigma2, layout) -> np.ndarray:
    """Vectorized SIC SINRs for all streams given E = effective_rows(U, ...)."""
    noise = np.array([sigma2[layout.user_of[s]] * np.vdot(U[s], U[s]).real
                      for s in range(layout.num_streams)])
    return _sinrs_from(E, np.stack(V, axis=1), noise, layout)
