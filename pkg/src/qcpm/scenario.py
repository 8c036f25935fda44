"""System model: dimensions, channels, QoS targets, and scenario files.

A scenario bundles everything needed to state one power-minimization
instance: the antenna counts, the per-user channel matrices H_k (N_k x M),
the per-user SINR targets gamma_k and noise variances sigma2_k, and, for
multi-stream instances, the per-user rate targets (nats) together with the
stream counts d_k.

Scenario files are JSON with fixed field names
``K, M, N[], d[], gamma[], sigma2[], rate[], H[]``; complex entries are
stored as ``[re, im]`` pairs and matrices as arrays of rows, so a
round-trip through disk is bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ScenarioError",
    "SystemConfig",
    "QosTargets",
    "Scenario",
    "generate_channel",
    "random_scenario",
    "save_scenario",
    "load_scenario",
]


class ScenarioError(ValueError):
    """Raised when a scenario file or its fields fail validation."""


@dataclass(frozen=True)
class SystemConfig:
    """Dimensions of the downlink system.

    num_users K, num_tx_antennas M, per-user receive antennas N_k and
    per-user stream counts d_k (all 1 in single-stream mode).
    """

    num_users: int
    num_tx_antennas: int
    rx_antennas: tuple[int, ...]
    streams: tuple[int, ...] = field(default=())

    def __post_init__(self):
        if not self.streams:
            object.__setattr__(self, "streams", (1,) * self.num_users)
        if self.num_users < 1:
            raise ScenarioError("K must be >= 1")
        if self.num_tx_antennas < 1:
            raise ScenarioError("M must be >= 1")
        if len(self.rx_antennas) != self.num_users:
            raise ScenarioError("N[] must have one entry per user")
        if len(self.streams) != self.num_users:
            raise ScenarioError("d[] must have one entry per user")
        for k, (n, d) in enumerate(zip(self.rx_antennas, self.streams)):
            if n < 1:
                raise ScenarioError(f"N[{k}] must be >= 1, got {n}")
            if not 1 <= d <= min(self.num_tx_antennas, n):
                raise ScenarioError(
                    f"d[{k}] must satisfy 1 <= d <= min(M, N[{k}]), got {d}"
                )


@dataclass(frozen=True)
class QosTargets:
    """Per-user SINR targets, noise variances, and optional rate targets.

    ``gamma`` is the single-stream SINR floor per user, ``sigma2`` the
    noise variance in linear power units. ``rate`` (nats) is only needed
    for users with more than one stream; per-stream targets are derived as
    exp(rate/d) - 1.
    """

    gamma: np.ndarray
    sigma2: np.ndarray
    rate: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "sigma2", np.asarray(self.sigma2, dtype=float))
        if self.rate is not None:
            object.__setattr__(self, "rate", np.asarray(self.rate, dtype=float))
        if np.any(self.gamma <= 0):
            raise ScenarioError("all SINR targets gamma_k must be > 0")
        if np.any(self.sigma2 <= 0):
            raise ScenarioError("all noise variances sigma2_k must be > 0")
        if self.rate is not None and np.any(self.rate <= 0):
            raise ScenarioError("all rate targets must be > 0")


@dataclass(frozen=True)
class Scenario:
    """One problem instance: config + channels + targets."""

    config: SystemConfig
    channel: list[np.ndarray]
    targets: QosTargets

    def __post_init__(self):
        cfg = self.config
        if len(self.channel) != cfg.num_users:
            raise ScenarioError("channel must hold one matrix per user")
        for k, H in enumerate(self.channel):
            expect = (cfg.rx_antennas[k], cfg.num_tx_antennas)
            if H.shape != expect:
                raise ScenarioError(
                    f"H[{k}] has shape {H.shape}, expected {expect} for user {k}"
                )
            if not np.any(np.abs(H) > 0):
                raise ScenarioError(f"H[{k}] is identically zero")
        for name in ("gamma", "sigma2"):
            arr = getattr(self.targets, name)
            if arr.shape != (cfg.num_users,):
                raise ScenarioError(f"{name}[] must have one entry per user")
        if self.targets.rate is not None and self.targets.rate.shape != (cfg.num_users,):
            raise ScenarioError("rate[] must have one entry per user")
        if self.targets.rate is None and any(d > 1 for d in cfg.streams):
            raise ScenarioError("multi-stream scenarios (d_k > 1) need rate[]")


def generate_channel(config: SystemConfig, seed: int) -> list[np.ndarray]:
    """Draw i.i.d. CN(0, 1) channel matrices, reproducibly.

    Uses numpy's PCG64 generator seeded with ``seed``. Draw order is fixed:
    users ascending; within each user one row-major block of real parts
    followed by one row-major block of imaginary parts, each N(0, 1/2) so
    the per-entry second moment is 1.
    """
    rng = np.random.default_rng(seed)
    out = []
    for k in range(config.num_users):
        shape = (config.rx_antennas[k], config.num_tx_antennas)
        re = rng.standard_normal(shape)
        im = rng.standard_normal(shape)
        out.append((re + 1j * im) / np.sqrt(2.0))
    return out


def random_scenario(K, M, N, gamma, sigma2, seed, d=None, rate=None) -> Scenario:
    """Build a scenario with a freshly drawn channel.

    Scalar N/gamma/sigma2/d/rate are broadcast over users.
    """
    def per_user(x, cast):
        if x is None:
            return None
        if np.isscalar(x):
            return tuple(cast(x) for _ in range(K))
        return tuple(cast(v) for v in x)

    cfg = SystemConfig(
        num_users=K,
        num_tx_antennas=M,
        rx_antennas=per_user(N, int),
        streams=per_user(d, int) if d is not None else (),
    )
    tgt = QosTargets(
        gamma=np.array(per_user(gamma, float)),
        sigma2=np.array(per_user(sigma2, float)),
        rate=np.array(per_user(rate, float)) if rate is not None else None,
    )
    return Scenario(cfg, generate_channel(cfg, seed), tgt)


def _encode_complex_matrix(H: np.ndarray) -> list:
    return [[[float(z.real), float(z.imag)] for z in row] for row in H]


def _decode_complex_matrix(rows, where: str) -> np.ndarray:
    try:
        arr = np.array([[complex(re, im) for re, im in row] for row in rows])
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: entries must be [re, im] pairs ({exc})")
    return arr


def save_scenario(scn: Scenario, path) -> None:
    """Write a scenario as JSON. load(save(x)) round-trips bit-exactly."""
    cfg, tgt = scn.config, scn.targets
    doc = {
        "K": cfg.num_users,
        "M": cfg.num_tx_antennas,
        "N": list(cfg.rx_antennas),
        "d": list(cfg.streams),
        "gamma": [float(g) for g in tgt.gamma],
        "sigma2": [float(s) for s in tgt.sigma2],
        "rate": [float(r) for r in tgt.rate] if tgt.rate is not None else None,
        "H": [_encode_complex_matrix(H) for H in scn.channel],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_scenario(path) -> Scenario:
    """Parse a scenario file, validating shapes and target signs.

    Raises ScenarioError naming the offending field (and user index for
    per-user mismatches).
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}")

    for key in ("K", "M", "N", "gamma", "sigma2", "H"):
        if key not in doc:
            raise ScenarioError(f"{path}: missing field '{key}'")
    K = doc["K"]
    cfg = SystemConfig(
        num_users=K,
        num_tx_antennas=doc["M"],
        rx_antennas=tuple(int(n) for n in doc["N"]),
        streams=tuple(int(x) for x in doc.get("d") or (1,) * K),
    )
    if len(doc["H"]) != K:
        raise ScenarioError(f"{path}: H[] has {len(doc['H'])} matrices, expected K={K}")
    channel = []
    for k, rows in enumerate(doc["H"]):
        Hk = _decode_complex_matrix(rows, f"{path}: H[{k}]")
        expect = (cfg.rx_antennas[k], cfg.num_tx_antennas)
        if Hk.shape != expect:
            raise ScenarioError(
                f"{path}: H[{k}] has shape {Hk.shape}, expected {expect} for user {k}"
            )
        channel.append(Hk)
    rate = doc.get("rate")
    tgt = QosTargets(
        gamma=np.array(doc["gamma"], dtype=float),
        sigma2=np.array(doc["sigma2"], dtype=float),
        rate=np.array(rate, dtype=float) if rate is not None else None,
    )
    return Scenario(cfg, channel, tgt)
