"""Solution files: converged beamformers in the scenario-compatible format.

Same JSON conventions as scenarios (complex entries as [re, im] pairs);
per-stream quantities are flattened in (user, stream) lexicographic
order, vectors grouped per user.
"""

from __future__ import annotations

import json
import math

import numpy as np

from .mmse_dual import SolveResult, SolveStatus
from .scenario import ScenarioError
from .streams import StreamLayout

__all__ = ["save_solution", "load_solution"]


def _vec_out(v):
    return [[float(z.real), float(z.imag)] for z in v]


def _vec_in(pairs):
    return np.array([complex(re, im) for re, im in pairs])


def save_solution(result: SolveResult, layout: StreamLayout, path,
                  algorithm="") -> None:
    doc = {
        "K": layout.num_users,
        "M": int(result.tx[0].shape[0]),
        "d": list(layout.streams_per_user),
        "status": result.status.value,
        "algorithm": algorithm,
        "iterations": result.iterations,
        "total_power": result.total_power,
        "V": [[_vec_out(result.tx[s]) for s in layout.streams_of(k)]
              for k in range(layout.num_users)],
        "U": [[_vec_out(result.rx[s]) for s in layout.streams_of(k)]
              for k in range(layout.num_users)],
        "lambda": [float(x) for x in result.lam],
        "mu": [None if math.isnan(x) else float(x) for x in result.mu],
        "q": ([float(x) for x in result.uplink_power]
              if result.uplink_power is not None
              and np.all(np.isfinite(result.uplink_power)) else None),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_solution(path):
    """Read beamformers and duals back; returns (tx, rx, lam, layout, doc)."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}")
    for key in ("K", "d", "V"):
        if key not in doc:
            raise ScenarioError(f"{path}: missing field '{key}'")
    layout = StreamLayout(tuple(int(x) for x in doc["d"]))
    tx = [_vec_in(vec) for user in doc["V"] for vec in user]
    rx = ([_vec_in(vec) for user in doc["U"] for vec in user]
          if doc.get("U") else None)
    lam = np.array(doc["lambda"], dtype=float) if doc.get("lambda") else None
    if len(tx) != layout.num_streams:
        raise ScenarioError(f"{path}: V[] holds {len(tx)} vectors, expected "
                            f"{layout.num_streams}")
    return tx, rx, lam, layout, doc
