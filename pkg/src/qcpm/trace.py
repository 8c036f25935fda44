"""Per-iteration convergence records and their CSV form."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["TraceRow", "Trace"]


@dataclass
class TraceRow:
    """State at the top of one outer iteration.

    ``total_power`` and ``sinr`` describe the incoming transmit
    beamformers evaluated with the freshly updated receivers;
    ``max_violation`` is the worst relative SINR shortfall
    max_k max(0, gamma_k - SINR_k) / gamma_k. ``weighted_uplink_power``
    is sum_k sigma2_k q_k when the iteration produced uplink powers
    (NaN otherwise).
    """

    iteration: int
    total_power: float
    max_violation: float
    sinr: np.ndarray
    weighted_uplink_power: float = math.nan


@dataclass
class Trace:
    rows: list[TraceRow] = field(default_factory=list)

    def append(self, row: TraceRow) -> None:
        if self.rows and row.iteration != self.rows[-1].iteration + 1:
            raise ValueError("trace iterations must increase by 1")
        if not math.isfinite(row.total_power):
            raise ValueError("total power must be finite on recorded rows")
        self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def total_powers(self) -> np.ndarray:
        return np.array([r.total_power for r in self.rows])

    def header(self) -> list[str]:
        n = len(self.rows[0].sinr) if self.rows else 0
        return ["iter", "total_power", "max_violation"] + [
            f"sinr_{i + 1}" for i in range(n)
        ]

    def write_csv(self, path) -> None:
        """Emit ``iter,total_power,max_violation,sinr_1..sinr_K`` rows.

        Floats are written in shortest round-trip form, so identical runs
        produce byte-identical files.
        """
        with open(path, "w") as fh:
            fh.write(",".join(self.header()) + "\n")
            for r in self.rows:
                cells = [str(r.iteration), repr(r.total_power), repr(r.max_violation)]
                cells += [repr(float(s)) for s in r.sinr]
                fh.write(",".join(cells) + "\n")
