"""Static figure rendering for traces and sweeps.

Figures are written straight to files (Agg backend, no display); the CSV
stays the primary output, the PNG sits next to it for a quick look at
the convergence curve or the spread of converged objectives.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["plot_trace", "plot_sweep"]


def plot_trace(trace, path, title=None) -> None:
    """Total power and constraint violation versus iteration."""
    iters = [r.iteration for r in trace.rows]
    power = [r.total_power for r in trace.rows]
    viol = [r.max_violation for r in trace.rows]

    fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.0, 5.0))
    ax1.plot(iters, power, "o-", ms=3, lw=1.2)
    ax1.set_ylabel("total transmit power")
    ax1.grid(True, alpha=0.4)
    if title:
        ax1.set_title(title)
    ax2.semilogy(iters, [max(v, 1e-17) for v in viol], "s-", ms=3, lw=1.2,
                 color="tab:red")
    ax2.set_ylabel("max SINR violation")
    ax2.set_xlabel("iteration")
    ax2.grid(True, alpha=0.4)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_sweep(records, path, title=None) -> None:
    """Converged objective per initialization (circles), as in a
    multi-start convergence study."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = [r["seed"] for r in records]
    ys = [r["converged_power"] for r in records]
    ok = [r["status"] == "converged" for r in records]
    ax.plot([x for x, o in zip(xs, ok) if o], [y for y, o in zip(ys, ok) if o],
            "o", mfc="none", label="converged")
    bad = [(x, 0.0) for x, o in zip(xs, ok) if not o]
    if bad:
        ax.plot([b[0] for b in bad], [b[1] for b in bad], "x", color="tab:red",
                label="failed")
    ax.set_xlabel("initialization seed")
    ax.set_ylabel("converged total power")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.4)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
