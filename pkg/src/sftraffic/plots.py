"""Optional matplotlib figures rendered from the sweep CSVs."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _read(path: Path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    return path


def render_all(out_dir) -> list[Path]:
    """One PNG next to each recognised CSV in ``out_dir``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    made = []
    for csv in sorted(out.glob("*.csv")):
        d = _read(csv)
        fig, ax = plt.subplots(figsize=(5, 4))
        stem = csv.stem
        if stem == "eta_vs_R":
            for key in sorted({(a, c, p) for a, c, p in zip(d["alpha"], d["mean_capacity"], d["phi"])}):
                sel = (d["alpha"] == key[0]) & (d["mean_capacity"] == key[1]) & (d["phi"] == key[2])
                ax.plot(d["R"][sel], d["eta"][sel], "o-", ms=3, label=f"a={key[0]:g} C={key[1]:g} phi={key[2]:g}")
            ax.set(xlabel="R", ylabel="eta")
            ax.legend(fontsize=7)
        elif stem.startswith("rc_vs_phi"):
            ax.plot(d["phi"], d["Rc"], "o-")
            ax.set(xlabel="phi", ylabel="R_c")
        elif stem == "phi_opt_vs_alpha":
            ax.plot(d["alpha"], d["phi_opt"], "o", label="measured")
            a = np.linspace(d["alpha"].min(), d["alpha"].max(), 2)
            ax.plot(a, 1 + a, "--", label="1 + alpha")
            ax.set(xlabel="alpha", ylabel="phi_opt")
            ax.legend()
        elif stem == "max_rc_vs_alpha":
            ax.plot(d["alpha"], d["Rc_max"], "o-")
            ax.set(xlabel="alpha", ylabel="max R_c")
        elif stem == "betweenness_vs_degree":
            ax.loglog(d["k"], d["g_mean"], "o", ms=3)
            ax.set(xlabel="k", ylabel="g")
        elif stem.startswith("queue_evolution"):
            for k in np.unique(d["degree"]):
                sel = d["degree"] == k
                ax.plot(d["step"][sel], d["queue_total"][sel], label=f"k={k:g}")
            ax.set(xlabel="step", ylabel="n(k)")
            if len(np.unique(d["degree"])) <= 10:
                ax.legend(fontsize=7)
        else:
            plt.close(fig)
            continue
        made.append(_save(fig, csv.with_suffix(".png")))
        plt.close(fig)
    return made
