"""PNG renderings of CLI result tables (non-interactive backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.2),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
}


def _grid(table, x: str, y: str, z: str):
    cols = table.column_index()
    data = np.asarray(table.rows, dtype=float)
    xs, ys = np.unique(data[:, cols[x]]), np.unique(data[:, cols[y]])
    Z = np.full((len(ys), len(xs)), np.nan)
    for row in data:
        i = np.searchsorted(ys, row[cols[y]])
        j = np.searchsorted(xs, row[cols[x]])
        Z[i, j] = row[cols[z]]
    return xs, ys, Z


def _map(ax, xs, ys, Z, label, levels=(), logx=False):
    m = ax.pcolormesh(xs, ys, Z, shading="nearest", cmap="viridis")
    plt.colorbar(m, ax=ax, label=label)
    finite = Z[np.isfinite(Z)]
    levels = [lv for lv in levels if finite.size and finite.min() < lv < finite.max()]
    if levels and min(Z.shape) > 1:
        ax.contour(xs, ys, Z, levels=sorted(levels), colors=["k", "w"][: len(levels)], linestyles="--")
    if logx:
        ax.set_xscale("log")


def _effparams(table, fig):
    axes = fig.subplots(2, 2)
    for ax, (col, label) in zip(
        axes.flat,
        [("omega_eff", "omega'"), ("g_eff", "g'"), ("gamma_eff", "gamma'"), ("log10_g_over_omega", "log10(g'/omega')")],
    ):
        xs, ys, Z = _grid(table, "omega_A", "V", col)
        _map(ax, xs, ys, Z, label)
        ax.set_xlabel("omega_A")
        ax.set_ylabel("V")


def _gate_fidelity(table, fig):
    ax = fig.subplots()
    cols = table.columns
    data = np.asarray(table.rows, dtype=float)
    t = data[:, 0]
    for k, c in enumerate(cols):
        if c.startswith("F_state"):
            line = ax.plot(t, data[:, k], lw=1)[0]
            num = "numeric_" + c[2:]
            if num in cols:
                j = cols.index(num)
                ok = np.isfinite(data[:, j])
                ax.plot(t[ok], data[ok, j], "o", ms=3, color=line.get_color())
    if "worst_case" in cols:
        ax.plot(t, data[:, cols.index("worst_case")], "k--", lw=1, label="worst case")
        ax.legend()
    ax.set_xlabel("t (1/omega_m)")
    ax.set_ylabel("F")


def _sweep(table, fig):
    ax = fig.subplots()
    xs, ys, Z = _grid(table, "kappa", "n_th", "fidelity")
    _map(ax, xs, ys, Z, "average F", levels=(0.95, 0.99), logx=True)
    ax.set_xlabel("kappa")
    ax.set_ylabel("n_th")


def _transmission(table, fig):
    ax = fig.subplots()
    data = np.asarray(table.rows, dtype=float)
    c = table.column_index()
    for G in np.unique(data[:, c["G"]]):
        sel = data[:, c["G"]] == G
        ax.plot(data[sel, c["t"]], data[sel, c["T_a_b1"]], lw=1, label=f"G={G:g}")
    ax.set_xlabel("t (1/omega_m)")
    ax.set_ylabel("T")
    ax.legend()


def _clone(table, fig):
    ax = fig.subplots()
    data = np.asarray(table.rows, dtype=float)
    c = table.column_index()
    for n in np.unique(data[:, c["n_th"]]):
        sel = data[:, c["n_th"]] == n
        ax.plot(data[sel, c["kappa"]], data[sel, c["fidelity_b1"]], "o-", ms=3, label=f"b_1, n_th={n:g}")
        ax.plot(data[sel, c["kappa"]], data[sel, c["fidelity_a"]], "s--", ms=3, label=f"a, n_th={n:g}")
    ax.set_xlabel("kappa")
    ax.set_ylabel("clone fidelity")
    ax.legend()


def _compare(table, fig):
    axes = fig.subplots(2, 1, sharex=True)
    data = np.asarray(table.rows, dtype=float)
    c = table.column_index()
    for ax, suffix in zip(axes, ("ideal", "diss")):
        for model in ("OM", "WOM"):
            ax.plot(data[:, c["t"]], data[:, c[f"F_{model}_{suffix}"]], lw=0.6, label=model)
        ax.set_ylabel(f"F ({suffix})")
        ax.legend()
    axes[-1].set_xlabel("t (1/omega_m)")


def _mean_field(table, fig):
    axes = fig.subplots(1, 2)
    data = np.asarray(table.rows, dtype=float)
    c = table.column_index()
    axes[0].plot(data[:, c["alpha_re"]], data[:, c["alpha_im"]], lw=0.6)
    axes[0].set_xlabel("Re alpha")
    axes[0].set_ylabel("Im alpha")
    axes[1].plot(data[:, c["t"]], data[:, c["abs_G_eff_1"]], lw=0.8)
    axes[1].set_xlabel("t (1/omega_m)")
    axes[1].set_ylabel("|G'|")


_RENDERERS = {
    "effparams": _effparams,
    "gate-fidelity": _gate_fidelity,
    "sweep-kappa-nth": _sweep,
    "transmission": _transmission,
    "clone": _clone,
    "compare-wom": _compare,
    "mean-field": _mean_field,
}


def render(table, path: str | Path) -> Path:
    """Draw ``table`` with the renderer for its command and save it as PNG."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig = plt.figure()
        try:
            _RENDERERS[table.command](table, fig)
            fig.tight_layout()
            fig.savefig(path)
        finally:
            plt.close(fig)
    return path
