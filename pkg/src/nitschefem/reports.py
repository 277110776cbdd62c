"""CSV tables and companion matplotlib figures for study/trace runs.

CSV cells use '.' decimals and 16-significant-digit scientific notation so
rates can be recomputed losslessly from the files; runs of the same config
produce byte-identical tables.
"""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int,)):
        return str(value)
    return f"{float(value):.15e}"


def study_header(n_sets):
    cols = ["h", "nx", "ny", "dofs"]
    cols += [f"c_tr_{i + 1}" for i in range(n_sets)]
    cols += [f"c_pen_{i + 1}" for i in range(n_sets)]
    cols += ["l2_error", "h1_semi_error", "energy_error",
             "l2_rate", "h1_rate", "energy_rate",
             "quasi_opt_ratio", "solve_status"]
    return cols


def write_study_csv(path, report):
    n_sets = len(report.rows[0].c_tr)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(study_header(n_sets))
        for row in report.rows:
            cells = [fmt(row.h), row.nx, row.ny, row.dofs]
            cells += [fmt(c) for c in row.c_tr]
            cells += [fmt(c) for c in row.c_pen]
            cells += [fmt(row.l2), fmt(row.h1_semi), fmt(row.energy),
                      fmt(row.l2_rate), fmt(row.h1_rate), fmt(row.energy_rate),
                      fmt(row.quasi_ratio), row.status]
            writer.writerow(cells)


TRACE_HEADER = ["nx", "ny", "h", "dofs", "set", "operator", "lambda_max",
                "c_tr", "gamma", "c_pen", "rayleigh_ratio"]


def write_trace_csv(path, rows):
    """rows: dicts keyed by the TRACE_HEADER column names."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_HEADER)
        for row in rows:
            writer.writerow([row["nx"], row["ny"], fmt(row["h"]), row["dofs"],
                             row["set"], row["operator"], fmt(row["lambda_max"]),
                             fmt(row["c_tr"]), fmt(row["gamma"]),
                             fmt(row["c_pen"]), fmt(row.get("rayleigh_ratio"))])


_NORMS = (("l2", "L2 error"), ("h1_semi", "H1-seminorm error"),
          ("energy", "energy-norm error"))


def render_study_figure(path, reports, title):
    """Log-log convergence plot, one panel per norm, variants overlaid."""
    fig, axes = plt.subplots(1, 3, figsize=(12.0, 3.6), sharex=True)
    for ax, (attr, label) in zip(axes, _NORMS):
        for variant, report in reports.items():
            hs = [row.h for row in report.rows if getattr(row, attr) is not None]
            es = [getattr(row, attr) for row in report.rows
                  if getattr(row, attr) is not None]
            if hs:
                ax.loglog(hs, es, "o-", label=variant.value)
        ax.set_xlabel("h")
        ax.set_ylabel(label)
        ax.grid(True, which="both", alpha=0.3)
    if axes[0].get_legend_handles_labels()[0]:
        axes[0].legend()
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_trace_figure(path, rows, title):
    """Estimated trace constants against mesh size, one line per operator."""
    fig, ax = plt.subplots(figsize=(5.2, 3.8))
    by_op = {}
    for row in rows:
        by_op.setdefault(row["operator"], []).append((row["h"], row["c_tr"]))
    for op, pts in by_op.items():
        pts = sorted(pts, reverse=True)
        ax.semilogx([p[0] for p in pts], [p[1] for p in pts], "o-", label=op)
    ax.set_xlabel("h")
    ax.set_ylabel("C_tr")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
