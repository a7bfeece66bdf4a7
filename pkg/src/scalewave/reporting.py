"""Post-run reporting: comparison tables, plot-ready data files, figures.

Reads the artifacts a run directory holds (config.resolved, loss_history.csv,
rates.csv, snapshots/, summary) and writes a report/ subdirectory with
plain-text tables, gnuplot-compatible .dat files plus a ready-to-run plot
script, and rendered PNG figures.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .problems import (BURGERS_FIT_REF, DIFFUSION1D_EXPONENTS_REF,
                       DIFFUSION1D_RATIO_REF, DIFFUSION2D_BETA_REF,
                       DIFFUSION2D_RATIO_REF, PME_ALPHA_THEORY, PME_RATIO_REF,
                       burgers_exact, nagumo_exact, nagumo_speed)

REQUIRED = ("config.resolved", "loss_history.csv", "rates.csv", "summary", "snapshots")


class MissingArtifacts(RuntimeError):
    def __init__(self, missing):
        self.missing = list(missing)
        super().__init__("missing run artifacts: " + ", ".join(self.missing))


def _read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def load_run(run_dir: str) -> dict:
    """All artifacts of one run; raises MissingArtifacts when incomplete."""
    missing = [name for name in REQUIRED
               if not os.path.exists(os.path.join(run_dir, name))]
    if missing:
        raise MissingArtifacts(missing)
    with open(os.path.join(run_dir, "config.resolved")) as fh:
        config = json.load(fh)
    with open(os.path.join(run_dir, "summary")) as fh:
        summary = json.load(fh)
    loss_header, loss = _read_csv(os.path.join(run_dir, "loss_history.csv"))
    rates_header, rates = _read_csv(os.path.join(run_dir, "rates.csv"))
    snapdir = os.path.join(run_dir, "snapshots")
    snaps = {}
    for name in sorted(os.listdir(snapdir)):
        if not name.endswith(".csv"):
            continue
        tau = float(name[len("tau_"):-len(".csv")])
        snaps[tau] = _read_csv(os.path.join(snapdir, name))
    if not snaps:
        raise MissingArtifacts(["snapshots/*.csv"])
    return {"config": config, "summary": summary,
            "loss": (loss_header, loss), "rates": (rates_header, rates),
            "snapshots": snaps}


def reference_rows(case: str, summary: dict, config: dict) -> list[tuple]:
    """(quantity, run value, reference value, |difference|) rows per case."""
    rd = summary["readings"]
    mt = summary["metrics"]
    rows = []
    if case == "nagumo":
        target = abs(nagumo_speed(config["params"]["a"]))
        rows.append(("|dc/dt| tail mean", abs(rd["speed"]), target, mt["speed_abs_error"]))
        rows.append(("front profile L-inf (after shift)", mt["profile_linf"], 0.0,
                     mt["profile_linf"]))
    elif case == "diffusion1d":
        rows.append(("G/C", rd["rate_ratio"], DIFFUSION1D_RATIO_REF, mt["ratio_error"]))
        if "alpha" in rd:
            rows.append(("width exponent alpha", rd["alpha"], DIFFUSION1D_EXPONENTS_REF[0],
                         mt.get("alpha_error", abs(rd["alpha"] - DIFFUSION1D_EXPONENTS_REF[0]))))
            rows.append(("amplitude exponent beta", rd["beta"], DIFFUSION1D_EXPONENTS_REF[1],
                         mt.get("beta_error", abs(rd["beta"] - DIFFUSION1D_EXPONENTS_REF[1]))))
    elif case == "diffusion2d":
        rows.append(("G/C", rd["rate_ratio"], DIFFUSION2D_RATIO_REF, mt["ratio_error"]))
        if "beta" in rd:
            rows.append(("amplitude exponent beta", rd["beta"], DIFFUSION2D_BETA_REF,
                         mt.get("beta_error", abs(rd["beta"] - DIFFUSION2D_BETA_REF))))
    elif case == "pme2d":
        rows.append(("G/C", rd["rate_ratio"], PME_RATIO_REF, mt["ratio_error"]))
        if "alpha" in rd:
            rows.append(("similarity exponent alpha", rd["alpha"], PME_ALPHA_THEORY,
                         mt.get("alpha_error", abs(rd["alpha"] - PME_ALPHA_THEORY))))
    elif case == "burgers":
        for key, ref in zip(("a_star", "c_star", "t_star"), BURGERS_FIT_REF):
            rows.append((key, rd[key], ref, abs(rd[key] - ref)))
        rows.append(("profile L-inf vs fitted form", mt["profile_linf"], 0.0,
                     mt["profile_linf"]))
    return rows


def format_table(case: str, rows: list[tuple]) -> str:
    head = f"{'quantity':<34} {'run value':>14} {'reference':>12} {'|diff|':>10}"
    lines = [f"case: {case}", head, "-" * len(head)]
    for q, v, ref, d in rows:
        lines.append(f"{q:<34} {v:>14.6f} {ref:>12.6f} {d:>10.2e}")
    return "\n".join(lines) + "\n"


def oracle_overlay(case: str, summary: dict, config: dict, y: np.ndarray):
    """Analytic curve to draw against the final profile, where one exists."""
    rd = summary["readings"]
    if case == "nagumo":
        return nagumo_exact(y - rd["profile_shift"])
    if case == "burgers":
        return burgers_exact(y, rd["t_star"], rd["a_star"], rd["c_star"],
                             config["params"]["nu"])
    if case == "diffusion1d":
        # steady attractor under the template constraints is the template itself
        return np.exp(-y**2)
    return None


_GNUPLOT = """# renders the .dat files next to this script into PNG figures
set terminal pngcairo size 900,600
set datafile separator whitespace

set output "loss_curve.gp.png"
set logscale y
set xlabel "iteration"; set ylabel "loss"
plot "loss.dat" using 1:2 with lines title "total", \\
     "loss.dat" using 1:3 with lines title "pde", \\
     "loss.dat" using 1:4 with lines title "constraints", \\
     "loss.dat" using 1:5 with lines title "boundary", \\
     "loss.dat" using 1:6 with lines title "initial"
unset logscale y

set output "rates.gp.png"
set xlabel "tau"; set ylabel "rate"
plot for [i=2:*] "rates.dat" using 1:i with lines title columnheader(i)

set output "profile.gp.png"
set xlabel "y"; set ylabel "w"
plot "profile.dat" using 1:2 with lines title "run", \\
     "profile.dat" using 1:3 with points pointtype 6 pointsize 0.4 title "reference"
"""


def _write_dat(path: str, header: list[str], columns: list[np.ndarray]) -> None:
    body = np.column_stack(columns)
    with open(path, "w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        np.savetxt(fh, body, fmt="%.17g")


def _render_figures(outdir: str, run: dict) -> list[str]:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    case = run["config"]["case"]
    written = []

    _, loss = run["loss"]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    labels = ("total", "pde", "constraints", "boundary", "initial")
    for col, lab in zip((5, 1, 2, 3, 4), labels):
        ax.semilogy(loss[:, 0], np.maximum(loss[:, col], 1e-300), label=lab, lw=1.0)
    ax.set_xlabel("iteration"); ax.set_ylabel("loss"); ax.legend(); ax.set_title(case)
    fig.tight_layout()
    p = os.path.join(outdir, "loss_curve.png")
    fig.savefig(p, dpi=110); plt.close(fig); written.append(p)

    rates_header, rates = run["rates"]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for j, name in enumerate(rates_header[1:], start=1):
        ax.plot(rates[:, 0], rates[:, j], label=name, lw=1.2)
    ax.set_xlabel("tau"); ax.set_ylabel("rate"); ax.legend(); ax.set_title(case)
    fig.tight_layout()
    p = os.path.join(outdir, "rates.png")
    fig.savefig(p, dpi=110); plt.close(fig); written.append(p)

    tau_last = max(run["snapshots"])
    header, snap = run["snapshots"][tau_last]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if len(header) == 2:              # 1-D: coordinate, w
        y, w = snap[:, 0], snap[:, 1]
        ax.plot(y, w, lw=1.3, label=f"run, tau={tau_last:g}")
        overlay = oracle_overlay(case, run["summary"], run["config"], y)
        if overlay is not None:
            ax.plot(y, overlay, "k--", lw=1.0, label="reference")
        ax.set_xlabel("y"); ax.set_ylabel("w"); ax.legend()
    else:                             # 2-D: xi, eta, w on a tensor grid
        xi = np.unique(snap[:, 0])
        eta = np.unique(snap[:, 1])
        W = snap[:, 2].reshape(xi.size, eta.size)
        pc = ax.pcolormesh(xi, eta, W.T, shading="auto")
        fig.colorbar(pc, ax=ax, label="w")
        ax.set_xlabel("xi"); ax.set_ylabel("eta")
    ax.set_title(f"{case} profile")
    fig.tight_layout()
    p = os.path.join(outdir, "profile.png")
    fig.savefig(p, dpi=110); plt.close(fig); written.append(p)
    return written


def write_report(run_dir: str) -> tuple[str, list[str]]:
    """Emit tables, .dat files, plot script and figures under run_dir/report.

    Returns (rendered table text, list of written file paths).
    """
    run = load_run(run_dir)
    case = run["config"]["case"]
    outdir = os.path.join(run_dir, "report")
    os.makedirs(outdir, exist_ok=True)
    written = []

    table = format_table(case, reference_rows(case, run["summary"], run["config"]))
    p = os.path.join(outdir, "tables.txt")
    with open(p, "w") as fh:
        fh.write(table)
    written.append(p)

    loss_header, loss = run["loss"]
    _write_dat(os.path.join(outdir, "loss.dat"),
               ["iter", "total", "e_pde", "e_alg", "e_bc", "e_ic", "grad_norm", "step"],
               [loss[:, 0], loss[:, 5], loss[:, 1], loss[:, 2], loss[:, 3], loss[:, 4],
                loss[:, 6], loss[:, 7]])
    written.append(os.path.join(outdir, "loss.dat"))

    rates_header, rates = run["rates"]
    _write_dat(os.path.join(outdir, "rates.dat"), rates_header,
               [rates[:, j] for j in range(rates.shape[1])])
    written.append(os.path.join(outdir, "rates.dat"))

    tau_last = max(run["snapshots"])
    header, snap = run["snapshots"][tau_last]
    if len(header) == 2:
        y, w = snap[:, 0], snap[:, 1]
        overlay = oracle_overlay(case, run["summary"], run["config"], y)
        cols = [y, w] + ([overlay] if overlay is not None else [])
        names = header + (["reference"] if overlay is not None else [])
        _write_dat(os.path.join(outdir, "profile.dat"), names, cols)
    else:
        # gnuplot splot blocks: blank line between xi slices
        xi = np.unique(snap[:, 0])
        with open(os.path.join(outdir, "profile.dat"), "w") as fh:
            fh.write("# " + " ".join(header) + "\n")
            for xv in xi:
                rows = snap[snap[:, 0] == xv]
                np.savetxt(fh, rows, fmt="%.17g")
                fh.write("\n")
    written.append(os.path.join(outdir, "profile.dat"))

    p = os.path.join(outdir, "plots.gp")
    with open(p, "w") as fh:
        fh.write(_GNUPLOT)
    written.append(p)

    written.extend(_render_figures(outdir, run))
    return table, written
