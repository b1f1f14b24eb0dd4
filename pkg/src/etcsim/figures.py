"""Reference-study figure data: run the bundled scenarios, write the series.

Each figure id names one panel (or panel pair) of the bundled simulation
study. `render_figure` runs whatever scenarios that panel needs, writes
the underlying data series as CSV, and renders a PNG of the panel next to
them. All output files are prefixed with the figure id.

    fig1a  V and its envelope, instantaneous, 12-bit budget
    fig1b  V and its envelope, instantaneous, 20-bit budget
    fig2a  bits per transmission, instantaneous, 20-bit budget
    fig2b  cumulative bits for both budgets vs the rate bounds
    fig3   V and its envelope, lagged channel with disturbance
    fig4   inter-transmission times for the fig3 run
    fig5   bits per transmission and cumulative bits for the fig3 run
    fig6   forced-overspend experiment: per-event bits and the
           cumulative comparison of the minimal and overspending runs
    fig6b  the comparison panel of fig6 alone
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import matplotlib

matplotlib.use("Agg")  # file rendering only; no display server in scope
import matplotlib.pyplot as plt
import numpy as np

from . import rates
from .config import ResolvedConfig, derive_from_config, load_raw, resolve_config
from .errors import ConfigError
from .simulate import SimTrace, run

__all__ = ["FIGURE_IDS", "bundled_config_path", "bundled_names", "render_figure"]

FIGURE_IDS = (
    "fig1a",
    "fig1b",
    "fig2a",
    "fig2b",
    "fig3",
    "fig4",
    "fig5",
    "fig6",
    "fig6b",  # alias: the cumulative-comparison panel of fig6
)

_MAX_SERIES_ROWS = 4001


def bundled_names() -> list[str]:
    root = resources.files("etcsim") / "configs"
    return sorted(p.name.removesuffix(".json") for p in root.iterdir() if p.name.endswith(".json"))


def bundled_config_path(name: str) -> Path:
    """Filesystem path of a bundled scenario config."""
    path = resources.files("etcsim") / "configs" / f"{name}.json"
    if not path.is_file():
        raise ConfigError(
            f"no bundled config named {name!r}; have: {', '.join(bundled_names())}"
        )
    return Path(str(path))


def _run_bundled(name: str) -> tuple[SimTrace, ResolvedConfig]:
    resolved = resolve_config(load_raw(bundled_config_path(name)))
    consts = derive_from_config(resolved)
    return run(resolved.scenario, consts), resolved


def _thin(n_rows: int) -> np.ndarray:
    if n_rows <= _MAX_SERIES_ROWS:
        return np.arange(n_rows)
    return np.unique(np.linspace(0, n_rows - 1, _MAX_SERIES_ROWS).astype(int))


def _write_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.17g}" if isinstance(v, float) else str(v) for v in row) + "\n")


def _envelope_series(trace: SimTrace, out: Path, fig_id: str, title: str) -> list[Path]:
    idx = _thin(trace.t.size)
    csv_path = out / f"{fig_id}_v_envelope.csv"
    _write_csv(
        csv_path,
        ["t", "V", "Vd"],
        [trace.t[idx], trace.V[idx], trace.Vd[idx]],
    )
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(trace.t[idx], trace.Vd[idx], "k--", label="$V_d$")
    ax.plot(trace.t[idx], trace.V[idx], "b-", label="$V$")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("Lyapunov value")
    ax.set_title(title)
    ax.legend()
    png_path = out / f"{fig_id}.png"
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def _bits_profile_series(trace: SimTrace, out: Path, fig_id: str, title: str) -> list[Path]:
    ks = np.array([ev.k for ev in trace.events])
    ts = np.array([ev.t_send for ev in trace.events])
    ps = np.array([ev.p for ev in trace.events])
    bits = np.array([ev.bits for ev in trace.events])
    csv_path = out / f"{fig_id}_bits_per_event.csv"
    _write_csv(csv_path, ["k", "tk", "p", "bits"], [ks, ts, ps, bits])
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.stem(ks, bits)
    ax.set_xlabel("transmission k")
    ax.set_ylabel("bits")
    ax.set_title(title)
    png_path = out / f"{fig_id}.png"
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def _fig2b(out: Path) -> list[Path]:
    tr12, rc12 = _run_bundled("inst_pbar12")
    tr20, rc20 = _run_bundled("inst_pbar20")
    c12 = derive_from_config(rc12)
    grid = np.linspace(float(tr12.t[0]), float(tr12.t[-1]), 2001)
    cum12 = rates.realized_interp(tr12, grid)
    cum20 = rates.realized_interp(tr20, grid)
    de0 = rc12.scenario.resolved_de0()
    vd0 = float(tr12.Vd[0])
    nec = rates.necessary_bits(
        grid, grid[0], (2.0 * de0) ** c12.n, vd0, c12.plant.A, c12.beta, c12.P
    )
    suf = rates.sufficient_bits_inst(grid, grid[0], de0, vd0, c12)
    csv_path = out / "fig2b_cumulative_bits.csv"
    _write_csv(
        csv_path,
        ["t", "necessary", "sufficient", "cumulative_pbar12", "cumulative_pbar20"],
        [grid, np.asarray(nec), np.asarray(suf), cum12, cum20],
    )
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.plot(grid, suf, "k-", label="sufficient")
    ax.plot(grid, cum12, "b-", label=r"realized, $\bar p = 12$")
    ax.plot(grid, cum20, "g-", label=r"realized, $\bar p = 20$")
    ax.plot(grid, nec, "r--", label="necessary")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("cumulative bits")
    ax.set_title("Cumulative transmitted bits vs rate bounds")
    ax.legend()
    png_path = out / "fig2b.png"
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def _fig4(out: Path) -> list[Path]:
    trace, _ = _run_bundled("noninst_disturbance")
    tks = trace.transmission_times()
    gaps = np.diff(tks)
    ks = np.arange(1, gaps.size + 1)
    csv_path = out / "fig4_intertransmission_times.csv"
    _write_csv(csv_path, ["k", "Tk"], [ks, gaps])
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    ax.stem(ks, gaps)
    ax.set_xlabel("transmission k")
    ax.set_ylabel("$T_k$ [s]")
    ax.set_title("Inter-transmission times, lagged channel with disturbance")
    png_path = out / "fig4.png"
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_path, png_path]


def _fig5(out: Path) -> list[Path]:
    trace, _ = _run_bundled("noninst_disturbance")
    ks = np.array([ev.k for ev in trace.events])
    bits = np.array([ev.bits for ev in trace.events])
    csv_bits = out / "fig5_bits_per_event.csv"
    _write_csv(csv_bits, ["k", "bits"], [ks, bits])
    grid = np.linspace(float(trace.t[0]), float(trace.t[-1]), 2001)
    cum = rates.realized_interp(trace, grid)
    csv_cum = out / "fig5_cumulative_bits.csv"
    _write_csv(csv_cum, ["t", "cumulative_bits"], [grid, cum])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    ax1.stem(ks, bits)
    ax1.set_xlabel("transmission k")
    ax1.set_ylabel("bits")
    ax1.set_title("Bits per transmission")
    ax2.plot(grid, cum, "b-")
    ax2.set_xlabel("t [s]")
    ax2.set_ylabel("cumulative bits")
    ax2.set_title("Cumulative bits")
    png_path = out / "fig5.png"
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    return [csv_bits, csv_cum, png_path]


def _fig6(out: Path, comparison_only: bool) -> list[Path]:
    tr1, _ = _run_bundled("noninst_nodist_sim1")
    tr2, _ = _run_bundled("noninst_nodist_sim2")
    grid = np.linspace(float(tr1.t[0]), float(tr1.t[-1]), 2001)
    cum1 = rates.realized_interp(tr1, grid)
    cum2 = rates.realized_interp(tr2, grid)
    fig_id = "fig6b" if comparison_only else "fig6"
    paths: list[Path] = []

    if not comparison_only:
        ks = np.array([ev.k for ev in tr2.events])
        bits = np.array([ev.bits for ev in tr2.events])
        csv_bits = out / "fig6_overspend_bits_per_event.csv"
        _write_csv(csv_bits, ["k", "bits"], [ks, bits])
        paths.append(csv_bits)

    csv_cmp = out / f"{fig_id}_cumulative_comparison.csv"
    _write_csv(
        csv_cmp,
        ["t", "cumulative_minimal", "cumulative_overspend"],
        [grid, cum1, cum2],
    )
    paths.append(csv_cmp)

    if comparison_only:
        fig, ax2 = plt.subplots(figsize=(5.0, 3.2))
    else:
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        ks = np.array([ev.k for ev in tr2.events])
        bits = np.array([ev.bits for ev in tr2.events])
        ax1.stem(ks, bits)
        ax1.set_xlabel("transmission k")
        ax1.set_ylabel("bits")
        ax1.set_title("Bits per transmission, overspending run")
    ax2.plot(grid, cum1, "b-", label="minimal bits each event")
    ax2.plot(grid, cum2, "g--", label="first four events forced to budget")
    ax2.set_xlabel("t [s]")
    ax2.set_ylabel("cumulative bits")
    ax2.set_title("Cumulative bits comparison")
    ax2.legend()
    png_path = out / f"{fig_id}.png"
    fig.tight_layout()
    fig.savefig(png_path, dpi=150)
    plt.close(fig)
    paths.append(png_path)
    return paths


def render_figure(fig_id: str, out_dir) -> list[Path]:
    """Write the CSV series and PNG for one figure id; returns the paths."""
    if fig_id not in FIGURE_IDS:
        raise ConfigError(
            f"unknown figure id {fig_id!r}; have: {', '.join(FIGURE_IDS)}"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    if fig_id == "fig1a":
        trace, _ = _run_bundled("inst_pbar12")
        return _envelope_series(trace, out, "fig1a", "Envelope tracking, 12-bit budget")
    if fig_id == "fig1b":
        trace, _ = _run_bundled("inst_pbar20")
        return _envelope_series(trace, out, "fig1b", "Envelope tracking, 20-bit budget")
    if fig_id == "fig2a":
        trace, _ = _run_bundled("inst_pbar20")
        return _bits_profile_series(
            trace, out, "fig2a", "Bits per transmission, 20-bit budget"
        )
    if fig_id == "fig2b":
        return _fig2b(out)
    if fig_id == "fig3":
        trace, _ = _run_bundled("noninst_disturbance")
        return _envelope_series(
            trace, out, "fig3", "Envelope tracking, lagged channel with disturbance"
        )
    if fig_id == "fig4":
        return _fig4(out)
    if fig_id == "fig5":
        return _fig5(out)
    return _fig6(out, comparison_only=fig_id == "fig6b")
