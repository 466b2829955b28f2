"""Static SVG plots of run and sweep CSVs.

Rendering is byte-deterministic: Agg backend, fixed SVG hash salt and no
date metadata.
"""

from enum import Enum
from pathlib import Path
from typing import Iterable

import matplotlib
import matplotlib.pyplot as plt
import pandas as pd

from ..learning.records import read_run_csv
from ..utils import NoDataError, SchemaMismatch

matplotlib.use("Agg")

RC_PARAMS = {"svg.hashsalt": "neuralq-lab", "svg.fonttype": "path", "figure.figsize": (6.0, 4.0)}
FINAL_GAP_COLUMNS = ("m", "L", "status", "final_q_gap_sq")


class PlotKind(Enum):
    Q_GAP = "q_gap"  # per-run q_gap_sq against t, log-log
    FINAL_GAP = "final_gap"  # per-sweep final q_gap_sq against m


def _save(fig, file_path: Path) -> Path:
    file_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(file_path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return file_path


def plot_q_gap(csv_path: Path, out_dir: Path) -> Path:
    metrics = read_run_csv(csv_path)
    fig, ax = plt.subplots()
    ax.loglog(metrics["t"] + 1, metrics["q_gap_sq"], linewidth=1.0)
    ax.set_xlabel("step t + 1")
    ax.set_ylabel("E[(Q(s,a; theta_t) - Q*(s,a))^2]")
    ax.set_title(Path(csv_path).stem)
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, Path(out_dir) / f"{Path(csv_path).stem}_q_gap.svg")


def plot_final_gap(csv_path: Path, out_dir: Path) -> Path:
    """Median final q_gap_sq over seeds against width m, one line per depth L.

    Raises:
        SchemaMismatch: If the aggregate lacks the needed columns
        NoDataError: If no cell finished successfully
    """
    try:
        aggregate = pd.read_csv(csv_path)
    except pd.errors.EmptyDataError:
        raise NoDataError(f"{csv_path} is empty")
    missing = [c for c in FINAL_GAP_COLUMNS if c not in aggregate.columns]
    if missing:
        raise SchemaMismatch(f"{csv_path} lacks aggregate columns {missing}")
    finished = aggregate[aggregate["status"] == "OK"]
    if finished.empty:
        raise NoDataError(f"{csv_path} has no finished cells")
    medians = finished.groupby(["L", "m"])["final_q_gap_sq"].median().reset_index()
    fig, ax = plt.subplots()
    for depth, rows in medians.groupby("L"):
        ax.loglog(rows["m"], rows["final_q_gap_sq"], marker="o", label=f"L = {depth}")
    ax.set_xlabel("width m")
    ax.set_ylabel("final q_gap_sq (median over seeds)")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    return _save(fig, Path(out_dir) / f"{Path(csv_path).stem}_final_gap.svg")


def emit_plots(csv_path: Path, out_dir: Path, kinds: Iterable[PlotKind] = (PlotKind.Q_GAP,)) -> list[Path]:
    """Render one SVG per requested kind; nothing is written when the input is invalid."""
    renderers = {PlotKind.Q_GAP: plot_q_gap, PlotKind.FINAL_GAP: plot_final_gap}
    with plt.rc_context(RC_PARAMS):
        return [renderers[PlotKind(kind)](Path(csv_path), Path(out_dir)) for kind in kinds]
