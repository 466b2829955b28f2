"""Seeded sweeps over run configurations."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from .. import __version__
from ..learning.neural_q import train
from ..learning.records import FLOAT_FORMAT, write_run
from ..utils import MissingRequired, NeuralQError, format_summary, handle_lab_exceptions
from . import ExperimentConfig, SweepResult
from .config import save_config

AGGREGATE_COLUMNS = [
    "cell_id",
    "m",
    "L",
    "T",
    "seed",
    "omega_coeff",
    "beta",
    "gamma",
    "omega",
    "eta",
    "status",
    "final_q_gap_sq",
    "mean_td_err_sq",
    "final_lin_gap_sq",
    "max_layer_dist",
]
FINAL_FRACTION = 0.1

logger = logging.getLogger(__name__)


def final_window_mean(values: pd.Series, fraction: float = FINAL_FRACTION) -> float:
    """Mean over the last `fraction` of logged rows (at least one row)."""
    n = max(1, math.ceil(len(values) * fraction))
    return float(values.iloc[-n:].mean())


def _discard_partial(out_dir: Path, cell_id: str) -> None:
    for path in out_dir.glob(f"{cell_id}.*"):
        if path.is_file():
            path.unlink(missing_ok=True)


def _run_cell(config: ExperimentConfig, cell_id: str, cell: Dict[str, Any]) -> tuple[Dict[str, Any], float]:
    """Train one cell and write its files; failures are recorded, never raised.

    A cell whose files cannot be written counts as failed and leaves no
    runs/{cell_id}.* files behind.
    """
    row: Dict[str, Any] = {"cell_id": cell_id, **{k: cell[k] for k in ("m", "L", "T", "seed", "omega_coeff", "beta", "gamma")}}
    runs_dir = config.output_dir / "runs"
    trained = False
    try:
        mdp = config.build_mdp()
        policy = config.build_policy(mdp)
        record = train(config.run_config(cell, mdp), mdp, policy)
        trained = True
        write_run(record, runs_dir, cell_id, snapshot=config.snapshot, extra={"cell_id": cell_id})
        metrics = record.metrics
        outcome = dict(
            gamma=record.gamma,
            omega=record.omega,
            eta=record.eta,
            status="OK",
            final_q_gap_sq=final_window_mean(metrics["q_gap_sq"]),
            mean_td_err_sq=float(metrics["td_err_sq"].mean()),
            final_lin_gap_sq=final_window_mean(metrics["lin_gap_sq"]),
            max_layer_dist=float(metrics["max_layer_dist"].max()),
        )
    except Exception as e:
        if isinstance(e, NeuralQError):
            logger.warning("Cell %s failed: %s: %s", cell_id, type(e).__name__, e)
        else:
            logger.error("Cell %s crashed: %s: %s", cell_id, type(e).__name__, e)
        if trained:
            _discard_partial(runs_dir, cell_id)
        row["status"] = f"FAILED({type(e).__name__})"
        return row, float("nan")

    row.update(outcome)
    logger.info("Cell %s done in %.2fs", cell_id, record.wall_time)
    return row, record.wall_time


def _run_cell_star(args) -> tuple[Dict[str, Any], float]:
    return _run_cell(*args)


def write_summary(result: SweepResult, file_path: Path) -> Path:
    aggregate = result.aggregate
    text = format_summary(
        "Sweep summary",
        config_hash=result.config_hash,
        version=result.version,
        cells=len(aggregate),
        failed=result.n_failed,
    )
    columns = ["cell_id", "status", "final_q_gap_sq", "mean_td_err_sq", "final_lin_gap_sq"]
    with open(file_path, "w", encoding="utf-8") as f:
        f.write(text.lstrip("\n") + "\n\n")
        f.write(aggregate[columns].to_string(index=False) + "\n")
    return file_path


@handle_lab_exceptions("sweep")
def run_sweep(config: ExperimentConfig, workers: Optional[int] = None, output_dir: Optional[Path] = None) -> SweepResult:
    """Run every cell of the configuration and write the sweep artifacts.

    Writes runs/{cell_id}.csv|json for each cell, aggregate.csv (one row per
    cell, canonical order, no wall time), timings.csv, summary.md and the
    resolved configuration echo config.resolved.json.

    Args:
        config: Resolved experiment configuration
        workers: Optional override of config.workers
        output_dir: Optional override of config.output_dir

    Raises:
        MissingRequired: If the configuration has no run cells
    """
    if output_dir is not None:
        config = replace(config, output_dir=Path(output_dir))
    if workers is not None:
        config = replace(config, workers=workers)
    if not config.cells:
        raise MissingRequired("sweep")
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    save_config(config, out_dir / "config.resolved.json")

    jobs = [(config, cell_id, cell) for cell_id, cell in zip(config.cell_ids(), config.cells)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as executor:
            outcomes = list(executor.map(_run_cell_star, jobs))
    else:
        outcomes = [_run_cell_star(job) for job in jobs]

    aggregate = pd.DataFrame([row for row, _ in outcomes], columns=AGGREGATE_COLUMNS)
    aggregate = aggregate.sort_values("cell_id", kind="stable").reset_index(drop=True)
    timings = pd.DataFrame(
        {"cell_id": [row["cell_id"] for row, _ in outcomes], "wall_time": [wall for _, wall in outcomes]}
    ).sort_values("cell_id", kind="stable")

    aggregate.to_csv(out_dir / "aggregate.csv", index=False, float_format=FLOAT_FORMAT)
    timings.to_csv(out_dir / "timings.csv", index=False, float_format="%.3f")
    result = SweepResult(
        aggregate=aggregate,
        timings=timings,
        config_hash=config.config_hash,
        version=__version__,
        output_dir=out_dir,
    )
    write_summary(result, out_dir / "summary.md")
    logger.info("Sweep finished: %d cells, %d failed", len(aggregate), result.n_failed)
    return result
