# Persistence of training runs: metrics CSV, metadata document, final snapshot.

import json
from pathlib import Path
from typing import Any, Dict, Optional

import pandas as pd

from ..network.snapshot import save_theta
from ..utils import NoDataError, SchemaMismatch
from . import METRIC_COLUMNS, RunRecord

FLOAT_FORMAT = "%.17g"


def run_metadata(record: RunRecord, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Resolved configuration and derived run constants, without wall time."""
    metadata = {
        "config": record.config.to_dict(),
        "n_params": record.config.shape.n_params,
        "omega": record.omega,
        "eta": record.eta,
        "gamma": record.gamma,
        "initial_state": record.initial_state,
        "weighting": record.weighting,
        "n_logged": len(record.metrics),
    }
    if extra:
        metadata.update(extra)
    return metadata


def write_run(
    record: RunRecord,
    out_dir: Path,
    name: str,
    snapshot: bool = False,
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Write {name}.csv, {name}.json and optionally {name}.theta into out_dir.

    Returns:
        Path of the metrics CSV
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{name}.csv"
    record.metrics.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    with open(out_dir / f"{name}.json", "w", encoding="utf-8") as f:
        json.dump(run_metadata(record, extra), f, indent=2, sort_keys=True)
        f.write("\n")
    if snapshot:
        save_theta(record.theta_final, out_dir / f"{name}.theta")
    return csv_path


def read_run_csv(csv_path: Path) -> pd.DataFrame:
    """Load a run metrics CSV and check its schema.

    Raises:
        SchemaMismatch: If the header differs from the run schema
        NoDataError: If the file holds no logged rows
    """
    try:
        metrics = pd.read_csv(csv_path)
    except pd.errors.EmptyDataError:
        raise NoDataError(f"{csv_path} is empty")
    if list(metrics.columns) != METRIC_COLUMNS:
        raise SchemaMismatch(
            f"{csv_path} has columns {list(metrics.columns)}, expected {METRIC_COLUMNS}"
        )
    if metrics.empty:
        raise NoDataError(f"{csv_path} holds no logged steps")
    return metrics
