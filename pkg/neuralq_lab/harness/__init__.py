# Experiment orchestration: resolved configurations and sweep results.
from dataclasses import dataclass, field
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from .. import __version__
from ..learning import RunConfig, SamplingMode, StepRule
from ..mdp import MdpSpec, PolicySpec, epsilon_greedy_policy, fixed_policy, uniform_policy
from ..mdp.mdp_json import load_mdp, random_mdp
from ..mdp.oracles import value_iteration
from ..network import NetShape

# Keys of a resolved run cell, in canonical order.
CELL_KEYS = (
    "m",
    "L",
    "T",
    "seed",
    "omega_coeff",
    "beta",
    "step_rule",
    "eta",
    "gamma",
    "log_every",
    "sampling",
    "initial_state",
    "max_params",
)


@dataclass
class ExperimentConfig:
    """A fully resolved experiment: every default applied, every seed explicit."""

    mdp: Dict[str, Any]  # {"file": path} or {"generator": {...}}
    policy: Dict[str, Any]
    run: Dict[str, Any]  # run defaults
    sweep: Optional[Dict[str, List[Any]]]
    runs: Optional[List[Dict[str, Any]]]
    diagnostics: Dict[str, Any]
    output_dir: Path
    workers: int = 1
    snapshot: bool = False
    cells: List[Dict[str, Any]] = field(default_factory=list)
    source_path: Optional[Path] = None

    @property
    def mdp_path(self) -> Optional[Path]:
        if "file" not in self.mdp:
            return None
        path = Path(self.mdp["file"])
        if not path.is_absolute() and self.source_path is not None:
            path = self.source_path.parent / path
        return path

    def cell_ids(self) -> List[str]:
        return [
            f"{i:03d}_m{c['m']}_L{c['L']}_T{c['T']}_seed{c['seed']}"
            for i, c in enumerate(self.cells)
        ]

    def to_dict(self) -> Dict[str, Any]:
        """Resolved configuration, itself a valid configuration document."""
        mdp = dict(self.mdp)
        if self.mdp_path is not None:
            mdp["file"] = str(self.mdp_path.resolve())
        data = {
            "mdp": mdp,
            "policy": self.policy,
            "run": self.run,
            "diagnostics": self.diagnostics,
            "output_dir": str(self.output_dir),
            "workers": self.workers,
            "snapshot": self.snapshot,
        }
        if self.sweep is not None:
            data["sweep"] = self.sweep
        if self.runs is not None:
            data["runs"] = self.runs
        return data

    @property
    def config_hash(self) -> str:
        """sha256 over everything that determines outputs (not workers or output_dir)."""
        mdp = dict(self.mdp)
        if self.mdp_path is not None:
            mdp = {"file_sha256": hashlib.sha256(self.mdp_path.read_bytes()).hexdigest()}
        canonical = {
            "mdp": mdp,
            "policy": self.policy,
            "cells": self.cells,
            "diagnostics": self.diagnostics,
            "snapshot": self.snapshot,
            "version": __version__,
        }
        payload = json.dumps(canonical, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def build_mdp(self) -> MdpSpec:
        if self.mdp_path is not None:
            return load_mdp(self.mdp_path)
        return random_mdp(**self.mdp["generator"])

    def build_policy(self, mdp: MdpSpec) -> PolicySpec:
        kind = self.policy["kind"]
        if kind == "uniform":
            return uniform_policy(mdp)
        if kind == "fixed":
            return fixed_policy(mdp, self.policy["probabilities"])
        return epsilon_greedy_policy(mdp, value_iteration(mdp), self.policy["epsilon"])

    def run_config(self, cell: Dict[str, Any], mdp: MdpSpec) -> RunConfig:
        return RunConfig(
            shape=NetShape(d=mdp.feature_dim, m=cell["m"], L=cell["L"]),
            T=cell["T"],
            omega_coeff=cell["omega_coeff"],
            beta=cell["beta"],
            step_rule=StepRule(cell["step_rule"]),
            eta=cell["eta"],
            gamma=cell["gamma"],
            seed=cell["seed"],
            log_every=cell["log_every"],
            sampling=SamplingMode(cell["sampling"]),
            initial_state=cell["initial_state"],
            max_params=cell["max_params"],
        )


@dataclass
class SweepResult:
    """One aggregate row per grid cell plus provenance."""

    aggregate: pd.DataFrame
    timings: pd.DataFrame
    config_hash: str
    version: str
    output_dir: Path

    @property
    def failed(self) -> List[str]:
        return list(self.aggregate.loc[self.aggregate["status"] != "OK", "cell_id"])

    @property
    def n_failed(self) -> int:
        return len(self.failed)
