"""Experiment configuration files (JSON, strict schema).

Example:

    {
      "mdp": {"generator": {"n_states": 5, "n_actions": 2, "gamma": 0.5, "seed": 7}},
      "policy": {"kind": "epsilon-greedy", "epsilon": 0.3, "value_source": "optimal"},
      "run": {"L": 2, "T": 50000, "log_every": 10},
      "sweep": {"m": [256], "seed": [0, 1, 2, 3, 4]},
      "output_dir": "out/convergence",
      "workers": 4
    }

Unknown keys are errors at every level. Every default is applied at load
time and echoed by ExperimentConfig.to_dict().
"""

import copy
import itertools
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..learning import SamplingMode, StepRule
from ..utils import ConfigError, ConfigParseError, MissingRequired, UnknownKey
from . import CELL_KEYS, ExperimentConfig

TOP_LEVEL_DEFAULTS = {
    "policy": {"kind": "uniform"},
    "run": {},
    "sweep": None,
    "runs": None,
    "diagnostics": {},
    "output_dir": "out",
    "workers": 1,
    "snapshot": False,
}

RUN_DEFAULTS = {
    "L": 2,
    "T": 1000,
    "seed": 0,
    "omega_coeff": 1.0,
    "beta": 0.5,
    "step_rule": StepRule.THEOREM_SQRT_T.value,
    "eta": None,
    "gamma": None,
    "log_every": 1,
    "sampling": SamplingMode.MARKOV.value,
    "initial_state": None,
    "max_params": None,
}

SWEEP_KEYS = ("m", "L", "T", "seed", "omega_coeff", "beta")

GENERATOR_DEFAULTS = {"gamma": 0.9, "seed": 0, "feature_dim": None, "dirichlet_alpha": 1.0}
GENERATOR_REQUIRED = ("n_states", "n_actions")

POLICY_KINDS = {
    "uniform": (),
    "fixed": ("probabilities",),
    "epsilon-greedy": ("epsilon", "value_source"),
}

DIAGNOSTICS_DEFAULTS = {
    "probes": ["sigma", "regularity", "mixing"],
    "widths": [64, 256, 1024],
    "n_seeds": 20,
    "horizon": 200,
    "safety": 0.9,
    "window": 100,
    "n_pairs": 100,
    "c1": 1.0,
    "delta": 0.1,
}
PROBES = ("sigma", "regularity", "mixing", "linearization", "bias", "gap")

INTEGER_KEYS = {"m", "L", "T", "seed", "log_every", "initial_state", "max_params"}

logger = logging.getLogger(__name__)


def _reject_unknown(section: Dict[str, Any], allowed, name: str) -> None:
    if not isinstance(section, dict):
        raise ConfigError(f"Section '{name}' must be an object")
    for key in section:
        if key not in allowed:
            raise UnknownKey(key, name)


def _check_value(key: str, value: Any, section: str) -> None:
    if value is None:
        return
    if key in INTEGER_KEYS and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"'{key}' in section '{section}' must be an integer, got {value!r}")
    for name, enum in (("step_rule", StepRule), ("sampling", SamplingMode)):
        if key == name and value not in {member.value for member in enum}:
            choices = ", ".join(member.value for member in enum)
            raise ConfigError(f"'{key}' must be one of {choices}, got {value!r}")


def _resolve_mdp(section: Dict[str, Any]) -> Dict[str, Any]:
    _reject_unknown(section, ("file", "generator"), "mdp")
    if ("file" in section) == ("generator" in section):
        raise ConfigError("Section 'mdp' needs exactly one of 'file' or 'generator'")
    if "file" in section:
        return {"file": str(section["file"])}
    generator = section["generator"]
    _reject_unknown(generator, GENERATOR_REQUIRED + tuple(GENERATOR_DEFAULTS), "mdp.generator")
    for key in GENERATOR_REQUIRED:
        if key not in generator:
            raise MissingRequired(key, "mdp.generator")
    return {"generator": {**GENERATOR_DEFAULTS, **generator}}


def _resolve_policy(section: Dict[str, Any]) -> Dict[str, Any]:
    _reject_unknown(section, ("kind", "probabilities", "epsilon", "value_source"), "policy")
    if "kind" not in section:
        raise MissingRequired("kind", "policy")
    kind = section["kind"]
    if kind not in POLICY_KINDS:
        raise ConfigError(f"Policy kind must be one of {', '.join(POLICY_KINDS)}, got {kind!r}")
    _reject_unknown(section, ("kind",) + POLICY_KINDS[kind], "policy")
    policy = {"kind": kind}
    if kind == "fixed":
        if "probabilities" not in section:
            raise MissingRequired("probabilities", "policy")
        policy["probabilities"] = section["probabilities"]
    elif kind == "epsilon-greedy":
        if "epsilon" not in section:
            raise MissingRequired("epsilon", "policy")
        value_source = section.get("value_source", "optimal")
        if value_source != "optimal":
            raise ConfigError(f"Only value_source 'optimal' is supported, got {value_source!r}")
        policy.update(epsilon=section["epsilon"], value_source=value_source)
    return policy


def _resolve_run(section: Dict[str, Any]) -> Dict[str, Any]:
    _reject_unknown(section, CELL_KEYS, "run")
    for key, value in section.items():
        _check_value(key, value, "run")
    return {**RUN_DEFAULTS, **section}


def _cell_order(cell: Dict[str, Any]) -> tuple:
    return tuple(cell[key] for key in SWEEP_KEYS)


def _expand_cells(run: Dict[str, Any], sweep, runs) -> List[Dict[str, Any]]:
    if sweep is not None and runs is not None:
        raise ConfigError("Use either 'sweep' or 'runs', not both")
    if sweep is not None:
        _reject_unknown(sweep, SWEEP_KEYS, "sweep")
        axes = []
        for key in SWEEP_KEYS:
            values = sweep.get(key, [run[key]] if run.get(key) is not None else None)
            if values is None:
                raise MissingRequired(key, "sweep")
            values = values if isinstance(values, list) else [values]
            for value in values:
                _check_value(key, value, "sweep")
            axes.append(values)
        cells = [{**run, **dict(zip(SWEEP_KEYS, point))} for point in itertools.product(*axes)]
    elif runs is not None:
        if not isinstance(runs, list):
            raise ConfigError("Section 'runs' must be a list")
        cells = []
        for i, entry in enumerate(runs):
            _reject_unknown(entry, CELL_KEYS, f"runs[{i}]")
            for key, value in entry.items():
                _check_value(key, value, f"runs[{i}]")
            cell = {**run, **entry}
            if cell.get("m") is None:
                raise MissingRequired("m", f"runs[{i}]")
            cells.append(cell)
    else:
        return []
    cells = [{key: cell[key] for key in CELL_KEYS} for cell in cells]
    return sorted(cells, key=_cell_order)


def _resolve_diagnostics(section: Dict[str, Any]) -> Dict[str, Any]:
    _reject_unknown(section, tuple(DIAGNOSTICS_DEFAULTS), "diagnostics")
    diagnostics = {**DIAGNOSTICS_DEFAULTS, **section}
    for probe in diagnostics["probes"]:
        if probe not in PROBES:
            raise ConfigError(f"Unknown probe {probe!r}; choose from {', '.join(PROBES)}")
    return diagnostics


def config_from_dict(data: Dict[str, Any], source_path: Optional[Path] = None) -> ExperimentConfig:
    """Resolve a parsed configuration document.

    Raises:
        UnknownKey: For any key outside the schema
        MissingRequired: For an absent required key
        ConfigError: For invalid values
    """
    _reject_unknown(data, ("mdp",) + tuple(TOP_LEVEL_DEFAULTS), "top level")
    if "mdp" not in data:
        raise MissingRequired("mdp")
    resolved = {**copy.deepcopy(TOP_LEVEL_DEFAULTS), **copy.deepcopy(data)}
    run = _resolve_run(resolved["run"])
    workers = resolved["workers"]
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ConfigError(f"'workers' must be a positive integer, got {workers!r}")
    return ExperimentConfig(
        mdp=_resolve_mdp(resolved["mdp"]),
        policy=_resolve_policy(resolved["policy"]),
        run=run,
        sweep=resolved["sweep"],
        runs=resolved["runs"],
        diagnostics=_resolve_diagnostics(resolved["diagnostics"]),
        output_dir=Path(resolved["output_dir"]),
        workers=workers,
        snapshot=bool(resolved["snapshot"]),
        cells=_expand_cells(run, resolved["sweep"], resolved["runs"]),
        source_path=source_path,
    )


def load_config(file_path: Path) -> ExperimentConfig:
    """Load and resolve an experiment configuration file.

    Raises:
        ConfigParseError: If the file is not valid JSON (line and column attached)
        UnknownKey, MissingRequired, ConfigError: If it does not follow the schema
    """
    file_path = Path(file_path)
    with open(file_path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigParseError(str(file_path), e.lineno, e.colno, e.msg)
    if not isinstance(data, dict):
        raise ConfigParseError(str(file_path), 1, 1, "top level must be an object")
    config = config_from_dict(data, source_path=file_path)
    logger.info("Loaded %s: %d cells, hash %s", file_path, len(config.cells), config.config_hash[:12])
    return config


def save_config(config: ExperimentConfig, file_path: Path) -> Path:
    """Write the resolved configuration echo."""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(config.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    return file_path


def with_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Copy of the configuration with every run seed replaced by seed."""
    data = config.to_dict()
    data["run"] = {**data["run"], "seed": seed}
    if data.get("sweep") is not None:
        data["sweep"] = {**data["sweep"], "seed": [seed]}
    if data.get("runs") is not None:
        data["runs"] = [{**entry, "seed": seed} for entry in data["runs"]]
    return config_from_dict(data, source_path=config.source_path)
