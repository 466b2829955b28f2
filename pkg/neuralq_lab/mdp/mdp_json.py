# Handling of MDP definition files (JSON).
#
# Layout: {"n_states": S, "n_actions": A, "gamma": g,
#          "transition": [...S*A*S floats, row-major over (s, a, s')],
#          "reward": [...S*A floats, row-major over (s, a)],
#          "features": [...S*A*d floats, row-major over (s, a, k)]}   (optional)
# Nested lists of the natural shapes are accepted as well.

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

from ..utils import ConfigParseError, MissingRequired, ShapeMismatch, UnknownKey
from . import MdpSpec, build_mdp

MDP_KEYS = {"n_states", "n_actions", "gamma", "transition", "reward", "features"}
REQUIRED_KEYS = ("n_states", "n_actions", "gamma", "transition", "reward")

logger = logging.getLogger(__name__)


def _reshape(values, shape: tuple, name: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.float64)
    if array.size != int(np.prod(shape)):
        raise ShapeMismatch(f"'{name}' holds {array.size} values, expected {int(np.prod(shape))}")
    return array.reshape(shape)


def mdp_from_dict(data: Dict[str, Any]) -> MdpSpec:
    """Build a validated MdpSpec from a parsed MDP document."""
    for key in data:
        if key not in MDP_KEYS:
            raise UnknownKey(key, "mdp")
    for key in REQUIRED_KEYS:
        if key not in data:
            raise MissingRequired(key, "mdp")

    n_states, n_actions = int(data["n_states"]), int(data["n_actions"])
    transition = _reshape(data["transition"], (n_states, n_actions, n_states), "transition")
    reward = _reshape(data["reward"], (n_states, n_actions), "reward")
    features = None
    if data.get("features") is not None:
        raw = np.asarray(data["features"], dtype=np.float64)
        if raw.size % (n_states * n_actions):
            raise ShapeMismatch(
                f"'features' holds {raw.size} values, not a multiple of {n_states * n_actions}"
            )
        features = raw.reshape(n_states, n_actions, raw.size // (n_states * n_actions))
    return build_mdp(transition, reward, data["gamma"], features)


def mdp_to_dict(mdp: MdpSpec, include_features: bool = True) -> Dict[str, Any]:
    data = {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "gamma": mdp.gamma,
        "transition": mdp.transition.ravel().tolist(),
        "reward": mdp.reward.ravel().tolist(),
    }
    if include_features:
        data["features"] = mdp.features.ravel().tolist()
    return data


def load_mdp(file_path: Path) -> MdpSpec:
    """Load and validate an MDP definition file.

    Raises:
        ConfigParseError: If the file is not valid JSON (with line/column)
        UnknownKey, MissingRequired: If the document does not follow the layout
        MdpValidationError: If the tables violate the MDP constraints
    """
    file_path = Path(file_path)
    with open(file_path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigParseError(str(file_path), e.lineno, e.colno, e.msg)
    mdp = mdp_from_dict(data)
    logger.info("Loaded MDP with %d states and %d actions from %s", mdp.n_states, mdp.n_actions, file_path)
    return mdp


def save_mdp(mdp: MdpSpec, file_path: Path, include_features: bool = True) -> Path:
    """Write an MDP definition file; floats are emitted with full precision."""
    file_path = Path(file_path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    with open(file_path, "w", encoding="utf-8") as f:
        json.dump(mdp_to_dict(mdp, include_features), f, indent=2)
        f.write("\n")
    return file_path


def random_mdp(
    n_states: int,
    n_actions: int,
    gamma: float = 0.9,
    seed: int = 0,
    feature_dim: Optional[int] = None,
    dirichlet_alpha: float = 1.0,
) -> MdpSpec:
    """Seeded random MDP.

    Transition rows are Dirichlet(alpha) draws, so every entry is positive and
    every induced chain is irreducible and aperiodic. Rewards are uniform on
    [-1, 1]. Features are one-hot unless feature_dim is given, in which case
    they are Gaussian rows normalized to unit length.
    """
    rng = np.random.default_rng(seed)
    transition = rng.dirichlet(np.full(n_states, dirichlet_alpha), size=(n_states, n_actions))
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    features = None
    if feature_dim is not None:
        features = rng.standard_normal((n_states, n_actions, feature_dim))
        features /= np.linalg.norm(features, axis=2, keepdims=True)
    return build_mdp(transition, reward, gamma, features)
