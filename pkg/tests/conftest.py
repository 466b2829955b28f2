import json
from pathlib import Path

import numpy as np
import pytest

from neuralq_lab.mdp import MdpSpec, build_mdp, uniform_policy
from neuralq_lab.mdp.mdp_json import random_mdp, save_mdp
from neuralq_lab.network import NetShape


def _flip_chain(p: float, gamma: float = 0.9, q: float | None = None) -> MdpSpec:
    """Two states, one action; leave state 0 with probability p and state 1 with q (default p)."""
    q = p if q is None else q
    transition = [[[1.0 - p, p]], [[q, 1.0 - q]]]
    return build_mdp(transition, [[1.0], [-1.0]], gamma)


def _single_state(rewards, gamma: float = 0.5) -> MdpSpec:
    """One state whose every action loops back to it."""
    n_actions = len(rewards)
    return build_mdp(np.ones((1, n_actions, 1)), [list(rewards)], gamma)


@pytest.fixture
def flip_chain():
    return _flip_chain


@pytest.fixture
def single_state():
    return _single_state


@pytest.fixture
def small_mdp() -> MdpSpec:
    return random_mdp(3, 2, gamma=0.5, seed=3)


@pytest.fixture
def small_policy(small_mdp):
    return uniform_policy(small_mdp)


@pytest.fixture
def tiny_shape(small_mdp) -> NetShape:
    return NetShape(d=small_mdp.feature_dim, m=8, L=2)


@pytest.fixture
def mdp_file(tmp_path, small_mdp) -> Path:
    return save_mdp(small_mdp, tmp_path / "mdps" / "small.json")


@pytest.fixture
def write_config(tmp_path):
    """Write a configuration document next to the test's MDP files and return its path."""

    def _write(document: dict, name: str = "config.json") -> Path:
        path = tmp_path / "configs" / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(document, indent=2), encoding="utf-8")
        return path

    return _write
