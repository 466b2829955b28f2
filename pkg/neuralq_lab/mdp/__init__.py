# Finite MDPs, learning policies and observed transitions.
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
import numpy.typing as npt

from ..utils import (
    BadDiscount,
    InvalidArgument,
    InvalidState,
    NonStochasticRow,
    RewardOutOfRange,
    ShapeMismatch,
)

ROW_SUM_TOLERANCE = 1e-9

# Q[s][a] tables are plain float64 arrays of shape (|S|, |A|).
QTable = npt.NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class MdpSpec:
    """A validated finite MDP with a feature map over state-action pairs."""

    n_states: int
    n_actions: int
    transition: np.ndarray  # P[s, a, s']
    reward: np.ndarray  # r[s, a] in [-1, 1]
    gamma: float
    features: np.ndarray  # phi[s, a, :], every row inside the unit ball
    features_rescaled: bool = False

    @property
    def feature_dim(self) -> int:
        return self.features.shape[2]

    def check_state(self, s: int) -> int:
        if not 0 <= int(s) < self.n_states:
            raise InvalidState(f"State {s} outside 0..{self.n_states - 1}")
        return int(s)


class PolicyKind(Enum):
    UNIFORM = "uniform"
    FIXED = "fixed-stochastic"
    EPSILON_GREEDY = "epsilon-greedy"


@dataclass(frozen=True, eq=False)
class PolicySpec:
    """A stationary learning policy, always materialized as pi[s, a]."""

    kind: PolicyKind
    probabilities: np.ndarray
    epsilon: Optional[float] = None
    q_reference: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class Transition:
    """One observed tuple (s_t, a_t, r_t, s_{t+1})."""

    s: int
    a: int
    r: float
    s_next: int


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=np.float64, copy=True)
    array.setflags(write=False)
    return array


def one_hot_features(n_states: int, n_actions: int) -> np.ndarray:
    """Default feature map: one-hot over (s, a) pairs, d = |S||A|."""
    d = n_states * n_actions
    return np.eye(d).reshape(n_states, n_actions, d)


def build_mdp(
    transition,
    reward,
    gamma: float,
    features=None,
) -> MdpSpec:
    """Validate raw tables and build an MdpSpec.

    Args:
        transition: Array-like of shape (|S|, |A|, |S|) with P[s][a][s']
        reward: Array-like of shape (|S|, |A|) with rewards in [-1, 1]
        gamma: Discount factor in the open interval (0, 1)
        features: Optional array-like of shape (|S|, |A|, d). Defaults to
            one-hot features over state-action pairs.

    Returns:
        The validated MdpSpec. Rows off by at most 1e-9 are renormalized;
        feature tables leaving the unit ball are rescaled by their largest
        row norm and flagged with features_rescaled=True.

    Raises:
        ShapeMismatch: If the tables are not shape-consistent
        NonStochasticRow: If a row has a negative entry or sums to 1 +/- >1e-9
        RewardOutOfRange: If any |r(s, a)| > 1
        BadDiscount: If gamma is not in (0, 1)
    """
    P = np.asarray(transition, dtype=np.float64)
    r = np.asarray(reward, dtype=np.float64)
    if P.ndim != 3 or P.shape[0] != P.shape[2] or P.shape[0] < 1 or P.shape[1] < 1:
        raise ShapeMismatch(f"Transition tensor must have shape (S, A, S), got {P.shape}")
    n_states, n_actions = P.shape[0], P.shape[1]
    if r.shape != (n_states, n_actions):
        raise ShapeMismatch(
            f"Reward table must have shape {(n_states, n_actions)}, got {r.shape}"
        )

    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise NonStochasticRow("Transition probabilities must be finite and non-negative")
    row_sums = P.sum(axis=2)
    worst = np.unravel_index(np.argmax(np.abs(row_sums - 1.0)), row_sums.shape)
    if abs(row_sums[worst] - 1.0) > ROW_SUM_TOLERANCE:
        raise NonStochasticRow(
            f"Row P[{worst[0]}][{worst[1]}] sums to {row_sums[worst]!r}"
        )
    P = P / row_sums[:, :, None]

    if not np.all(np.isfinite(r)) or np.any(np.abs(r) > 1.0):
        s, a = np.unravel_index(np.argmax(np.abs(np.nan_to_num(r, nan=np.inf))), r.shape)
        raise RewardOutOfRange(f"Reward r[{s}][{a}] = {r[s, a]!r} outside [-1, 1]")

    gamma = float(gamma)
    if not 0.0 < gamma < 1.0:
        raise BadDiscount(f"Discount gamma = {gamma!r} outside (0, 1)")

    rescaled = False
    if features is None:
        phi = one_hot_features(n_states, n_actions)
    else:
        phi = np.asarray(features, dtype=np.float64)
        if phi.ndim == 2 and phi.shape[0] == n_states * n_actions:
            phi = phi.reshape(n_states, n_actions, -1)
        if phi.ndim != 3 or phi.shape[:2] != (n_states, n_actions) or phi.shape[2] < 1:
            raise ShapeMismatch(
                f"Feature table must have shape ({n_states}, {n_actions}, d), got {phi.shape}"
            )
        largest = float(np.linalg.norm(phi, axis=2).max())
        if largest > 1.0:
            phi = phi / largest
            rescaled = True

    return MdpSpec(
        n_states=n_states,
        n_actions=n_actions,
        transition=_readonly(P),
        reward=_readonly(r),
        gamma=gamma,
        features=_readonly(phi),
        features_rescaled=rescaled,
    )


def greedy_actions(q: QTable) -> np.ndarray:
    """Greedy action per state; ties go to the lowest action index."""
    return np.argmax(np.asarray(q), axis=1)


def uniform_policy(mdp: MdpSpec) -> PolicySpec:
    probs = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
    return PolicySpec(kind=PolicyKind.UNIFORM, probabilities=_readonly(probs))


def fixed_policy(mdp: MdpSpec, probabilities) -> PolicySpec:
    """Explicit stochastic policy pi(a|s).

    Raises:
        ShapeMismatch: If the table is not (|S|, |A|)
        InvalidArgument: If some pi(.|s) is not a probability distribution
    """
    probs = np.asarray(probabilities, dtype=np.float64)
    if probs.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeMismatch(
            f"Policy table must have shape {(mdp.n_states, mdp.n_actions)}, got {probs.shape}"
        )
    if np.any(probs < 0) or np.any(np.abs(probs.sum(axis=1) - 1.0) > ROW_SUM_TOLERANCE):
        raise InvalidArgument("Every pi(.|s) must be a probability distribution")
    probs = probs / probs.sum(axis=1, keepdims=True)
    return PolicySpec(kind=PolicyKind.FIXED, probabilities=_readonly(probs))


def epsilon_greedy_policy(mdp: MdpSpec, q_reference: QTable, epsilon: float) -> PolicySpec:
    """Epsilon-greedy policy against a frozen Q table.

    The greedy action of each state receives 1 - epsilon + epsilon/|A|, every
    action receives epsilon/|A|. The reference table is copied so the
    induced chain stays time-homogeneous.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise InvalidArgument(f"epsilon must lie in [0, 1], got {epsilon}")
    q = np.asarray(q_reference, dtype=np.float64)
    if q.shape != (mdp.n_states, mdp.n_actions):
        raise ShapeMismatch(
            f"Q table must have shape {(mdp.n_states, mdp.n_actions)}, got {q.shape}"
        )
    probs = np.full((mdp.n_states, mdp.n_actions), epsilon / mdp.n_actions)
    probs[np.arange(mdp.n_states), greedy_actions(q)] += 1.0 - epsilon
    return PolicySpec(
        kind=PolicyKind.EPSILON_GREEDY,
        probabilities=_readonly(probs),
        epsilon=float(epsilon),
        q_reference=_readonly(q),
    )


def induced_chain(mdp: MdpSpec, policy: PolicySpec) -> np.ndarray:
    """State chain P_pi(s'|s) = sum_a pi(a|s) P(s'|s,a)."""
    return np.einsum("sa,sat->st", policy.probabilities, mdp.transition)


def state_action_weights(mu: np.ndarray, policy: PolicySpec) -> np.ndarray:
    """Joint weights mu(s) pi(a|s) over state-action pairs."""
    return np.asarray(mu)[:, None] * policy.probabilities
