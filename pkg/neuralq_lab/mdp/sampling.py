"""Trajectory sampling under a learning policy."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import MdpSpec, PolicySpec, Transition


def _draw(probabilities: np.ndarray, u: float) -> int:
    # Inverse CDF; float round-off in the last cumulative entry maps to the last index.
    index = int(np.searchsorted(np.cumsum(probabilities), u, side="right"))
    return min(index, len(probabilities) - 1)


def sample_transition(
    mdp: MdpSpec, policy: PolicySpec, s: int, rng: np.random.Generator
) -> Transition:
    """Sample a ~ pi(.|s), s' ~ P(.|s,a) and return the observed tuple.

    Each call consumes exactly two uniforms from rng.

    Raises:
        InvalidState: If s is not a state id of the MDP
    """
    s = mdp.check_state(s)
    u_action, u_next = rng.random(2)
    a = _draw(policy.probabilities[s], u_action)
    s_next = _draw(mdp.transition[s, a], u_next)
    return Transition(s=s, a=a, r=float(mdp.reward[s, a]), s_next=s_next)


def sample_state(distribution: np.ndarray, rng: np.random.Generator) -> int:
    """Draw one state from an explicit distribution (one uniform)."""
    return _draw(np.asarray(distribution), rng.random())


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Column arrays of consecutive transitions."""

    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray

    def __len__(self) -> int:
        return len(self.s)

    def __getitem__(self, t: int) -> Transition:
        return Transition(
            s=int(self.s[t]), a=int(self.a[t]), r=float(self.r[t]), s_next=int(self.s_next[t])
        )

    @classmethod
    def from_transitions(cls, transitions: list[Transition]) -> "Trajectory":
        return cls(
            s=np.array([tr.s for tr in transitions], dtype=np.int64),
            a=np.array([tr.a for tr in transitions], dtype=np.int64),
            r=np.array([tr.r for tr in transitions], dtype=np.float64),
            s_next=np.array([tr.s_next for tr in transitions], dtype=np.int64),
        )


def sample_trajectory(
    mdp: MdpSpec,
    policy: PolicySpec,
    n_steps: int,
    rng: np.random.Generator,
    s0: int = 0,
    reset_distribution: Optional[np.ndarray] = None,
) -> Trajectory:
    """Sample n_steps transitions along one continuous trajectory.

    Args:
        mdp: The MDP
        policy: Learning policy
        n_steps: Number of transitions
        rng: Random stream, advanced deterministically
        s0: Starting state
        reset_distribution: If given, every step after the first starts from a
            fresh state drawn from this distribution instead of the previous
            s_next (i.i.d. resampling of the state chain).
    """
    transitions = []
    s = s0
    for t in range(n_steps):
        if reset_distribution is not None and t > 0:
            s = sample_state(reset_distribution, rng)
        tr = sample_transition(mdp, policy, s, rng)
        transitions.append(tr)
        s = tr.s_next
    return Trajectory.from_transitions(transitions)
