# Projected neural Q-learning: run configuration and run records.
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from ..mdp.sampling import Trajectory
from ..network import NetShape, Theta
from ..network.projection import radius_for
from ..utils import InvalidArgument

METRIC_COLUMNS = [
    "t",
    "td_err_sq",
    "grad_norm",
    "max_layer_dist",
    "proj_active",
    "q_gap_sq",
    "lin_gap_sq",
]


class StepRule(Enum):
    THEOREM_SQRT_T = "theorem-sqrtT"  # eta = 1 / (2 beta m sqrt(T))
    THEOREM_T = "theorem-T"  # eta = 1 / (2 beta m T)
    EXPLICIT = "explicit"


class SamplingMode(Enum):
    MARKOV = "markov"  # one continuous trajectory
    IID = "iid"  # every step restarts from s ~ mu_pi


@dataclass(frozen=True)
class RunConfig:
    """Inputs of one training run.

    gamma, when set, overrides the MDP's discount for this run and may be 0.
    initial_state, when unset, is drawn from the stationary distribution.
    """

    shape: NetShape
    T: int
    omega_coeff: float = 1.0
    beta: float = 0.5
    step_rule: StepRule = StepRule.THEOREM_SQRT_T
    eta: Optional[float] = None
    gamma: Optional[float] = None
    seed: int = 0
    log_every: int = 1
    sampling: SamplingMode = SamplingMode.MARKOV
    initial_state: Optional[int] = None
    max_params: Optional[int] = None

    def __post_init__(self):
        if self.T < 1:
            raise InvalidArgument(f"T must be at least 1, got {self.T}")
        if not self.omega_coeff > 0:
            raise InvalidArgument(f"omega_coeff must be positive, got {self.omega_coeff}")
        if not 0.0 < self.beta < 1.0:
            raise InvalidArgument(f"beta must lie in (0, 1), got {self.beta}")
        if self.step_rule is StepRule.EXPLICIT and not (self.eta is not None and self.eta > 0):
            raise InvalidArgument("The explicit step rule needs a positive eta")
        if self.log_every < 1:
            raise InvalidArgument(f"log_every must be at least 1, got {self.log_every}")

    @property
    def omega(self) -> float:
        return radius_for(self.shape, self.omega_coeff)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["step_rule"] = self.step_rule.value
        data["sampling"] = self.sampling.value
        return data


@dataclass(eq=False)
class RunRecord:
    """Everything a training run produced.

    Row t of metrics holds the TD error, gradient norm and gaps measured at
    theta_t, together with the outcome of the update at step t: whether the
    projection was active and the largest layer distance of theta_{t+1}.
    """

    config: RunConfig
    metrics: pd.DataFrame
    layer_distances: np.ndarray  # (n_logged, L), distances of theta_{t+1}
    theta0: Theta
    theta_final: Theta
    trajectory: Trajectory
    omega: float
    eta: float
    gamma: float
    initial_state: int
    weighting: str = "stationary"
    wall_time: float = 0.0
    q_star: Optional[np.ndarray] = field(default=None, repr=False)
