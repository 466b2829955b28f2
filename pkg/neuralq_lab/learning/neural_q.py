"""Projected neural Q-learning with Gaussian initialization.

For t = 0..T-1, along one trajectory of the learning policy:

    delta_t   = f(theta_t; phi(s_t, a_t)) - (r_t + gamma * max_b f(theta_t; phi(s_{t+1}, b)))
    g_t       = delta_t * grad f(theta_t; phi(s_t, a_t))
    theta_t+1 = Proj_ball(theta_t - eta * g_t)
"""

import logging
import math
import time
from typing import Callable, Iterator, Optional

import numpy as np
import pandas as pd

from ..mdp import MdpSpec, PolicySpec, QTable, Transition, state_action_weights
from ..mdp.oracles import stationary_distribution, value_iteration
from ..mdp.sampling import Trajectory, sample_state, sample_transition
from ..network import Theta
from ..network.linearized import linearize
from ..network.projection import BallConstraint, Projection, project_ball_detailed
from ..network.relu import forward, forward_batch, gradient, init_gaussian
from ..utils import BadDiscount, ShapeMismatch, WidthCapExceeded, resolve_max_params
from . import METRIC_COLUMNS, RunConfig, RunRecord, SamplingMode, StepRule

Evaluator = Callable[[Theta, np.ndarray], float]

logger = logging.getLogger(__name__)


def td_error(
    theta: Theta,
    tr: Transition,
    gamma: float,
    features: np.ndarray,
    evaluate: Evaluator = forward,
) -> float:
    """Temporal difference error of one transition.

    Args:
        theta: Network parameters
        tr: Observed transition
        gamma: Discount factor
        features: Feature table phi[s, a, :]
        evaluate: Network evaluator f(theta; x); the plain network by default
    """
    q_sa = evaluate(theta, features[tr.s, tr.a])
    bootstrap = max(evaluate(theta, features[tr.s_next, b]) for b in range(features.shape[1]))
    return q_sa - (tr.r + gamma * bootstrap)


def semi_gradient(
    theta: Theta,
    tr: Transition,
    gamma: float,
    features: np.ndarray,
    delta: Optional[float] = None,
) -> np.ndarray:
    """g_t = td_error * grad f(theta; phi(s, a)).

    A td_error already computed at theta may be passed as delta.
    """
    if delta is None:
        delta = td_error(theta, tr, gamma, features)
    return delta * gradient(theta, features[tr.s, tr.a])


def step_size(config: RunConfig) -> float:
    """Constant step size eta for the configured rule."""
    m, T, beta = config.shape.m, config.T, config.beta
    if config.step_rule is StepRule.THEOREM_SQRT_T:
        return 1.0 / (2.0 * beta * m * math.sqrt(T))
    if config.step_rule is StepRule.THEOREM_T:
        logger.warning(
            "Using the theorem-T step size 1/(2 beta m T); the convergence rate derivation assumes 1/(2 beta m sqrt(T))"
        )
        return 1.0 / (2.0 * beta * m * T)
    return float(config.eta)


def _effective_gamma(config: RunConfig, mdp: MdpSpec) -> float:
    if config.gamma is None:
        return mdp.gamma
    if not 0.0 <= config.gamma < 1.0:
        raise BadDiscount(f"Run discount gamma = {config.gamma!r} outside [0, 1)")
    return float(config.gamma)


def _check_inputs(config: RunConfig, mdp: MdpSpec) -> None:
    cap = resolve_max_params(config.max_params)
    if config.shape.n_params > cap:
        raise WidthCapExceeded(
            f"Network {config.shape} has {config.shape.n_params} parameters, cap is {cap}"
        )
    if config.shape.d != mdp.feature_dim:
        raise ShapeMismatch(
            f"Network input dimension {config.shape.d} does not match feature dimension {mdp.feature_dim}"
        )


def _step(
    theta: Theta,
    tr: Transition,
    gamma: float,
    features: np.ndarray,
    eta: float,
    constraint: BallConstraint,
) -> tuple[float, np.ndarray, Projection]:
    delta = td_error(theta, tr, gamma, features)
    g = semi_gradient(theta, tr, gamma, features, delta=delta)
    projection = project_ball_detailed(theta.with_flat(theta.flat - eta * g), constraint)
    return delta, g, projection


def train(
    config: RunConfig,
    mdp: MdpSpec,
    policy: PolicySpec,
    q_star: Optional[QTable] = None,
) -> RunRecord:
    """Run projected neural Q-learning and log its metrics.

    Args:
        config: Run configuration
        mdp: The MDP
        policy: Learning policy generating the data
        q_star: Optional precomputed optimal Q table for the run's discount;
            computed by value iteration when omitted

    Returns:
        The RunRecord; identical inputs give a bit-identical record

    Raises:
        WidthCapExceeded: If the network exceeds the parameter cap
        ShapeMismatch: If the network input dimension differs from the features
        BadDiscount: If the run's discount override is outside [0, 1)
    """
    started = time.perf_counter()
    _check_inputs(config, mdp)
    gamma = _effective_gamma(config, mdp)
    eta = step_size(config)
    omega = config.omega
    logger.info("Step rule %s: eta = %.6e, omega = %.6e", config.step_rule.value, eta, omega)

    init_seed, data_seed = np.random.SeedSequence(config.seed).spawn(2)
    init_rng = np.random.default_rng(init_seed)
    data_rng = np.random.default_rng(data_seed)

    mu = stationary_distribution(mdp, policy)
    weights = state_action_weights(mu, policy).ravel()
    if q_star is None:
        q_star = value_iteration(mdp, gamma=gamma)
    q_star = np.asarray(q_star, dtype=np.float64)

    theta0 = init_gaussian(config.shape, init_rng)
    constraint = BallConstraint(theta0, omega)
    model = linearize(theta0)
    features = mdp.features
    flat_features = features.reshape(-1, mdp.feature_dim)
    anchor_values, anchor_grads = model.tabulate(features)
    anchor_values = anchor_values.ravel()
    anchor_grads = anchor_grads.reshape(-1, config.shape.n_params)

    if config.initial_state is None:
        s = sample_state(mu, data_rng)
    else:
        s = mdp.check_state(config.initial_state)
    initial_state = s

    rows, distance_rows, transitions = [], [], []
    theta = theta0
    for t in range(config.T):
        if config.sampling is SamplingMode.IID and t > 0:
            s = sample_state(mu, data_rng)
        tr = sample_transition(mdp, policy, s, data_rng)
        transitions.append(tr)
        delta, g, projection = _step(theta, tr, gamma, features, eta, constraint)

        if t % config.log_every == 0 or t == config.T - 1:
            q_values = forward_batch(theta, flat_features)
            q_lin = anchor_values + anchor_grads @ (theta - theta0)
            rows.append(
                (
                    t,
                    delta * delta,
                    float(np.linalg.norm(g)),
                    float(projection.distances.max()),
                    int(projection.any_active),
                    float(weights @ (q_values - q_star.ravel()) ** 2),
                    float(weights @ (q_values - q_lin) ** 2),
                )
            )
            distance_rows.append(projection.distances)

        theta = projection.theta
        s = tr.s_next

    wall_time = time.perf_counter() - started
    logger.info("Trained %s for T=%d in %.2fs", config.shape, config.T, wall_time)
    return RunRecord(
        config=config,
        metrics=pd.DataFrame(rows, columns=METRIC_COLUMNS),
        layer_distances=np.array(distance_rows),
        theta0=theta0,
        theta_final=theta,
        trajectory=Trajectory.from_transitions(transitions),
        omega=omega,
        eta=eta,
        gamma=gamma,
        initial_state=initial_state,
        wall_time=wall_time,
        q_star=q_star,
    )


def replay(record: RunRecord, mdp: MdpSpec) -> Iterator[tuple[int, Theta, Transition]]:
    """Re-walk a recorded run, yielding (t, theta_t, transition_t) for t = 0..T-1.

    The iterates are recomputed with the same arithmetic as training, so they
    are bit-identical to the ones the run visited.
    """
    constraint = BallConstraint(record.theta0, record.omega)
    theta = record.theta0
    for t in range(len(record.trajectory)):
        tr = record.trajectory[t]
        yield t, theta, tr
        theta = _step(theta, tr, record.gamma, mdp.features, record.eta, constraint)[2].theta
