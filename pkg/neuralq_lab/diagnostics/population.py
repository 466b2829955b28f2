"""Population (exact expectation) versions of the TD update under mu_pi x pi x P.

For tabular MDPs every expectation below is a finite weighted sum with
weights mu_pi(s) pi(a|s) P(s'|s, a).
"""

from dataclasses import dataclass
import logging
from typing import Optional

import numpy as np

from ..learning import RunRecord
from ..learning.neural_q import replay
from ..mdp import MdpSpec, PolicySpec, QTable, state_action_weights
from ..mdp.oracles import bellman_optimality, stationary_distribution
from ..network import Theta, split_layers
from ..network.linearized import LinearizedModel
from ..network.projection import BallConstraint, project_ball
from ..network.relu import forward_batch, gradient_batch
from ..utils import InvalidArgument

logger = logging.getLogger(__name__)


def _stationary(mdp: MdpSpec, policy: PolicySpec, mu: Optional[np.ndarray]) -> np.ndarray:
    return stationary_distribution(mdp, policy) if mu is None else np.asarray(mu)


def _bellman_residual(q: np.ndarray, mdp: MdpSpec, gamma: float) -> np.ndarray:
    # E_{s'}[q(s,a) - r(s,a) - gamma max_b q(s',b)]; the TD error is affine in the next-state value.
    return q - mdp.reward - gamma * (mdp.transition @ q.max(axis=1))


def population_semi_gradient(
    theta: Theta,
    model: LinearizedModel,
    mdp: MdpSpec,
    policy: PolicySpec,
    gamma: Optional[float] = None,
    mu: Optional[np.ndarray] = None,
) -> np.ndarray:
    """m_bar(theta) = E[delta_hat(s, a, s'; theta) grad f(theta0; phi(s, a))].

    delta_hat is the TD error of the linearized network.
    """
    gamma = mdp.gamma if gamma is None else gamma
    weights = state_action_weights(_stationary(mdp, policy, mu), policy)
    _, grads = model.tabulate(mdp.features)
    residual = _bellman_residual(model.table(theta, mdp.features), mdp, gamma)
    return np.einsum("sa,sap->p", weights * residual, grads)


def population_gradient(
    theta: Theta,
    mdp: MdpSpec,
    policy: PolicySpec,
    gamma: Optional[float] = None,
    mu: Optional[np.ndarray] = None,
) -> np.ndarray:
    """g_bar(theta) = E[delta(s, a, s'; theta) grad f(theta; phi(s, a))] for the network itself."""
    gamma = mdp.gamma if gamma is None else gamma
    weights = state_action_weights(_stationary(mdp, policy, mu), policy)
    flat_features = mdp.features.reshape(-1, mdp.feature_dim)
    q = forward_batch(theta, flat_features).reshape(mdp.n_states, mdp.n_actions)
    grads = gradient_batch(theta, flat_features)
    return (weights * _bellman_residual(q, mdp, gamma)).ravel() @ grads


def msbe(
    q: QTable,
    mdp: MdpSpec,
    policy: PolicySpec,
    gamma: Optional[float] = None,
    mu: Optional[np.ndarray] = None,
) -> float:
    """Mean-squared Bellman error E_{mu, pi}[(TQ - Q)^2] of a Q table."""
    weights = state_action_weights(_stationary(mdp, policy, mu), policy)
    q = np.asarray(q, dtype=np.float64)
    return float(np.sum(weights * (bellman_optimality(mdp, q, gamma) - q) ** 2))


def network_q_table(theta: Theta, mdp: MdpSpec) -> np.ndarray:
    flat_features = mdp.features.reshape(-1, mdp.feature_dim)
    return forward_batch(theta, flat_features).reshape(mdp.n_states, mdp.n_actions)


def estimation_gap_check(
    theta_a: Theta,
    theta_b: Theta,
    model: LinearizedModel,
    mdp: MdpSpec,
    policy: PolicySpec,
    beta: float,
    gamma: Optional[float] = None,
    mu: Optional[np.ndarray] = None,
) -> float:
    """Margin <m_bar(a) - m_bar(b), a - b> - beta E_{mu, pi}[(f_hat(a) - f_hat(b))^2].

    Non-negative whenever the regularity check passed for the beta used.
    """
    mu = _stationary(mdp, policy, mu)
    weights = state_action_weights(mu, policy)
    displacement = theta_a - theta_b
    drift = population_semi_gradient(theta_a, model, mdp, policy, gamma, mu) - population_semi_gradient(
        theta_b, model, mdp, policy, gamma, mu
    )
    gap = model.table(theta_a, mdp.features) - model.table(theta_b, mdp.features)
    return float(drift @ displacement - beta * np.sum(weights * gap**2))


def random_point_in_ball(constraint: BallConstraint, rng: np.random.Generator) -> Theta:
    """Per layer: uniform direction, radius omega * u with u ~ U(0, 1)."""
    theta0 = constraint.theta0
    blocks = []
    for w0 in split_layers(theta0.shape, theta0.flat):
        direction = rng.standard_normal(w0.shape)
        direction *= constraint.omega * rng.random() / np.linalg.norm(direction)
        blocks.append((w0 + direction).ravel())
    return project_ball(theta0.with_flat(np.concatenate(blocks)), constraint)


@dataclass(frozen=True, eq=False)
class GapSearch:
    min_margin: float
    n_pairs: int
    n_violations: int  # margins below -tolerance
    worst_pair: tuple[Theta, Theta]


def search_gap_violation(
    model: LinearizedModel,
    mdp: MdpSpec,
    policy: PolicySpec,
    constraint: BallConstraint,
    beta: float,
    n_pairs: int,
    rng: np.random.Generator,
    gamma: Optional[float] = None,
    tolerance: float = 1e-8,
) -> GapSearch:
    """Evaluate the estimation-gap margin on random pairs in the ball and keep the worst."""
    if n_pairs < 1:
        raise InvalidArgument(f"n_pairs must be positive, got {n_pairs}")
    mu = _stationary(mdp, policy, None)
    worst, worst_pair, violations = np.inf, None, 0
    for _ in range(n_pairs):
        theta_a = random_point_in_ball(constraint, rng)
        theta_b = random_point_in_ball(constraint, rng)
        margin = estimation_gap_check(theta_a, theta_b, model, mdp, policy, beta, gamma, mu)
        violations += margin < -tolerance
        if margin < worst:
            worst, worst_pair = margin, (theta_a, theta_b)
    logger.info("Estimation gap: %d of %d pairs below -%g", violations, n_pairs, tolerance)
    return GapSearch(min_margin=float(worst), n_pairs=n_pairs, n_violations=int(violations), worst_pair=worst_pair)


@dataclass(frozen=True, eq=False)
class StationaryPoint:
    theta: Theta
    converged: bool
    iterations: int
    last_step: float  # ||theta_{k+1} - theta_k||_2 at the final iteration


def solve_stationary_point(
    model: LinearizedModel,
    mdp: MdpSpec,
    policy: PolicySpec,
    constraint: BallConstraint,
    eta: float,
    tol: float = 1e-10,
    max_iterations: int = 100_000,
    gamma: Optional[float] = None,
) -> StationaryPoint:
    """Damped projected iteration theta <- Proj(theta - eta m_bar(theta)) from theta0.

    Non-convergence is reported through `converged`, never raised.
    """
    if not eta > 0:
        raise InvalidArgument(f"eta must be positive, got {eta}")
    mu = _stationary(mdp, policy, None)
    theta = constraint.theta0
    step = np.inf
    for iteration in range(1, max_iterations + 1):
        drift = population_semi_gradient(theta, model, mdp, policy, gamma, mu)
        nxt = project_ball(theta.with_flat(theta.flat - eta * drift), constraint)
        step = float(np.linalg.norm(nxt - theta))
        theta = nxt
        if step <= tol:
            logger.info("Stationary point iteration converged in %d iterations", iteration)
            return StationaryPoint(theta, True, iteration, step)
    logger.warning("Stationary point iteration stopped after %d iterations (last step %.3e)", max_iterations, step)
    return StationaryPoint(theta, False, max_iterations, step)


def stationary_gap_along_run(
    record: RunRecord,
    model: LinearizedModel,
    mdp: MdpSpec,
    policy: PolicySpec,
    theta_star: Theta,
    every: int = 1,
) -> float:
    """Average of E_{mu, pi}[(f_hat(theta_t) - f_hat(theta*))^2] over the replayed iterates."""
    weights = state_action_weights(stationary_distribution(mdp, policy), policy)
    target = model.table(theta_star, mdp.features)
    gaps = [
        float(np.sum(weights * (model.table(theta, mdp.features) - target) ** 2))
        for t, theta, _ in replay(record, mdp)
        if t % every == 0
    ]
    return float(np.mean(gaps))
