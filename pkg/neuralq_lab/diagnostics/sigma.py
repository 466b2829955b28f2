"""Sigma matrices of the initialization gradients and the alpha-regularity check.

    Sigma_pi       = (1/m) E_{s~mu, a~pi} [ g(s, a) g(s, a)^T ]
    Sigma*_pi(th)  = (1/m) E_{s~mu} [ g(s, b_th(s)) g(s, b_th(s))^T ],
    b_th(s)        = argmax_b |<g(s, b), th>|

with g(s, a) = grad f(theta0; phi(s, a)).
"""

import itertools
import logging
from typing import Optional, Union

import numpy as np
from scipy import linalg

from ..mdp import MdpSpec, PolicySpec, state_action_weights
from ..mdp.oracles import stationary_distribution
from ..network import Theta
from ..network.relu import gradient_batch
from ..utils import InvalidArgument, SigmaSingular
from . import RegularityResult, RegularityStatus, SigmaPair

SINGULAR_THRESHOLD = 1e-12
DENSE_PARAM_LIMIT = 4096
MAX_PATTERNS = 4096

logger = logging.getLogger(__name__)


def symmetrize(matrix: np.ndarray) -> np.ndarray:
    return 0.5 * (matrix + matrix.T)


def second_moment(grads: np.ndarray, weights: np.ndarray, m: int) -> np.ndarray:
    """(1/m) sum_i w_i g_i g_i^T for gradient rows g_i."""
    grads = np.asarray(grads, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    return symmetrize(grads.T @ (weights[:, None] * grads) / m)


def greedy_direction_actions(grads: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """b_th(s) = argmax_b |<g(s, b), th>|, ties to the lowest action index.

    Args:
        grads: Gradient table of shape (S, A, p)
        direction: Flat direction vector of length p
    """
    return np.argmax(np.abs(grads @ direction), axis=1)


def _gradient_table(theta0: Theta, mdp: MdpSpec) -> np.ndarray:
    flat = gradient_batch(theta0, mdp.features.reshape(-1, mdp.feature_dim))
    return flat.reshape(mdp.n_states, mdp.n_actions, -1)


def _direction_vector(direction: Union[Theta, np.ndarray], n_params: int) -> np.ndarray:
    vector = direction.flat if isinstance(direction, Theta) else np.asarray(direction, dtype=np.float64)
    if vector.shape != (n_params,):
        raise InvalidArgument(f"Direction must have {n_params} entries, got shape {vector.shape}")
    return vector


def _span_basis(grads: np.ndarray) -> np.ndarray:
    flat = grads.reshape(-1, grads.shape[-1])
    _, singular, vt = np.linalg.svd(flat, full_matrices=False)
    rank = int(np.sum(singular > singular[0] * max(flat.shape) * np.finfo(np.float64).eps)) if singular.size else 0
    return vt[:rank].T


def _sigma_pair(
    theta0: Theta,
    grads: np.ndarray,
    pair_weights: np.ndarray,
    state_weights: np.ndarray,
    direction: Optional[Union[Theta, np.ndarray]],
    reduce_to_span: bool,
    exact: bool,
    n_samples: Optional[int],
) -> SigmaPair:
    m, n_params = theta0.shape.m, theta0.shape.n_params
    basis = None
    coords = grads
    if reduce_to_span:
        basis = _span_basis(grads)
        coords = grads @ basis
    elif n_params > DENSE_PARAM_LIMIT:
        raise InvalidArgument(
            f"{n_params} parameters is too many for dense Sigma matrices; use reduce_to_span=True"
        )
    n_states, n_actions = grads.shape[:2]
    sigma_pi = second_moment(coords.reshape(n_states * n_actions, -1), pair_weights.ravel(), m)

    sigma_star = None
    if direction is not None:
        actions = greedy_direction_actions(grads, _direction_vector(direction, n_params))
        chosen = coords[np.arange(n_states), actions]
        sigma_star = second_moment(chosen, state_weights, m)
    return SigmaPair(
        sigma_pi=sigma_pi,
        sigma_star=sigma_star,
        theta0=theta0,
        exact=exact,
        n_samples=n_samples,
        basis=basis,
    )


def estimate_sigma(
    theta0: Theta,
    mdp: MdpSpec,
    policy: PolicySpec,
    direction: Optional[Union[Theta, np.ndarray]] = None,
    reduce_to_span: bool = False,
    mu: Optional[np.ndarray] = None,
) -> SigmaPair:
    """Exact Sigma_pi (and Sigma*_pi when a direction is given) over mu_pi x pi.

    Args:
        theta0: Initialization the gradients are taken at
        mdp: Tabular MDP
        policy: Learning policy
        direction: Direction th selecting the greedy action b_th(s)
        reduce_to_span: Express both matrices in an orthonormal basis of the
            gradient span instead of the full parameter space
        mu: Optional precomputed stationary distribution
    """
    mu = stationary_distribution(mdp, policy) if mu is None else np.asarray(mu)
    grads = _gradient_table(theta0, mdp)
    return _sigma_pair(
        theta0, grads, state_action_weights(mu, policy), mu, direction, reduce_to_span, True, None
    )


def estimate_sigma_mc(
    theta0: Theta,
    mdp: MdpSpec,
    policy: PolicySpec,
    n_samples: int,
    rng: np.random.Generator,
    direction: Optional[Union[Theta, np.ndarray]] = None,
    reduce_to_span: bool = False,
    mu: Optional[np.ndarray] = None,
) -> SigmaPair:
    """Monte-Carlo Sigma estimates from n_samples i.i.d. draws of (s, a) ~ mu_pi x pi."""
    if n_samples < 1:
        raise InvalidArgument(f"n_samples must be positive, got {n_samples}")
    mu = stationary_distribution(mdp, policy) if mu is None else np.asarray(mu)
    states = rng.choice(mdp.n_states, size=n_samples, p=mu)
    cumulative = np.cumsum(policy.probabilities[states], axis=1)
    actions = np.minimum((cumulative < rng.random(n_samples)[:, None]).sum(axis=1), mdp.n_actions - 1)
    counts = np.bincount(states * mdp.n_actions + actions, minlength=mdp.n_states * mdp.n_actions)
    pair_weights = (counts / n_samples).reshape(mdp.n_states, mdp.n_actions)
    grads = _gradient_table(theta0, mdp)
    return _sigma_pair(
        theta0, grads, pair_weights, pair_weights.sum(axis=1), direction, reduce_to_span, False, n_samples
    )


def _largest_generalized_eigenvalue(sigma_star: np.ndarray, sigma_pi: np.ndarray) -> float:
    return float(linalg.eigh(symmetrize(sigma_star), symmetrize(sigma_pi), eigvals_only=True).max())


def _check_not_singular(sigma_pi: np.ndarray) -> float:
    min_eigenvalue = float(np.linalg.eigvalsh(symmetrize(sigma_pi)).min())
    if min_eigenvalue < SINGULAR_THRESHOLD:
        raise SigmaSingular(
            f"Sigma_pi has minimum eigenvalue {min_eigenvalue:.3e} < {SINGULAR_THRESHOLD:g}; "
            "regularity check is inconclusive",
            min_eigenvalue,
        )
    return min_eigenvalue


def _result(
    largest: float, gamma: float, safety: float, min_eigenvalue: float, pattern=None
) -> RegularityResult:
    if largest <= 0.0 or gamma == 0.0:
        return RegularityResult(
            sup_alpha=float("inf"),
            unbounded=True,
            status=RegularityStatus.PASS,
            beta=None,
            safety=safety,
            gamma=gamma,
            min_eigenvalue=min_eigenvalue,
            pattern=pattern,
        )
    sup_alpha = 1.0 / (gamma * gamma * largest)
    admissible = safety * sup_alpha
    return RegularityResult(
        sup_alpha=sup_alpha,
        unbounded=False,
        status=RegularityStatus.PASS if sup_alpha > 1.0 else RegularityStatus.FAIL,
        beta=1.0 - admissible**-0.5 if admissible > 1.0 else None,
        safety=safety,
        gamma=gamma,
        min_eigenvalue=min_eigenvalue,
        pattern=pattern,
    )


def check_regularity(pair: SigmaPair, gamma: float, safety: float = 0.9) -> RegularityResult:
    """Largest alpha with Sigma_pi - alpha gamma^2 Sigma*_pi positive definite.

    With lambda_max the largest generalized eigenvalue of (Sigma*_pi, Sigma_pi),
    sup alpha = 1 / (gamma^2 lambda_max), unbounded when lambda_max <= 0.

    Raises:
        DirectionMissing: If the pair has no Sigma*_pi
        SigmaSingular: If Sigma_pi has minimum eigenvalue below 1e-12
    """
    if not 0.0 < safety <= 1.0:
        raise InvalidArgument(f"safety must lie in (0, 1], got {safety}")
    sigma_star = pair.star()
    min_eigenvalue = _check_not_singular(pair.sigma_pi)
    largest = _largest_generalized_eigenvalue(sigma_star, pair.sigma_pi)
    return _result(largest, gamma, safety, min_eigenvalue)


def check_regularity_all_patterns(
    theta0: Theta,
    mdp: MdpSpec,
    policy: PolicySpec,
    gamma: Optional[float] = None,
    safety: float = 0.9,
    mu: Optional[np.ndarray] = None,
    max_patterns: int = MAX_PATTERNS,
) -> RegularityResult:
    """Regularity check over every greedy map b: S -> A, not just one direction.

    Every direction selects some map, so the minimum sup alpha over all maps
    holds for all directions. Works in the gradient span.

    Raises:
        InvalidArgument: If |A|^|S| exceeds max_patterns
        SigmaSingular: If Sigma_pi is singular in the gradient span
    """
    gamma = mdp.gamma if gamma is None else gamma
    n_patterns = mdp.n_actions**mdp.n_states
    if n_patterns > max_patterns:
        raise InvalidArgument(f"{n_patterns} greedy maps exceed the limit of {max_patterns}")
    mu = stationary_distribution(mdp, policy) if mu is None else np.asarray(mu)
    pair = estimate_sigma(theta0, mdp, policy, reduce_to_span=True, mu=mu)
    min_eigenvalue = _check_not_singular(pair.sigma_pi)
    coords = _gradient_table(theta0, mdp) @ pair.basis

    worst, worst_pattern = -np.inf, None
    for pattern in itertools.product(range(mdp.n_actions), repeat=mdp.n_states):
        chosen = coords[np.arange(mdp.n_states), list(pattern)]
        sigma_star = second_moment(chosen, mu, theta0.shape.m)
        largest = _largest_generalized_eigenvalue(sigma_star, pair.sigma_pi)
        if largest > worst:
            worst, worst_pattern = largest, pattern
    logger.info("Checked %d greedy maps; worst %s", n_patterns, worst_pattern)
    return _result(worst, gamma, safety, min_eigenvalue, tuple(int(b) for b in worst_pattern))
