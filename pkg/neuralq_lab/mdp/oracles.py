"""Exact oracles over finite MDPs: Bellman operator, value iteration,
stationary distribution and the total-variation mixing curve."""

from dataclasses import dataclass
import logging
import math
from typing import Optional

import numpy as np
from scipy.sparse.csgraph import breadth_first_order, connected_components

from ..utils import (
    FitDegenerate,
    InvalidArgument,
    NonConvergence,
    PeriodicChain,
    ReducibleChain,
)
from . import MdpSpec, PolicySpec, QTable, induced_chain

MAX_ITERATIONS = 1_000_000
POWER_TOLERANCE = 1e-12
TV_FLOOR = 1e-13

logger = logging.getLogger(__name__)


def bellman_optimality(mdp: MdpSpec, q: QTable, gamma: Optional[float] = None) -> QTable:
    """Apply the optimal Bellman operator exactly.

    (TQ)(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) max_b Q(s',b)

    Args:
        mdp: The MDP
        q: Q table of shape (|S|, |A|)
        gamma: Optional discount override; defaults to mdp.gamma
    """
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (mdp.n_states, mdp.n_actions):
        raise InvalidArgument(
            f"Q table must have shape {(mdp.n_states, mdp.n_actions)}, got {q.shape}"
        )
    g = mdp.gamma if gamma is None else gamma
    return mdp.reward + g * (mdp.transition @ q.max(axis=1))


def value_iteration(
    mdp: MdpSpec,
    tol: float = 1e-10,
    max_iterations: int = MAX_ITERATIONS,
    q0: Optional[QTable] = None,
    gamma: Optional[float] = None,
) -> QTable:
    """Iterate the Bellman operator until ||TQ - Q||_inf <= tol.

    Args:
        mdp: The MDP
        tol: Sup-norm residual at which to stop (must be > 0)
        max_iterations: Iteration cap
        q0: Optional starting table (zeros by default)
        gamma: Optional discount override

    Returns:
        The Q table whose Bellman residual is at most tol

    Raises:
        NonConvergence: If the cap is hit first
    """
    if tol <= 0:
        raise InvalidArgument(f"tol must be positive, got {tol}")
    q = np.zeros((mdp.n_states, mdp.n_actions)) if q0 is None else np.array(q0, dtype=np.float64)
    for iteration in range(1, max_iterations + 1):
        tq = bellman_optimality(mdp, q, gamma)
        residual = float(np.max(np.abs(tq - q)))
        q = tq
        if residual <= tol:
            logger.info("Value iteration converged in %d iterations (residual %.3e)", iteration, residual)
            return q
    raise NonConvergence(f"Value iteration did not reach tol={tol} within {max_iterations} iterations")


def _period(chain: np.ndarray) -> int:
    """Period of an irreducible chain from BFS levels: gcd over edges of
    level[u] + 1 - level[v]."""
    adjacency = (chain > 0).astype(np.float64)
    order, predecessors = breadth_first_order(adjacency, 0, directed=True)
    level = np.full(chain.shape[0], -1)
    for node in order:
        parent = predecessors[node]
        level[node] = 0 if parent < 0 else level[parent] + 1
    period = 0
    for u, v in zip(*np.nonzero(adjacency)):
        period = math.gcd(period, int(level[u] + 1 - level[v]))
    return abs(period)


def check_ergodic(chain: np.ndarray) -> None:
    """Raise unless the chain is irreducible and aperiodic."""
    n_components, _ = connected_components(
        (chain > 0).astype(np.float64), directed=True, connection="strong"
    )
    if n_components != 1:
        raise ReducibleChain(f"Induced chain has {n_components} communicating classes")
    period = _period(chain)
    if period != 1:
        raise PeriodicChain(f"Induced chain has period {period}")


def stationary_distribution(
    mdp: MdpSpec,
    policy: PolicySpec,
    tol: float = POWER_TOLERANCE,
    max_iterations: int = MAX_ITERATIONS,
) -> np.ndarray:
    """Stationary distribution mu_pi of the induced chain by power iteration.

    Raises:
        ReducibleChain: If the chain has more than one communicating class
        PeriodicChain: If the chain is periodic
        NonConvergence: If ||mu P - mu||_1 > tol after the cap
    """
    chain = induced_chain(mdp, policy)
    check_ergodic(chain)
    mu = np.full(mdp.n_states, 1.0 / mdp.n_states)
    for iteration in range(1, max_iterations + 1):
        nxt = mu @ chain
        nxt /= nxt.sum()
        gap = float(np.abs(nxt - mu).sum())
        mu = nxt
        if gap <= tol:
            logger.info("Power iteration converged in %d iterations", iteration)
            return mu
    raise NonConvergence(f"Power iteration did not converge within {max_iterations} iterations")


def tv_distance_curve(mdp: MdpSpec, policy: PolicySpec, horizon: int) -> np.ndarray:
    """sup_s d_TV(P^t(.|s), mu_pi) for t = 0..horizon, exact.

    The deviation D_t = P^t - 1 mu is propagated as D_{t+1} = D_t P so that
    small distances keep their relative accuracy.
    """
    if horizon < 2:
        raise InvalidArgument(f"horizon must be at least 2, got {horizon}")
    chain = induced_chain(mdp, policy)
    mu = stationary_distribution(mdp, policy)
    deviation = np.eye(mdp.n_states) - mu[None, :]
    distances = np.empty(horizon + 1)
    for t in range(horizon + 1):
        distances[t] = 0.5 * np.abs(deviation).sum(axis=1).max()
        deviation = deviation @ chain
    return distances


@dataclass(frozen=True, eq=False)
class MixingCurve:
    """TV distances with a geometric envelope lambda * rho**t."""

    distances: np.ndarray
    lam: float
    rho: float
    fit_window: np.ndarray  # time indices used by the fit

    def envelope(self, t) -> np.ndarray:
        return self.lam * self.rho ** np.asarray(t, dtype=np.float64)


def fit_envelope(distances: np.ndarray) -> tuple[float, float, np.ndarray]:
    """Fit (lambda, rho) to a TV curve.

    rho comes from least squares on log distances over the points above
    1e-13; lambda is then the smallest value whose envelope dominates the
    curve over that window.
    """
    distances = np.asarray(distances, dtype=np.float64)
    window = np.nonzero(distances > TV_FLOOR)[0]
    if len(distances) > 2 and not np.any(distances[2:] > TV_FLOOR):
        raise FitDegenerate("All TV distances are below 1e-13 by t=2", curve=distances)
    if len(window) < 2:
        raise FitDegenerate("Fewer than two TV distances above 1e-13", curve=distances)
    slope, _ = np.polyfit(window.astype(np.float64), np.log(distances[window]), 1)
    rho = float(np.exp(slope))
    if not 0.0 < rho < 1.0:
        raise FitDegenerate(f"Fitted rho = {rho} is not a geometric decay", curve=distances)
    lam = float(np.max(distances[window] / rho ** window.astype(np.float64)))
    return lam, rho, window


def tv_mixing_curve(mdp: MdpSpec, policy: PolicySpec, horizon: int) -> MixingCurve:
    """Exact TV mixing curve plus fitted envelope (lambda, rho).

    Raises:
        FitDegenerate: If the chain mixes exactly within two steps or the
            curve does not decay; the computed curve is attached as .curve
    """
    distances = tv_distance_curve(mdp, policy, horizon)
    lam, rho, window = fit_envelope(distances)
    return MixingCurve(distances=distances, lam=lam, rho=rho, fit_window=window)
