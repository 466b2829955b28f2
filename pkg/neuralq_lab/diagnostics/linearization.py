"""Width-scaling probes of how close the network stays to its linearization."""

from dataclasses import dataclass
from functools import partial
import math
from typing import Callable, Iterable, Optional, Union

import numpy as np

from ..learning import RunRecord
from ..learning.neural_q import replay, td_error
from ..mdp import MdpSpec
from ..network import NetShape, Theta, split_layers
from ..network.linearized import linear_forward, linearize
from ..network.projection import radius_for
from ..network.relu import forward, gradient, gradient_batch, init_gaussian
from ..utils import InvalidArgument, ShapeMismatch
from . import ProbeReport

OmegaRule = Callable[[NetShape], float]


def sphere_point(theta0: Theta, omega: float, rng: np.random.Generator) -> Theta:
    """theta0 plus an independent uniform direction of Frobenius norm omega in every layer."""
    if omega == 0:
        return theta0
    blocks = []
    for w0 in split_layers(theta0.shape, theta0.flat):
        direction = rng.standard_normal(w0.shape)
        blocks.append((w0 + omega * direction / np.linalg.norm(direction)).ravel())
    return theta0.with_flat(np.concatenate(blocks))


def _resolve_rule(omega_rule: Union[OmegaRule, float, None]) -> OmegaRule:
    if omega_rule is None:
        return radius_for
    if callable(omega_rule):
        return omega_rule
    return partial(radius_for, coeff=float(omega_rule))


def linearization_probe(
    shapes: Iterable[NetShape],
    features: np.ndarray,
    n_seeds: int,
    omega_rule: Union[OmegaRule, float, None] = None,
    base_seed: int = 0,
) -> ProbeReport:
    """Measure |f - f_hat| and the gradient perturbation on the radius-omega sphere.

    For every shape and seed, theta0 is drawn from the Gaussian initialization
    and theta from the per-layer sphere of radius omega(shape). Two cells are
    recorded:
      linearization_gap: max over feature rows of |f(theta) - f_hat(theta)|
      grad_perturbation: max over feature rows of
                         ||grad f(theta) - grad f(theta0)|| / ||grad f(theta0)||

    Args:
        shapes: Network shapes, all with d equal to the feature dimension
        features: Feature table (S, A, d) or rows (n, d)
        n_seeds: Seeds per shape
        omega_rule: Callable shape -> omega, or a coefficient for the default
            rule coeff * m^(-1/2) * L^(-9/4)
        base_seed: Offset of the seed range
    """
    if n_seeds < 1:
        raise InvalidArgument(f"n_seeds must be positive, got {n_seeds}")
    rule = _resolve_rule(omega_rule)
    features = np.asarray(features, dtype=np.float64)
    rows = features.reshape(-1, features.shape[-1])
    report = ProbeReport()
    for shape in shapes:
        if shape.d != rows.shape[1]:
            raise ShapeMismatch(f"Shape {shape} does not match feature dimension {rows.shape[1]}")
        omega = float(rule(shape))
        for seed in range(base_seed, base_seed + n_seeds):
            init_seed, direction_seed = np.random.SeedSequence(seed).spawn(2)
            theta0 = init_gaussian(shape, np.random.default_rng(init_seed))
            theta = sphere_point(theta0, omega, np.random.default_rng(direction_seed))
            model = linearize(theta0)
            anchor_values, anchor_grads = model.tabulate(rows[:, None, :])
            anchor_values, anchor_grads = anchor_values.ravel(), anchor_grads.reshape(len(rows), -1)

            lin = anchor_values + anchor_grads @ (theta - theta0)
            # Row by row, like the anchor values, so theta = theta0 gives an exact zero.
            values = np.array([forward(theta, x) for x in rows])
            gap = float(np.max(np.abs(values - lin)))
            moved = gradient_batch(theta, rows) - anchor_grads
            norms = np.linalg.norm(anchor_grads, axis=1)
            ratio = float(np.max(np.linalg.norm(moved, axis=1)[norms > 0] / norms[norms > 0])) if np.any(norms > 0) else 0.0

            cell = dict(m=shape.m, L=shape.L, omega=omega, seed=seed, n_samples=len(rows))
            report.add(probe="linearization_gap", value=gap, **cell)
            report.add(probe="grad_perturbation", value=ratio, **cell)
    return report


def gradient_gap_probe(record: RunRecord, mdp: MdpSpec, every: int = 1) -> ProbeReport:
    """||g_t(theta_t) - m_t(theta_t)||_2 along a replayed run.

    g_t is the network's semi-gradient, m_t the semi-gradient of the
    linearized network on the same transition.
    """
    if every < 1:
        raise InvalidArgument(f"every must be positive, got {every}")
    config = record.config
    model = linearize(record.theta0)
    linear = partial(linear_forward, model)
    report = ProbeReport()
    for t, theta, tr in replay(record, mdp):
        if t % every:
            continue
        x = mdp.features[tr.s, tr.a]
        g = td_error(theta, tr, record.gamma, mdp.features) * gradient(theta, x)
        m_t = td_error(theta, tr, record.gamma, mdp.features, linear) * model.grad0(x)
        report.add(
            probe="gradient_gap",
            m=config.shape.m,
            L=config.shape.L,
            omega=record.omega,
            seed=config.seed,
            value=float(np.linalg.norm(g - m_t)),
            index=t,
        )
    return report


@dataclass(frozen=True)
class WidthRegime:
    """Theoretical width requirement, reported rather than enforced."""

    m: int
    required_m: float
    satisfied: bool
    omega: float
    c1: float
    delta: float


def width_regime(shape: NetShape, omega: Optional[float] = None, c1: float = 1.0, delta: float = 0.1) -> WidthRegime:
    """Evaluate m >= c1 * max{d L^2 log(m/delta), omega^(-4/3) L^(-8/3) log(m/(omega delta))}."""
    if not 0.0 < delta < 1.0:
        raise InvalidArgument(f"delta must lie in (0, 1), got {delta}")
    omega = radius_for(shape) if omega is None else omega
    if not omega > 0:
        raise InvalidArgument(f"omega must be positive, got {omega}")
    m, L, d = shape.m, shape.L, shape.d
    required = c1 * max(
        d * L**2 * math.log(m / delta),
        omega ** (-4.0 / 3.0) * L ** (-8.0 / 3.0) * math.log(m / (omega * delta)),
    )
    return WidthRegime(m=m, required_m=required, satisfied=m >= required, omega=omega, c1=c1, delta=delta)
