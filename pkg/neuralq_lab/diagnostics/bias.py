"""Markovian bias along a recorded run.

    zeta_t = < m_t(theta_t) - m_bar(theta_t), theta_t - theta_ref >

where m_t is the linearized semi-gradient on the observed transition and
m_bar its exact expectation under mu_pi x pi x P.
"""

from functools import partial
import logging
from typing import Optional, Union

import numpy as np

from ..learning import RunRecord
from ..learning.neural_q import replay, td_error
from ..mdp import MdpSpec, PolicySpec
from ..mdp.oracles import stationary_distribution
from ..network import Theta
from ..network.linearized import LinearizedModel, linear_forward, linearize
from ..utils import FitDegenerate, InvalidArgument
from . import ProbeReport, ReferencePoint
from .mixing import estimate_mixing
from .population import population_semi_gradient

logger = logging.getLogger(__name__)


def bias_terms(
    record: RunRecord,
    mdp: MdpSpec,
    policy: PolicySpec,
    reference: Union[Theta, ReferencePoint] = ReferencePoint.INITIAL,
    model: Optional[LinearizedModel] = None,
) -> np.ndarray:
    """zeta_t for every step of the replayed run."""
    model = linearize(record.theta0) if model is None else model
    if isinstance(reference, Theta):
        record.theta0.check_same_shape(reference)
    mu = stationary_distribution(mdp, policy)
    linear = partial(linear_forward, model)
    zetas = np.empty(len(record.trajectory))
    for t, theta, tr in replay(record, mdp):
        if reference is ReferencePoint.CURRENT:
            zetas[t] = 0.0
            continue
        ref = record.theta0 if reference is ReferencePoint.INITIAL else reference
        observed = td_error(theta, tr, record.gamma, mdp.features, linear) * model.grad0(mdp.features[tr.s, tr.a])
        expected = population_semi_gradient(theta, model, mdp, policy, record.gamma, mu)
        zetas[t] = float((observed - expected) @ (theta - ref))
    return zetas


def bias_probe(
    record: RunRecord,
    mdp: MdpSpec,
    policy: PolicySpec,
    reference: Union[Theta, ReferencePoint] = ReferencePoint.INITIAL,
    window: int = 100,
    model: Optional[LinearizedModel] = None,
) -> ProbeReport:
    """Window averages of zeta_t plus the tau* eta envelope of the run.

    Cells:
      bias_window:   mean of zeta_t over window k (index k)
      bias_envelope: tau* * eta with tau* from the fitted mixing envelope
                     at the run's step size; omitted when the chain mixes
                     too fast to fit
    """
    if window < 1:
        raise InvalidArgument(f"window must be positive, got {window}")
    zetas = bias_terms(record, mdp, policy, reference, model)
    config = record.config
    cell = dict(m=config.shape.m, L=config.shape.L, omega=record.omega, seed=config.seed)
    report = ProbeReport()
    for k, start in enumerate(range(0, len(zetas), window)):
        chunk = zetas[start : start + window]
        report.add(probe="bias_window", value=float(chunk.mean()), n_samples=len(chunk), index=k, **cell)
    try:
        mixing = estimate_mixing(mdp, policy, record.eta)
        report.add(probe="bias_envelope", value=mixing.tau_star * record.eta, **cell)
    except FitDegenerate as e:
        logger.info("No mixing envelope for the bias probe: %s", e)
    return report
