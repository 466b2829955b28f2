"""Mixing time of the learning policy's state chain."""

import math

from ..mdp import MdpSpec, PolicySpec
from ..mdp.oracles import tv_mixing_curve
from ..utils import InvalidArgument
from . import MixingEstimate

DEFAULT_HORIZON = 200


def mixing_time_tau(lam: float, rho: float, eta_T: float) -> int:
    """Smallest t >= 0 with lam * rho**t <= eta_T.

    Raises:
        InvalidArgument: Unless 0 < rho < 1, lam > 0 and eta_T > 0
    """
    if not 0.0 < rho < 1.0:
        raise InvalidArgument(f"rho must lie in (0, 1), got {rho}")
    if not lam > 0 or not eta_T > 0:
        raise InvalidArgument(f"lambda and eta_T must be positive, got {lam} and {eta_T}")
    if lam <= eta_T:
        return 0
    tau = max(1, math.ceil(math.log(eta_T / lam) / math.log(rho)))
    # Settle round-off in the logarithms against the defining inequality.
    while tau > 1 and lam * rho ** (tau - 1) <= eta_T:
        tau -= 1
    while lam * rho**tau > eta_T:
        tau += 1
    return tau


def estimate_mixing(
    mdp: MdpSpec, policy: PolicySpec, eta_T: float, horizon: int = DEFAULT_HORIZON
) -> MixingEstimate:
    """Fit the TV envelope of the induced chain and derive tau* for step size eta_T.

    Raises:
        FitDegenerate: If the chain mixes exactly within two steps
    """
    curve = tv_mixing_curve(mdp, policy, horizon)
    return MixingEstimate(
        lam=curve.lam,
        rho=curve.rho,
        tau_star=mixing_time_tau(curve.lam, curve.rho, eta_T),
        eta_T=eta_T,
        distances=curve.distances,
    )
