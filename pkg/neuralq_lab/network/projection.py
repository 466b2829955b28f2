"""Per-layer Frobenius-ball constraint around the initialization and its projection."""

from dataclasses import dataclass

import numpy as np

from ..utils import InvalidArgument
from . import NetShape, Theta, split_layers

# Layers within omega + min(MAX_SLACK, RADIUS_SLACK * max(1, omega)) count as interior.
RADIUS_SLACK = 1e-14
MAX_SLACK = 1e-12


def radius_for(shape: NetShape, coeff: float = 1.0) -> float:
    """Radius rule omega = coeff * m^(-1/2) * L^(-9/4)."""
    if coeff < 0:
        raise InvalidArgument(f"Radius coefficient must be non-negative, got {coeff}")
    return coeff * shape.m**-0.5 * shape.L**-2.25


@dataclass(frozen=True, eq=False)
class BallConstraint:
    theta0: Theta
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise InvalidArgument(f"omega must be positive, got {self.omega}")

    def distances(self, theta: Theta) -> np.ndarray:
        blocks = split_layers(theta.shape, theta - self.theta0)
        return np.array([np.linalg.norm(block) for block in blocks])

    def contains(self, theta: Theta, tol: float = 0.0) -> bool:
        return bool(np.all(self.distances(theta) <= self.omega + tol))


@dataclass(frozen=True, eq=False)
class Projection:
    theta: Theta
    active: np.ndarray  # per-layer flags, True where the layer was rescaled
    distances: np.ndarray  # per-layer distances after projection

    @property
    def any_active(self) -> bool:
        return bool(self.active.any())


def project_ball_detailed(theta: Theta, constraint: BallConstraint) -> Projection:
    """Project onto the product of per-layer balls and report what moved."""
    constraint.theta0.check_same_shape(theta)
    anchor = split_layers(theta.shape, constraint.theta0.flat)
    blocks = split_layers(theta.shape, theta.flat)
    omega = constraint.omega
    slack = min(MAX_SLACK, RADIUS_SLACK * max(1.0, omega))

    projected, active, distances = [], [], []
    for w, w0 in zip(blocks, anchor):
        diff = w - w0
        norm = float(np.linalg.norm(diff))
        if norm <= omega + slack:
            projected.append(w)
            active.append(False)
            distances.append(norm)
        else:
            projected.append(w0 + (omega / norm) * diff)
            active.append(True)
            distances.append(float(np.linalg.norm(projected[-1] - w0)))
    if not any(active):
        return Projection(theta, np.zeros(len(blocks), dtype=bool), np.array(distances))
    flat = np.concatenate([w.ravel() for w in projected])
    return Projection(theta.with_flat(flat), np.array(active), np.array(distances))


def project_ball(theta: Theta, constraint: BallConstraint) -> Theta:
    """Euclidean projection onto B(theta0, omega), one Frobenius ball per layer.

    Layers already inside their ball are returned bit-identical.
    """
    return project_ball_detailed(theta, constraint).theta
