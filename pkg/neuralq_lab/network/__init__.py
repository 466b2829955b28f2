# Bias-free deep ReLU networks: shapes and flattened parameter vectors.
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..utils import InvalidArgument, ShapeMismatch


@dataclass(frozen=True)
class NetShape:
    """Layer layout: W_1 is m x d, W_2..W_{L-1} are m x m, W_L is 1 x m."""

    d: int
    m: int
    L: int

    def __post_init__(self):
        if self.L < 2:
            raise InvalidArgument(f"A network needs at least 2 weight matrices, got L={self.L}")
        if self.m < 1 or self.d < 1:
            raise InvalidArgument(f"Width and input dimension must be positive, got m={self.m}, d={self.d}")

    @property
    def layer_shapes(self) -> list[tuple[int, int]]:
        return [(self.m, self.d)] + [(self.m, self.m)] * (self.L - 2) + [(1, self.m)]

    @property
    def n_params(self) -> int:
        return self.m * self.d + (self.L - 2) * self.m * self.m + self.m

    @property
    def offsets(self) -> list[int]:
        bounds = [0]
        for rows, cols in self.layer_shapes:
            bounds.append(bounds[-1] + rows * cols)
        return bounds


@dataclass(frozen=True, eq=False)
class Theta:
    """Network parameters as one read-only flat vector.

    The layer matrices are row-major views into the flat vector, so the two
    views can never disagree.
    """

    shape: NetShape
    flat: np.ndarray

    def __post_init__(self):
        flat = np.array(self.flat, dtype=np.float64, copy=True).ravel()
        if flat.size != self.shape.n_params:
            raise ShapeMismatch(
                f"Flat vector has {flat.size} entries, shape {self.shape} needs {self.shape.n_params}"
            )
        flat.setflags(write=False)
        object.__setattr__(self, "flat", flat)

    @cached_property
    def weights(self) -> list[np.ndarray]:
        return split_layers(self.shape, self.flat)

    @classmethod
    def from_weights(cls, shape: NetShape, weights: list[np.ndarray]) -> "Theta":
        expected = shape.layer_shapes
        if len(weights) != len(expected):
            raise ShapeMismatch(f"Expected {len(expected)} layer matrices, got {len(weights)}")
        for layer, (w, dims) in enumerate(zip(weights, expected), start=1):
            if np.shape(w) != dims:
                raise ShapeMismatch(f"W_{layer} must be {dims}, got {np.shape(w)}")
        return cls(shape, np.concatenate([np.asarray(w, dtype=np.float64).ravel() for w in weights]))

    def with_flat(self, flat: np.ndarray) -> "Theta":
        return Theta(self.shape, flat)

    def check_same_shape(self, other: "Theta") -> None:
        if other.shape != self.shape:
            raise ShapeMismatch(f"Parameter shapes differ: {self.shape} vs {other.shape}")

    def __sub__(self, other: "Theta") -> np.ndarray:
        self.check_same_shape(other)
        return self.flat - other.flat


def split_layers(shape: NetShape, flat: np.ndarray) -> list[np.ndarray]:
    """Per-layer matrix views of a flat parameter (or gradient) vector."""
    offsets = shape.offsets
    return [
        flat[offsets[i] : offsets[i + 1]].reshape(dims)
        for i, dims in enumerate(shape.layer_shapes)
    ]


def layer_distances(theta: Theta, theta0: Theta) -> np.ndarray:
    """Frobenius distances ||W_l - W_l^(0)||_F for every layer."""
    return np.array([np.linalg.norm(block) for block in split_layers(theta.shape, theta - theta0)])
