"""First-order expansion of the network around its initialization:

    f_hat(theta; x) = f(theta0; x) + <grad f(theta0; x), theta - theta0>
"""

import threading

import numpy as np

from . import Theta
from .relu import forward_batch, gradient_batch


class LinearizedModel:
    """Linear twin of the network anchored at a frozen theta0.

    f(theta0; x) and grad f(theta0; x) are computed once per input and cached
    as read-only arrays. Inputs are keyed by their float64 bytes, so the
    rows of a feature table (one per state-action pair) map to stable keys.
    """

    def __init__(self, theta0: Theta):
        self.theta0 = theta0
        self._cache: dict[bytes, tuple[float, np.ndarray]] = {}
        self._lock = threading.Lock()

    @staticmethod
    def _key(x: np.ndarray) -> bytes:
        return np.ascontiguousarray(x, dtype=np.float64).tobytes()

    def _fill(self, xs: np.ndarray) -> list[tuple[float, np.ndarray]]:
        keys = [self._key(x) for x in xs]
        with self._lock:
            missing = [i for i, k in enumerate(keys) if k not in self._cache]
            if missing:
                grads = gradient_batch(self.theta0, xs[missing])
                for row, i in enumerate(missing):
                    # Row by row so the anchor value matches forward() bit for bit.
                    value = float(forward_batch(self.theta0, xs[i : i + 1])[0])
                    grad = grads[row].copy()
                    grad.setflags(write=False)
                    self._cache.setdefault(keys[i], (value, grad))
            return [self._cache[k] for k in keys]

    def value0(self, x: np.ndarray) -> float:
        return self._fill(np.asarray(x, dtype=np.float64)[None, :])[0][0]

    def grad0(self, x: np.ndarray) -> np.ndarray:
        return self._fill(np.asarray(x, dtype=np.float64)[None, :])[0][1]

    def tabulate(self, features: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Anchor values (S, A) and anchor gradients (S, A, n_params) over a feature table."""
        features = np.asarray(features, dtype=np.float64)
        n_states, n_actions, d = features.shape
        entries = self._fill(features.reshape(-1, d))
        values = np.array([v for v, _ in entries]).reshape(n_states, n_actions)
        grads = np.stack([g for _, g in entries]).reshape(n_states, n_actions, -1)
        return values, grads

    def table(self, theta: Theta, features: np.ndarray) -> np.ndarray:
        """f_hat(theta; phi(s, a)) for every state-action pair."""
        self.theta0.check_same_shape(theta)
        values, grads = self.tabulate(features)
        return values + grads @ (theta - self.theta0)

    def __len__(self) -> int:
        return len(self._cache)


def linearize(theta0: Theta) -> LinearizedModel:
    return LinearizedModel(theta0)


def linear_forward(model: LinearizedModel, theta: Theta, x: np.ndarray) -> float:
    """Evaluate the linearized network.

    Raises:
        ShapeMismatch: If theta does not have the anchor's shape
    """
    model.theta0.check_same_shape(theta)
    return model.value0(x) + float(model.grad0(x) @ (theta - model.theta0))
