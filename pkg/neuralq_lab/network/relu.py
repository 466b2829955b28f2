"""Forward pass and exact backpropagation for the bias-free ReLU network

    f(theta; x) = sqrt(m) * W_L relu(W_{L-1} ... relu(W_1 x) ...)

The derivative of relu at exactly 0 is taken to be 0.
"""

import numpy as np

from . import NetShape, Theta


def relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0)


def init_gaussian(shape: NetShape, rng: np.random.Generator) -> Theta:
    """Draw every weight i.i.d. from Normal(0, 1/m), layers in order W_1..W_L."""
    flat = rng.normal(0.0, 1.0 / np.sqrt(shape.m), size=shape.n_params)
    return Theta(shape, flat)


def _hidden(theta: Theta, h: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    # Columns of h are inputs. Returns the layer inputs h_0..h_{L-1} and preactivations z_1..z_{L-1}.
    activations, preactivations = [h], []
    for w in theta.weights[:-1]:
        z = w @ activations[-1]
        preactivations.append(z)
        activations.append(relu(z))
    return activations, preactivations


def forward(theta: Theta, x: np.ndarray) -> float:
    """Network output for one input vector of dimension d."""
    return float(forward_batch(theta, np.asarray(x, dtype=np.float64)[None, :])[0])


def forward_batch(theta: Theta, xs: np.ndarray) -> np.ndarray:
    """Network outputs for the rows of xs, shape (n, d) -> (n,)."""
    xs = np.asarray(xs, dtype=np.float64)
    activations, _ = _hidden(theta, xs.T)
    return np.sqrt(theta.shape.m) * (theta.weights[-1] @ activations[-1])[0]


def gradient(theta: Theta, x: np.ndarray) -> np.ndarray:
    """Flat gradient of f(theta; x) with respect to theta."""
    return gradient_batch(theta, np.asarray(x, dtype=np.float64)[None, :])[0]


def gradient_batch(theta: Theta, xs: np.ndarray) -> np.ndarray:
    """Flat gradients for the rows of xs, shape (n, d) -> (n, n_params)."""
    xs = np.asarray(xs, dtype=np.float64)
    n = xs.shape[0]
    weights = theta.weights
    scale = np.sqrt(theta.shape.m)
    activations, preactivations = _hidden(theta, xs.T)

    blocks = [None] * len(weights)
    blocks[-1] = scale * activations[-1].T  # (n, m)
    delta = scale * weights[-1].T * (preactivations[-1] > 0)  # (m, n)
    for layer in range(len(weights) - 2, -1, -1):
        h_in = activations[layer]
        blocks[layer] = (delta.T[:, :, None] * h_in.T[:, None, :]).reshape(n, -1)
        if layer > 0:
            delta = (weights[layer].T @ delta) * (preactivations[layer - 1] > 0)
    return np.concatenate(blocks, axis=1)
