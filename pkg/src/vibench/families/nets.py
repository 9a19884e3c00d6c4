"""Tiny tanh MLPs with hand-written backprop.

The coupling and translation networks inside NVP flows are 2-hidden-layer
perceptrons. Forward passes cache activations; the backward pass returns
per-draw gradients for every weight plus the input cotangent, which is all the
flow gradients need. No autodiff framework is involved.
"""

from __future__ import annotations

import numpy as np

from .base import Array


def mlp_param_count(d_in: int, d_out: int, hidden: int) -> int:
    return hidden * d_in + hidden + hidden * hidden + hidden + d_out * hidden + d_out


def mlp_init(
    rng: np.random.Generator, d_in: int, d_out: int, hidden: int, scale: float
) -> Array:
    """Hidden weights ~ N(0, scale^2); final layer zero so the map starts at 0."""
    w1 = rng.normal(0.0, scale, size=(hidden, d_in))
    w2 = rng.normal(0.0, scale, size=(hidden, hidden))
    return np.concatenate(
        [
            w1.ravel(),
            np.zeros(hidden),
            w2.ravel(),
            np.zeros(hidden),
            np.zeros(d_out * hidden),
            np.zeros(d_out),
        ]
    )


def mlp_unpack(flat: Array, d_in: int, d_out: int, hidden: int):
    sizes = [hidden * d_in, hidden, hidden * hidden, hidden, d_out * hidden, d_out]
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    w1 = parts[0].reshape(hidden, d_in)
    w2 = parts[2].reshape(hidden, hidden)
    w3 = parts[4].reshape(d_out, hidden)
    return w1, parts[1], w2, parts[3], w3, parts[5]


def mlp_forward(flat: Array, x: Array, d_in: int, d_out: int, hidden: int):
    """Returns (y, cache) for a batch x of shape (S, d_in)."""
    w1, b1, w2, b2, w3, b3 = mlp_unpack(flat, d_in, d_out, hidden)
    h1 = np.tanh(x @ w1.T + b1)
    h2 = np.tanh(h1 @ w2.T + b2)
    y = h2 @ w3.T + b3
    return y, (x, h1, h2, w1, w2, w3)


def mlp_backward(cache, cot_y: Array) -> tuple[Array, Array]:
    """Per-draw parameter gradients (S, P) and input cotangent (S, d_in)."""
    x, h1, h2, w1, w2, w3 = cache
    S = x.shape[0]
    g_w3 = cot_y[:, :, None] * h2[:, None, :]
    c2 = (cot_y @ w3) * (1.0 - h2 * h2)
    g_w2 = c2[:, :, None] * h1[:, None, :]
    c1 = (c2 @ w2) * (1.0 - h1 * h1)
    g_w1 = c1[:, :, None] * x[:, None, :]
    cot_x = c1 @ w1
    grads = np.concatenate(
        [g_w1.reshape(S, -1), c1, g_w2.reshape(S, -1), c2, g_w3.reshape(S, -1), cot_y],
        axis=1,
    )
    return grads, cot_x
