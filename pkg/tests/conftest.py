import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def finite_diff(f, x, rel_step=1e-5):
    """Central differences with per-coordinate step rel_step * (1 + |x_i|)."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        h = rel_step * (1.0 + abs(x[i]))
        up, dn = x.copy(), x.copy()
        up[i] += h
        dn[i] -= h
        g[i] = (f(up) - f(dn)) / (2.0 * h)
    return g
