"""Planar and real-NVP normalizing flows over a standard Gaussian base.

Both flows compute log q jointly with sampling by accumulating per-layer
log-det-Jacobian terms. Parameter gradients are reverse-accumulated by hand
through the layer stack; ``pullback`` exposes the combined cotangent
(dT/dlambda)^T v + c * d(logdetJ)/dlambda that every estimator needs.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..numkit import LOG_2PI
from .base import Array, Family, UnsupportedOperation
from .nets import mlp_backward, mlp_forward, mlp_init, mlp_param_count

_TINY = 1e-300


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus(x):
    return np.logaddexp(0.0, x)


def _std_normal_logpdf(eps: Array) -> Array:
    return -0.5 * np.sum(eps * eps, axis=1) - 0.5 * eps.shape[1] * LOG_2PI


class PlanarFlow(Family):
    """Stack of planar layers z -> z + u_hat * tanh(w.z + b).

    Invertibility holds for every parameter vector because u is mapped to
    u_hat = u + (softplus(u.w) - 1 - u.w) w / |w|^2, which keeps
    u_hat.w = softplus(u.w) - 1 > -1. There is no closed-form inverse, so
    log q at arbitrary points (and with it score-based estimators) is
    unsupported.
    """

    name = "planar_flow"

    def __init__(self, dim: int, depth: int = 6, init_scale: float = 0.1):
        self.dim = dim
        self.depth = depth
        self.init_scale = init_scale
        self.layer_size = 2 * dim + 1
        self.param_count = depth * self.layer_size

    def options(self) -> dict:
        return {"depth": self.depth, "init_scale": self.init_scale}

    def init_values(self, rng: Optional[np.random.Generator] = None) -> Array:
        rng = np.random.default_rng(0) if rng is None else rng
        values = np.empty(self.param_count)
        for l in range(self.depth):
            o = l * self.layer_size
            values[o : o + 2 * self.dim] = rng.normal(0.0, self.init_scale, 2 * self.dim)
            values[o + 2 * self.dim] = 0.0
        return values

    def _layer(self, values: Array, l: int):
        o = l * self.layer_size
        d = self.dim
        return values[o : o + d], values[o + d : o + 2 * d], values[o + 2 * d]

    def _forward(self, values: Array, eps: Array):
        z = eps
        ldj = np.zeros(eps.shape[0])
        caches = []
        for l in range(self.depth):
            u, w, b = self._layer(values, l)
            m = float(u @ w)
            sp = float(_softplus(m))
            n2 = float(w @ w) + _TINY
            beta = (sp - 1.0 - m) / n2
            uhat = u + beta * w
            wm = float(uhat @ w)  # equals sp - 1 for w != 0, and 0 at w = 0
            a = z @ w + b
            t = np.tanh(a)
            h = 1.0 - t * t
            det = 1.0 + h * wm  # strictly positive: wm > -1, h in [0, 1]
            ldj += np.log(det)
            caches.append((z, a, t, h, m, sp, n2, beta, uhat, wm, det, u, w))
            z = z + t[:, None] * uhat
        return z, ldj, caches

    def transform(self, values, eps):
        z, ldj, _ = self._forward(values, eps)
        logq = _std_normal_logpdf(eps) - ldj
        self._check_finite(z, logq)
        return z, logq

    def pullback(self, values, eps, theta_cot, ldj_cot):
        _, _, caches = self._forward(values, eps)
        S = eps.shape[0]
        grads = np.zeros((S, self.param_count))
        c = np.array(theta_cot, dtype=float, copy=True)
        gl = float(ldj_cot)
        for l in reversed(range(self.depth)):
            z_in, a, t, h, m, sp, n2, beta, uhat, wm, det, u, w = caches[l]
            s_wm = gl * h / det
            s_a = h * (c @ uhat) + gl * wm * (-2.0 * t * h) / det
            chat = t[:, None] * c + s_wm[:, None] * w[None, :]
            s_beta = chat @ w
            s_m = s_beta * (_sigmoid(m) - 1.0) / n2
            s_n2 = -s_beta * beta / n2
            grad_u = chat + s_m[:, None] * w[None, :]
            grad_w = (
                s_wm[:, None] * uhat[None, :]
                + beta * chat
                + s_m[:, None] * u[None, :]
                + 2.0 * s_n2[:, None] * w[None, :]
                + s_a[:, None] * z_in
            )
            o = l * self.layer_size
            grads[:, o : o + self.dim] = grad_u
            grads[:, o + self.dim : o + 2 * self.dim] = grad_w
            grads[:, o + 2 * self.dim] = s_a
            c = c + s_a[:, None] * w
        return grads


class RealNVPFlow(Family):
    """Affine coupling flow with alternating half-masks.

    Each layer leaves one coordinate block unchanged and applies
    y_B = x_B * exp(s(x_A)) + t(x_A), where s and t are small tanh MLPs and the
    scale output is squashed through tanh for stability. Final-layer weights
    start at zero, so the initial flow is the identity. Coupling layers invert
    in closed form, which makes log q (and score gradients) available at
    arbitrary points.
    """

    name = "nvp_flow"

    def __init__(self, dim: int, depth: int = 6, hidden: int = 10, init_scale: float = 0.1):
        if dim < 2:
            raise ValueError("NVP coupling needs dim >= 2")
        self.dim = dim
        self.depth = depth
        self.hidden = hidden
        self.init_scale = init_scale
        d_a = (dim + 1) // 2
        first = np.arange(d_a)
        second = np.arange(d_a, dim)
        self._masks = [
            (first, second) if l % 2 == 0 else (second, first) for l in range(depth)
        ]
        self._net_sizes = [
            mlp_param_count(len(a), len(b), hidden) for a, b in self._masks
        ]
        offsets = np.concatenate([[0], np.cumsum(np.repeat(self._net_sizes, 2))])
        self._slices = [
            (slice(offsets[2 * l], offsets[2 * l + 1]), slice(offsets[2 * l + 1], offsets[2 * l + 2]))
            for l in range(depth)
        ]
        self.param_count = int(offsets[-1])

    def options(self) -> dict:
        return {"depth": self.depth, "hidden": self.hidden, "init_scale": self.init_scale}

    def init_values(self, rng: Optional[np.random.Generator] = None) -> Array:
        rng = np.random.default_rng(0) if rng is None else rng
        chunks = []
        for (ids_a, ids_b) in self._masks:
            for _ in range(2):  # s-net then t-net
                chunks.append(mlp_init(rng, len(ids_a), len(ids_b), self.hidden, self.init_scale))
        return np.concatenate(chunks)

    def _nets(self, values: Array, l: int):
        s_sl, t_sl = self._slices[l]
        return values[s_sl], values[t_sl]

    def _forward(self, values: Array, eps: Array):
        z = np.array(eps, dtype=float, copy=True)
        ldj = np.zeros(eps.shape[0])
        caches = []
        for l in range(self.depth):
            ids_a, ids_b = self._masks[l]
            sv, tv = self._nets(values, l)
            x_a, x_b = z[:, ids_a], z[:, ids_b]
            s_raw, s_cache = mlp_forward(sv, x_a, len(ids_a), len(ids_b), self.hidden)
            t_out, t_cache = mlp_forward(tv, x_a, len(ids_a), len(ids_b), self.hidden)
            s = np.tanh(s_raw)
            es = np.exp(s)
            out = np.empty_like(z)
            out[:, ids_a] = x_a
            out[:, ids_b] = x_b * es + t_out
            ldj += np.sum(s, axis=1)
            caches.append((x_b, s, es, s_cache, t_cache))
            z = out
        return z, ldj, caches

    def transform(self, values, eps):
        z, ldj, _ = self._forward(values, eps)
        logq = _std_normal_logpdf(eps) - ldj
        self._check_finite(z, logq)
        return z, logq

    def pullback(self, values, eps, theta_cot, ldj_cot):
        _, _, caches = self._forward(values, eps)
        S = eps.shape[0]
        grads = np.zeros((S, self.param_count))
        c = np.array(theta_cot, dtype=float, copy=True)
        gl = float(ldj_cot)
        for l in reversed(range(self.depth)):
            ids_a, ids_b = self._masks[l]
            x_b, s, es, s_cache, t_cache = caches[l]
            c_a, c_b = c[:, ids_a], c[:, ids_b]
            cot_s = c_b * x_b * es + gl
            cot_s_raw = cot_s * (1.0 - s * s)
            g_s, cx_a_s = mlp_backward(s_cache, cot_s_raw)
            g_t, cx_a_t = mlp_backward(t_cache, c_b)
            s_sl, t_sl = self._slices[l]
            grads[:, s_sl] = g_s
            grads[:, t_sl] = g_t
            nxt = np.empty_like(c)
            nxt[:, ids_a] = c_a + cx_a_s + cx_a_t
            nxt[:, ids_b] = c_b * es
            c = nxt
        return grads

    def _inverse(self, values: Array, theta: Array):
        y = np.array(np.atleast_2d(theta), dtype=float, copy=True)
        sum_s = np.zeros(y.shape[0])
        caches = []
        for l in reversed(range(self.depth)):
            ids_a, ids_b = self._masks[l]
            sv, tv = self._nets(values, l)
            y_a = y[:, ids_a]
            s_raw, s_cache = mlp_forward(sv, y_a, len(ids_a), len(ids_b), self.hidden)
            t_out, t_cache = mlp_forward(tv, y_a, len(ids_a), len(ids_b), self.hidden)
            s = np.tanh(s_raw)
            z_b = (y[:, ids_b] - t_out) * np.exp(-s)
            out = np.empty_like(y)
            out[:, ids_a] = y_a
            out[:, ids_b] = z_b
            sum_s += np.sum(s, axis=1)
            caches.append((l, s, z_b, s_cache, t_cache))
            y = out
        return y, sum_s, caches

    def inverse_transform(self, values: Array, theta: Array) -> Array:
        z0, _, _ = self._inverse(values, theta)
        return z0

    def logq(self, values, theta):
        z0, sum_s, _ = self._inverse(values, theta)
        return _std_normal_logpdf(z0) - sum_s

    def score_grad_logq(self, values, theta):
        z0, _, caches = self._inverse(values, theta)
        S = z0.shape[0]
        grads = np.zeros((S, self.param_count))
        c = -z0  # d/dz of the standard normal log density at z0
        # caches were appended while walking layers L-1..0; backprop retraces
        # the computation in reverse, i.e. layer 0 first.
        for (l, s, z_b, s_cache, t_cache) in reversed(caches):
            ids_a, ids_b = self._masks[l]
            c_a, c_b = c[:, ids_a], c[:, ids_b]
            ens = np.exp(-s)
            cot_qb = c_b * ens
            cot_s = -c_b * z_b - 1.0  # -1 from the direct -sum(s) term in log q
            cot_s_raw = cot_s * (1.0 - s * s)
            g_s, cq_a_s = mlp_backward(s_cache, cot_s_raw)
            g_t, cq_a_t = mlp_backward(t_cache, -cot_qb)
            s_sl, t_sl = self._slices[l]
            grads[:, s_sl] = g_s
            grads[:, t_sl] = g_t
            nxt = np.empty_like(c)
            nxt[:, ids_a] = c_a + cq_a_s + cq_a_t
            nxt[:, ids_b] = cot_qb
            c = nxt
        return grads
