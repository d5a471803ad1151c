"""Trainable primitives with hand-written gradients.

Parameters live in plain ``dict[str, np.ndarray]`` maps so the optimizer,
gradient checker and model persistence can treat them uniformly. The cell
stacks its three gates row-wise (update, reset, candidate):

=========  ==============  ===========================================
key        shape           role
=========  ==============  ===========================================
``Ux``     ``(3H, D)``     pose input maps
``Uv``     ``(3H, D)``     velocity input maps
``Up``     ``(3H, P)``     position-embedding input maps
``W``      ``(3H, H)``     recurrent maps
``b``      ``(3H,)``       gate biases
``W_out``  ``(D, H)``      regression weights
``b_out``  ``(D,)``        regression bias
=========  ==============  ===========================================
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidInputError, ShapeError, TrainingDivergenceError

CELL_KEYS = ("Ux", "Uv", "Up", "W", "b")
OUT_KEYS = ("W_out", "b_out")
PARAM_KEYS = CELL_KEYS + OUT_KEYS

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def xavier_bound(fan_in, fan_out):
    return np.sqrt(6.0 / (fan_in + fan_out))


def init_params(pose_dim, pos_dim, hidden, seed, out_scale=0.0):
    """Xavier-uniform cell weights, zero biases.

    The regression layer is Xavier-uniform scaled by ``out_scale``; the
    default of zero makes an untrained model reproduce the zero-velocity
    baseline. Returns ``(cell_params, linear_params)``; both are fresh dicts.
    """
    if min(pose_dim, pos_dim, hidden) < 1:
        raise InvalidInputError("dimensions must be positive")
    rng = np.random.default_rng(seed)

    def uniform(rows, cols):
        lim = xavier_bound(cols, rows)
        return rng.uniform(-lim, lim, size=(rows, cols))

    def gates(cols):
        return np.concatenate([uniform(hidden, cols) for _ in range(3)])

    cell = {
        "Ux": gates(pose_dim),
        "Uv": gates(pose_dim),
        "Up": gates(pos_dim),
        "W": gates(hidden),
        "b": np.zeros(3 * hidden),
    }
    linear = {"W_out": out_scale * uniform(pose_dim, hidden), "b_out": np.zeros(pose_dim)}
    return cell, linear


@dataclass
class StepCache:
    """Everything one cell step needs for its backward pass."""

    x: np.ndarray
    v: np.ndarray
    p: np.ndarray
    h_prev: np.ndarray
    z: np.ndarray
    r: np.ndarray
    hc: np.ndarray
    squeeze: bool = False


def _rows(a, width, name):
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != width:
        raise ShapeError(f"{name}: expected trailing dimension {width}, got {np.shape(a)}")
    return np.ascontiguousarray(arr)


def pvgru_forward(params, x, v, p, h_prev):
    """One position-velocity GRU step; accepts a single vector or a ``(B, .)`` batch."""
    hidden = params["W"].shape[1]
    squeeze = np.ndim(h_prev) == 1
    x = _rows(x, params["Ux"].shape[1], "x")
    v = _rows(v, params["Uv"].shape[1], "v")
    p = _rows(p, params["Up"].shape[1], "p")
    h_prev = _rows(h_prev, hidden, "h_prev")
    if not (x.shape[0] == v.shape[0] == p.shape[0] == h_prev.shape[0]):
        raise ShapeError("batch sizes of x, v, p and h_prev differ")
    h, z, r, hc = _kernels.gru_forward(
        x, v, p, h_prev, params["Ux"], params["Uv"], params["Up"], params["W"], params["b"]
    )
    cache = StepCache(x, v, p, h_prev, z, r, hc, squeeze)
    return (h[0] if squeeze else h), cache


def pvgru_backward(params, cache, dh):
    """Reverse of :func:`pvgru_forward`.

    Returns ``(grads, dx, dv, dh_prev)`` where ``grads`` holds the cell keys.
    Parameter gradients are summed over the batch.
    """
    dh = _rows(dh, cache.h_prev.shape[1], "dh")
    if dh.shape[0] != cache.h_prev.shape[0]:
        raise ShapeError("dh batch size does not match the cache")
    dux, duv, dup, dw, db, dx, dv, dh_prev = _kernels.gru_backward(
        cache.x, cache.v, cache.p, cache.h_prev, cache.z, cache.r, cache.hc, dh,
        params["Ux"], params["Uv"], params["Up"], params["W"],
    )
    grads = {"Ux": dux, "Uv": duv, "Up": dup, "W": dw, "b": db}
    if cache.squeeze:
        return grads, dx[0], dv[0], dh_prev[0]
    return grads, dx, dv, dh_prev


def linear_forward(params, h):
    w, b = params["W_out"], params["b_out"]
    h = np.asarray(h, dtype=np.float64)
    if h.shape[-1] != w.shape[1]:
        raise ShapeError(f"h has width {h.shape[-1]}, expected {w.shape[1]}")
    return h @ w.T + b


def linear_backward(params, h, dout):
    """Returns ``(dW, db, dh)``; batch rows are summed into the parameter gradients."""
    w = params["W_out"]
    h = np.asarray(h, dtype=np.float64)
    dout = np.asarray(dout, dtype=np.float64)
    if dout.shape[-1] != w.shape[0] or h.shape[:-1] != dout.shape[:-1]:
        raise ShapeError(f"dout shape {dout.shape} inconsistent with h shape {h.shape}")
    h2 = h.reshape(-1, h.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    return d2.T @ h2, d2.sum(axis=0), dout @ w


def dropout(h, rate, rng, training=True):
    """Inverted dropout. ``mask`` carries the survivor scaling so ``h' = h * mask``."""
    if not 0.0 <= rate < 1.0:
        raise InvalidInputError(f"dropout rate must lie in [0, 1), got {rate}")
    h = np.asarray(h, dtype=np.float64)
    if not training or rate == 0.0:
        return h, np.ones_like(h)
    mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
    return h * mask, mask


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_step(params, grads, state, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise TrainingDivergenceError(f"non-finite gradient for {k!r}")
    state.step += 1
    bc1 = 1.0 - beta1**state.step
    bc2 = 1.0 - beta2**state.step
    for k, g in grads.items():
        if k not in state.m:
            state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        m, v = state.m[k], state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        params[k] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state


def clip_grad_norm(grads, max_norm):
    """Scale ``grads`` in place so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm is not None and max_norm > 0 and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total
