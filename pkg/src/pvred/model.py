"""Position-velocity recurrent encoder-decoder: wiring, losses, BPTT and training.

Every function accepts a single clip (``X`` of shape ``(n, D)``) or a batch
(``(B, n, D)``); results keep the caller's layout. Encoder and decoder share
one cell. The decoder predicts a velocity from its hidden state, adds it to
the previous pose, and feeds both predictions back in.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache

import numpy as np

from . import __version__
from ._io import atomic_write_text
from .errors import InvalidInputError, ModelStateError, ShapeError, TrainingDivergenceError
from .net import (
    PARAM_KEYS,
    AdamState,
    adam_step,
    clip_grad_norm,
    dropout,
    init_params,
    linear_backward,
    linear_forward,
    pvgru_backward,
    pvgru_forward,
)
from .posembed import embed_positions
from .rotmath import pose_qt, pose_qt_backward

log = logging.getLogger(__name__)

VARIANTS = ("pvred", "red")
LOSS_KINDS = ("quat_l1", "euler_mse")


@dataclass
class ModelConfig:
    pose_dim: int = 12
    hidden: int = 64
    n: int = 50
    m: int = 25
    pos_dim: int | None = None
    use_velocity: bool = True
    use_position: bool = True
    use_qt: bool = True
    use_bias: bool = True
    variant: str = "pvred"
    dropout: float = 0.2
    fps: float = 25.0

    def __post_init__(self):
        if self.pos_dim is None:
            self.pos_dim = self.pose_dim
        if self.variant not in VARIANTS:
            raise InvalidInputError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.n < 2 or self.m < 1:
            raise InvalidInputError(f"need n >= 2 and m >= 1, got n={self.n}, m={self.m}")
        if self.use_qt and self.pose_dim % 3:
            raise InvalidInputError("the quaternion loss needs a pose dimension divisible by 3")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidInputError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def loss_kind(self):
        return "quat_l1" if self.use_qt else "euler_mse"

    @property
    def velocity_input(self):
        return self.use_velocity and self.variant == "pvred"

    @property
    def position_input(self):
        return self.use_position and self.variant == "pvred"

    def frozen_keys(self):
        """Parameters pinned at zero because their input or role is switched off."""
        keys = []
        if not self.velocity_input:
            keys.append("Uv")
        if not self.position_input:
            keys.append("Up")
        if not self.use_bias:
            keys += ["b", "b_out"]
        return tuple(keys)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidInputError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


# ablation variants: (velocity input, position input, quaternion loss)
ABLATIONS = {
    "full": (True, True, True),
    "var1": (False, True, True),
    "var2": (True, False, True),
    "var3": (True, True, False),
    "var4": (False, False, True),
    "var5": (False, True, False),
    "var6": (True, False, False),
}


def ablation_config(name, **overrides):
    vel, pos, qt = ABLATIONS[name]
    return ModelConfig(use_velocity=vel, use_position=pos, use_qt=qt, **overrides)


def init_model(config, seed):
    cell, linear = init_params(config.pose_dim, config.pos_dim, config.hidden, seed)
    params = {**cell, **linear}
    for k in config.frozen_keys():
        params[k][...] = 0.0
    return params


@lru_cache(maxsize=32)
def _position_table(count, dim):
    table = embed_positions(np.arange(1, count + 1), dim)
    table.setflags(write=False)
    return table


def compute_velocities(X):
    """First differences along the frame axis; the first frame gets zero velocity."""
    X = np.asarray(X, dtype=np.float64)
    V = np.zeros_like(X)
    V[..., 1:, :] = X[..., 1:, :] - X[..., :-1, :]
    return V


def _batched(X, width, name):
    arr = np.asarray(X, dtype=np.float64)
    squeeze = arr.ndim == 2
    if squeeze:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[2] != width:
        raise ShapeError(f"{name}: expected (n, {width}) or (B, n, {width}), got {np.shape(X)}")
    return arr, squeeze


@dataclass
class EncodeResult:
    h_n: np.ndarray
    caches: list
    n: int
    squeeze: bool = False


@dataclass
class PredictionBatch:
    poses: np.ndarray
    velocities: np.ndarray
    caches: list = field(default_factory=list)
    dropped: list = field(default_factory=list)
    masks: list = field(default_factory=list)
    squeeze: bool = False

    @property
    def Y_hat(self):
        return self.poses[0] if self.squeeze else self.poses


def encode(params, X, config):
    """Run the shared cell over the observed frames starting from a zero state."""
    Xb, squeeze = _batched(X, config.pose_dim, "X")
    batch, n, _ = Xb.shape
    if n < 1:
        raise ShapeError("X has no frames")
    V = compute_velocities(Xb) if config.velocity_input else np.zeros_like(Xb)
    if config.position_input:
        P = np.broadcast_to(_position_table(n, config.pos_dim)[None], (batch, n, config.pos_dim))
    else:
        P = np.zeros((batch, n, config.pos_dim))
    h = np.zeros((batch, config.hidden))
    caches = []
    for t in range(n):
        h, cache = pvgru_forward(params, Xb[:, t], V[:, t], P[:, t], h)
        caches.append(cache)
    return EncodeResult(h[0] if squeeze else h, caches, n, squeeze)


def decode(params, h_n, x_n, config, m=None, n_observed=None, rng=None, training=False, _inputs=None):
    """Autoregressive prediction of ``m`` frames (default ``config.m``).

    With ``training=True`` dropout is applied to the hidden state ahead of
    the regression layer, which needs ``rng``.
    """
    m = config.m if m is None else m
    if m < 1:
        raise InvalidInputError(f"m must be >= 1, got {m}")
    n_obs = config.n if n_observed is None else n_observed
    use_vel, use_pos = _inputs if _inputs is not None else (config.velocity_input, config.position_input)
    x = np.asarray(x_n, dtype=np.float64)
    squeeze = x.ndim == 1
    x = np.atleast_2d(x)
    h = np.atleast_2d(np.asarray(h_n, dtype=np.float64))
    batch = x.shape[0]
    if training and config.dropout > 0 and rng is None:
        raise InvalidInputError("training-mode dropout needs an rng")
    pos = _position_table(n_obs + m, config.pos_dim) if use_pos else None
    zeros_v = np.zeros((batch, config.pose_dim))
    zeros_p = np.zeros((batch, config.pos_dim))

    poses = np.empty((batch, m, config.pose_dim))
    vels = np.empty_like(poses)
    out = PredictionBatch(poses, vels, squeeze=squeeze)
    for j in range(1, m + 1):
        d, mask = dropout(h, config.dropout, rng, training)
        v_hat = linear_forward(params, d)
        x = x + v_hat
        poses[:, j - 1] = x
        vels[:, j - 1] = v_hat
        out.dropped.append(d)
        out.masks.append(mask)
        if j < m:
            p = np.broadcast_to(pos[n_obs + j - 1], (batch, config.pos_dim)) if use_pos else zeros_p
            h, cache = pvgru_forward(params, x, v_hat if use_vel else zeros_v, p, h)
            out.caches.append(cache)
    return out


def red_decode(params, h_n, x_n, config, m=None, n_observed=None, rng=None, training=False):
    """Residual decoder fed with poses only (no velocity or position inputs)."""
    return decode(params, h_n, x_n, config, m, n_observed, rng, training, _inputs=(False, False))


def forward(params, X, config, m=None, rng=None, training=False):
    enc = encode(params, X, config)
    Xb, _ = _batched(X, config.pose_dim, "X")
    dec = decode(params, np.atleast_2d(enc.h_n), Xb[:, -1], config, m, enc.n, rng, training)
    dec.squeeze = enc.squeeze
    return enc, dec


def predict(params, X, config, m=None):
    """Inference-mode prediction; returns ``(m, D)`` or ``(B, m, D)``."""
    return forward(params, X, config, m)[1].Y_hat


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def _pair(Y_hat, Y):
    a = np.asarray(Y_hat, dtype=np.float64)
    b = np.asarray(Y, dtype=np.float64)
    if a.shape != b.shape or a.ndim not in (2, 3):
        raise ShapeError(f"prediction {a.shape} and target {b.shape} must share an (m, D) or (B, m, D) shape")
    if a.ndim == 2:
        a, b = a[None], b[None]
    return a, b


def loss_quat_l1(Y_hat, Y):
    """Mean over frames (and clips) of the L1 distance between quaternion poses."""
    a, b = _pair(Y_hat, Y)
    diff = pose_qt(b) - pose_qt(a)
    return float(np.abs(diff).sum() / (a.shape[0] * a.shape[1]))


def loss_quat_l1_grad(Y_hat, Y):
    a, b = _pair(Y_hat, Y)
    diff = pose_qt(b) - pose_qt(a)
    upstream = -np.sign(diff) / (a.shape[0] * a.shape[1])
    return pose_qt_backward(a, upstream).reshape(np.shape(Y_hat))


def loss_mse(Y_hat, Y):
    """Mean over frames (and clips) of the per-frame L2 distance."""
    a, b = _pair(Y_hat, Y)
    return float(np.linalg.norm(b - a, axis=-1).sum() / (a.shape[0] * a.shape[1]))


def loss_mse_grad(Y_hat, Y):
    a, b = _pair(Y_hat, Y)
    diff = b - a
    norm = np.linalg.norm(diff, axis=-1, keepdims=True)
    safe = np.where(norm > 0, norm, 1.0)
    g = np.where(norm > 0, -diff / safe, 0.0) / (a.shape[0] * a.shape[1])
    return g.reshape(np.shape(Y_hat))


LOSSES = {"quat_l1": (loss_quat_l1, loss_quat_l1_grad), "euler_mse": (loss_mse, loss_mse_grad)}


def compute_loss(Y_hat, Y, config):
    return LOSSES[config.loss_kind][0](Y_hat, Y)


# ---------------------------------------------------------------------------
# backpropagation through time
# ---------------------------------------------------------------------------

def backward(params, enc, pred, Y, config):
    """Exact gradients of the configured loss with respect to every parameter."""
    if enc is None or pred is None or not enc.caches:
        raise ModelStateError("backward needs the caches of a forward pass")
    m = pred.poses.shape[1]
    if len(pred.caches) != m - 1 or len(pred.dropped) != m:
        raise ModelStateError("decoder caches are incomplete")
    Yb = np.asarray(Y, dtype=np.float64).reshape(pred.poses.shape)
    dY = LOSSES[config.loss_kind][1](pred.poses, Yb)
    use_vel = config.velocity_input

    grads = {k: np.zeros_like(v) for k, v in params.items()}
    batch = pred.poses.shape[0]
    dx_carry = np.zeros((batch, config.pose_dim))
    dh_carry = np.zeros((batch, config.hidden))
    for j in range(m, 0, -1):
        dx = dY[:, j - 1] + dx_carry
        dh_from_cell = 0.0
        if j < m:
            g, dxin, dvin, dh_from_cell = pvgru_backward(params, pred.caches[j - 1], dh_carry)
            for k, val in g.items():
                grads[k] += val
            dx = dx + dxin
            dv = dx + dvin if use_vel else dx
        else:
            dv = dx
        dx_carry = dx
        dW, db, dd = linear_backward(params, pred.dropped[j - 1], dv)
        grads["W_out"] += dW
        grads["b_out"] += db
        dh_carry = dh_from_cell + dd * pred.masks[j - 1]
    for cache in reversed(enc.caches):
        g, _, _, dh_carry = pvgru_backward(params, cache, dh_carry)
        for k, val in g.items():
            grads[k] += val
    for k in config.frozen_keys():
        grads[k][...] = 0.0
    return grads


def loss_and_grads(params, X, Y, config, rng=None, training=False):
    enc, pred = forward(params, X, config, m=np.shape(Y)[-2], rng=rng, training=training)
    loss = compute_loss(pred.poses, np.asarray(Y).reshape(pred.poses.shape), config)
    return loss, backward(params, enc, pred, Y, config)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    iterations: int = 2000
    batch_size: int = 16
    lr: float = 1e-4
    clip_norm: float = 5.0
    seed: int = 0


def sample_batch(sequences, n, m, batch_size, rng):
    from .data import sample_clip

    X = np.empty((batch_size, n, sequences[0].frames.shape[1]))
    Y = np.empty((batch_size, m, X.shape[2]))
    for i in range(batch_size):
        seq = sequences[rng.integers(len(sequences))]
        X[i], Y[i] = sample_clip(seq, n, m, rng)
    return X, Y


def train(params, sequences, cfg, callback=None):
    """Mini-batch Adam on uniformly sampled clips.

    ``params`` is updated in place and returned together with the per-iteration
    loss history. A single seeded generator drives both clip sampling and
    dropout, so a fixed ``cfg.seed`` reproduces the run exactly.
    """
    mc = cfg.model
    rng = np.random.default_rng(cfg.seed)
    state = AdamState()
    history = []
    for it in range(1, cfg.iterations + 1):
        X, Y = sample_batch(sequences, mc.n, mc.m, cfg.batch_size, rng)
        loss, grads = loss_and_grads(params, X, Y, mc, rng=rng, training=True)
        if not math.isfinite(loss):
            raise TrainingDivergenceError(f"non-finite loss at iteration {it}", iteration=it)
        clip_grad_norm(grads, cfg.clip_norm)
        try:
            adam_step(params, grads, state, cfg.lr)
        except TrainingDivergenceError as exc:
            raise TrainingDivergenceError(f"{exc} at iteration {it}", iteration=it) from None
        history.append(loss)
        if callback is not None:
            callback(it, loss)
    return params, history


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

MODEL_FORMAT = "pvred-model"


def model_document(params, config, meta=None):
    # json writes floats with repr(), which round-trips float64 exactly
    doc = {
        "format": MODEL_FORMAT,
        "tool_version": __version__,
        "config": asdict(config),
        "meta": meta or {},
        "params": {k: params[k].tolist() for k in PARAM_KEYS},
    }
    return json.dumps(doc, indent=1, allow_nan=False) + "\n"


def save_model(path, params, config, meta=None):
    atomic_write_text(path, model_document(params, config, meta))


def load_model(path):
    """Returns ``(params, config, meta)``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != MODEL_FORMAT:
        raise InvalidInputError(f"{path} is not a {MODEL_FORMAT} document")
    config = ModelConfig.from_dict(doc["config"])
    params = {k: np.asarray(doc["params"][k], dtype=np.float64) for k in PARAM_KEYS}
    expected = {k: v.shape for k, v in init_model(config, 0).items()}
    for k, shape in expected.items():
        if params[k].shape != shape:
            raise ShapeError(f"parameter {k} has shape {params[k].shape}, expected {shape}")
    return params, config, doc.get("meta", {})
