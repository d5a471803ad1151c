"""Euler-angle error at fixed horizons and the two reference predictors."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from ._io import atomic_write_text
from .data import MotionSequence, sample_clip
from .errors import InvalidInputError, ParseError
from .rotmath import expmap_to_euler, wrap_angle

DEFAULT_HORIZONS_MS = (80, 160, 320, 400, 560, 1000)
TABLE_HEADER = ("horizon_ms", "mean_error", "clips")


def horizon_frame(ms, fps):
    """1-based index of the frame ``ms`` milliseconds into the future."""
    # guard against 0.08 * 25 landing a hair above 2
    return int(math.ceil(ms * fps / 1000.0 - 1e-9))


@dataclass
class HorizonTable:
    errors: dict = field(default_factory=dict)
    clips: int = 1

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TABLE_HEADER)
        for h, err in self.errors.items():
            w.writerow([_fmt_num(h), repr(float(err)), self.clips])
        return buf.getvalue()

    def save(self, path):
        atomic_write_text(path, self.to_csv())

    @classmethod
    def from_csv(cls, text, source="<string>"):
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or tuple(c.strip() for c in rows[0]) != TABLE_HEADER:
            raise ParseError(f"{source}: expected header {','.join(TABLE_HEADER)}", line=1)
        errors, clips = {}, 0
        for lineno, row in enumerate(rows[1:], start=2):
            if not row:
                continue
            if len(row) != 3:
                raise ParseError(f"{source}: expected 3 fields, got {len(row)}", line=lineno)
            try:
                errors[_parse_num(row[0])] = float(row[1])
                clips = int(row[2])
            except ValueError as exc:
                raise ParseError(f"{source}: {exc}", line=lineno) from None
        return cls(errors, clips)

    def values(self):
        return np.array(list(self.errors.values()))


def _fmt_num(x):
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _parse_num(s):
    v = float(s)
    return int(v) if v.is_integer() else v


def zero_velocity_predict(X, m):
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-2] < 1:
        raise InvalidInputError("need at least one observed frame")
    last = X[..., -1:, :]
    return np.repeat(last, m, axis=-2)


def moving_average_predict(X, m, window=2):
    """Roll forward ``m`` frames, each the mean of the ``window`` frames before it."""
    X = np.asarray(X, dtype=np.float64)
    if window < 1 or X.shape[-2] < window:
        raise InvalidInputError(f"need at least window={window} observed frames")
    buf = list(np.moveaxis(X[..., -window:, :], -2, 0))
    out = []
    for _ in range(m):
        nxt = sum(buf[-window:]) / window
        out.append(nxt)
        buf.append(nxt)
    return np.stack(out, axis=-2)


def euler_distance(a, b, channel_mask=None):
    """L2 distance between poses after per-joint Euler conversion and angle wrapping."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ea = expmap_to_euler(a.reshape(a.shape[:-1] + (-1, 3))).reshape(a.shape)
    eb = expmap_to_euler(b.reshape(b.shape[:-1] + (-1, 3))).reshape(b.shape)
    diff = wrap_angle(ea - eb)
    if channel_mask is not None:
        diff = diff * np.asarray(channel_mask, dtype=np.float64)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def euler_error(Y_hat, Y, horizons_ms=DEFAULT_HORIZONS_MS, fps=25.0, channel_mask=None):
    """Per-horizon error of a single ``(m, D)`` prediction."""
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if Y_hat.shape != Y.shape:
        raise InvalidInputError(f"shape mismatch {Y_hat.shape} vs {Y.shape}")
    m = Y.shape[0]
    errors = {}
    for h in horizons_ms:
        k = horizon_frame(h, fps)
        if k < 1 or k > m:
            raise InvalidInputError(f"horizon {h} ms is frame {k}, outside the {m} predicted frames")
        errors[h] = float(euler_distance(Y_hat[k - 1], Y[k - 1], channel_mask))
    return HorizonTable(errors, clips=1)


def sample_eval_clips(sequences, n, m, num_clips, seed):
    rng = np.random.default_rng(seed)
    clips = []
    for _ in range(num_clips):
        seq = sequences[rng.integers(len(sequences))]
        clips.append(sample_clip(seq, n, m, rng))
    return clips


def mean_table(tables):
    keys = list(tables[0].errors)
    errors = {h: float(np.mean([t.errors[h] for t in tables])) for h in keys}
    return HorizonTable(errors, clips=sum(t.clips for t in tables))


def evaluate(predictor, sequences, n, m, horizons_ms=DEFAULT_HORIZONS_MS, num_seed_clips=8, seed=0,
             channel_mask=None, fps=None):
    """Average :func:`euler_error` of ``predictor(X, m)`` over deterministically sampled clips.

    The same ``seed`` always draws the same clips, so different predictors
    are scored on identical inputs.
    """
    if isinstance(sequences, MotionSequence):
        sequences = [sequences]
    fps = sequences[0].fps if fps is None else fps
    clips = sample_eval_clips(sequences, n, m, num_seed_clips, seed)
    tables = [
        euler_error(predictor(X, m), Y, horizons_ms, fps, channel_mask)
        for X, Y in clips
    ]
    return mean_table(tables)
