"""Sinusoidal temporal position embedding.

Frame indices are 1-based. Component pairs are laid out as
``(cos(t w_1), sin(t w_1), cos(t w_2), sin(t w_2), ...)`` with
``w_i = 10000 ** (-2 i / d)`` for ``i = 1 .. ceil(d / 2)``; an odd ``d``
keeps only the cosine of the final pair.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidInputError


def frequencies(d):
    i = np.arange(1, (d + 1) // 2 + 1, dtype=np.float64)
    return 10000.0 ** (-2.0 * i / d)


def embed_positions(ts, d):
    """Embeddings for every frame index in ``ts``; returns shape ``(len(ts), d)``."""
    if d < 1:
        raise InvalidInputError(f"embedding dimension must be >= 1, got {d}")
    t = np.asarray(ts, dtype=np.float64).reshape(-1)
    if np.any(t < 1):
        raise InvalidInputError("frame indices start at 1")
    angles = t[:, None] * frequencies(d)[None, :]
    out = np.empty((t.size, 2 * angles.shape[1]))
    out[:, 0::2] = np.cos(angles)
    out[:, 1::2] = np.sin(angles)
    return out[:, :d]


def embed_position(t, d):
    return embed_positions([t], d)[0]


def offset_map(k, d):
    """Matrix ``M`` with ``M @ embed_position(t, d) == embed_position(t + k, d)`` for every ``t``.

    Only defined for even ``d``; a lone cosine cannot be advanced linearly.
    """
    if d < 2 or d % 2:
        raise InvalidInputError(f"offset_map needs an even dimension >= 2, got {d}")
    m = np.zeros((d, d))
    for i, w in enumerate(frequencies(d)):
        c, s = np.cos(k * w), np.sin(k * w)
        j = 2 * i
        # (cos, sin) pair rotates forward by k*w
        m[j, j], m[j, j + 1] = c, -s
        m[j + 1, j], m[j + 1, j + 1] = s, c
    return m
