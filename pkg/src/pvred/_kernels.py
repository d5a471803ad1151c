"""Hot numeric kernels, each with a numba path and a pure-numpy path.

The public names at the bottom of the module dispatch on
:data:`pvred._backend.USE_NUMBA`. Both variants stay importable under
``*_nb`` / ``*_np`` so tests and the benchmark can compare them directly.

Array conventions: rotation kernels take flattened ``(N, 3)`` inputs, the GRU
kernels take batch-major ``(B, features)`` float64 arrays. Gate blocks are
stacked in the order update (z), reset (r), candidate (h).
"""
from __future__ import annotations

import numpy as np

from ._backend import USE_NUMBA, njit

SMALL_ANGLE = 1e-6
GIMBAL_TOL = 1e-9


# ---------------------------------------------------------------------------
# quaternion transformation
# ---------------------------------------------------------------------------

def qt_forward_np(e):
    r = np.sqrt(np.sum(e * e, axis=1))
    small = r < SMALL_ANGLE
    safe = np.where(small, 1.0, r)
    s = np.where(small, 0.5 - r * r / 48.0, np.sin(0.5 * safe) / safe)
    q = np.empty((e.shape[0], 4))
    q[:, 0] = np.cos(0.5 * r)
    q[:, 1:] = s[:, None] * e
    return q


@njit
def qt_forward_nb(e):
    n = e.shape[0]
    q = np.empty((n, 4))
    for k in range(n):
        r = np.sqrt(e[k, 0] ** 2 + e[k, 1] ** 2 + e[k, 2] ** 2)
        if r < SMALL_ANGLE:
            s = 0.5 - r * r / 48.0
        else:
            s = np.sin(0.5 * r) / r
        q[k, 0] = np.cos(0.5 * r)
        for i in range(3):
            q[k, i + 1] = s * e[k, i]
    return q


def qt_jacobian_np(e):
    n = e.shape[0]
    r = np.sqrt(np.sum(e * e, axis=1))
    small = r < SMALL_ANGLE
    safe = np.where(small, 1.0, r)
    u = e / safe[:, None]
    outer_u = u[:, :, None] * u[:, None, :]
    eye = np.eye(3)
    half_sin = np.sin(0.5 * r)
    big_lower = (0.5 * np.cos(0.5 * r))[:, None, None] * outer_u + (half_sin / safe)[:, None, None] * (eye - outer_u)
    # second-order expansion around zero; needs no unit axis
    small_lower = (0.5 - r * r / 48.0)[:, None, None] * eye - e[:, :, None] * e[:, None, :] / 24.0
    jac = np.empty((n, 4, 3))
    jac[:, 0, :] = np.where(small[:, None], -0.25 * e, -0.5 * half_sin[:, None] * u)
    jac[:, 1:, :] = np.where(small[:, None, None], small_lower, big_lower)
    return jac


@njit
def qt_jacobian_nb(e):
    n = e.shape[0]
    jac = np.empty((n, 4, 3))
    for k in range(n):
        r = np.sqrt(e[k, 0] ** 2 + e[k, 1] ** 2 + e[k, 2] ** 2)
        if r < SMALL_ANGLE:
            a = 0.5 - r * r / 48.0
            for i in range(3):
                jac[k, 0, i] = -0.25 * e[k, i]
                for j in range(3):
                    jac[k, i + 1, j] = -e[k, i] * e[k, j] / 24.0
                jac[k, i + 1, i] += a
        else:
            hs = np.sin(0.5 * r)
            c = 0.5 * np.cos(0.5 * r)
            s = hs / r
            for i in range(3):
                ui = e[k, i] / r
                jac[k, 0, i] = -0.5 * hs * ui
                for j in range(3):
                    uu = ui * e[k, j] / r
                    jac[k, i + 1, j] = (c - s) * uu
                jac[k, i + 1, i] += s
    return jac


def qt_backward_np(e, g):
    return np.einsum("nij,ni->nj", qt_jacobian_np(e), g)


@njit
def qt_backward_nb(e, g):
    jac = qt_jacobian_nb(e)
    n = e.shape[0]
    out = np.zeros((n, 3))
    for k in range(n):
        for i in range(4):
            gi = g[k, i]
            for j in range(3):
                out[k, j] += jac[k, i, j] * gi
    return out


# ---------------------------------------------------------------------------
# rotation matrices and Euler angles
# ---------------------------------------------------------------------------

def rodrigues_np(e):
    n = e.shape[0]
    th2 = np.sum(e * e, axis=1)
    th = np.sqrt(th2)
    small = th < SMALL_ANGLE
    safe = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    k = np.zeros((n, 3, 3))
    k[:, 0, 1] = -e[:, 2]
    k[:, 0, 2] = e[:, 1]
    k[:, 1, 0] = e[:, 2]
    k[:, 1, 2] = -e[:, 0]
    k[:, 2, 0] = -e[:, 1]
    k[:, 2, 1] = e[:, 0]
    return np.eye(3) + a[:, None, None] * k + b[:, None, None] * (k @ k)


@njit
def rodrigues_nb(e):
    n = e.shape[0]
    out = np.empty((n, 3, 3))
    for i in range(n):
        x, y, z = e[i, 0], e[i, 1], e[i, 2]
        th2 = x * x + y * y + z * z
        th = np.sqrt(th2)
        if th < SMALL_ANGLE:
            a = 1.0 - th2 / 6.0
            b = 0.5 - th2 / 24.0
        else:
            a = np.sin(th) / th
            b = (1.0 - np.cos(th)) / th2
        # R = I + a K + b K^2 with K^2 = e e^T - |e|^2 I
        out[i, 0, 0] = 1.0 + b * (x * x - th2)
        out[i, 1, 1] = 1.0 + b * (y * y - th2)
        out[i, 2, 2] = 1.0 + b * (z * z - th2)
        out[i, 0, 1] = -a * z + b * x * y
        out[i, 1, 0] = a * z + b * x * y
        out[i, 0, 2] = a * y + b * x * z
        out[i, 2, 0] = -a * y + b * x * z
        out[i, 1, 2] = -a * x + b * y * z
        out[i, 2, 1] = a * x + b * y * z
    return out


def rotmat_to_euler_np(rot):
    """Intrinsic Z-Y-X angles ``(yaw, pitch, roll)``; roll is 0 at gimbal lock."""
    r20 = np.clip(rot[:, 2, 0], -1.0, 1.0)
    locked = np.abs(r20) >= 1.0 - GIMBAL_TOL
    out = np.empty((rot.shape[0], 3))
    out[:, 0] = np.where(locked, np.arctan2(-rot[:, 0, 1], rot[:, 1, 1]), np.arctan2(rot[:, 1, 0], rot[:, 0, 0]))
    out[:, 1] = np.where(locked, -np.sign(r20) * (0.5 * np.pi), -np.arcsin(r20))
    out[:, 2] = np.where(locked, 0.0, np.arctan2(rot[:, 2, 1], rot[:, 2, 2]))
    out[out == -np.pi] = np.pi
    return out


@njit
def rotmat_to_euler_nb(rot):
    n = rot.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        r20 = min(1.0, max(-1.0, rot[i, 2, 0]))
        if abs(r20) >= 1.0 - GIMBAL_TOL:
            out[i, 0] = np.arctan2(-rot[i, 0, 1], rot[i, 1, 1])
            out[i, 1] = -0.5 * np.pi if r20 > 0 else 0.5 * np.pi
            out[i, 2] = 0.0
        else:
            out[i, 0] = np.arctan2(rot[i, 1, 0], rot[i, 0, 0])
            out[i, 1] = -np.arcsin(r20)
            out[i, 2] = np.arctan2(rot[i, 2, 1], rot[i, 2, 2])
        for j in range(3):
            if out[i, j] == -np.pi:
                out[i, j] = np.pi
    return out


# ---------------------------------------------------------------------------
# position-velocity GRU cell
# ---------------------------------------------------------------------------

def _gru_forward(x, v, p, h_prev, ux, uv, up, w, b):
    hid = h_prev.shape[1]
    a_in = x @ ux.T + v @ uv.T + p @ up.T + b
    a_zr = a_in[:, : 2 * hid] + h_prev @ w[: 2 * hid].T
    z = 0.5 * (1.0 + np.tanh(0.5 * a_zr[:, :hid]))
    r = 0.5 * (1.0 + np.tanh(0.5 * a_zr[:, hid:]))
    hc = np.tanh(a_in[:, 2 * hid :] + (r * h_prev) @ w[2 * hid :].T)
    h = (1.0 - z) * h_prev + z * hc
    return h, z, r, hc


def _gru_backward(x, v, p, h_prev, z, r, hc, dh, ux, uv, up, w):
    hid = h_prev.shape[1]
    da = np.empty((dh.shape[0], 3 * hid))
    da_h = dh * z * (1.0 - hc * hc)
    da[:, 2 * hid :] = da_h
    w_h = w[2 * hid :]
    d_rh = da_h @ w_h
    rh = r * h_prev
    da[:, :hid] = dh * (hc - h_prev) * z * (1.0 - z)
    da[:, hid : 2 * hid] = d_rh * h_prev * r * (1.0 - r)
    da_zr = np.ascontiguousarray(da[:, : 2 * hid])
    dw = np.empty_like(w)
    dw[: 2 * hid] = da_zr.T @ h_prev
    dw[2 * hid :] = da_h.T @ rh
    dh_prev = dh * (1.0 - z) + d_rh * r + da_zr @ w[: 2 * hid]
    dux = da.T @ x
    duv = da.T @ v
    dup = da.T @ p
    db = da.sum(axis=0)
    dx = da @ ux
    dv = da @ uv
    return dux, duv, dup, dw, db, dx, dv, dh_prev


gru_forward_np = _gru_forward
gru_backward_np = _gru_backward
gru_forward_nb = njit(_gru_forward)
gru_backward_nb = njit(_gru_backward)


if USE_NUMBA:
    qt_forward = qt_forward_nb
    qt_jacobian = qt_jacobian_nb
    qt_backward = qt_backward_nb
    rodrigues = rodrigues_nb
    rotmat_to_euler = rotmat_to_euler_nb
    gru_forward = gru_forward_nb
    gru_backward = gru_backward_nb
else:
    qt_forward = qt_forward_np
    qt_jacobian = qt_jacobian_np
    qt_backward = qt_backward_np
    rodrigues = rodrigues_np
    rotmat_to_euler = rotmat_to_euler_np
    gru_forward = gru_forward_np
    gru_backward = gru_backward_np
