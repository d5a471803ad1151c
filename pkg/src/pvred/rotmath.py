"""Rotation conversions between exponential maps, quaternions, matrices and Euler angles.

All functions broadcast over leading axes: an axis-angle input of shape
``(..., 3)`` yields a quaternion of shape ``(..., 4)``. Quaternions are
ordered ``(w, x, y, z)``. Euler triples follow the intrinsic Z-Y-X
convention and are returned as ``(yaw_z, pitch_y, roll_x)``.
"""
from __future__ import annotations

import numpy as np

from . import _kernels
from ._kernels import SMALL_ANGLE
from .errors import InvalidInputError, ShapeError

__all__ = [
    "SMALL_ANGLE",
    "expmap_to_quat",
    "expmap_to_quat_jacobian",
    "expmap_to_rotmat",
    "expmap_to_euler",
    "euler_to_rotmat",
    "quat_to_rotmat",
    "rotmat_to_euler",
    "pose_qt",
    "pose_qt_backward",
    "wrap_angle",
]


def _as_vectors(e, width, name="e"):
    arr = np.asarray(e, dtype=np.float64)
    if arr.shape[-1:] != (width,):
        raise ShapeError(f"{name} must have trailing dimension {width}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return arr


def expmap_to_quat(e):
    """Map exponential-map vectors to unit quaternions.

    Near zero the ratio ``sin(|e|/2) / |e|`` is replaced by its Taylor
    expansion ``1/2 - |e|^2/48`` (below :data:`SMALL_ANGLE`).
    """
    arr = _as_vectors(e, 3)
    flat = np.ascontiguousarray(arr.reshape(-1, 3))
    return _kernels.qt_forward(flat).reshape(arr.shape[:-1] + (4,))


def expmap_to_quat_jacobian(e):
    """Return ``dq/de`` with shape ``(..., 4, 3)``."""
    arr = _as_vectors(e, 3)
    flat = np.ascontiguousarray(arr.reshape(-1, 3))
    return _kernels.qt_jacobian(flat).reshape(arr.shape[:-1] + (4, 3))


def expmap_to_rotmat(e):
    """Rodrigues' formula."""
    arr = _as_vectors(e, 3)
    flat = np.ascontiguousarray(arr.reshape(-1, 3))
    return _kernels.rodrigues(flat).reshape(arr.shape[:-1] + (3, 3))


def quat_to_rotmat(q, tol=1e-6):
    arr = _as_vectors(q, 4, "q")
    norms = np.linalg.norm(arr, axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise InvalidInputError(f"quaternion norm deviates from 1 by more than {tol}")
    w, x, y, z = np.moveaxis(arr, -1, 0)
    rot = np.empty(arr.shape[:-1] + (3, 3))
    rot[..., 0, 0] = 1 - 2 * (y * y + z * z)
    rot[..., 0, 1] = 2 * (x * y - w * z)
    rot[..., 0, 2] = 2 * (x * z + w * y)
    rot[..., 1, 0] = 2 * (x * y + w * z)
    rot[..., 1, 1] = 1 - 2 * (x * x + z * z)
    rot[..., 1, 2] = 2 * (y * z - w * x)
    rot[..., 2, 0] = 2 * (x * z - w * y)
    rot[..., 2, 1] = 2 * (y * z + w * x)
    rot[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return rot


def rotmat_to_euler(rot):
    """Z-Y-X extraction. At gimbal lock (``|R[2,0]| = 1`` within 1e-9) roll is set to 0."""
    arr = np.asarray(rot, dtype=np.float64)
    if arr.shape[-2:] != (3, 3):
        raise ShapeError(f"rotation matrices must be (..., 3, 3), got {arr.shape}")
    flat = np.ascontiguousarray(arr.reshape(-1, 3, 3))
    return _kernels.rotmat_to_euler(flat).reshape(arr.shape[:-2] + (3,))


def expmap_to_euler(e):
    return rotmat_to_euler(expmap_to_rotmat(e))


def euler_to_rotmat(angles):
    """Inverse of :func:`rotmat_to_euler`: ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``."""
    arr = _as_vectors(angles, 3, "angles")
    a, b, c = np.moveaxis(arr, -1, 0)
    ca, sa, cb, sb, cc, sc = np.cos(a), np.sin(a), np.cos(b), np.sin(b), np.cos(c), np.sin(c)
    rot = np.empty(arr.shape[:-1] + (3, 3))
    rot[..., 0, 0] = ca * cb
    rot[..., 0, 1] = ca * sb * sc - sa * cc
    rot[..., 0, 2] = ca * sb * cc + sa * sc
    rot[..., 1, 0] = sa * cb
    rot[..., 1, 1] = sa * sb * sc + ca * cc
    rot[..., 1, 2] = sa * sb * cc - ca * sc
    rot[..., 2, 0] = -sb
    rot[..., 2, 1] = cb * sc
    rot[..., 2, 2] = cb * cc
    return rot


def wrap_angle(theta):
    """Wrap angles into ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=np.float64), 2.0 * np.pi)


def _joint_view(x, name="x"):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] % 3 != 0:
        raise ShapeError(f"{name} must have a trailing dimension divisible by 3, got {arr.shape}")
    return arr


def pose_qt(x):
    """Quaternion transformation of a pose: ``(..., 3J)`` exponential maps to ``(..., 4J)``."""
    arr = _joint_view(x)
    joints = arr.shape[-1] // 3
    q = expmap_to_quat(arr.reshape(arr.shape[:-1] + (joints, 3)))
    return q.reshape(arr.shape[:-1] + (4 * joints,))


def pose_qt_backward(x, upstream):
    """Pull a gradient on :func:`pose_qt` outputs back to the exponential maps."""
    arr = _joint_view(x)
    joints = arr.shape[-1] // 3
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != arr.shape[:-1] + (4 * joints,):
        raise ShapeError(f"upstream shape {g.shape} does not match pose shape {arr.shape}")
    e = np.ascontiguousarray(arr.reshape(-1, 3))
    if not np.all(np.isfinite(e)):
        raise InvalidInputError("pose contains non-finite values")
    grad = _kernels.qt_backward(e, np.ascontiguousarray(g.reshape(-1, 4)))
    return grad.reshape(arr.shape)
