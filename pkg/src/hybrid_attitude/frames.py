"""Frames, rotation helpers and attitude error metrics.

Conventions used across the package:

* A rotation ``R`` maps body-frame (BCS) coordinates to local-frame (LCS)
  coordinates, ``t_local = R @ t_body``.
* ``vec`` stacks matrix columns (column-major), so that
  ``vec(A @ X @ B) == kron(B.T, A) @ vec(X)``.
* Euler angles compose as ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""

from typing import NamedTuple

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

from .exceptions import DegenerateInputError

ORTHO_TOL = 1e-10
UNIT_TOL = 1e-12


class EulerAngles(NamedTuple):
    """Yaw, pitch, roll in radians (Z-Y-X composition)."""

    yaw: float
    pitch: float
    roll: float

    @classmethod
    def from_degrees(cls, yaw, pitch, roll):
        return cls(np.deg2rad(yaw), np.deg2rad(pitch), np.deg2rad(roll))


def vec(M):
    """Column-stacking vectorization."""
    return np.asarray(M).reshape(-1, order="F")


def unvec(v, rows, cols=None):
    """Inverse of :func:`vec`."""
    v = np.asarray(v)
    if cols is None:
        cols = v.size // rows
    return v.reshape(rows, cols, order="F")


def skew(w):
    """Cross-product matrix, ``skew(a) @ b == cross(a, b)``."""
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def is_rotation(R, tol=ORTHO_TOL):
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.max(np.abs(R.T @ R - np.eye(3))) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def rotation_from_euler(angles):
    """Rotation matrix ``Rz(yaw) @ Ry(pitch) @ Rx(roll)``.

    Parameters
    ----------
    angles : EulerAngles or sequence of three floats
        (yaw, pitch, roll) in radians. Pitch is expected in [-pi/2, pi/2].

    Returns
    -------
    ndarray, shape (3, 3)
    """
    yaw, pitch, roll = angles
    # intrinsic upper-case sequence: Z first, then the new Y, then the new X
    return _ScipyRotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()


def random_rotation(rng):
    """Uniformly distributed rotation (Haar measure on SO(3))."""
    return _ScipyRotation.random(random_state=rng).as_matrix()


def body_to_local(R, t_body):
    return np.asarray(R, dtype=float) @ np.asarray(t_body, dtype=float)


def geodesic_angle_deg(Ra, Rb):
    """Rotation angle of ``Ra.T @ Rb`` in degrees, in [0, 180].

    For rotations ``|Ra - Rb|_F^2 = 8 sin^2(angle / 2)``; the arcsin form keeps full
    precision for small angles, where ``arccos((trace - 1) / 2)`` loses about half
    the significant digits. The argument is clamped to [0, 1].
    """
    s = np.linalg.norm(np.asarray(Ra, dtype=float) - np.asarray(Rb, dtype=float)) / np.sqrt(8.0)
    return float(np.degrees(2.0 * np.arcsin(np.clip(s, 0.0, 1.0))))


def frobenius_error(Ma, Mb):
    Ma = np.asarray(Ma, dtype=float)
    Mb = np.asarray(Mb, dtype=float)
    if Ma.shape != Mb.shape:
        raise ValueError(f"shape mismatch: {Ma.shape} vs {Mb.shape}")
    return float(np.linalg.norm(Ma - Mb))


def project_to_so3(M):
    """Nearest rotation to ``M`` in the Frobenius norm.

    Uses the SVD ``M = U S V^T`` and returns ``U diag(1, 1, det(U V^T)) V^T``.

    Raises
    ------
    DegenerateInputError
        If ``M`` is not finite or has two or more vanishing singular values,
        in which case the nearest rotation is not unique.
    """
    M = np.asarray(M, dtype=float)
    if M.shape != (3, 3) or not np.all(np.isfinite(M)):
        raise DegenerateInputError("project_to_so3 expects a finite 3x3 matrix")
    U, s, Vt = np.linalg.svd(M)
    if s[0] == 0.0 or s[1] <= 1e-12 * s[0]:
        raise DegenerateInputError(
            f"matrix has rank < 2 (singular values {s}); nearest rotation is not unique"
        )
    d = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ np.diag([1.0, 1.0, d]) @ Vt


def project_to_so3_batch(M):
    """Vectorized :func:`project_to_so3` over a stack of shape (B, 3, 3).

    No degeneracy check; used inside the ambiguity search.
    """
    U, _, Vt = np.linalg.svd(M)
    d = np.sign(np.linalg.det(U @ Vt))
    d[d == 0] = 1.0
    U = U.copy()
    U[..., :, 2] *= d[..., None]
    return U @ Vt
