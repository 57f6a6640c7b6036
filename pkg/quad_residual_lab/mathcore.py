"""Fixed-size linear algebra and SO(3) helpers shared by every module."""

from __future__ import annotations

import numpy as np
from numpy.typing import NDArray
from typing_extensions import TypeAlias

Vec3: TypeAlias = NDArray[np.float64]
Mat3: TypeAlias = NDArray[np.float64]

E_Z: Vec3 = np.array([0.0, 0.0, 1.0])

SKEW_TOLERANCE = 1e-9
SO3_DISTANCE_LIMIT = 0.1


class NotSkewSymmetricError(ValueError):
    """Raised when vee() receives a matrix that is not skew-symmetric."""


class NotARotationError(ValueError):
    """Raised when a matrix is too far from SO(3) to be repaired."""


def vec3(x: float = 0.0, y: float = 0.0, z: float = 0.0) -> Vec3:
    """Build a float64 3-vector."""
    return np.array([x, y, z], dtype=np.float64)


def hat(v: Vec3) -> Mat3:
    """Return the skew-symmetric matrix S with S @ u == cross(v, u)."""
    x, y, z = float(v[0]), float(v[1]), float(v[2])
    return np.array(
        [
            [0.0, -z, y],
            [z, 0.0, -x],
            [-y, x, 0.0],
        ]
    )


def vee(m: Mat3, tolerance: float = SKEW_TOLERANCE) -> Vec3:
    """Inverse of hat(); rejects matrices that are not skew-symmetric."""
    m = np.asarray(m, dtype=np.float64)
    asymmetry = float(np.max(np.abs(m + m.T)))
    if asymmetry > tolerance:
        raise NotSkewSymmetricError(
            f"Matrix is not skew-symmetric (max |M + M^T| = {asymmetry:.3e})"
        )
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def skew_part(m: Mat3) -> Mat3:
    """Return (M - M^T) / 2."""
    return 0.5 * (m - m.T)


def orthonormalize(r: Mat3) -> Mat3:
    """Project a near-rotation onto SO(3) (polar decomposition via SVD)."""
    r = np.asarray(r, dtype=np.float64)
    u, _, vt = np.linalg.svd(r)
    d = np.sign(np.linalg.det(u @ vt))
    q = u @ np.diag([1.0, 1.0, d]) @ vt
    distance = float(np.linalg.norm(r - q))
    if not np.isfinite(distance) or distance > SO3_DISTANCE_LIMIT:
        raise NotARotationError(
            f"Matrix is {distance:.3e} away from SO(3) (limit {SO3_DISTANCE_LIMIT})"
        )
    return q


def rot_x(angle: float) -> Mat3:
    """Rotation about the x axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> Mat3:
    """Rotation about the y axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> Mat3:
    """Rotation about the z axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def normalize(v: Vec3) -> Vec3:
    """Return v / |v|."""
    return v / np.linalg.norm(v)


def orthogonality_error(r: Mat3) -> float:
    """Frobenius norm of R^T R - I."""
    return float(np.linalg.norm(r.T @ r - np.eye(3)))
