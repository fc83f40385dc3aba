"""Shared fixtures and synthetic-geometry helpers for the test suite."""

import math

import numpy as np
import pytest

from heliocast.frames import SolarPosition, from_angles
from heliocast.imaging import ProjectionModel


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] *= -1.0
    return q


def rotation_error(r1: np.ndarray, r2: np.ndarray) -> float:
    """Angle of r1.T @ r2 via the Frobenius norm.

    Unlike the trace/acos route this keeps full precision for tiny
    angles (acos near 1 floors at ~5e-8 rad).
    """
    fro = float(np.linalg.norm(r1 - r2))
    return 2.0 * math.asin(min(1.0, fro / (2.0 * math.sqrt(2.0))))


def perturb_direction(v: np.ndarray, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate v by `angle` radians about a random perpendicular axis."""
    axis = np.cross(v, rng.normal(size=3))
    n = np.linalg.norm(axis)
    while n < 1e-12:
        axis = np.cross(v, rng.normal(size=3))
        n = np.linalg.norm(axis)
    axis /= n
    return v * math.cos(angle) + np.cross(axis, v) * math.sin(angle)


def sun_at(zenith_deg: float, azimuth_deg: float) -> SolarPosition:
    return SolarPosition(math.radians(zenith_deg), math.radians(azimuth_deg))


def project_rectangle(
    rng: np.random.Generator,
    projection: ProjectionModel,
    width: int,
    height: int,
    max_tilt_deg: float = 75.0,
):
    """A random 3D rectangle in front of a camera, projected to pixels.

    Returns (corner_pixels (4, 2), true_normal, up_camera).  The camera
    frame is treated as the Earth frame (identity orientation) so the
    up vector is +z and the true normal points above the horizon.
    """
    up = np.array([0.0, 0.0, 1.0])
    for _ in range(1000):
        tilt = math.radians(rng.uniform(0.0, max_tilt_deg))
        az = rng.uniform(0.0, 2.0 * math.pi)
        n = from_angles(tilt, az)
        # rectangle axes in the panel plane
        ref = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        e1 = np.cross(ref, n)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        roll = rng.uniform(0.0, 2.0 * math.pi)
        a1 = math.cos(roll) * e1 + math.sin(roll) * e2
        a2 = -math.sin(roll) * e1 + math.cos(roll) * e2
        center = rng.normal(size=3)
        cn = np.linalg.norm(center)
        if cn < 0.3:
            continue
        center = center / cn * rng.uniform(2.0, 6.0)
        w_half = rng.uniform(0.3, 1.2)
        h_half = rng.uniform(0.3, 1.2)
        corners3 = np.array(
            [
                center + w_half * a1 + h_half * a2,
                center - w_half * a1 + h_half * a2,
                center - w_half * a1 - h_half * a2,
                center + w_half * a1 - h_half * a2,
            ]
        )
        dirs = corners3 / np.linalg.norm(corners3, axis=1, keepdims=True)
        # keep the rectangle compact in angle so the Case 1 reprojection
        # (90 degree FOV about the mean ray) is well conditioned
        m = dirs.sum(axis=0)
        m /= np.linalg.norm(m)
        if np.min(dirs @ m) < math.cos(math.radians(60.0)):
            continue
        # the panel must face the camera, not edge-on
        if abs(float(np.dot(n, m))) < 0.15:
            continue
        proj = [projection.project(d, width, height) for d in dirs]
        if not all(ok for _, _, ok in proj):
            continue
        uv = np.array([(u, v) for u, v, _ in proj])
        if np.any(~np.isfinite(uv)):
            continue
        if np.any(uv < 1.0) or np.any(uv[:, 0] > width - 1.0) or np.any(uv[:, 1] > height - 1.0):
            continue
        return uv, n, up
    raise RuntimeError("failed to generate a visible rectangle")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
