"""Coordinate conventions, unit directions, rotations, and orientation fitting.

Conventions used throughout the package:

* Earth frame: x = East, y = North, z = Up.
* Azimuth is measured clockwise from North (compass convention), zenith
  down from +z.
* A (zenith, azimuth) pair maps to the unit vector
  ``d = (sin(zen) * sin(az), sin(zen) * cos(az), cos(zen))``.

Directions are plain length-3 numpy arrays, rotations are 3x3 numpy
arrays with ``R @ v_camera = v_earth`` for the camera-to-Earth rotation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from heliocast.errors import GeometryError, RangeError

UNIT_TOL = 1e-9


def direction(x: float, y: float, z: float) -> np.ndarray:
    """Build a unit direction, normalizing the given components."""
    v = np.array([x, y, z], dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0 or not np.isfinite(n):
        raise GeometryError("direction components must form a nonzero finite vector")
    return v / n


def is_unit(v: np.ndarray, tol: float = UNIT_TOL) -> bool:
    return abs(float(np.linalg.norm(v)) - 1.0) <= tol


def from_angles(zenith: float, azimuth: float) -> np.ndarray:
    """Unit vector for (zenith, azimuth) in radians."""
    s = math.sin(zenith)
    return np.array([s * math.sin(azimuth), s * math.cos(azimuth), math.cos(zenith)])


def to_angles(v: np.ndarray):
    """(zenith in [0, pi], azimuth in [0, 2*pi)) of unit vector(s).

    Accepts a 3-vector (scalar output) or an (N, 3) array.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        zen = math.acos(min(1.0, max(-1.0, float(v[2]))))
        az = math.atan2(float(v[0]), float(v[1])) % (2.0 * math.pi)
        return zen, az
    zen = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
    az = np.arctan2(v[:, 0], v[:, 1]) % (2.0 * math.pi)
    return zen, az


def is_rotation(r: np.ndarray, tol: float = UNIT_TOL) -> bool:
    """Orthonormal with determinant +1, entrywise within ``tol``."""
    if r.shape != (3, 3):
        return False
    if not np.allclose(r.T @ r, np.eye(3), atol=tol, rtol=0.0):
        return False
    return abs(float(np.linalg.det(r)) - 1.0) <= tol


def rotation_about_z(angle: float) -> np.ndarray:
    """Rotation by ``angle`` radians about +z (right-handed)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_angle(r: np.ndarray) -> float:
    """Rotation angle of ``r`` in radians."""
    c = (float(np.trace(r)) - 1.0) / 2.0
    return math.acos(min(1.0, max(-1.0, c)))


def rotation_between(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimal rotation taking unit vector ``a`` onto unit vector ``b``."""
    axis = np.cross(a, b)
    s = float(np.linalg.norm(axis))
    c = float(np.dot(a, b))
    if s < 1e-15:
        if c > 0.0:
            return np.eye(3)
        # antiparallel: rotate pi about any axis orthogonal to a
        ortho = np.cross(a, [1.0, 0.0, 0.0])
        if np.linalg.norm(ortho) < 1e-8:
            ortho = np.cross(a, [0.0, 1.0, 0.0])
        ortho /= np.linalg.norm(ortho)
        return 2.0 * np.outer(ortho, ortho) - np.eye(3)
    axis = axis / s
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


@dataclass(frozen=True)
class GeoTime:
    """A geographic location and a UTC instant.

    The instant must fall within 1950-2100, the validity window of the
    ephemeris used by :func:`heliocast.solar.solar_position`.
    """

    latitude: float
    longitude: float
    instant: datetime

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise RangeError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise RangeError(f"longitude {self.longitude} outside [-180, 180]")
        inst = self.instant
        if inst.tzinfo is None:
            inst = inst.replace(tzinfo=timezone.utc)
        else:
            inst = inst.astimezone(timezone.utc)
        object.__setattr__(self, "instant", inst)
        if not 1950 <= inst.year <= 2100:
            raise RangeError(f"instant {inst.isoformat()} outside 1950-2100")


@dataclass(frozen=True)
class SolarPosition:
    """Sun zenith and azimuth in radians (azimuth clockwise from North)."""

    zenith: float
    azimuth: float

    def __post_init__(self):
        if not 0.0 <= self.zenith <= math.pi:
            raise RangeError(f"zenith {self.zenith} outside [0, pi]")
        object.__setattr__(self, "azimuth", self.azimuth % (2.0 * math.pi))

    @property
    def vector(self) -> np.ndarray:
        """Unit vector pointing from the observer toward the sun."""
        return from_angles(self.zenith, self.azimuth)

    @property
    def above_horizon(self) -> bool:
        return self.zenith < math.pi / 2.0


def kabsch(pairs: list[tuple[np.ndarray, np.ndarray]]) -> np.ndarray:
    """Least-squares rotation R with R @ v_cam ~= v_earth over all pairs.

    Standard SVD solution of the orthogonal Procrustes problem with the
    determinant sign correction.  Requires at least two pairs whose
    camera-frame directions are not all mutually parallel.
    """
    if len(pairs) < 2:
        raise GeometryError("kabsch needs at least 2 direction pairs")
    cam = np.array([np.asarray(c, dtype=float) for c, _ in pairs])
    earth = np.array([np.asarray(e, dtype=float) for _, e in pairs])
    cross = np.cross(cam[0], cam[1:])
    if np.max(np.linalg.norm(cross, axis=1)) < 1e-12:
        raise GeometryError("camera-frame directions are mutually parallel")
    h = earth.T @ cam
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(u @ vt))
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    return r


def azimuth_align(
    gravity_cam: np.ndarray,
    gravity_earth: np.ndarray,
    sun_cam: np.ndarray,
    sun_earth: np.ndarray,
) -> np.ndarray:
    """Camera-to-Earth rotation that maps gravity exactly and fits the sun.

    First builds the minimal rotation taking ``gravity_cam`` onto
    ``gravity_earth``; the remaining freedom (a rotation about +z, since
    gravity is along -z) is fixed in closed form by minimizing the
    residual between the rotated camera-frame sun vector and the
    Earth-frame sun vector.
    """
    g_c = direction(*gravity_cam)
    g_e = direction(*gravity_earth)
    s_c = direction(*sun_cam)
    s_e = direction(*sun_earth)
    if abs(abs(float(np.dot(s_c, g_c))) - 1.0) < 1e-12:
        raise GeometryError("sun parallel to gravity: camera azimuth unresolvable")
    r0 = rotation_between(g_c, g_e)
    p = r0 @ s_c
    # argmax over phi of s_e . u(phi) p, with u(phi) right-handed about +z:
    # the objective is cos(phi) * (p_xy . s_xy) + sin(phi) * cross2(p_xy, s_xy)
    phi = math.atan2(
        float(p[0] * s_e[1] - p[1] * s_e[0]),
        float(p[0] * s_e[0] + p[1] * s_e[1]),
    )
    return rotation_about_z(phi) @ r0


def serialize_rotation(r: np.ndarray) -> str:
    """Nine row-major decimals on one line."""
    return " ".join(f"{v:.17g}" for v in np.asarray(r, dtype=float).ravel())


def parse_rotation(text: str) -> np.ndarray:
    vals = [float(tok) for tok in text.split()]
    if len(vals) != 9:
        raise GeometryError(f"rotation needs 9 numbers, got {len(vals)}")
    r = np.array(vals).reshape(3, 3)
    if not is_rotation(r, tol=1e-6):
        raise GeometryError("parsed matrix is not a rotation")
    return r
