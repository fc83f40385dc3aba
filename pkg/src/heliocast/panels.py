"""Panel-normal recovery from image corners, virtual-view extraction from
spherical captures, and the best-fixed-orientation search.

Normal recovery follows two cases: with four visible corners the normal
is the cross product of the two vanishing directions of opposite edge
pairs (computed in homogeneous coordinates on an intermediate perspective
reprojection); with two corners and the camera in the panel's plane it is
the cross product of the two backprojected rays.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from heliocast.errors import FormatError, GeometryError
from heliocast.frames import from_angles, to_angles
from heliocast.imaging import (
    EQUIRECT,
    FISHEYE,
    HdrImage,
    ProjectionModel,
    SkyAperture,
    segment_sky,
)
from heliocast.irradiance import PanelPose, Site, annual_irradiation
from heliocast.sky import build_sky, hemisphere_grid
from heliocast.solar import day_of_year, solar_position
from heliocast.frames import GeoTime
from heliocast.weather import WeatherSeries

RECTANGLE_RESIDUAL_WARN = math.radians(2.0)


@dataclass(frozen=True)
class CornerObservation:
    """Manually identified panel corners in a known projection."""

    corners: np.ndarray  # (N, 2) pixel coordinates (u, v)
    projection: ProjectionModel
    width: int
    height: int

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 2 or c.shape[0] not in (2, 4):
            raise FormatError("corner observation needs exactly 2 or 4 (u, v) pairs")
        for i in range(len(c)):
            for j in range(i + 1, len(c)):
                if np.allclose(c[i], c[j]):
                    raise FormatError("corners must be pairwise distinct")
        object.__setattr__(self, "corners", c)


def load_corners(path, projection: ProjectionModel, width: int, height: int) -> CornerObservation:
    """Corner file: one `u v` pixel pair per line; '#' comments allowed."""
    pts = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'u v'")
            try:
                pts.append((float(parts[0]), float(parts[1])))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad corner coordinates")
    return CornerObservation(np.array(pts), projection, width, height)


def _backproject(obs: CornerObservation) -> np.ndarray:
    d, valid = obs.projection.unproject(
        obs.corners[:, 0], obs.corners[:, 1], obs.width, obs.height
    )
    if not np.all(valid):
        raise GeometryError("corner outside the modeled field of view")
    return d


def _orient_above_horizon(n: np.ndarray, up: np.ndarray) -> np.ndarray:
    if float(n @ up) < 0.0:
        return -n
    return n


def panel_normal_from_corners(
    obs: CornerObservation, up=(0.0, 0.0, 1.0)
) -> np.ndarray:
    """Unit panel normal in the camera frame.

    `up` is the camera-frame direction away from gravity, used only to
    pick the sign so the panel points above the horizon.
    """
    up = np.asarray(up, dtype=np.float64)
    up = up / np.linalg.norm(up)
    rays = _backproject(obs)

    if len(rays) == 2:
        n = np.cross(rays[0], rays[1])
        norm = np.linalg.norm(n)
        if norm < 1e-9:
            raise GeometryError("backprojected corner rays are parallel")
        return _orient_above_horizon(n / norm, up)

    # Case 1: perspective reprojection around the mean ray, 90 degree FOV
    m = rays.sum(axis=0)
    m /= np.linalg.norm(m)
    ref = np.array([0.0, 1.0, 0.0]) if abs(m[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    xhat = np.cross(ref, m)
    xhat /= np.linalg.norm(xhat)
    yhat = np.cross(m, xhat)
    depth = rays @ m
    if np.any(depth <= math.cos(math.radians(89.0))):
        raise GeometryError("corner rays too far from the panel's mean direction")
    px = (rays @ xhat) / depth
    py = (rays @ yhat) / depth

    # order the quadrilateral by angle about its centroid so the result is
    # invariant to the input corner ordering
    ang = np.arctan2(py - py.mean(), px - px.mean())
    order = np.argsort(ang)
    p = np.column_stack([px[order], py[order], np.ones(4)])

    # degeneracy: three collinear corners collapse an edge pair
    for i in range(4):
        a, b, c = p[i, :2], p[(i + 1) % 4, :2], p[(i + 2) % 4, :2]
        area = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
        if area < 1e-12:
            raise GeometryError("degenerate quadrilateral: collinear corners")

    def vanishing_dir(l1, l2):
        v = np.cross(l1, l2)
        if np.linalg.norm(v) < 1e-15:
            raise GeometryError("degenerate quadrilateral: coincident edges")
        d = v[0] * xhat + v[1] * yhat + v[2] * m
        norm = np.linalg.norm(d)
        if norm < 1e-15:
            raise GeometryError("degenerate vanishing direction")
        return d / norm

    d_a = vanishing_dir(np.cross(p[0], p[1]), np.cross(p[3], p[2]))
    d_b = vanishing_dir(np.cross(p[1], p[2]), np.cross(p[0], p[3]))

    residual = abs(math.pi / 2.0 - math.acos(min(1.0, abs(float(d_a @ d_b)))))
    if residual > RECTANGLE_RESIDUAL_WARN:
        warnings.warn(
            "opposite-edge vanishing directions deviate from perpendicular "
            f"by {math.degrees(residual):.2f} deg; panel may not be rectangular"
        )

    n = np.cross(d_a, d_b)
    norm = np.linalg.norm(n)
    if norm < 1e-12:
        raise GeometryError("vanishing directions are parallel")
    return _orient_above_horizon(n / norm, up)


# ---------------------------------------------------------------------------
# virtual views from a spherical capture
# ---------------------------------------------------------------------------


def _bilinear_sphere(data: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear sample of an equirect image, wrapping in azimuth."""
    h, w = data.shape[:2]
    u0 = np.floor(u)
    v0 = np.floor(v)
    fu = (u - u0)[..., None]
    fv = (v - v0)[..., None]
    u0 = u0.astype(int)
    v0 = v0.astype(int)
    u1 = (u0 + 1) % w
    u0 = u0 % w
    v1 = np.clip(v0 + 1, 0, h - 1)
    v0 = np.clip(v0, 0, h - 1)
    return (
        data[v0, u0] * (1 - fu) * (1 - fv)
        + data[v0, u1] * fu * (1 - fv)
        + data[v1, u0] * (1 - fu) * fv
        + data[v1, u1] * fu * fv
    )


def extract_view(
    spherical: HdrImage, orientation: np.ndarray, size: int = 256
) -> HdrImage:
    """Fisheye view of the hemisphere around the rotated optical axis.

    `orientation` maps virtual-camera directions into the spherical
    camera's frame.
    """
    if spherical.projection.kind != EQUIRECT:
        raise FormatError("extract_view requires an equirectangular input")
    orientation = np.asarray(orientation, dtype=np.float64)
    proj = ProjectionModel(FISHEYE)
    v, u = np.mgrid[0:size, 0:size]
    dirs, valid = proj.unproject(u, v, size, size)
    d_s = dirs @ orientation.T
    su, sv, _ = spherical.projection.project(
        d_s, spherical.width, spherical.height
    )
    out = _bilinear_sphere(spherical.data, su, sv)
    out[~valid] = 0.0
    gravity = None
    if spherical.gravity is not None:
        gravity = orientation.T @ spherical.gravity
    return HdrImage(data=out, geo=spherical.geo, gravity=gravity, projection=proj)


def orientation_for(tilt: float, azimuth: float) -> np.ndarray:
    """Rotation carrying virtual-camera axes to the Earth frame, with the
    optical axis at (tilt, azimuth) and a deterministic roll."""
    n = from_angles(tilt, azimuth)
    if abs(n[2]) > 1.0 - 1e-12:
        return np.eye(3)
    xc = np.cross(np.array([0.0, 0.0, 1.0]), n)
    xc /= np.linalg.norm(xc)
    yc = np.cross(n, xc)
    return np.column_stack([xc, yc, n])


# ---------------------------------------------------------------------------
# best fixed orientation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrientationResult:
    tilt: float  # radians
    azimuth: float  # radians
    r_ec: np.ndarray  # candidate camera -> Earth rotation
    annual_kwh: float
    current_annual_kwh: float
    gain_percent: float


def _candidate_grid(tilt_step_deg: float, az_step_deg: float):
    tilts = np.radians(np.arange(0.0, 90.0 + 1e-9, tilt_step_deg))
    azs = np.radians(np.arange(0.0, 360.0 - 1e-9, az_step_deg))
    return tilts, azs


def best_orientation(
    spherical: HdrImage,
    r_ec: np.ndarray,
    latitude: float,
    longitude: float,
    tmy: WeatherSeries,
    current: PanelPose | None = None,
    tilt_step_deg: float = 5.0,
    az_step_deg: float = 10.0,
    grid_deg: float = 10.0,
    view_size: int = 128,
) -> OrientationResult:
    """Exhaustive annual-irradiation search over a tilt x azimuth grid.

    Each candidate's sky aperture comes from extract_view + segment_sky on
    the spherical capture; annual totals for all candidates are evaluated
    on the shared Earth-frame quadrature grid (the same nodes e_sky uses),
    and the winner/current values are recomputed exactly with
    annual_irradiation.  Ties break toward the smallest tilt, then the
    smallest azimuth.
    """
    r_ec = np.asarray(r_ec, dtype=np.float64)
    tilts, azs = _candidate_grid(tilt_step_deg, az_step_deg)
    cands = []
    for t in tilts:
        for a in azs:
            r_ev = orientation_for(t, a)
            view = extract_view(spherical, r_ec.T @ r_ev, size=view_size)
            aperture = segment_sky(view)
            cands.append((t, a, r_ev, aperture))
            if t == 0.0:
                break  # roll-degenerate: one candidate suffices at tilt 0

    zen, az_g, w = hemisphere_grid(grid_deg)
    st = np.sin(zen)
    dirs = np.column_stack([st * np.sin(az_g), st * np.cos(az_g), np.cos(zen)])
    k = len(zen)
    n_c = len(cands)
    mask_cos_w = np.zeros((k, n_c))
    normals = np.zeros((n_c, 3))
    for ci, (t, a, r_ev, aperture) in enumerate(cands):
        n = r_ev[:, 2]
        normals[ci] = n
        cosine = dirs @ n
        sel = cosine > 0.0
        m = np.zeros(k)
        m[sel] = aperture.sample(dirs[sel] @ r_ev).astype(float)
        mask_cos_w[:, ci] = m * np.maximum(0.0, cosine) * w

    times = np.array([rec.instant.timestamp() for rec in tmy])
    totals = np.zeros((len(tmy), n_c))
    for ri, rec in enumerate(tmy):
        sun = solar_position(GeoTime(latitude, longitude, rec.instant))
        if not sun.above_horizon:
            continue
        if rec.dhi > 0.0:
            sky = build_sky(rec.dni, rec.dhi, sun, day_of_year(rec.instant), grid_deg)
            rad = sky.radiance(zen, az_g)
            totals[ri] += rad @ mask_cos_w
        if rec.dni > 0.0:
            s = sun.vector
            cos_i = normals @ s
            for ci, (t, a, r_ev, aperture) in enumerate(cands):
                if cos_i[ci] > 0.0:
                    vis = float(aperture.sample(r_ev.T @ s))
                    totals[ri, ci] += rec.dni * vis * cos_i[ci]

    annual = np.trapezoid(totals, times, axis=0) / 3.6e6

    best = 0
    for ci in range(1, n_c):
        if annual[ci] > annual[best] + 1e-12:
            best = ci
    t_b, a_b, r_b, ap_b = cands[best]

    best_site = Site(
        aperture=ap_b,
        r_ec=r_b,
        panel=PanelPose(normal=r_b[:, 2]),
        latitude=latitude,
        longitude=longitude,
        grid_deg=grid_deg,
    )
    best_annual = annual_irradiation(best_site, tmy)

    current_annual = float("nan")
    gain = float("nan")
    if current is not None:
        c_zen, c_az = to_angles(current.normal)
        r_cur = orientation_for(c_zen, c_az)
        view = extract_view(spherical, r_ec.T @ r_cur, size=view_size)
        cur_site = Site(
            aperture=segment_sky(view),
            r_ec=r_cur,
            panel=PanelPose(normal=current.normal),
            latitude=latitude,
            longitude=longitude,
            grid_deg=grid_deg,
        )
        current_annual = annual_irradiation(cur_site, tmy)
        if current_annual > 0.0:
            gain = 100.0 * (best_annual - current_annual) / current_annual

    return OrientationResult(
        tilt=float(t_b),
        azimuth=float(a_b),
        r_ec=r_b,
        annual_kwh=best_annual,
        current_annual_kwh=current_annual,
        gain_percent=gain,
    )
