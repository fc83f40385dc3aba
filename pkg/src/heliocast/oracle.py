"""Synthetic Lambertian urban-canyon simulator.

Ground truth for panel irradiance at desk scale: axis-aligned boxes on a
ground plane, a stratified cosine-hemisphere Monte Carlo tracer with
N-bounce Lambertian transport (default 2), a fisheye renderer that also
emits per-pixel sky labels, and an independent deterministic radiosity
solver used to cross-check the tracer.

The tracer treats diffuse skylight at scene surfaces as isotropic
(E = DHI * sky view factor); the anisotropic sky model is applied only to
rays that reach the sky directly from the panel.  Sun rays are a point
source for irradiance bookkeeping and a 0.53 degree disk when rendering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from heliocast import _kernels as kern
from heliocast.errors import ConfigError, FormatError, GeometryError
from heliocast.frames import SolarPosition, to_angles
from heliocast.imaging import LUMA, HdrImage, projection_for_shape
from heliocast.scene import (
    AZIMUTH_CENTERS,
    GROUND_ALBEDO,
    WALL_ALBEDO,
    ZENITH_CENTERS,
    SceneIrradianceFunction,
)
from heliocast.sky import SkyRadianceModel
from heliocast.weather import clear_sky_profile

SUN_HALF_ANGLE = math.radians(0.53 / 2.0)
SUN_SOLID_ANGLE = 2.0 * math.pi * (1.0 - math.cos(SUN_HALF_ANGLE))

_SKY_TINT = np.array([0.55, 0.95, 2.2])
_SKY_TINT = _SKY_TINT / float(LUMA @ _SKY_TINT)

DEFAULT_SAMPLES = 20000
DEFAULT_SVF_SAMPLES = 64


@dataclass(frozen=True)
class CanyonScene:
    """Axis-aligned Lambertian boxes resting on the ground plane z = 0."""

    box_min: np.ndarray  # (B, 3)
    box_max: np.ndarray  # (B, 3)
    box_albedo: np.ndarray  # (B,)
    ground_albedo: float = GROUND_ALBEDO

    def __post_init__(self):
        object.__setattr__(
            self, "box_min", np.asarray(self.box_min, dtype=np.float64).reshape(-1, 3)
        )
        object.__setattr__(
            self, "box_max", np.asarray(self.box_max, dtype=np.float64).reshape(-1, 3)
        )
        object.__setattr__(
            self, "box_albedo", np.asarray(self.box_albedo, dtype=np.float64).ravel()
        )
        if self.box_min.shape != self.box_max.shape:
            raise FormatError("box_min and box_max must have matching shapes")
        if self.box_albedo.shape[0] != self.box_min.shape[0]:
            raise FormatError("one albedo required per box")
        if np.any(self.box_max - self.box_min <= 0.0):
            raise GeometryError("boxes must have positive extents")
        if np.any(self.box_min[:, 2] < 0.0):
            raise GeometryError("boxes must rest on or above the ground plane")
        albs = np.append(self.box_albedo, self.ground_albedo)
        if np.any(albs < 0.0) or np.any(albs > 1.0):
            raise GeometryError("albedos must be in [0, 1]")

    @classmethod
    def from_boxes(cls, boxes, ground_albedo: float = GROUND_ALBEDO) -> "CanyonScene":
        """boxes: iterable of (position, size, albedo); position = min corner."""
        if boxes:
            pos = np.array([b[0] for b in boxes], dtype=np.float64)
            size = np.array([b[1] for b in boxes], dtype=np.float64)
            alb = np.array([b[2] for b in boxes], dtype=np.float64)
        else:
            pos = size = np.zeros((0, 3))
            alb = np.zeros(0)
        return cls(pos, pos + size, alb, ground_albedo)

    @property
    def n_boxes(self) -> int:
        return self.box_min.shape[0]

    def diagonal(self) -> float:
        if not self.n_boxes:
            return 1.0
        lo = self.box_min.min(axis=0)
        hi = self.box_max.max(axis=0)
        return float(np.linalg.norm(hi - lo)) or 1.0

    def contains(self, point) -> bool:
        p = np.asarray(point, dtype=np.float64)
        if not self.n_boxes:
            return False
        return bool(
            np.any(np.all((p >= self.box_min) & (p <= self.box_max), axis=1))
        )

    def albedo_of(self, idx: np.ndarray) -> np.ndarray:
        """Albedo per hit index (-2 = ground, >= 0 = box)."""
        idx = np.asarray(idx)
        out = np.full(idx.shape, self.ground_albedo)
        sel = idx >= 0
        if sel.any():
            out[sel] = self.box_albedo[idx[sel]]
        return out

    def scaled(self, k: float) -> "CanyonScene":
        if k <= 0.0:
            raise GeometryError("scale factor must be > 0")
        return CanyonScene(
            self.box_min * k, self.box_max * k, self.box_albedo, self.ground_albedo
        )

    def save(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("# heliocast canyon scene\n")
            fh.write(f"ground_albedo {self.ground_albedo:.6g}\n")
            fh.write("# box min_x min_y min_z size_x size_y size_z albedo\n")
            for lo, hi, a in zip(self.box_min, self.box_max, self.box_albedo):
                sz = hi - lo
                fh.write(
                    "box "
                    + " ".join(f"{v:.6g}" for v in (*lo, *sz))
                    + f" {a:.6g}\n"
                )

    @classmethod
    def load(cls, path) -> "CanyonScene":
        ground = GROUND_ALBEDO
        boxes = []
        with open(path) as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                try:
                    if parts[0] == "ground_albedo":
                        ground = float(parts[1])
                    elif parts[0] == "box":
                        vals = [float(v) for v in parts[1:8]]
                        if len(vals) != 7:
                            raise ValueError
                        boxes.append((vals[0:3], vals[3:6], vals[6]))
                    else:
                        raise ValueError
                except (ValueError, IndexError):
                    raise FormatError(f"{path}:{lineno}: bad scene line {line!r}")
        return cls.from_boxes(boxes, ground)


@dataclass(frozen=True)
class PanelPlacement:
    """Panel position, outward normal, and standoff from the surface."""

    position: np.ndarray
    normal: np.ndarray
    offset: float = 0.01

    def __post_init__(self):
        p = np.asarray(self.position, dtype=np.float64).ravel()
        n = np.asarray(self.normal, dtype=np.float64).ravel()
        if p.shape != (3,) or n.shape != (3,):
            raise GeometryError("position and normal must be 3-vectors")
        nn = np.linalg.norm(n)
        if nn < 1e-12:
            raise GeometryError("panel normal must be nonzero")
        if self.offset <= 0.0:
            raise GeometryError("offset must be > 0")
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "normal", n / nn)

    @property
    def origin(self) -> np.ndarray:
        """The point samples start from: position pushed off the surface."""
        return self.position + self.offset * self.normal

    def scaled(self, k: float) -> "PanelPlacement":
        return PanelPlacement(self.position * k, self.normal, self.offset * k)


def _tangent_frame(normals: np.ndarray):
    """Orthonormal (t, b) spanning the plane of each unit normal."""
    n = np.atleast_2d(normals)
    ref = np.where(
        np.abs(n[:, 2:3]) < 0.9,
        np.array([[0.0, 0.0, 1.0]]),
        np.array([[1.0, 0.0, 0.0]]),
    )
    t = np.cross(ref, n)
    t /= np.linalg.norm(t, axis=1, keepdims=True)
    b = np.cross(n, t)
    return t, b


def _cosine_dirs(u1: np.ndarray, u2: np.ndarray, normals: np.ndarray):
    """Cosine-weighted hemisphere directions around each normal."""
    r = np.sqrt(u1)
    phi = 2.0 * math.pi * u2
    z = np.sqrt(np.maximum(0.0, 1.0 - u1))
    t, b = _tangent_frame(normals)
    return (
        (r * np.cos(phi))[:, None] * t
        + (r * np.sin(phi))[:, None] * b
        + z[:, None] * np.atleast_2d(normals)
    )


class CanyonTracer:
    """Shared-ray Monte Carlo estimator for one scene/placement pair.

    Primary cosine-stratified rays are traced once; sky directions,
    geometry hit points, per-hit sky view factors and the bounce chain are
    cached so that e_scene can be evaluated for thousands of sun positions
    with precomputed visibility matrices.
    """

    def __init__(
        self,
        scene: CanyonScene,
        placement: PanelPlacement,
        samples: int = DEFAULT_SAMPLES,
        seed: int = 0,
        bounces: int = 2,
        svf_samples: int = DEFAULT_SVF_SAMPLES,
    ):
        if samples <= 0:
            raise ConfigError("sample budget must be > 0")
        if bounces < 1:
            raise ConfigError("bounces must be >= 1")
        if scene.contains(placement.origin):
            raise GeometryError("panel placement is inside scene geometry")
        if placement.origin[2] <= 0.0:
            raise GeometryError("panel must sit above the ground plane")
        self.scene = scene
        self.placement = placement
        self.bounces = bounces
        self._eps = 1e-7 * scene.diagonal()
        rng = np.random.default_rng(seed)

        n1 = max(1, int(math.sqrt(samples)))
        n2 = max(1, int(round(samples / n1)))
        self.n_samples = n1 * n2
        i, j = np.meshgrid(np.arange(n1), np.arange(n2), indexing="ij")
        u1 = (i.ravel() + rng.random(self.n_samples)) / n1
        u2 = (j.ravel() + rng.random(self.n_samples)) / n2
        dirs = _cosine_dirs(u1, u2, self.placement.normal[None, :])

        origin = np.broadcast_to(placement.origin, (self.n_samples, 3))
        t, idx, nrm = kern.trace_rays(origin, dirs, scene.box_min, scene.box_max)
        self.sky_mask = idx == -1
        self.sky_dirs = dirs[self.sky_mask]

        # bounce chain: level 0 holds the primary geometry hits
        self.levels = []
        cur_sel = ~self.sky_mask  # indexes into primary samples
        cur_idx = np.flatnonzero(cur_sel)
        pts = origin[cur_sel] + t[cur_sel, None] * dirs[cur_sel]
        nrms = nrm[cur_sel]
        albs = scene.albedo_of(idx[cur_sel])
        weight = albs.copy()  # cumulative product of albedos along the chain
        for _depth in range(bounces):
            if not len(cur_idx):
                break
            svf = self._point_svf(pts, nrms, rng, svf_samples)
            self.levels.append(
                {
                    "sample": cur_idx,
                    "points": pts,
                    "normals": nrms,
                    "weight": weight,
                    "svf": svf,
                }
            )
            if _depth == bounces - 1:
                break
            u1 = rng.random(len(cur_idx))
            u2 = rng.random(len(cur_idx))
            d2 = _cosine_dirs(u1, u2, nrms)
            o2 = pts + self._eps * nrms
            t2, i2, n2_ = kern.trace_rays(o2, d2, scene.box_min, scene.box_max)
            again = i2 != -1
            cur_idx = cur_idx[again]
            pts = o2[again] + t2[again, None] * d2[again]
            nrms = n2_[again]
            weight = weight[again] * scene.albedo_of(i2[again])

    def _point_svf(self, points, normals, rng, svf_samples):
        """Cosine-weighted visible-sky fraction at each surface point."""
        g = len(points)
        if not g:
            return np.zeros(0)
        u1 = rng.random((g, svf_samples))
        u2 = rng.random((g, svf_samples))
        reps = np.repeat(normals, svf_samples, axis=0)
        d = _cosine_dirs(u1.ravel(), u2.ravel(), reps)
        o = np.repeat(points + self._eps * normals, svf_samples, axis=0)
        up = d[:, 2] > 0.0
        esc = np.zeros(g * svf_samples)
        if up.any():
            occ = kern.rays_occluded(
                o[up], d[up], self.scene.box_min, self.scene.box_max
            )
            esc[up] = 1.0 - occ
        return esc.reshape(g, svf_samples).mean(axis=1)

    # -- component estimators ------------------------------------------

    def sun_visible(self, sun_dir) -> bool:
        s = np.asarray(sun_dir, dtype=np.float64).reshape(1, 3)
        occ = kern.rays_occluded(
            self.placement.origin.reshape(1, 3), s, self.scene.box_min, self.scene.box_max
        )
        return not bool(occ[0])

    def e_sun(self, dni: float, sun: SolarPosition) -> float:
        if not sun.above_horizon:
            return 0.0
        s = sun.vector
        cos_i = float(self.placement.normal @ s)
        if cos_i <= 0.0 or not self.sun_visible(s):
            return 0.0
        return dni * cos_i

    def e_sky(self, sky: SkyRadianceModel):
        """(estimate, standard error) of the direct-sky irradiance."""
        full = np.zeros(self.n_samples)
        if len(self.sky_dirs):
            zen, az = to_angles(self.sky_dirs)
            full[self.sky_mask] = sky.radiance(zen, az)
        est = math.pi * float(full.mean())
        se = math.pi * float(full.std()) / math.sqrt(self.n_samples)
        return est, se

    def e_scene_many(self, dni, dhi, sun_dirs, chunk: int = 512):
        """(estimates, standard errors) over K sun directions.

        dni/dhi are scalars or length-K arrays; columns whose sun is at or
        below the horizon get no direct term.
        """
        sun_dirs = np.atleast_2d(np.asarray(sun_dirs, dtype=np.float64))
        k = sun_dirs.shape[0]
        dni = np.broadcast_to(np.asarray(dni, dtype=np.float64), (k,))
        dhi = np.broadcast_to(np.asarray(dhi, dtype=np.float64), (k,))
        up = sun_dirs[:, 2] > 0.0
        dni_eff = np.where(up, dni, 0.0)

        vis = []
        cosi = []
        for lv in self.levels:
            o = lv["points"] + self._eps * lv["normals"]
            v = kern.visibility_matrix(
                o, sun_dirs, self.scene.box_min, self.scene.box_max
            ).astype(np.float64)
            vis.append(v)
            cosi.append(np.maximum(0.0, lv["normals"] @ sun_dirs.T))

        est = np.zeros(k)
        se = np.zeros(k)
        for lo in range(0, k, chunk):
            hi = min(lo + chunk, k)
            c = np.zeros((self.n_samples, hi - lo))
            for lv, v, ci in zip(self.levels, vis, cosi):
                direct = (
                    dni_eff[None, lo:hi] * ci[:, lo:hi] * v[:, lo:hi]
                    + dhi[None, lo:hi] * lv["svf"][:, None]
                )
                np.add.at(c, lv["sample"], lv["weight"][:, None] * direct)
            est[lo:hi] = c.mean(axis=0)
            se[lo:hi] = c.std(axis=0) / math.sqrt(self.n_samples)
        return est, se

    def e_scene(self, dni: float, dhi: float, sun: SolarPosition):
        """(estimate, standard error) for a single sun position."""
        est, se = self.e_scene_many(dni, dhi, sun.vector[None, :])
        return float(est[0]), float(se[0])


@dataclass(frozen=True)
class OracleResult:
    e_sun: float
    e_sky: float
    e_scene: float
    se_sky: float
    se_scene: float

    @property
    def e_total(self) -> float:
        return self.e_sun + self.e_sky + self.e_scene

    @property
    def se_total(self) -> float:
        return math.hypot(self.se_sky, self.se_scene)


def panel_irradiance_oracle(
    scene: CanyonScene,
    placement: PanelPlacement,
    sky: SkyRadianceModel,
    sun: SolarPosition,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    bounces: int = 2,
) -> OracleResult:
    """Ground-truth (e_sun, e_sky, e_scene) by stratified Monte Carlo."""
    tracer = CanyonTracer(scene, placement, samples, seed, bounces)
    e_sky_v, se_sky = tracer.e_sky(sky)
    e_scene_v, se_scene = tracer.e_scene(sky.dni, sky.dhi, sun)
    return OracleResult(
        e_sun=tracer.e_sun(sky.dni, sun),
        e_sky=e_sky_v,
        e_scene=e_scene_v,
        se_sky=se_sky,
        se_scene=se_scene,
    )


def oracle_predictor(
    scene: CanyonScene,
    placement: PanelPlacement,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    bounces: int = 2,
) -> SceneIrradianceFunction:
    """Monte-Carlo scene-irradiance function on the 36x144 sun grid.

    Per-bin DNI/DHI follow the analytic clear-sky template at the bin's
    sun zenith, matching the analytic predictor's convention.
    """
    tracer = CanyonTracer(scene, placement, samples, seed, bounces)
    zz, aa = np.meshgrid(ZENITH_CENTERS, AZIMUTH_CENTERS, indexing="ij")
    sun_dirs = np.column_stack(
        [
            np.sin(zz.ravel()) * np.sin(aa.ravel()),
            np.sin(zz.ravel()) * np.cos(aa.ravel()),
            np.cos(zz.ravel()),
        ]
    )
    dni, dhi = clear_sky_profile(zz.ravel())
    est, _se = tracer.e_scene_many(dni, dhi, sun_dirs)
    return SceneIrradianceFunction(grid=np.maximum(0.0, est).reshape(36, 144))


def check_scale_invariance(
    scene: CanyonScene,
    placement: PanelPlacement,
    sky: SkyRadianceModel,
    sun: SolarPosition,
    k: float,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    bounces: int = 2,
) -> float:
    """Relative e_scene difference between the scene and its k-scaled copy.

    Paired seeds: both tracers consume identical random streams, so the
    difference isolates the (theoretically exact) invariance.
    """
    t1 = CanyonTracer(scene, placement, samples, seed, bounces)
    t2 = CanyonTracer(scene.scaled(k), placement.scaled(k), samples, seed, bounces)
    e1, _ = t1.e_scene(sky.dni, sky.dhi, sun)
    e2, _ = t2.e_scene(sky.dni, sky.dhi, sun)
    if e1 == 0.0:
        return abs(e2 - e1)
    return abs(e2 - e1) / e1


def check_boundary_term(
    scene: CanyonScene,
    placement: PanelPlacement,
    sun: SolarPosition,
    band: float,
    dni: float = 800.0,
    dhi: float = 100.0,
    samples: int = DEFAULT_SAMPLES,
    seed: int = 0,
    n_probe: int = 8,
) -> float:
    """Fraction of e_scene contributed by surface points within `band`
    meters of the direct-shadow boundary (probed in the tangent plane)."""
    if band < 0.0:
        raise ConfigError("band width must be >= 0")
    tracer = CanyonTracer(scene, placement, samples, seed, bounces=1)
    if not tracer.levels:
        return 0.0
    lv = tracer.levels[0]
    pts, nrms = lv["points"], lv["normals"]
    g = len(pts)
    if not g or not sun.above_horizon:
        return 0.0
    s = sun.vector

    o = pts + tracer._eps * nrms
    d = np.broadcast_to(s, (g, 3))
    vis0 = 1 - kern.rays_occluded(o, d, scene.box_min, scene.box_max)
    on_boundary = np.zeros(g, dtype=bool)
    if band > 0.0:
        t, b = _tangent_frame(nrms)
        for ang in np.linspace(0.0, 2.0 * math.pi, n_probe, endpoint=False):
            probe = o + band * (math.cos(ang) * t + math.sin(ang) * b)
            vis_p = 1 - kern.rays_occluded(probe, d, scene.box_min, scene.box_max)
            on_boundary |= vis_p != vis0

    direct = dni * np.maximum(0.0, nrms @ s) * vis0 + dhi * lv["svf"]
    contrib = lv["weight"] * direct
    total = contrib.sum()
    if total <= 0.0:
        return 0.0
    return float(contrib[on_boundary].sum() / total)


# ---------------------------------------------------------------------------
# fisheye renderer
# ---------------------------------------------------------------------------


def render_hemisphere(
    scene: CanyonScene,
    placement: PanelPlacement,
    sky: SkyRadianceModel,
    sun: SolarPosition,
    samples: int = 16,
    size: int = 256,
    seed: int = 0,
    bounces: int = 2,
):
    """Fisheye render (camera level, +z up) plus the ground-truth sky mask.

    `samples` is the per-pixel budget for the sky-view-factor and bounce
    estimates at surface hits.  Returns (HdrImage, uint8 sky mask).
    """
    if samples <= 0:
        raise ConfigError("sample budget must be > 0")
    if bounces < 1:
        raise ConfigError("bounces must be >= 1")
    if scene.contains(placement.origin):
        raise GeometryError("panel placement is inside scene geometry")
    proj = projection_for_shape(size, size)
    v, u = np.mgrid[0:size, 0:size]
    dirs, valid = proj.unproject(u, v, size, size)
    dirs = dirs.reshape(-1, 3)
    valid = valid.ravel()
    eps = 1e-7 * scene.diagonal()
    origin = placement.origin

    n_px = size * size
    radiance = np.zeros(n_px)
    sky_label = np.zeros(n_px, dtype=np.uint8)
    data = np.zeros((n_px, 3))

    o = np.broadcast_to(origin, (n_px, 3))
    t, idx, nrm = kern.trace_rays(o, dirs, scene.box_min, scene.box_max)
    is_sky = valid & (idx == -1)
    is_geom = valid & (idx != -1)

    if is_sky.any():
        zen, az = to_angles(dirs[is_sky])
        lum = sky.radiance(zen, az)
        radiance[is_sky] = lum
        data[is_sky] = lum[:, None] * _SKY_TINT
        sky_label[is_sky] = 1
        if sun.above_horizon and sky.dni > 0.0:
            cos_to_sun = dirs[is_sky] @ sun.vector
            disk = cos_to_sun > math.cos(SUN_HALF_ANGLE)
            if disk.any():
                sun_lum = sky.dni / SUN_SOLID_ANGLE
                sub = np.flatnonzero(is_sky)[disk]
                radiance[sub] += sun_lum
                data[sub] += sun_lum

    if is_geom.any():
        gi = np.flatnonzero(is_geom)
        rng = np.random.default_rng(seed)
        # one draw for the whole frame keeps results chunk-independent
        u_all = rng.random((n_px, samples, 2))
        pts = o[gi] + t[gi, None] * dirs[gi]
        nrms = nrm[gi]
        albs = scene.albedo_of(idx[gi])
        e_hit = _surface_irradiance(
            scene, pts, nrms, sky, sun, u_all[gi], eps, bounces
        )
        lum = albs * e_hit / math.pi
        radiance[gi] = lum
        data[gi] = lum[:, None]

    img = HdrImage(
        data=np.maximum(0.0, data).reshape(size, size, 3),
        geo=None,
        gravity=np.array([0.0, 0.0, -1.0]),
        projection=proj,
    )
    return img, sky_label.reshape(size, size)


def _surface_irradiance(scene, pts, nrms, sky, sun, u, eps, bounces):
    """Per-point irradiance: direct sun + isotropic sky + one gather per
    remaining bounce, using the provided uniforms (g, samples, 2)."""
    g = len(pts)
    if not g:
        return np.zeros(0)
    s = sun.vector if sun.above_horizon else None
    o = pts + eps * nrms
    direct = np.zeros(g)
    if s is not None and sky.dni > 0.0:
        cosi = np.maximum(0.0, nrms @ s)
        lit = cosi > 0.0
        if lit.any():
            occ = kern.rays_occluded(
                o[lit], np.broadcast_to(s, (int(lit.sum()), 3)),
                scene.box_min, scene.box_max,
            )
            direct[lit] = sky.dni * cosi[lit] * (1.0 - occ)

    n_svf = u.shape[1]
    reps = np.repeat(nrms, n_svf, axis=0)
    d = _cosine_dirs(u[:, :, 0].ravel(), u[:, :, 1].ravel(), reps)
    oo = np.repeat(o, n_svf, axis=0)
    tt, ii, nn = kern.trace_rays(oo, d, scene.box_min, scene.box_max)
    escaped = (ii == -1).reshape(g, n_svf)
    svf = escaped.mean(axis=1)
    e = direct + sky.dhi * svf

    if bounces >= 2:
        # gather: average over the scene-hitting cosine samples
        hit = ii != -1
        if hit.any():
            p2 = oo[hit] + tt[hit, None] * d[hit]
            n2 = nn[hit]
            a2 = scene.albedo_of(ii[hit])
            d2 = np.zeros(len(p2))
            if s is not None and sky.dni > 0.0:
                c2 = np.maximum(0.0, n2 @ s)
                lit2 = c2 > 0.0
                if lit2.any():
                    occ2 = kern.rays_occluded(
                        p2[lit2] + eps * n2[lit2],
                        np.broadcast_to(s, (int(lit2.sum()), 3)),
                        scene.box_min, scene.box_max,
                    )
                    d2[lit2] = sky.dni * c2[lit2] * (1.0 - occ2)
            # isotropic-sky svf at the secondary point, cheap 8-ray probe
            svf2 = _coarse_svf(scene, p2, n2, eps)
            gather = np.zeros(g * n_svf)
            gather[hit] = a2 * (d2 + sky.dhi * svf2)
            e = e + gather.reshape(g, n_svf).mean(axis=1)
    return e


_COARSE_DIRS = None


def _coarse_svf(scene, pts, nrms, eps):
    """Deterministic 16-ray cosine-quadrature sky view factor."""
    i, j = np.meshgrid(np.arange(4), np.arange(4), indexing="ij")
    u1 = ((i.ravel() + 0.5) / 4.0)
    u2 = ((j.ravel() + 0.5) / 4.0)
    g = len(pts)
    if not g:
        return np.zeros(0)
    reps = np.repeat(nrms, 16, axis=0)
    d = _cosine_dirs(np.tile(u1, g), np.tile(u2, g), reps)
    o = np.repeat(pts + eps * nrms, 16, axis=0)
    up = d[:, 2] > 0.0
    esc = np.zeros(g * 16)
    if up.any():
        occ = kern.rays_occluded(o[up], d[up], scene.box_min, scene.box_max)
        esc[up] = 1.0 - occ
    return esc.reshape(g, 16).mean(axis=1)


# ---------------------------------------------------------------------------
# deterministic radiosity cross-check
# ---------------------------------------------------------------------------


def _patchify(scene: CanyonScene, patch: float, ground_margin: float, ground_patch: float):
    """Subdivide box faces and a truncated ground rectangle into patches."""
    centers, normals, areas, albedos = [], [], [], []

    def add_face(lo, hi, axis, sign, albedo, res):
        axes = [a for a in range(3) if a != axis]
        n0 = max(1, int(math.ceil((hi[axes[0]] - lo[axes[0]]) / res)))
        n1 = max(1, int(math.ceil((hi[axes[1]] - lo[axes[1]]) / res)))
        c0 = lo[axes[0]] + (np.arange(n0) + 0.5) * (hi[axes[0]] - lo[axes[0]]) / n0
        c1 = lo[axes[1]] + (np.arange(n1) + 0.5) * (hi[axes[1]] - lo[axes[1]]) / n1
        g0, g1 = np.meshgrid(c0, c1, indexing="ij")
        pts = np.zeros((n0 * n1, 3))
        pts[:, axes[0]] = g0.ravel()
        pts[:, axes[1]] = g1.ravel()
        pts[:, axis] = hi[axis] if sign > 0 else lo[axis]
        nrm = np.zeros(3)
        nrm[axis] = sign
        area = (
            (hi[axes[0]] - lo[axes[0]]) * (hi[axes[1]] - lo[axes[1]]) / (n0 * n1)
        )
        centers.append(pts)
        normals.append(np.broadcast_to(nrm, pts.shape).copy())
        areas.append(np.full(len(pts), area))
        albedos.append(np.full(len(pts), albedo))

    for lo, hi, a in zip(scene.box_min, scene.box_max, scene.box_albedo):
        for axis in range(3):
            for sign in (-1.0, 1.0):
                if axis == 2 and sign < 0 and lo[2] <= 1e-9:
                    continue  # face flush with the ground
                add_face(lo, hi, axis, sign, a, patch)

    if scene.n_boxes:
        blo = scene.box_min.min(axis=0) - ground_margin
        bhi = scene.box_max.max(axis=0) + ground_margin
    else:
        blo = np.array([-ground_margin, -ground_margin, 0.0])
        bhi = np.array([ground_margin, ground_margin, 0.0])
    lo = np.array([blo[0], blo[1], 0.0])
    hi = np.array([bhi[0], bhi[1], 0.0])
    add_face(lo, hi, 2, 1.0, scene.ground_albedo, ground_patch)

    # coarse rings approximating the unbounded ground out to ~27x the core;
    # the far field still matters to wall patches through the bounce term
    res = ground_patch
    for _ring in range(3):
        span = hi - lo
        nlo = lo - span
        nhi = hi + span
        res *= 3.0
        # four strips covering the ring between (lo, hi) and (nlo, nhi)
        g = scene.ground_albedo
        add_face(np.array([nlo[0], nlo[1], 0.0]), np.array([lo[0], nhi[1], 0.0]), 2, 1.0, g, res)
        add_face(np.array([hi[0], nlo[1], 0.0]), np.array([nhi[0], nhi[1], 0.0]), 2, 1.0, g, res)
        add_face(np.array([lo[0], nlo[1], 0.0]), np.array([hi[0], lo[1], 0.0]), 2, 1.0, g, res)
        add_face(np.array([lo[0], hi[1], 0.0]), np.array([hi[0], nhi[1], 0.0]), 2, 1.0, g, res)
        lo, hi = nlo, nhi

    return (
        np.vstack(centers),
        np.vstack(normals),
        np.concatenate(areas),
        np.concatenate(albedos),
    )


def radiosity_e_scene(
    scene: CanyonScene,
    placement: PanelPlacement,
    sun: SolarPosition,
    dni: float,
    dhi: float,
    patch: float = 0.1,
    bounces: int = 2,
    ground_margin: float = 4.0,
    ground_patch: float | None = None,
) -> float:
    """Deterministic finite-patch radiosity estimate of e_scene.

    Independent route used to cross-check the Monte Carlo tracer: patch
    direct lighting, (bounces-1) gather iterations, then a form-factor
    gather at the panel.  Skylight at patches uses the same isotropic
    DHI * svf treatment as the tracer.
    """
    if ground_patch is None:
        ground_patch = 3.0 * patch
    centers, normals, areas, albedos = _patchify(scene, patch, ground_margin, ground_patch)
    eps = 1e-6 * scene.diagonal()
    o = centers + eps * normals

    direct = np.zeros(len(centers))
    if sun.above_horizon and dni > 0.0:
        s = sun.vector
        cosi = np.maximum(0.0, normals @ s)
        lit = cosi > 0.0
        if lit.any():
            occ = kern.rays_occluded(
                o[lit], np.broadcast_to(s, (int(lit.sum()), 3)),
                scene.box_min, scene.box_max,
            )
            direct[lit] = dni * cosi[lit] * (1.0 - occ)
    svf = _quadrature_svf(scene, centers, normals, eps)
    e_dir = direct + dhi * svf

    f = kern.form_factors(centers, normals, areas, scene.box_min, scene.box_max)
    b = albedos * e_dir
    for _ in range(bounces - 1):
        b = albedos * (e_dir + f @ b)

    # gather at the panel
    p = placement.origin
    n = placement.normal
    r = centers - p
    r2 = np.einsum("ij,ij->i", r, r)
    rn = np.sqrt(r2)
    cos_p = (r @ n) / rn
    cos_q = -np.einsum("ij,ij->i", r, normals) / rn
    sel = (cos_p > 0.0) & (cos_q > 0.0)
    if sel.any():
        d = r[sel] / rn[sel, None]
        occ = kern.rays_occluded(
            np.broadcast_to(p, (int(sel.sum()), 3)) + eps * d,
            d, scene.box_min, scene.box_max,
            max_t=rn[sel] - 2 * eps,
        )
        w = (
            (1.0 - occ)
            * cos_p[sel]
            * cos_q[sel]
            * areas[sel]
            / (math.pi * r2[sel])
        )
        return float(w @ b[sel])
    return 0.0


def _quadrature_svf(scene, centers, normals, eps, n_side: int = 8):
    """Deterministic stratified cosine-quadrature svf per patch."""
    i, j = np.meshgrid(np.arange(n_side), np.arange(n_side), indexing="ij")
    u1 = (i.ravel() + 0.5) / n_side
    u2 = (j.ravel() + 0.5) / n_side
    m = n_side * n_side
    g = len(centers)
    reps = np.repeat(normals, m, axis=0)
    d = _cosine_dirs(np.tile(u1, g), np.tile(u2, g), reps)
    o = np.repeat(centers + eps * normals, m, axis=0)
    up = d[:, 2] > 0.0
    esc = np.zeros(g * m)
    if up.any():
        occ = kern.rays_occluded(o[up], d[up], scene.box_min, scene.box_max)
        esc[up] = 1.0 - occ
    return esc.reshape(g, m).mean(axis=1)


# ---------------------------------------------------------------------------
# procedural canyons
# ---------------------------------------------------------------------------


def random_canyon(seed: int):
    """A random street canyon and a panel placed inside it.

    Two parallel walls along the y axis, random gap, heights, albedos, and
    sometimes a small occluder box near the panel.
    """
    rng = np.random.default_rng(seed)
    gap = rng.uniform(4.0, 12.0)
    length = rng.uniform(20.0, 40.0)
    thick = rng.uniform(1.0, 3.0)
    h_w = rng.uniform(3.0, 10.0)
    h_e = rng.uniform(3.0, 10.0)
    a_w = rng.uniform(0.2, 0.5)
    a_e = rng.uniform(0.2, 0.5)
    ground = rng.uniform(0.1, 0.3)
    boxes = [
        ((-gap / 2.0 - thick, -length / 2.0, 0.0), (thick, length, h_w), a_w),
        ((gap / 2.0, -length / 2.0, 0.0), (thick, length, h_e), a_e),
    ]
    if rng.random() < 0.5:
        side = rng.uniform(0.1, 0.5)
        cx = rng.uniform(-gap / 2.0 + 1.0, gap / 2.0 - 1.0 - side)
        cy = rng.uniform(-3.0, 3.0)
        boxes.append(((cx, cy, 0.0), (side, side, rng.uniform(0.1, 0.8)), WALL_ALBEDO))
    scene = CanyonScene.from_boxes(boxes, ground)

    tilt = rng.uniform(0.0, math.radians(60.0))
    az = rng.uniform(0.0, 2.0 * math.pi)
    normal = np.array(
        [
            math.sin(tilt) * math.sin(az),
            math.sin(tilt) * math.cos(az),
            math.cos(tilt),
        ]
    )
    for _ in range(100):
        pos = np.array(
            [
                rng.uniform(-gap / 2.0 + 0.3, gap / 2.0 - 0.3),
                rng.uniform(-length / 4.0, length / 4.0),
                rng.uniform(0.5, 2.0),
            ]
        )
        placement = PanelPlacement(pos, normal, offset=0.02)
        if not scene.contains(placement.origin):
            return scene, placement
    raise GeometryError("failed to place a panel in the generated canyon")
