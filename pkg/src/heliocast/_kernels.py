"""Hot ray-tracing kernels for the synthetic canyon simulator.

Scenes are axis-aligned boxes resting on the ground plane z = 0.  Each
public function dispatches to a numba ``@njit`` kernel when numba is
available, or to a vectorized pure-numpy implementation otherwise.  Set
``HELIOCAST_NO_NUMBA=1`` to force the numpy path (the two paths agree to
floating-point roundoff; ``benchmarks/bench_kernels.py`` compares them).
"""

from __future__ import annotations

import math
import os

import numpy as np

_EPS = 1e-9

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised via the env flag instead
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco

    prange = range


def _env_flag(name: str) -> bool:
    return os.environ.get(name, "").lower() in ("1", "true", "yes")


USE_NUMBA = HAVE_NUMBA and not _env_flag("HELIOCAST_NO_NUMBA")


# ---------------------------------------------------------------------------
# numba kernels (scalar loops)
# ---------------------------------------------------------------------------


@njit(cache=True)
def _trace_loop(origins, dirs, bmin, bmax, hit_ground):
    n = origins.shape[0]
    nb = bmin.shape[0]
    t_out = np.full(n, np.inf)
    idx_out = np.full(n, -1, dtype=np.int64)
    normal_out = np.zeros((n, 3))
    for i in range(n):
        ox, oy, oz = origins[i, 0], origins[i, 1], origins[i, 2]
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        best_t = np.inf
        best_idx = -1
        best_axis = -1
        best_sign = 0.0
        for b in range(nb):
            tmin = -np.inf
            tmax = np.inf
            ax_hit = -1
            sign = 0.0
            ok = True
            for ax in range(3):
                o = origins[i, ax]
                d = dirs[i, ax]
                lo = bmin[b, ax]
                hi = bmax[b, ax]
                if abs(d) < _EPS:
                    if o < lo or o > hi:
                        ok = False
                        break
                else:
                    t1 = (lo - o) / d
                    t2 = (hi - o) / d
                    s = -1.0
                    if t1 > t2:
                        t1, t2 = t2, t1
                        s = 1.0
                    if t1 > tmin:
                        tmin = t1
                        ax_hit = ax
                        sign = s
                    if t2 < tmax:
                        tmax = t2
                    if tmin > tmax:
                        ok = False
                        break
            if ok and tmax > _EPS:
                t_hit = tmin if tmin > _EPS else tmax
                if t_hit > _EPS and t_hit < best_t and tmin <= tmax:
                    best_t = t_hit
                    best_idx = b
                    best_axis = ax_hit
                    best_sign = sign
        if hit_ground and dz < -_EPS and oz > 0.0:
            t_g = -oz / dz
            if _EPS < t_g < best_t:
                best_t = t_g
                best_idx = -2
                best_axis = 2
                best_sign = 1.0
        t_out[i] = best_t
        idx_out[i] = best_idx
        if best_idx != -1:
            if best_axis >= 0:
                normal_out[i, best_axis] = best_sign
            else:
                # ray started inside a box; fall back to the exit axis
                normal_out[i, 2] = 1.0
    return t_out, idx_out, normal_out


@njit(cache=True)
def _occluded_loop(points, dirs, bmin, bmax, max_t):
    n = points.shape[0]
    nb = bmin.shape[0]
    out = np.zeros(n, dtype=np.uint8)
    for i in range(n):
        tcap = max_t[i]
        for b in range(nb):
            tmin = -np.inf
            tmax = np.inf
            ok = True
            for ax in range(3):
                o = points[i, ax]
                d = dirs[i, ax]
                lo = bmin[b, ax]
                hi = bmax[b, ax]
                if abs(d) < _EPS:
                    if o < lo or o > hi:
                        ok = False
                        break
                else:
                    t1 = (lo - o) / d
                    t2 = (hi - o) / d
                    if t1 > t2:
                        t1, t2 = t2, t1
                    if t1 > tmin:
                        tmin = t1
                    if t2 < tmax:
                        tmax = t2
                    if tmin > tmax:
                        ok = False
                        break
            if ok and tmax > _EPS and tmin < tcap:
                out[i] = 1
                break
    return out


@njit(cache=True, parallel=True)
def _visibility_loop(points, dirs, bmin, bmax):
    m = points.shape[0]
    k = dirs.shape[0]
    nb = bmin.shape[0]
    out = np.ones((m, k), dtype=np.uint8)
    for i in prange(m):
        for j in range(k):
            for b in range(nb):
                tmin = -np.inf
                tmax = np.inf
                ok = True
                for ax in range(3):
                    o = points[i, ax]
                    d = dirs[j, ax]
                    lo = bmin[b, ax]
                    hi = bmax[b, ax]
                    if abs(d) < _EPS:
                        if o < lo or o > hi:
                            ok = False
                            break
                    else:
                        t1 = (lo - o) / d
                        t2 = (hi - o) / d
                        if t1 > t2:
                            t1, t2 = t2, t1
                        if t1 > tmin:
                            tmin = t1
                        if t2 < tmax:
                            tmax = t2
                        if tmin > tmax:
                            ok = False
                            break
                if ok and tmax > _EPS:
                    out[i, j] = 0
                    break
    return out


@njit(cache=True, parallel=True)
def _formfactor_loop(centers, normals, areas, bmin, bmax):
    p = centers.shape[0]
    out = np.zeros((p, p))
    for i in prange(p):
        for j in range(p):
            if i == j:
                continue
            rx = centers[j, 0] - centers[i, 0]
            ry = centers[j, 1] - centers[i, 1]
            rz = centers[j, 2] - centers[i, 2]
            r2 = rx * rx + ry * ry + rz * rz
            if r2 < _EPS:
                continue
            r = math.sqrt(r2)
            ci = (rx * normals[i, 0] + ry * normals[i, 1] + rz * normals[i, 2]) / r
            cj = -(rx * normals[j, 0] + ry * normals[j, 1] + rz * normals[j, 2]) / r
            if ci <= 0.0 or cj <= 0.0:
                continue
            # segment occlusion test, offset off both endpoints
            blocked = False
            t_lo = 1e-4
            t_hi = 1.0 - 1e-4
            for b in range(bmin.shape[0]):
                tmin = t_lo
                tmax = t_hi
                ok = True
                for ax in range(3):
                    o = centers[i, ax]
                    d = centers[j, ax] - centers[i, ax]
                    lo = bmin[b, ax]
                    hi = bmax[b, ax]
                    if abs(d) < _EPS:
                        if o < lo or o > hi:
                            ok = False
                            break
                    else:
                        t1 = (lo - o) / d
                        t2 = (hi - o) / d
                        if t1 > t2:
                            t1, t2 = t2, t1
                        if t1 > tmin:
                            tmin = t1
                        if t2 < tmax:
                            tmax = t2
                        if tmin > tmax:
                            ok = False
                            break
                if ok:
                    blocked = True
                    break
            if not blocked:
                out[i, j] = ci * cj * areas[j] / (math.pi * r2)
    return out


# ---------------------------------------------------------------------------
# numpy fallbacks (vectorized over rays and boxes)
# ---------------------------------------------------------------------------


def _slab_intervals(origins, dirs, bmin, bmax):
    """(tmin, tmax) of shape (N, B) for N rays against B boxes."""
    o = origins[:, None, :]
    d = dirs[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (bmin[None, :, :] - o) / d
        t2 = (bmax[None, :, :] - o) / d
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    par = np.abs(d) < _EPS
    inside = (o >= bmin[None, :, :]) & (o <= bmax[None, :, :])
    lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
    return lo.max(axis=2), hi.min(axis=2)


def _trace_numpy(origins, dirs, bmin, bmax, hit_ground):
    n = origins.shape[0]
    if bmin.shape[0]:
        tmin, tmax = _slab_intervals(origins, dirs, bmin, bmax)
        hit = (tmin <= tmax) & (tmax > _EPS)
        t_hit = np.where(tmin > _EPS, tmin, tmax)
        t_hit = np.where(hit & (t_hit > _EPS), t_hit, np.inf)
        idx = np.argmin(t_hit, axis=1)
        t_best = t_hit[np.arange(n), idx]
        idx = np.where(np.isfinite(t_best), idx, -1)
    else:
        t_best = np.full(n, np.inf)
        idx = np.full(n, -1, dtype=np.int64)
    if hit_ground:
        dz = dirs[:, 2]
        oz = origins[:, 2]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_g = np.where((dz < -_EPS) & (oz > 0.0), -oz / dz, np.inf)
        better = t_g < t_best
        t_best = np.where(better, t_g, t_best)
        idx = np.where(better, -2, idx)
    # entry-face normals
    normals = np.zeros((n, 3))
    sel = idx >= 0
    if sel.any():
        pts = origins[sel] + t_best[sel, None] * dirs[sel]
        b = idx[sel]
        d_lo = np.abs(pts - bmin[b])
        d_hi = np.abs(pts - bmax[b])
        axis = np.argmin(np.minimum(d_lo, d_hi), axis=1)
        sign = np.where(
            d_lo[np.arange(len(axis)), axis] < d_hi[np.arange(len(axis)), axis],
            -1.0,
            1.0,
        )
        nrm = np.zeros((int(sel.sum()), 3))
        nrm[np.arange(len(axis)), axis] = sign
        normals[sel] = nrm
    normals[idx == -2] = (0.0, 0.0, 1.0)
    return t_best, idx.astype(np.int64), normals


def _occluded_numpy(points, dirs, bmin, bmax, max_t):
    if not bmin.shape[0]:
        return np.zeros(points.shape[0], dtype=np.uint8)
    tmin, tmax = _slab_intervals(points, dirs, bmin, bmax)
    hit = (tmin <= tmax) & (tmax > _EPS) & (tmin < max_t[:, None])
    return hit.any(axis=1).astype(np.uint8)


def _visibility_numpy(points, dirs, bmin, bmax):
    m, k = points.shape[0], dirs.shape[0]
    out = np.ones((m, k), dtype=np.uint8)
    if not bmin.shape[0]:
        return out
    big = np.full(m, np.inf)
    for j in range(k):
        d = np.broadcast_to(dirs[j], (m, 3))
        out[:, j] = 1 - _occluded_numpy(points, d, bmin, bmax, big)
    return out


def _formfactor_numpy(centers, normals, areas, bmin, bmax):
    p = centers.shape[0]
    out = np.zeros((p, p))
    for i in range(p):
        r = centers - centers[i]
        r2 = np.einsum("ij,ij->i", r, r)
        r2[i] = np.inf
        rn = np.sqrt(r2)
        ci = (r @ normals[i]) / rn
        cj = -np.einsum("ij,ij->i", r, normals) / rn
        cand = (ci > 0.0) & (cj > 0.0)
        if not cand.any():
            continue
        jj = np.flatnonzero(cand)
        if bmin.shape[0]:
            seg = centers[jj] - centers[i]
            o = np.broadcast_to(centers[i], (len(jj), 3))
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (bmin[None, :, :] - o[:, None, :]) / seg[:, None, :]
                t2 = (bmax[None, :, :] - o[:, None, :]) / seg[:, None, :]
            lo = np.minimum(t1, t2)
            hi = np.maximum(t1, t2)
            par = np.abs(seg[:, None, :]) < _EPS
            inside = (o[:, None, :] >= bmin[None, :, :]) & (o[:, None, :] <= bmax[None, :, :])
            lo = np.where(par, np.where(inside, -np.inf, np.inf), lo)
            hi = np.where(par, np.where(inside, np.inf, -np.inf), hi)
            tmin = np.maximum(lo.max(axis=2), 1e-4)
            tmax = np.minimum(hi.min(axis=2), 1.0 - 1e-4)
            blocked = (tmin <= tmax).any(axis=1)
            jj = jj[~blocked]
        out[i, jj] = ci[jj] * cj[jj] * areas[jj] / (math.pi * r2[jj])
    return out


# ---------------------------------------------------------------------------
# public dispatch
# ---------------------------------------------------------------------------


def trace_rays(origins, dirs, bmin, bmax, hit_ground: bool = True):
    """First hit of each ray.

    Returns (t, idx, normal): idx is -1 for a miss (sky), -2 for the
    ground plane, otherwise the box index; normal is the entry-face
    outward normal.
    """
    origins = np.ascontiguousarray(origins, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    bmin = np.ascontiguousarray(bmin, dtype=np.float64).reshape(-1, 3)
    bmax = np.ascontiguousarray(bmax, dtype=np.float64).reshape(-1, 3)
    if USE_NUMBA:
        return _trace_loop(origins, dirs, bmin, bmax, hit_ground)
    return _trace_numpy(origins, dirs, bmin, bmax, hit_ground)


def rays_occluded(points, dirs, bmin, bmax, max_t=None):
    """1 where the ray from points[i] along dirs[i] hits any box."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    bmin = np.ascontiguousarray(bmin, dtype=np.float64).reshape(-1, 3)
    bmax = np.ascontiguousarray(bmax, dtype=np.float64).reshape(-1, 3)
    if max_t is None:
        max_t = np.full(points.shape[0], np.inf)
    max_t = np.ascontiguousarray(max_t, dtype=np.float64)
    if USE_NUMBA:
        return _occluded_loop(points, dirs, bmin, bmax, max_t)
    return _occluded_numpy(points, dirs, bmin, bmax, max_t)


def visibility_matrix(points, dirs, bmin, bmax):
    """(M, K) matrix: 1 where direction dirs[k] is unobstructed from points[m]."""
    points = np.ascontiguousarray(points, dtype=np.float64)
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    bmin = np.ascontiguousarray(bmin, dtype=np.float64).reshape(-1, 3)
    bmax = np.ascontiguousarray(bmax, dtype=np.float64).reshape(-1, 3)
    if USE_NUMBA:
        return _visibility_loop(points, dirs, bmin, bmax)
    return _visibility_numpy(points, dirs, bmin, bmax)


def form_factors(centers, normals, areas, bmin, bmax):
    """Patch-to-patch transfer matrix F with F[i, j] the irradiance at i
    per unit radiosity of patch j (occlusion included)."""
    centers = np.ascontiguousarray(centers, dtype=np.float64)
    normals = np.ascontiguousarray(normals, dtype=np.float64)
    areas = np.ascontiguousarray(areas, dtype=np.float64)
    bmin = np.ascontiguousarray(bmin, dtype=np.float64).reshape(-1, 3)
    bmax = np.ascontiguousarray(bmax, dtype=np.float64).reshape(-1, 3)
    if USE_NUMBA:
        return _formfactor_loop(centers, normals, areas, bmin, bmax)
    return _formfactor_numpy(centers, normals, areas, bmin, bmax)
