"""Command-line interface composing the forecasting pipeline.

Commands: sun-position, orient, segment-sky, forecast, annual,
best-orientation, baseline, simulate, pca, plot.  Every command exits 0
on success; module errors are reported as a single `error_kind: message`
line on stderr with exit code 1.

A key-value config file (``--config``) can supply any flag by its long
name without the leading dashes; explicit flags win over config values.
Output files are written to a temp path and renamed, so an interrupted
command leaves no partial file.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from datetime import datetime, timezone

import numpy as np

from heliocast.errors import ConfigError, FormatError, HeliocastError
from heliocast.frames import (
    GeoTime,
    azimuth_align,
    parse_rotation,
    serialize_rotation,
)
from heliocast.hdrio import (
    load_aperture,
    load_image,
    save_aperture,
    write_pfm,
    write_pgm,
)
from heliocast.imaging import segment_sky, sky_view_factor
from heliocast.irradiance import (
    ForecastPoint,
    PanelPose,
    Site,
    annual_irradiation,
    forecast_series,
    load_forecast,
    save_forecast,
)
from heliocast.oracle import (
    CanyonScene,
    PanelPlacement,
    panel_irradiance_oracle,
    oracle_predictor,
    render_hemisphere,
)
from heliocast.scene import (
    SceneIrradianceFunction,
    analytic_canyon_predictor,
    pca_explained_variance,
)
from heliocast.sky import build_sky
from heliocast.solar import day_of_year, solar_position
from heliocast.transposition import TranspositionConfig, baseline_total
from heliocast.weather import load_weather
from heliocast.panels import best_orientation as search_orientation


def _parse_time(text: str) -> datetime:
    try:
        t = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise FormatError(f"bad timestamp {text!r}; expected ISO-8601")
    if t.tzinfo is None:
        t = t.replace(tzinfo=timezone.utc)
    return t


def _parse_vector(text: str) -> np.ndarray:
    parts = text.replace(",", " ").split()
    if len(parts) != 3:
        raise FormatError(f"expected 3 components, got {text!r}")
    return np.array([float(p) for p in parts])


def _load_config(path) -> dict:
    cfg = {}
    if path is None:
        return cfg
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"{path}:{lineno}: expected 'key value'")
            cfg[parts[0].replace("-", "_")] = parts[1].strip()
    return cfg


class _Args:
    """Flag lookup with config-file fallback; flags win on conflict."""

    def __init__(self, ns: argparse.Namespace):
        self._ns = ns
        self._cfg = _load_config(getattr(ns, "config", None))

    def get(self, name, default=None, convert=str):
        v = getattr(self._ns, name, None)
        if v is not None:
            return v
        if name in self._cfg:
            return convert(self._cfg[name])
        return default

    def require(self, name, convert=str):
        v = self.get(name, None, convert)
        if v is None:
            raise ConfigError(f"missing required option --{name.replace('_', '-')}")
        return v


def _atomic(path, writer) -> None:
    tmp = str(path) + ".tmp"
    writer(tmp)
    os.replace(tmp, str(path))


def _geo(a: _Args) -> GeoTime:
    return GeoTime(
        latitude=a.require("lat", float),
        longitude=a.require("lon", float),
        instant=_parse_time(a.require("time")),
    )


def _site_from_args(a: _Args) -> Site:
    aperture = load_aperture(a.require("mask"))
    with open(a.require("rotation")) as fh:
        r_ec = parse_rotation(fh.read())
    normal = _parse_vector(a.require("normal"))
    normal = normal / np.linalg.norm(normal)
    predictor = None
    kind = a.get("predictor", "none")
    if kind == "analytic":
        predictor = analytic_canyon_predictor(
            aperture, r_ec, normal, albedo=a.get("albedo", 0.2, float)
        )
    elif kind == "csv":
        predictor = SceneIrradianceFunction.load_csv(a.require("predictor_csv"))
    elif kind != "none":
        raise ConfigError(f"unknown predictor {kind!r}")
    return Site(
        aperture=aperture,
        r_ec=r_ec,
        panel=PanelPose(normal=normal),
        latitude=a.require("lat", float),
        longitude=a.require("lon", float),
        predictor=predictor,
        grid_deg=a.get("grid_deg", 1.0, float),
    )


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_sun_position(a: _Args) -> int:
    sun = solar_position(_geo(a))
    print(f"zenith_deg {math.degrees(sun.zenith):.6f}")
    print(f"azimuth_deg {math.degrees(sun.azimuth):.6f}")
    return 0


def cmd_orient(a: _Args) -> int:
    sun = solar_position(_geo(a))
    sun_cam = _parse_vector(a.require("sun_cam"))
    gravity_cam = _parse_vector(a.require("gravity_cam"))
    r = azimuth_align(
        gravity_cam, np.array([0.0, 0.0, -1.0]), sun_cam, sun.vector
    )
    out = a.get("out")
    line = serialize_rotation(r)
    if out:
        _atomic(out, lambda p: open(p, "w", newline="\n").write(line + "\n"))
    else:
        print(line)
    return 0


def cmd_segment_sky(a: _Args) -> int:
    image = load_image(a.require("image"))
    aperture = segment_sky(image)
    out = a.get("out")
    if out:
        _atomic(out, lambda p: save_aperture(p, aperture))
    svf = sky_view_factor(aperture, np.array([0.0, 0.0, 1.0]))
    print(f"svf_horizontal {svf:.6f}")
    print(f"sky_fraction {aperture.mask.mean():.6f}")
    return 0


def cmd_forecast(a: _Args) -> int:
    site = _site_from_args(a)
    weather = load_weather(a.require("weather"))
    points = forecast_series(site, weather)
    out = a.require("out")
    _atomic(out, lambda p: save_forecast(p, points))
    print(f"rows {len(points)}")
    return 0


def cmd_annual(a: _Args) -> int:
    site = _site_from_args(a)
    tmy = load_weather(a.require("weather"))
    total = annual_irradiation(site, tmy)
    print(f"annual_kwh_per_m2 {total:.4f}")
    return 0


def cmd_best_orientation(a: _Args) -> int:
    image = load_image(a.require("image"))
    with open(a.require("rotation")) as fh:
        r_ec = parse_rotation(fh.read())
    tmy = load_weather(a.require("weather"))
    current = None
    cur = a.get("current_normal")
    if cur:
        n = _parse_vector(cur)
        current = PanelPose(normal=n / np.linalg.norm(n))
    res = search_orientation(
        image,
        r_ec,
        a.require("lat", float),
        a.require("lon", float),
        tmy,
        current=current,
        tilt_step_deg=a.get("tilt_step", 5.0, float),
        az_step_deg=a.get("az_step", 10.0, float),
        grid_deg=a.get("grid_deg", 10.0, float),
        view_size=a.get("view_size", 128, int),
    )
    print(f"tilt_deg {math.degrees(res.tilt):.2f}")
    print(f"azimuth_deg {math.degrees(res.azimuth):.2f}")
    print(f"annual_kwh_per_m2 {res.annual_kwh:.4f}")
    if current is not None:
        print(f"current_annual_kwh_per_m2 {res.current_annual_kwh:.4f}")
        print(f"gain_percent {res.gain_percent:.2f}")
    print(f"rotation {serialize_rotation(res.r_ec)}")
    return 0


def cmd_baseline(a: _Args) -> int:
    normal = _parse_vector(a.require("normal"))
    panel = PanelPose(normal=normal / np.linalg.norm(normal))
    weather = load_weather(a.require("weather"))
    lat = a.require("lat", float)
    lon = a.require("lon", float)
    aperture = r_ec = None
    mask = a.get("mask")
    if mask:
        aperture = load_aperture(mask)
        with open(a.require("rotation")) as fh:
            r_ec = parse_rotation(fh.read())
    config = TranspositionConfig(
        ground_albedo=a.get("albedo", 0.2, float),
        svf=a.get("svf", None, float),
    )
    rows = []
    for rec in weather:
        sun = solar_position(GeoTime(lat, lon, rec.instant))
        total = baseline_total(rec, sun, panel, aperture, r_ec, config)
        rows.append((rec.instant, total))
    out = a.require("out")

    def write(p):
        with open(p, "w", newline="\n") as fh:
            fh.write("timestamp,e_total_wm2,model\n")
            for instant, total in rows:
                fh.write(
                    f"{instant.strftime('%Y-%m-%dT%H:%M:%SZ')},"
                    f"{total:.6g},transposition\n"
                )

    _atomic(out, write)
    print(f"rows {len(rows)}")
    return 0


def cmd_simulate(a: _Args) -> int:
    scene = CanyonScene.load(a.require("scene"))
    placement = PanelPlacement(
        position=_parse_vector(a.require("position")),
        normal=_parse_vector(a.require("normal")),
    )
    geo = _geo(a)
    sun = solar_position(geo)
    dni = a.require("dni", float)
    dhi = a.require("dhi", float)
    sky = build_sky(dni, dhi, sun, day_of_year(geo.instant))
    samples = a.get("samples", 20000, int)
    seed = a.get("seed", 0, int)
    bounces = a.get("bounces", 2, int)
    res = panel_irradiance_oracle(
        scene, placement, sky, sun, samples=samples, seed=seed, bounces=bounces
    )
    render_out = a.get("render")
    if render_out:
        img, mask = render_hemisphere(
            scene, placement, sky, sun,
            samples=a.get("render_samples", 16, int),
            size=a.get("render_size", 256, int),
            seed=seed, bounces=bounces,
        )
        _atomic(render_out, lambda p: write_pfm(p, img.data))
        mask_out = a.get("mask_out")
        if mask_out:
            _atomic(mask_out, lambda p: write_pgm(p, mask * 255))
    out = a.get("out")
    if out:
        point = ForecastPoint(
            instant=geo.instant,
            e_sun=res.e_sun,
            e_sky=res.e_sky,
            e_scene=res.e_scene,
        )
        _atomic(out, lambda p: save_forecast(p, [point]))
    fn_out = a.get("scene_function")
    if fn_out:
        fn = oracle_predictor(scene, placement, samples=samples, seed=seed, bounces=bounces)
        _atomic(fn_out, lambda p: fn.save_csv(p))
    print(f"e_sun {res.e_sun:.4f}")
    print(f"e_sky {res.e_sky:.4f}")
    print(f"e_scene {res.e_scene:.4f}")
    print(f"e_total {res.e_total:.4f}")
    print(f"se_total {res.se_total:.4f}")
    return 0


def cmd_pca(a: _Args) -> int:
    paths = a.require("functions").split(",")
    dataset = [SceneIrradianceFunction.load_csv(p) for p in paths]
    ratios = pca_explained_variance(dataset)
    limit = a.get("components", 30, int)
    for i, r in enumerate(ratios[:limit], 1):
        print(f"{i} {r:.6f}")
    return 0


def cmd_plot(a: _Args) -> int:
    points = load_forecast(a.require("forecast"))
    overlay = None
    if a.get("overlay"):
        overlay = load_forecast(a.get("overlay"))
    out = a.require("out")
    _atomic(out, lambda p: _write_svg(p, points, overlay))
    print(f"wrote {out}")
    return 0


def _write_svg(path, points, overlay=None) -> None:
    width, height, pad = 800, 400, 45
    series = [(points, "#000000")]
    if overlay:
        series.append((overlay, "#cc0000"))
    t0 = min(p.instant.timestamp() for pts, _ in series for p in pts)
    t1 = max(p.instant.timestamp() for pts, _ in series for p in pts)
    ymax = max((p.e_total for pts, _ in series for p in pts), default=1.0) or 1.0
    span = (t1 - t0) or 1.0

    def xy(p):
        x = pad + (p.instant.timestamp() - t0) / span * (width - 2 * pad)
        y = height - pad - p.e_total / ymax * (height - 2 * pad)
        return x, y

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" '
        f'y2="{height - pad}" stroke="#888"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="#888"/>',
        f'<text x="{pad}" y="{pad - 10}" font-size="12">e_total (W/m^2), '
        f"max {ymax:.1f}</text>",
    ]
    for pts, color in series:
        coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in map(xy, pts))
        lines.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            'stroke-width="1.5"/>'
        )
    lines.append("</svg>")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heliocast",
        description="Solar-panel irradiance forecasting from hemispherical imagery",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, flags):
        p = sub.add_parser(name)
        p.add_argument("--config", help="key-value config file; flags win")
        for flag, kwargs in flags:
            p.add_argument(flag, **kwargs)
        p.set_defaults(fn=fn)

    geo = [
        ("--lat", dict(type=float, help="latitude, degrees")),
        ("--lon", dict(type=float, help="longitude, degrees")),
        ("--time", dict(help="ISO-8601 UTC timestamp")),
    ]
    add("sun-position", cmd_sun_position, geo)
    add("orient", cmd_orient, geo + [
        ("--sun-cam", dict(dest="sun_cam", help="camera-frame sun direction x,y,z")),
        ("--gravity-cam", dict(dest="gravity_cam", help="camera-frame gravity x,y,z")),
        ("--out", dict(help="rotation output file (9 row-major numbers)")),
    ])
    add("segment-sky", cmd_segment_sky, [
        ("--image", dict(help="HDR image (.pfm or .hdr)")),
        ("--out", dict(help="aperture mask output (.pgm)")),
    ])
    site = [
        ("--mask", dict(help="sky-aperture mask (.pgm/.png)")),
        ("--rotation", dict(help="camera-to-Earth rotation file")),
        ("--normal", dict(help="Earth-frame panel normal x,y,z")),
        ("--lat", dict(type=float)),
        ("--lon", dict(type=float)),
        ("--weather", dict(help="weather CSV")),
        ("--predictor", dict(help="none | analytic | csv")),
        ("--predictor-csv", dict(dest="predictor_csv")),
        ("--albedo", dict(type=float)),
        ("--grid-deg", dict(dest="grid_deg", type=float)),
    ]
    add("forecast", cmd_forecast, site + [("--out", dict(help="forecast CSV output"))])
    add("annual", cmd_annual, site)
    add("best-orientation", cmd_best_orientation, [
        ("--image", dict(help="equirectangular spherical capture (.pfm)")),
        ("--rotation", dict(help="camera-to-Earth rotation file")),
        ("--lat", dict(type=float)),
        ("--lon", dict(type=float)),
        ("--weather", dict(help="TMY weather CSV")),
        ("--current-normal", dict(dest="current_normal")),
        ("--tilt-step", dict(dest="tilt_step", type=float)),
        ("--az-step", dict(dest="az_step", type=float)),
        ("--grid-deg", dict(dest="grid_deg", type=float)),
        ("--view-size", dict(dest="view_size", type=int)),
    ])
    add("baseline", cmd_baseline, [
        ("--weather", dict()),
        ("--normal", dict()),
        ("--lat", dict(type=float)),
        ("--lon", dict(type=float)),
        ("--mask", dict()),
        ("--rotation", dict()),
        ("--svf", dict(type=float)),
        ("--albedo", dict(type=float)),
        ("--out", dict()),
    ])
    add("simulate", cmd_simulate, geo + [
        ("--scene", dict(help="canyon scene file")),
        ("--position", dict(help="panel position x,y,z, meters")),
        ("--normal", dict(help="panel normal x,y,z")),
        ("--dni", dict(type=float)),
        ("--dhi", dict(type=float)),
        ("--samples", dict(type=int)),
        ("--seed", dict(type=int)),
        ("--bounces", dict(type=int)),
        ("--render", dict(help="PFM render output")),
        ("--render-samples", dict(dest="render_samples", type=int)),
        ("--render-size", dict(dest="render_size", type=int)),
        ("--mask-out", dict(dest="mask_out", help="PGM sky-label output")),
        ("--scene-function", dict(dest="scene_function", help="36x144 CSV output")),
        ("--out", dict(help="forecast CSV output")),
    ])
    add("pca", cmd_pca, [
        ("--functions", dict(help="comma-separated scene-function CSVs")),
        ("--components", dict(type=int)),
    ])
    add("plot", cmd_plot, [
        ("--forecast", dict(help="forecast CSV")),
        ("--overlay", dict(help="second forecast CSV, drawn in red")),
        ("--out", dict(help="SVG output")),
    ])
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    ns = parser.parse_args(argv)
    try:
        return ns.fn(_Args(ns))
    except HeliocastError as exc:
        print(f"{exc.kind}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"io_error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
