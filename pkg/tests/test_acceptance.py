"""Acceptance gate: ten end-to-end criteria, one reported line each.

Each test prints a single `criterion NN PASS/FAIL: detail` line directly
to the real stdout (bypassing capture) so the verdicts are visible in the
plain pytest log, then asserts the same condition.  Tolerances are fixed
by the package contract and must not be loosened; a criterion that the
implementation cannot honestly meet stays red.
"""

import math
import time
from datetime import datetime, timedelta, timezone

import numpy as np
import pytest

from heliocast.frames import GeoTime, azimuth_align, from_angles, kabsch
from heliocast.imaging import (
    FISHEYE,
    HdrImage,
    ProjectionModel,
    SkyAperture,
    full_aperture,
    projection_for_shape,
)
from heliocast.irradiance import (
    PanelPose,
    Site,
    e_sky,
    forecast_series,
    load_forecast,
    save_forecast,
)
from heliocast.oracle import (
    CanyonScene,
    CanyonTracer,
    PanelPlacement,
    check_boundary_term,
    check_scale_invariance,
    oracle_predictor,
    panel_irradiance_oracle,
    random_canyon,
    render_hemisphere,
)
from heliocast.panels import best_orientation, panel_normal_from_corners
from heliocast.panels import CornerObservation
from heliocast.scene import pca_explained_variance
from heliocast.sky import (
    build_sky,
    extraterrestrial_normal,
    relative_air_mass,
)
from heliocast.solar import day_of_year, solar_position
from heliocast.transposition import TranspositionConfig, baseline_total, e_ground
from heliocast.weather import (
    WeatherRecord,
    WeatherSeries,
    clear_sky_profile,
    synth_clear_year,
)
from tests.conftest import (
    perturb_direction,
    project_rectangle,
    random_rotation,
    rotation_error,
    sun_at,
)

UTC = timezone.utc
UP = np.array([0.0, 0.0, 1.0])
DOWN = np.array([0.0, 0.0, -1.0])
I3 = np.eye(3)


@pytest.fixture
def report(capsys):
    """Print one `criterion NN PASS/FAIL` line past pytest's capture."""

    def _report(num: int, ok: bool, detail: str) -> None:
        line = f"criterion {num:02d} {'PASS' if ok else 'FAIL'}: {detail}"
        with capsys.disabled():
            print(line, flush=True)

    return _report


def plausible_sky(rng):
    """Random (dni, dhi, sun, day) with brightness in the observed band.

    The coefficient table is fitted to measured skies; holding the
    brightness index within [0.06, 0.45] keeps the draws inside the
    fitted regime (outside it the gradation term can go non-physical).
    """
    zs = rng.uniform(0.0, 85.0)
    sun = sun_at(zs, rng.uniform(0.0, 360.0))
    day = int(rng.integers(1, 366))
    am = relative_air_mass(sun.zenith)
    e0 = extraterrestrial_normal(day)
    dhi = rng.uniform(0.06 * e0 / am, min(450.0, 0.45 * e0 / am))
    dni = rng.uniform(0.0, 1000.0)
    return dni, dhi, sun, day


def ten_minute_suns(lat=40.0, lon=0.0):
    """Sun positions and clear-sky inputs for one day at 10-min steps."""
    times = [
        datetime(2025, 6, 21, tzinfo=UTC) + timedelta(minutes=10 * i)
        for i in range(144)
    ]
    suns = [solar_position(GeoTime(lat, lon, t)) for t in times]
    dirs = np.array([s.vector for s in suns])
    zen = np.array([s.zenith for s in suns])
    dni, dhi = clear_sky_profile(zen)
    return suns, dirs, dni, dhi


def canyon_day_weather(lat, lon, date):
    """Hourly clear-sky weather records for one day."""
    recs = []
    for h in range(24):
        t = date + timedelta(hours=h)
        sun = solar_position(GeoTime(lat, lon, t))
        dni, dhi = clear_sky_profile(sun.zenith)
        ghi = (
            dni * math.cos(sun.zenith) + dhi
            if sun.zenith < math.pi / 2
            else 0.0
        )
        recs.append(WeatherRecord(t, ghi, dhi, dni, ghi_clear=ghi))
    return WeatherSeries(records=recs)


def sky_over_ground_image():
    """Unobstructed equirectangular capture: bright sky, dark ground."""
    h, w = 64, 128
    data = np.full((h, w, 3), 0.02)
    data[: h // 2] = [18.0, 22.0, 30.0]
    return HdrImage(data=data)


def test_01_perez_normalization(rng, report):
    """Full-aperture horizontal e_sky returns the DHI it was built from."""
    t0 = time.time()
    aperture = full_aperture(64)
    normal = UP
    worst = 0.0
    for _ in range(1000):
        dni, dhi, sun, day = plausible_sky(rng)
        sky = build_sky(dni, dhi, sun, day, grid_deg=1.0)
        got = e_sky(sky, aperture, I3, normal, grid_deg=1.0)
        worst = max(worst, abs(got - dhi) / dhi)
    elapsed = time.time() - t0
    ok = worst <= 0.005 and elapsed < 30.0
    report(1, ok, f"1000 skies, worst |e_sky-DHI|/DHI={worst:.2e}, {elapsed:.1f}s")
    assert worst <= 0.005
    assert elapsed < 30.0


def test_02_scale_invariance(report):
    """e_scene is invariant to uniform scene+placement scaling."""
    t0 = time.time()
    sun = sun_at(40.0, 150.0)
    sky = build_sky(700.0, 120.0, sun, 172)
    worst = 0.0
    for seed in range(20):
        scene, placement = random_canyon(seed)
        for k in (1.0, 2.0, 10.0):
            d = check_scale_invariance(
                scene, placement, sky, sun, k, samples=4000, seed=seed
            )
            worst = max(worst, d)
    elapsed = time.time() - t0
    ok = worst <= 0.015 and elapsed < 300.0
    report(2, ok, f"20 canyons x k in (1,2,10), worst rel diff={worst:.2e}, {elapsed:.1f}s")
    assert worst <= 0.015
    assert elapsed < 300.0


def test_03_smoothness(report):
    """Scene irradiance time series: 10-min steps and boundary-band scaling.

    The boundary-band clause holds; the 5%-of-daily-peak step bound does
    not hold on this oracle's canyon distribution (see the decisions
    ledger): placements close to a facing wall produce genuine
    shadow-crest ramps far above 5% per 10 minutes, so the first clause
    is honestly red rather than weakened.
    """
    suns, dirs, dni, dhi = ten_minute_suns()
    worst_step = 0.0
    for seed in range(20):
        scene, placement = random_canyon(seed)
        tracer = CanyonTracer(scene, placement, 8000, seed, 2)
        est, _se = tracer.e_scene_many(dni, dhi, dirs)
        peak = est.max()
        if peak <= 0.0:
            continue
        worst_step = max(worst_step, float(np.abs(np.diff(est)).max() / peak))

    scene = CanyonScene.from_boxes(
        [
            ((-2.0, -2.0, 0.0), (0.5, 4.0, 2.0), 0.3),
            ((1.5, -2.0, 0.0), (0.5, 4.0, 2.0), 0.3),
        ],
        ground_albedo=0.2,
    )
    placement = PanelPlacement(np.array([0.0, 0.0, 0.8]), UP, offset=0.02)
    sun = sun_at(35.0, 90.0)
    f_full = check_boundary_term(scene, placement, sun, 0.3, samples=20000, seed=2)
    f_half = check_boundary_term(scene, placement, sun, 0.15, samples=20000, seed=2)
    ratio = f_half / f_full

    step_ok = worst_step <= 0.05
    band_ok = 0.4 <= ratio <= 0.6
    report(
        3,
        step_ok and band_ok,
        f"worst 10-min step={worst_step:.3f} of peak (bound 0.05), "
        f"band halving ratio={ratio:.3f} (bound [0.4, 0.6])",
    )
    assert band_ok
    assert step_ok, (
        "10-minute e_scene steps exceed 5% of the daily peak on canyons "
        "whose panel faces a nearby wall; genuine shadow-crest ramps, "
        "recorded in the decisions ledger"
    )


def test_04_low_rank_structure(report):
    """PCA over 200 oracle scene functions concentrates variance early."""
    t0 = time.time()
    dataset = []
    for seed in range(200):
        scene, placement = random_canyon(seed)
        dataset.append(oracle_predictor(scene, placement, samples=4000, seed=seed))
    cum = pca_explained_variance(dataset)
    needed = int(np.searchsorted(cum, 0.95) + 1)
    elapsed = time.time() - t0
    ok = needed <= 30 and elapsed < 900.0
    report(4, ok, f"95% variance at {needed} components (cum[29]={cum[29]:.4f}), {elapsed:.0f}s")
    assert needed <= 30
    assert elapsed < 900.0


def test_05_orientation_recovery(rng, report):
    """Sun+gravity alignment: exact pairs, then noise-bounded pairs."""
    worst = 0.0
    for _ in range(10000):
        r_true = random_rotation(rng)
        s = from_angles(rng.uniform(0.1, 1.4), rng.uniform(0.0, 2.0 * math.pi))
        est = azimuth_align(r_true.T @ DOWN, DOWN, r_true.T @ s, s)
        worst = max(worst, rotation_error(est, r_true))
    worst_deg = math.degrees(worst)

    # kabsch on the same exact pairs must also be exact
    kab_worst = 0.0
    for _ in range(200):
        r_true = random_rotation(rng)
        cam = rng.normal(size=(3, 3))
        cam /= np.linalg.norm(cam, axis=1, keepdims=True)
        pairs = [(c, r_true @ c) for c in cam]
        kab_worst = max(kab_worst, rotation_error(kabsch(pairs), r_true))

    # noise bounded by 1 degree on each measured vector; an exact-1-degree
    # gravity error alone forces >= 1 degree of rotation error, so the
    # bound is on the noise magnitude, not a fixed offset
    errs = []
    for _ in range(4000):
        r_true = random_rotation(rng)
        s = from_angles(rng.uniform(0.1, 1.4), rng.uniform(0.0, 2.0 * math.pi))
        g_cam = perturb_direction(
            r_true.T @ DOWN, math.radians(rng.uniform(0.0, 1.0)), rng
        )
        s_cam = perturb_direction(
            r_true.T @ s, math.radians(rng.uniform(0.0, 1.0)), rng
        )
        est = azimuth_align(g_cam, DOWN, s_cam, s)
        errs.append(math.degrees(rotation_error(est, r_true)))
    median = float(np.median(errs))

    ok = worst_deg <= 1e-6 and math.degrees(kab_worst) <= 1e-6 and median <= 1.0
    report(5, ok, f"10000 exact worst={worst_deg:.2e} deg, noisy median={median:.3f} deg")
    assert worst_deg <= 1e-6
    assert math.degrees(kab_worst) <= 1e-6
    assert median <= 1.0


def test_06_baseline_underestimates(report):
    """Isotropic baseline lands below the oracle; the pipeline lands closer.

    A wall north of a horizontal panel hides the dim anti-solar sky while
    the bright circumsolar half stays visible, so scaling DHI by the SVF
    systematically underestimates the diffuse term.
    """
    scene = CanyonScene.from_boxes(
        [((-20.0, 3.0, 0.0), (40.0, 2.0, 10.0), 0.3)], 0.2
    )
    placement = PanelPlacement(np.array([0.0, 0.0, 1.0]), UP, offset=0.02)
    panel = PanelPose(normal=UP)
    lat, lon = 40.0, 0.0
    weather = canyon_day_weather(lat, lon, datetime(2025, 6, 21, tzinfo=UTC))

    noon = solar_position(GeoTime(lat, lon, datetime(2025, 6, 21, 12, tzinfo=UTC)))
    sky0 = build_sky(800.0, 100.0, noon, 172)
    _img, mask = render_hemisphere(scene, placement, sky0, noon, samples=2, size=128, seed=0)
    aperture = SkyAperture(mask=mask, projection=ProjectionModel(FISHEYE))

    oracle = 0.0
    for rec in weather:
        sun = solar_position(GeoTime(lat, lon, rec.instant))
        if not sun.above_horizon or rec.dhi <= 0.0:
            continue
        sky = build_sky(rec.dni, rec.dhi, sun, day_of_year(rec.instant))
        res = panel_irradiance_oracle(scene, placement, sky, sun, samples=8000, seed=11)
        oracle += res.e_total

    base = 0.0
    cfg = TranspositionConfig(ground_albedo=0.2)
    for rec in weather:
        sun = solar_position(GeoTime(lat, lon, rec.instant))
        base += baseline_total(rec, sun, panel, aperture, I3, cfg)

    predictor = oracle_predictor(scene, placement, samples=4000, seed=5)
    site = Site(
        aperture=aperture, r_ec=I3, panel=panel,
        latitude=lat, longitude=lon, predictor=predictor,
    )
    pipeline = sum(p.e_total for p in forecast_series(site, weather))

    base_err = oracle - base
    pipe_err = abs(pipeline - oracle)
    ok = base < oracle and pipe_err < base_err
    report(
        6,
        ok,
        f"daily Wh/m2 oracle={oracle:.0f} baseline={base:.0f} "
        f"pipeline={pipeline:.0f}; |pipeline err|={pipe_err:.1f} < baseline err={base_err:.1f}",
    )
    assert base < oracle
    assert pipe_err < base_err


def test_07_e_ground_identities(report):
    """Ground-reflection closed forms: zero at zero tilt, vertical case."""
    zero = e_ground(800.0, 100.0, sun_at(30.0, 180.0), 0.0, 0.5)
    # vertical panel, sun at 60 degrees: ghi = 800 cos60 + 100 = 500,
    # e_ground = 0.2 * 500 * (1 - cos90) / 2 = 50
    vertical = e_ground(800.0, 100.0, sun_at(60.0, 180.0), math.pi / 2.0, 0.2)
    ok = zero == 0.0 and abs(vertical - 50.0) < 1e-9
    report(7, ok, f"tilt-0 value={zero!r}, vertical case |v-50|={abs(vertical - 50.0):.2e}")
    assert zero == 0.0
    assert abs(vertical - 50.0) < 1e-9


def test_08_panel_normal_recovery(rng, report):
    """1000 synthetic rectangles per case; sign always above horizon."""
    W, H = 1024, 512
    proj = projection_for_shape(W, H)

    worst1 = 0.0
    for _ in range(1000):
        uv, n_true, up = project_rectangle(rng, proj, W, H)
        obs = CornerObservation(corners=uv, projection=proj, width=W, height=H)
        n = panel_normal_from_corners(obs, up=up)
        assert float(np.dot(n, up)) >= 0.0
        err = math.degrees(math.acos(min(1.0, abs(float(np.dot(n, n_true))))))
        worst1 = max(worst1, err)

    # Case 2: two corners along one edge of a panel whose plane passes
    # through the camera; the two backprojected rays span the panel plane
    worst2 = 0.0
    count = 0
    while count < 1000:
        tilt = math.radians(rng.uniform(5.0, 75.0))
        az = rng.uniform(0.0, 2.0 * math.pi)
        n_true = from_angles(tilt, az)
        ref = (
            np.array([0.0, 1.0, 0.0])
            if abs(n_true[1]) < 0.9
            else np.array([1.0, 0.0, 0.0])
        )
        e1 = np.cross(ref, n_true)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n_true, e1)
        a = (
            math.cos(rng.uniform(0, 2 * math.pi)) * e1
            + math.sin(rng.uniform(0, 2 * math.pi)) * e2
        )
        if np.linalg.norm(a) < 0.3:
            continue
        b = np.cross(n_true, a)
        d1 = a / np.linalg.norm(a)
        d2 = (a + 1.5 * b) / np.linalg.norm(a + 1.5 * b)
        if abs(float(np.dot(d1, d2))) > 0.995:
            continue
        u1, v1, ok1 = proj.project(d1, W, H)
        u2, v2, ok2 = proj.project(d2, W, H)
        if not (ok1 and ok2):
            continue
        obs = CornerObservation(
            corners=np.array([[u1, v1], [u2, v2]]),
            projection=proj, width=W, height=H,
        )
        n = panel_normal_from_corners(obs)
        assert n[2] >= 0.0
        err = math.degrees(math.acos(min(1.0, abs(float(np.dot(n, n_true))))))
        worst2 = max(worst2, err)
        count += 1

    ok = worst1 <= 0.5 and worst2 <= 1.0
    report(8, ok, f"case-1 worst={worst1:.2e} deg (<=0.5), case-2 worst={worst2:.3f} deg (<=1)")
    assert worst1 <= 0.5
    assert worst2 <= 1.0


def test_09_best_orientation_sanity(report):
    """Unobstructed 40N clear year: tilt near latitude, azimuth near south."""
    image = sky_over_ground_image()
    tmy = synth_clear_year(40.0, 0.0, step_seconds=3 * 3600.0)

    res = best_orientation(
        image, I3, 40.0, 0.0, tmy,
        tilt_step_deg=5.0, az_step_deg=10.0, grid_deg=10.0, view_size=64,
    )
    tilt = math.degrees(res.tilt)
    az = math.degrees(res.azimuth)

    diffuse = WeatherSeries(
        records=[
            WeatherRecord(r.instant, r.dhi, r.dhi, 0.0, ghi_clear=r.ghi_clear)
            for r in tmy
        ]
    )
    res_d = best_orientation(
        image, I3, 40.0, 0.0, diffuse,
        tilt_step_deg=5.0, az_step_deg=10.0, grid_deg=5.0, view_size=64,
    )

    scaled = WeatherSeries(
        records=[
            WeatherRecord(
                r.instant, 2 * r.ghi, 2 * r.dhi, 2 * r.dni,
                ghi_clear=2 * r.ghi_clear,
            )
            for r in tmy
        ]
    )
    res_s = best_orientation(
        image, I3, 40.0, 0.0, scaled,
        tilt_step_deg=5.0, az_step_deg=10.0, grid_deg=10.0, view_size=64,
    )

    ok = (
        abs(tilt - 40.0) <= 15.0
        and abs(az - 180.0) <= 15.0
        and res_d.tilt == 0.0
        and res_s.tilt == res.tilt
        and res_s.azimuth == res.azimuth
    )
    report(
        9,
        ok,
        f"clear argmax tilt={tilt:.0f} az={az:.0f}; diffuse tilt="
        f"{math.degrees(res_d.tilt):.0f}; 2x-scaled argmax unchanged="
        f"{res_s.tilt == res.tilt and res_s.azimuth == res.azimuth}",
    )
    assert abs(tilt - 40.0) <= 15.0
    assert abs(az - 180.0) <= 15.0
    assert res_d.tilt == 0.0
    assert res_s.tilt == res.tilt and res_s.azimuth == res.azimuth


def test_10_determinism(tmp_path, report):
    """Seeded reruns are bit-identical; forecast CSVs round-trip."""
    scene, placement = random_canyon(4)
    sun = sun_at(40.0, 200.0)
    sky = build_sky(700.0, 120.0, sun, 172)

    r1 = panel_irradiance_oracle(scene, placement, sky, sun, samples=4000, seed=3)
    r2 = panel_irradiance_oracle(scene, placement, sky, sun, samples=4000, seed=3)
    oracle_same = (
        r1.e_sun == r2.e_sun
        and r1.e_sky == r2.e_sky
        and r1.e_scene == r2.e_scene
        and r1.se_sky == r2.se_sky
        and r1.se_scene == r2.se_scene
    )

    f1 = oracle_predictor(scene, placement, samples=2000, seed=9)
    f2 = oracle_predictor(scene, placement, samples=2000, seed=9)
    predictor_same = bool(np.array_equal(f1.grid, f2.grid))

    img1, m1 = render_hemisphere(scene, placement, sky, sun, samples=4, size=64, seed=5)
    img2, m2 = render_hemisphere(scene, placement, sky, sun, samples=4, size=64, seed=5)
    render_same = bool(
        np.array_equal(img1.data, img2.data) and np.array_equal(m1, m2)
    )

    # forecast round trip: 6-significant-digit values are a fixed point
    aperture = full_aperture(64)
    site = Site(
        aperture=aperture, r_ec=I3, panel=PanelPose(normal=UP),
        latitude=40.0, longitude=0.0,
    )
    weather = canyon_day_weather(40.0, 0.0, datetime(2025, 6, 21, tzinfo=UTC))
    points = forecast_series(site, weather)
    p1 = tmp_path / "fc1.csv"
    p2 = tmp_path / "fc2.csv"
    p3 = tmp_path / "fc3.csv"
    save_forecast(p1, points)
    loaded = load_forecast(p1)
    save_forecast(p2, loaded)
    save_forecast(p3, load_forecast(p2))
    # the stored components are exact after one save; the derived total
    # column stabilizes after one load/save cycle and stays fixed forever
    csv_same = p2.read_bytes() == p3.read_bytes()
    values_exact = all(
        lp.e_sun == float(f"{op.e_sun:.6g}")
        and lp.e_sky == float(f"{op.e_sky:.6g}")
        and lp.e_scene == float(f"{op.e_scene:.6g}")
        for lp, op in zip(loaded, points)
    )

    ok = oracle_same and predictor_same and render_same and csv_same and values_exact
    report(
        10,
        ok,
        f"oracle={oracle_same} predictor={predictor_same} render={render_same} "
        f"csv_fixed_point={csv_same and values_exact}",
    )
    assert oracle_same
    assert predictor_same
    assert render_same
    assert csv_same and values_exact
