"""Voronoi and pixel residuals, log-likelihood ratio score, N- and L-tests."""

import math

import numpy as np
import pytest

from quakesim.errors import ZeroIntensityAtEventError
from quakesim.geo import GeoPoint, SpatialWindow, voronoi_tessellate
from quakesim.residuals import (
    PixelGrid,
    l_test,
    n_test,
    pixel_residuals,
    residuals_summary_json,
    residuals_to_csv,
    voronoi_deviance,
    voronoi_pearson,
    voronoi_raw,
)
from quakesim.stpp import (
    HomogeneousSpatialIntensity,
    PointPattern,
    SeparableIntensityModel,
    SpatialKernelIntensity,
    UniformTemporalIntensity,
    fit_homogeneous,
    simulate_catalog,
)


def _pattern_from(points, window, period=(2000, 2009)):
    events = tuple(
        (GeoPoint(x, y), period[0] + i % (period[1] - period[0] + 1))
        for i, (x, y) in enumerate(points)
    )
    return PointPattern(events, window, period)


def _homog_model(window, period, n):
    return SeparableIntensityModel(
        spatial=HomogeneousSpatialIntensity(n / window.area),
        temporal=UniformTemporalIntensity(period),
        window=window,
        period=period,
        n_events=n,
        kind="P",
    )


# ---------------------------------------------------------------------------
# raw Voronoi residuals
# ---------------------------------------------------------------------------

def test_raw_single_point_formula():
    window = SpatialWindow.from_bbox(0, 2, 0, 2)  # area 4
    pattern = _pattern_from([(1.0, 1.0)], window)
    res = voronoi_raw(pattern, HomogeneousSpatialIntensity(0.4))
    assert len(res.values) == 1
    assert res.values[0] == pytest.approx(1.0 - 0.4 * 4.0)


def test_raw_exact_mass_cell_zero():
    window = SpatialWindow.from_bbox(0, 1, 0, 1)
    pattern = _pattern_from([(0.5, 0.5)], window)
    res = voronoi_raw(pattern, HomogeneousSpatialIntensity(1.0))
    assert res.values[0] == pytest.approx(0.0)


def test_raw_sum_zero_for_self_fit():
    rng = np.random.default_rng(101)
    window = SpatialWindow.from_bbox(0, 10, 0, 10)
    pts = rng.uniform(0.2, 9.8, (60, 2))
    pattern = _pattern_from([tuple(p) for p in pts], window)
    model = fit_homogeneous(pattern)
    res = voronoi_raw(pattern, model)
    assert np.all(res.values <= 1.0 + 1e-12)
    assert math.fsum(res.values) == pytest.approx(0.0, abs=2e-4)


# ---------------------------------------------------------------------------
# Pearson Voronoi residuals
# ---------------------------------------------------------------------------

def test_pearson_unit_rate_unit_cell():
    window = SpatialWindow.from_bbox(0, 1, 0, 1)
    pattern = _pattern_from([(0.5, 0.5)], window)
    res = voronoi_pearson(pattern, HomogeneousSpatialIntensity(1.0))
    assert res.values[0] == pytest.approx(0.0)


def test_pearson_constant_rate_algebra():
    window = SpatialWindow.from_bbox(0, 2, 0, 1)
    pattern = _pattern_from([(0.5, 0.5), (1.5, 0.5)], window)
    lam = 3.0
    res = voronoi_pearson(pattern, HomogeneousSpatialIntensity(lam))
    diagram = voronoi_tessellate([p for p, _ in pattern.events], window)
    for value, cell in zip(res.values, diagram.cells):
        assert value == pytest.approx(lam**-0.5 - lam**0.5 * cell.area)


def test_pearson_variance_near_one():
    # rate tuned so the variance of cell-level residuals sits near 1
    rng = np.random.default_rng(55)
    n = 400
    side = math.sqrt(n / 0.28)
    window = SpatialWindow.from_bbox(0, side, 0, side)
    pts = rng.uniform(0.001 * side, 0.999 * side, (n, 2))
    pattern = _pattern_from([tuple(p) for p in pts], window)
    res = voronoi_pearson(pattern, fit_homogeneous(pattern))
    assert 0.5 <= np.var(res.values, ddof=1) <= 1.5


def test_pearson_zero_intensity_rejected():
    window = SpatialWindow.from_bbox(0, 1, 0, 1)
    pattern = _pattern_from([(0.2, 0.2), (0.8, 0.8)], window)
    # kernel support far away from the second event
    model = SpatialKernelIntensity(np.array([[0.2, 0.2]]), 0.1)
    with pytest.raises(ZeroIntensityAtEventError) as err:
        voronoi_pearson(pattern, model)
    assert err.value.index == 1


# ---------------------------------------------------------------------------
# deviance Voronoi residuals
# ---------------------------------------------------------------------------

def test_deviance_identical_models_zero():
    window = SpatialWindow.from_bbox(0, 4, 0, 4)
    pattern = _pattern_from([(1, 1), (3, 3), (1, 3), (3, 1)], window)
    model = fit_homogeneous(pattern)
    res = voronoi_deviance(pattern, model, model)
    assert np.all(res.values == 0.0)
    assert res.score == 0.0


def test_deviance_antisymmetry_exact():
    rng = np.random.default_rng(77)
    window = SpatialWindow.from_bbox(0, 5, 0, 5)
    pts = rng.uniform(0.2, 4.8, (25, 2))
    pattern = _pattern_from([tuple(p) for p in pts], window)
    m1 = HomogeneousSpatialIntensity(25 / 25.0)
    m2 = SpatialKernelIntensity(pattern.locations(), 2.5)
    forward = voronoi_deviance(pattern, m1, m2)
    backward = voronoi_deviance(pattern, m2, m1)
    assert np.array_equal(forward.values, -backward.values)


def test_deviance_scaled_homogeneous_algebra():
    window = SpatialWindow.from_bbox(0, 3, 0, 3)
    pattern = _pattern_from([(0.7, 0.7), (2.1, 1.2), (1.0, 2.4)], window)
    lam2 = 0.9
    m2 = HomogeneousSpatialIntensity(lam2)
    m1 = HomogeneousSpatialIntensity(math.e * lam2)
    res = voronoi_deviance(pattern, m1, m2)
    diagram = voronoi_tessellate([p for p, _ in pattern.events], window)
    for value, cell in zip(res.values, diagram.cells):
        assert value == pytest.approx(1.0 - (math.e - 1.0) * lam2 * cell.area)


def test_deviance_score_matches_spatial_loglik_difference():
    rng = np.random.default_rng(78)
    window = SpatialWindow.from_bbox(0, 6, 0, 6)
    pts = rng.uniform(0.5, 5.5, (20, 2))
    pattern = _pattern_from([tuple(p) for p in pts], window)
    m1 = SpatialKernelIntensity(pattern.locations(), 2.0)
    m2 = HomogeneousSpatialIntensity(20 / 36.0)
    res = voronoi_deviance(pattern, m1, m2)

    # spatial-margin log-likelihood difference computed over the whole window
    locs = pattern.locations()
    ell1 = float(np.log(m1(locs)).sum()) - sum(
        1.0 - v for v in voronoi_raw(pattern, m1).values
    )
    ell2 = float(np.log(m2(locs)).sum()) - sum(
        1.0 - v for v in voronoi_raw(pattern, m2).values
    )
    assert res.score == pytest.approx(ell1 - ell2, abs=1e-6)


# ---------------------------------------------------------------------------
# pixel residuals
# ---------------------------------------------------------------------------

def test_pixel_raw_empty_pixel():
    window = SpatialWindow.from_bbox(0, 2, 0, 2)
    pattern = _pattern_from([(0.25, 0.25)], window)
    grid = PixelGrid(window, 2, 2)
    res = pixel_residuals(pattern, grid, "raw", [HomogeneousSpatialIntensity(0.5)])
    # each pixel has area 1; the empty ones read -lambda * area
    assert sorted(res.values)[:3] == pytest.approx([-0.5, -0.5, -0.5])
    assert max(res.values) == pytest.approx(1.0 - 0.5)


def test_pixel_raw_counts_all_events():
    window = SpatialWindow.from_bbox(0, 2, 0, 2)
    pts = [(0.3, 0.3), (0.4, 0.4), (0.2, 0.7)]
    pattern = _pattern_from(pts, window)
    grid = PixelGrid(window, 2, 2)
    res = pixel_residuals(pattern, grid, "raw", [HomogeneousSpatialIntensity(0.25)])
    assert max(res.values) == pytest.approx(3 - 0.25)


def test_pixel_deviance_identical_models_zero():
    window = SpatialWindow.from_bbox(0, 2, 0, 2)
    pattern = _pattern_from([(0.5, 1.2), (1.5, 0.6)], window)
    m = HomogeneousSpatialIntensity(0.5)
    res = pixel_residuals(pattern, PixelGrid(window, 3, 3), "deviance", [m, m])
    assert np.all(res.values == 0.0)
    assert res.score == 0.0


def test_pixel_refinement_sums_to_window_residual():
    rng = np.random.default_rng(91)
    window = SpatialWindow.from_bbox(0, 4, 0, 4)
    pts = rng.uniform(0.3, 3.7, (18, 2))
    pattern = _pattern_from([tuple(p) for p in pts], window)
    model = SpatialKernelIntensity(pattern.locations(), 1.2)
    whole = pixel_residuals(pattern, PixelGrid(window, 1, 1), "raw", [model])
    fine = pixel_residuals(pattern, PixelGrid(window, 5, 5), "raw", [model])
    assert math.fsum(fine.values) == pytest.approx(whole.values[0], abs=2e-3)


def test_pixel_pearson_matches_event_terms():
    window = SpatialWindow.from_bbox(0, 1, 0, 1)
    pattern = _pattern_from([(0.5, 0.5)], window)
    lam = 4.0
    res = pixel_residuals(pattern, PixelGrid(window, 1, 1), "pearson", [HomogeneousSpatialIntensity(lam)])
    assert res.values[0] == pytest.approx(lam**-0.5 - lam**0.5 * 1.0)


# ---------------------------------------------------------------------------
# N-test and L-test
# ---------------------------------------------------------------------------

def test_n_test_overestimating_model():
    window = SpatialWindow.from_bbox(0, 1, 0, 1)
    pattern = _pattern_from([(0.5, 0.5), (0.25, 0.25)], window, period=(2000, 2004))
    heavy = _homog_model(window, (2000, 2004), n=200)
    assert n_test(pattern, heavy, s=200, seed=3) == pytest.approx(0.0, abs=0.02)


def test_n_test_underestimating_model():
    rng = np.random.default_rng(17)
    window = SpatialWindow.from_bbox(0, 1, 0, 1)
    pts = rng.uniform(0.05, 0.95, (100, 2))
    pattern = _pattern_from([tuple(p) for p in pts], window, period=(2000, 2004))
    light = _homog_model(window, (2000, 2004), n=2)
    assert n_test(pattern, light, s=200, seed=3) == pytest.approx(1.0, abs=0.02)


def test_n_test_calibrated_self_fit():
    rng = np.random.default_rng(19)
    window = SpatialWindow.from_bbox(0, 1, 0, 1)
    pts = rng.uniform(0.05, 0.95, (40, 2))
    pattern = _pattern_from([tuple(p) for p in pts], window, period=(2000, 2009))
    model = fit_homogeneous(pattern)
    frac = n_test(pattern, model, s=400, seed=11)
    assert 0.05 <= frac <= 0.95


def test_l_test_single_draw_binary():
    window = SpatialWindow.from_bbox(0, 1, 0, 1)
    pattern = _pattern_from([(0.5, 0.5)], window, period=(2000, 2001))
    model = fit_homogeneous(pattern)
    assert l_test(pattern, model, s=1, seed=2) in (0.0, 1.0)


def test_l_test_calibrated_on_simulated_data():
    window = SpatialWindow.from_bbox(0, 1, 0, 1)
    base = _homog_model(window, (2000, 2019), n=60)
    events = simulate_catalog(base, 20, seed=23)
    pattern = PointPattern(
        tuple((p, y) for y, p in events), window, (2000, 2019)
    )
    model = fit_homogeneous(pattern)
    frac = l_test(pattern, model, s=400, seed=29)
    assert 0.05 <= frac <= 0.95


def test_l_test_pattern_outside_support():
    window = SpatialWindow.from_bbox(0, 1, 0, 1)
    pts = np.array([[0.1, 0.1], [0.15, 0.12], [0.12, 0.18]])
    kernel = SpatialKernelIntensity(pts, 0.05)
    model = SeparableIntensityModel(
        spatial=kernel,
        temporal=UniformTemporalIntensity((2000, 2004)),
        window=window,
        period=(2000, 2004),
        n_events=3,
        kind="H",
    )
    far = _pattern_from([(0.9, 0.9)], window, period=(2000, 2004))
    assert l_test(far, model, s=50, seed=31) == 0.0


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def test_residual_csv_and_summary(tmp_path):
    window = SpatialWindow.from_bbox(0, 2, 0, 2)
    pattern = _pattern_from([(0.5, 0.5), (1.5, 1.5)], window)
    res = voronoi_raw(pattern, fit_homogeneous(pattern))
    csv_path = tmp_path / "residuals.csv"
    residuals_to_csv(res, csv_path)
    lines = csv_path.read_text().strip().splitlines()
    assert lines[0] == "cell_id,kind,value,cell_area,generator_lon,generator_lat"
    assert len(lines) == 3

    summary = residuals_summary_json(res, tmp_path / "summary.json")
    assert summary["n_cells"] == 2
    assert summary["sum"] == pytest.approx(0.0, abs=1e-9)
