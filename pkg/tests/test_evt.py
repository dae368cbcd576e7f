"""POT fitting, return levels, PML quantiles, compound maxima, MCT formulas."""

import math
import warnings

import numpy as np
import pytest

from quakesim.errors import (
    BelowThresholdReturnError,
    InsufficientYearsError,
    LabelMismatchError,
    TooFewExceedancesError,
)
from quakesim.evt import (
    BelowThresholdPmlWarning,
    CorrelationMatrix,
    PotFit,
    _gpd_nll,
    _gpd_moment_start,
    build_mct_report,
    compound_gev_params,
    compound_max_cdf,
    corr_mct,
    correlation_matrix,
    empirical_pml,
    fit_pot,
    gpd_mle,
    gpd_return_level,
    osfi_mct,
    pml_quantile,
    simulate_annual_maxima,
    type1_quantile,
)


def _gpd_sample(rng, sigma, xi, n):
    u = rng.random(n)
    if abs(xi) < 1e-12:
        return -sigma * np.log1p(-u)
    return sigma / xi * ((1.0 - u) ** (-xi) - 1.0)


def _pot(u=0.0, sigma=1.0, xi=0.1, lam=0.01):
    return PotFit(
        u=u, sigma=sigma, xi=xi, lam=lam,
        se_sigma=0.1, se_xi=0.05, se_lambda=0.001, n_exceed=100,
        threshold_quantile=0.95,
    )


# ---------------------------------------------------------------------------
# GPD MLE
# ---------------------------------------------------------------------------

def test_gpd_mle_recovers_truth():
    rng = np.random.default_rng(42)
    x = _gpd_sample(rng, 2.0, 0.2, 5000)
    sigma, xi, se_sigma, se_xi = gpd_mle(x)
    assert abs(sigma - 2.0) <= 3 * se_sigma
    assert abs(xi - 0.2) <= 3 * se_xi


def test_gpd_mle_exponential_data():
    rng = np.random.default_rng(43)
    x = rng.exponential(1.5, size=4000)
    sigma, xi, _, se_xi = gpd_mle(x)
    assert abs(xi) < 3 * se_xi
    assert sigma == pytest.approx(1.5, rel=0.1)


def test_gpd_mle_beats_moment_start():
    rng = np.random.default_rng(44)
    x = _gpd_sample(rng, 1.0, 0.3, 2000)
    sigma, xi, _, _ = gpd_mle(x)
    s0, x0 = _gpd_moment_start(x)
    assert _gpd_nll(math.log(sigma), xi, x) <= _gpd_nll(math.log(s0), x0, x) + 1e-9


# ---------------------------------------------------------------------------
# fit_pot
# ---------------------------------------------------------------------------

def test_fit_pot_threshold_stability():
    # GPD tails are threshold-stable: above u' the shape stays, the scale
    # becomes sigma + xi (u' - u)
    rng = np.random.default_rng(45)
    n_years = 20_000
    series = np.zeros(n_years)
    hit = rng.random(n_years) < 0.2
    series[hit] = 5.0 + _gpd_sample(rng, 2.0, 0.2, int(hit.sum()))
    fit = fit_pot(series, n_years, threshold_quantile=0.95)
    assert fit.n_exceed >= 30
    expected_sigma = 2.0 + 0.2 * (fit.u - 5.0)
    assert abs(fit.xi - 0.2) <= 3 * fit.se_xi
    assert abs(fit.sigma - expected_sigma) <= 3 * fit.se_sigma
    assert fit.lam == pytest.approx(fit.n_exceed / n_years)
    assert fit.se_lambda == pytest.approx(math.sqrt(fit.lam / n_years))


def test_fit_pot_downgrades_quantile():
    rng = np.random.default_rng(46)
    n_years = 400
    series = np.zeros(n_years)
    series[:350] = _gpd_sample(rng, 1.0, 0.1, 350) + 1.0
    # 0.95 quantile leaves ~17 exceedances, 0.9 leaves ~35
    fit = fit_pot(series, n_years, threshold_quantile=0.95)
    assert fit.threshold_quantile == 0.9


def test_fit_pot_all_below_threshold():
    with pytest.raises(TooFewExceedancesError):
        fit_pot(np.zeros(100), 100)


def test_fit_pot_too_few_at_09():
    series = np.zeros(200)
    series[:40] = np.linspace(1, 2, 40)
    with pytest.raises(TooFewExceedancesError):
        fit_pot(series, 200)


# ---------------------------------------------------------------------------
# return levels
# ---------------------------------------------------------------------------

def test_return_level_closed_form():
    fit = _pot(u=0.0, sigma=1.0, xi=1.0)
    assert gpd_return_level(fit, 100, 0.1) == pytest.approx(9.0)


def test_return_level_xi_zero_limit():
    a = gpd_return_level(_pot(xi=0.0), 100, 0.1)
    b = gpd_return_level(_pot(xi=1e-8), 100, 0.1)
    assert a == pytest.approx(b, rel=1e-6)


def test_return_level_boundary():
    fit = _pot(u=3.0)
    assert gpd_return_level(fit, 10, 0.1) == 3.0
    with pytest.raises(BelowThresholdReturnError):
        gpd_return_level(fit, 5, 0.1)


# ---------------------------------------------------------------------------
# PML quantile
# ---------------------------------------------------------------------------

def test_pml_quantile_frozen_value():
    fit = _pot(u=0.0, sigma=1.0, xi=0.1, lam=0.01)
    assert pml_quantile(fit, 1.0 / 500.0) == pytest.approx(1.745, abs=1e-3)


def test_pml_quantile_monte_carlo_oracle():
    sigma, xi, lam, eps = 1.0, 0.1, 0.01, 1.0 / 500.0
    fit = _pot(sigma=sigma, xi=xi, lam=lam)
    rng = np.random.default_rng(47)
    maxima = simulate_annual_maxima(sigma, xi, lam, 10_000_000, rng)
    emp = np.quantile(maxima, 1.0 - eps)
    assert pml_quantile(fit, eps) == pytest.approx(emp, rel=0.01)


def test_pml_bracket_zero_returns_u():
    lam = 0.01
    eps = 1.0 - math.exp(-lam)  # -ln(1-eps) == lam
    fit = _pot(u=2.5, lam=lam, xi=0.3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BelowThresholdPmlWarning)
        assert pml_quantile(fit, eps) == pytest.approx(2.5)


def test_pml_below_threshold_warns():
    fit = _pot(u=1.0, lam=0.001)
    with pytest.warns(BelowThresholdPmlWarning):
        value = pml_quantile(fit, 0.5)
    assert value == 1.0


def test_pml_xi_zero_continuity():
    a = pml_quantile(_pot(xi=0.0, lam=0.05), 1 / 500)
    b = pml_quantile(_pot(xi=1e-9, lam=0.05), 1 / 500)
    assert a == pytest.approx(b, rel=1e-6)


def test_pml_monotone_in_lambda_and_sigma():
    eps = 1 / 500
    base = pml_quantile(_pot(sigma=1.0, lam=0.01), eps)
    assert pml_quantile(_pot(sigma=1.0, lam=0.02), eps) > base
    assert pml_quantile(_pot(sigma=1.5, lam=0.01), eps) > base


# ---------------------------------------------------------------------------
# empirical PML
# ---------------------------------------------------------------------------

def test_empirical_pml_step_quantile():
    series = np.array([0.0] * 500 + [1.0] * 500)
    assert empirical_pml(series, 0.25) == 1.0


def test_empirical_pml_constant_series():
    assert empirical_pml(np.full(100, 7.5), 0.01) == 7.5


def test_empirical_pml_requires_years():
    with pytest.raises(InsufficientYearsError):
        empirical_pml(np.zeros(100), 1.0 / 500.0)


def test_empirical_matches_model_quantile():
    rng = np.random.default_rng(48)
    sigma, xi, lam = 1.0, 0.2, 0.5
    maxima = simulate_annual_maxima(sigma, xi, lam, 100_000, rng)
    fit = _pot(sigma=sigma, xi=xi, lam=lam)
    emp = empirical_pml(maxima, 1 / 500)
    assert pml_quantile(fit, 1 / 500) == pytest.approx(emp, rel=0.05)


def test_type1_quantile_convention():
    values = np.arange(1, 11, dtype=float)
    assert type1_quantile(values, 0.5) == 5.0
    assert type1_quantile(values, 0.05) == 1.0
    assert type1_quantile(values, 1.0) == 10.0


# ---------------------------------------------------------------------------
# compound maxima
# ---------------------------------------------------------------------------

def test_compound_params_lambda_one():
    mu, psi = compound_gev_params(1.3, 0.4, 1.0)
    assert mu == 0.0
    assert psi == 1.3


def test_compound_params_xi_zero_limit():
    mu0, psi0 = compound_gev_params(2.0, 0.0, 3.0)
    mu1, psi1 = compound_gev_params(2.0, 1e-9, 3.0)
    assert mu0 == pytest.approx(2.0 * math.log(3.0))
    assert mu1 == pytest.approx(mu0, rel=1e-6)
    assert psi0 == pytest.approx(2.0)
    assert psi1 == pytest.approx(2.0, rel=1e-6)


def test_compound_cdf_is_valid_cdf():
    xs = np.linspace(-1.0, 60.0, 400)
    cdf = compound_max_cdf(1.0, 0.2, 3.0, xs)
    assert np.all(np.diff(cdf) >= -1e-12)
    assert cdf[0] == 0.0
    assert cdf[-1] > 0.999
    # the empty-year atom: P(max <= 0) = exp(-lam)
    assert compound_max_cdf(1.0, 0.2, 3.0, 0.0) == pytest.approx(math.exp(-3.0))


def test_compound_cdf_negative_xi_clamps():
    # xi < 0: support bounded above; beyond the endpoint the CDF is 1
    assert compound_max_cdf(1.0, -0.3, 2.0, 1e9) == 1.0


def test_compound_cdf_matches_brute_force():
    sigma, xi, lam = 1.0, 0.2, 3.0
    rng = np.random.default_rng(49)
    n = 200_000
    counts = rng.poisson(lam, size=n)
    maxima = np.zeros(n)
    for i in np.flatnonzero(counts):
        maxima[i] = _gpd_sample(rng, sigma, xi, counts[i]).max()
    xs = np.linspace(0.0, np.quantile(maxima, 0.999), 60)
    emp = np.searchsorted(np.sort(maxima), xs, side="right") / n
    model = compound_max_cdf(sigma, xi, lam, xs)
    assert np.max(np.abs(emp - model)) < 0.01


# ---------------------------------------------------------------------------
# correlations
# ---------------------------------------------------------------------------

def test_correlation_self_is_one():
    rng = np.random.default_rng(50)
    s = rng.exponential(1.0, 500)
    m = correlation_matrix({"A": s, "B": s.copy()}, "pearson")
    assert m.entries[0, 1] == pytest.approx(1.0)


def test_correlation_independent_near_zero():
    rng = np.random.default_rng(51)
    n = 100_000
    a = rng.exponential(1.0, n)
    b = rng.permutation(a)
    for method in ("pearson", "kendall"):
        m = correlation_matrix({"A": a, "B": b}, method)
        assert abs(m.entries[0, 1]) < 0.02


def test_correlation_comonotone():
    rng = np.random.default_rng(52)
    a = np.sort(rng.exponential(1.0, 400))
    b = np.sort(rng.pareto(2.0, 400))
    for method in ("pearson", "kendall"):
        m = correlation_matrix({"A": a, "B": b}, method)
        if method == "kendall":
            assert m.entries[0, 1] == pytest.approx(1.0)
        else:
            assert m.entries[0, 1] > 0.5


def test_correlation_constant_series_zeroed():
    rng = np.random.default_rng(53)
    m = correlation_matrix({"A": rng.random(100), "Z": np.zeros(100)}, "pearson")
    assert m.entries[0, 1] == 0.0
    assert m.degenerate == ("Z",)
    assert m.entries[1, 1] == 1.0


# ---------------------------------------------------------------------------
# capital aggregation
# ---------------------------------------------------------------------------

def test_osfi_paper_values():
    assert osfi_mct(234.4, 38.1) == pytest.approx(244.6, abs=0.1)
    assert osfi_mct(36.3, 2.0) == pytest.approx(36.6, abs=0.1)


def test_osfi_one_region_degenerate():
    assert osfi_mct(123.4, 0.0) == pytest.approx(123.4)
    assert osfi_mct(0.0, 9.9) == pytest.approx(9.9)


def test_osfi_bounds_and_symmetry():
    rng = np.random.default_rng(54)
    for _ in range(50):
        a, b = rng.uniform(0, 100, 2)
        v = osfi_mct(a, b)
        assert max(a, b) - 1e-9 <= v <= a + b + 1e-9
        assert v == pytest.approx(osfi_mct(b, a))


def test_corr_mct_identity_matrix():
    corr = CorrelationMatrix("pearson", ("A", "B"), np.eye(2))
    assert corr_mct({"A": 3.0, "B": 4.0}, corr) == pytest.approx(5.0)


def test_corr_mct_all_ones():
    corr = CorrelationMatrix("pearson", ("A", "B", "C"), np.ones((3, 3)))
    assert corr_mct({"A": 1.0, "B": 2.0, "C": 3.0}, corr) == pytest.approx(6.0)


def test_corr_mct_label_mismatch():
    corr = CorrelationMatrix("pearson", ("A", "B"), np.eye(2))
    with pytest.raises(LabelMismatchError):
        corr_mct({"B": 1.0, "A": 1.0}, corr)


def test_corr_mct_between_identity_and_comonotone():
    rng = np.random.default_rng(55)
    labels = ("A", "B", "C")
    base = np.eye(3)
    base[0, 1] = base[1, 0] = 0.5
    base[1, 2] = base[2, 1] = 0.3
    corr = CorrelationMatrix("pearson", labels, base)
    pml = {"A": 2.0, "B": 1.0, "C": 3.0}
    v = corr_mct(pml, corr)
    lo = math.sqrt(sum(x * x for x in pml.values()))
    hi = sum(pml.values())
    assert lo <= v <= hi


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

def test_build_mct_report_consistency():
    rng = np.random.default_rng(56)
    n_years = 3000
    series = {
        "QC": simulate_annual_maxima(2.0, 0.1, 0.3, n_years, rng),
        "ON": simulate_annual_maxima(1.0, 0.1, 0.3, n_years, rng),
        "BC": simulate_annual_maxima(1.5, 0.2, 0.2, n_years, rng),
    }
    report = build_mct_report(series, n_years, epsilon=1 / 500)
    assert report.osfi_value == pytest.approx(
        osfi_mct(report.east_pml, report.west_pml)
    )
    assert report.corr_value_pearson is not None
    assert report.corr_value_kendall is not None
    for prov in series:
        assert report.simulated[prov] >= 0.0
        if report.estimated[prov] is not None:
            assert report.estimated[prov] == pytest.approx(
                report.simulated[prov], rel=0.5
            )
    # east aggregates QC+ON; west is BC alone
    assert report.west_pml == pytest.approx(empirical_pml(series["BC"], 1 / 500))
