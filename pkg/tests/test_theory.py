"""Limit-law machinery: magnetization curve, quartic family, shifts."""
import math

import numpy as np
import pytest
from scipy.special import gammaln, logsumexp

from ising_infer import (
    ParameterError,
    critical_law,
    cw_log_partition,
    delta_log_partition,
    information_rate,
    law_quantile,
    log_partition_shift,
    magnetization_slope,
    magnetization_variance,
    mle_critical_cdf,
    quadratic_limit_mean,
    sample_mple_limit,
    sample_quadratic_limits,
    spontaneous_magnetization,
)

M_15 = 0.8585596366401105
R_15 = 0.3199208645349059


def test_magnetization_zero_below_transition():
    assert spontaneous_magnetization(0.0) == 0.0
    assert spontaneous_magnetization(0.7) == 0.0
    assert spontaneous_magnetization(1.0) == 0.0


def test_magnetization_fixed_point():
    for theta in (1.1, 1.5, 2.0, 5.0):
        m = spontaneous_magnetization(theta)
        assert 0.0 < m < 1.0
        assert abs(m - math.tanh(theta * m)) < 1e-14
    assert abs(spontaneous_magnetization(1.5) - M_15) < 1e-12
    assert abs(spontaneous_magnetization(5.0) - 0.9999091217152325) < 1e-12


def test_magnetization_monotone():
    grid = [1.05, 1.2, 1.5, 2.0, 3.0, 6.0]
    vals = [spontaneous_magnetization(t) for t in grid]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_variance_slope_rate_values():
    assert abs(magnetization_variance(1.5) - 0.4340118929399147) < 1e-12
    assert abs(magnetization_variance(2.0) - 0.0997879781298125) < 1e-12
    assert abs(magnetization_slope(2.0) - 0.09554739061382996) < 1e-12
    assert abs(information_rate(1.5) - R_15) < 1e-12
    with pytest.raises(ParameterError):
        magnetization_variance(1.0)


def test_slope_matches_finite_difference():
    eps = 1e-5
    fd = (
        spontaneous_magnetization(3.0 + eps) - spontaneous_magnetization(3.0 - eps)
    ) / (2.0 * eps)
    assert abs(magnetization_slope(3.0) - fd) < 1e-8


def test_quartic_normalizer_closed_form():
    # at zero tilt the integral is 12^(1/4) * Gamma(1/4) / 2
    expected = 0.25 * math.log(12.0) + float(gammaln(0.25)) - math.log(2.0)
    assert abs(critical_law(0.0).log_normalizer - expected) < 1e-10


def test_quartic_law_table_consistency():
    for h in (-2.0, 0.0, 1.5):
        law = critical_law(h)
        mass = np.trapezoid(law.pdf, law.u)
        assert abs(mass - 1.0) < 1e-8
        assert law.cdf[0] == 0.0 and abs(law.cdf[-1] - 1.0) < 1e-12
        assert np.all(np.diff(law.cdf) >= 0.0)
        grid_m2 = np.trapezoid(law.u**2 * law.pdf, law.u)
        assert abs(grid_m2 - law.moment2) < 1e-6
        assert abs(law.quantile(0.5)) < 1e-8
        for p in (0.1, 0.25, 0.75, 0.9):
            assert abs(law.cdf_at(law.quantile(p)) - p) < 1e-9


def test_quartic_law_frozen_values():
    law0 = critical_law(0.0)
    assert abs(law0.moment2 - 1.170828656607529) < 1e-9
    assert abs(float(np.interp(0.0, law0.u, law0.pdf)) - 0.29638321800332307) < 1e-9


def test_quartic_law_extreme_tilt_stable():
    law = critical_law(50.0)
    assert math.isfinite(law.log_normalizer)
    # density concentrates near u^2 = 3h at strong positive tilt
    assert abs(law.moment2 - 149.97999199146992) < 1e-6
    low = critical_law(-50.0)
    assert math.isfinite(low.log_normalizer)
    assert low.moment2 < 0.2


def test_quartic_law_validation():
    with pytest.raises(ParameterError):
        critical_law(50.5)
    with pytest.raises(ParameterError):
        critical_law(0.0, grid_points=512)
    with pytest.raises(ParameterError):
        critical_law(0.0).quantile(0.0)


def test_quartic_sampling_matches_cdf():
    law = critical_law(0.0)
    draws = law.sample(404, 4000)
    ecdf = np.searchsorted(np.sort(draws), law.u, side="right") / draws.size
    assert np.max(np.abs(ecdf - law.cdf)) < 0.035


def test_law_quantile_order_statistic():
    samples = np.array([4.0, 1.0, 3.0, 2.0])
    assert law_quantile(samples, 0.5) == 2.0
    assert law_quantile(samples, 0.5001) == 3.0
    assert law_quantile(samples, 0.999) == 4.0
    assert law_quantile(samples, 1e-9) == 1.0
    law = critical_law(1.0)
    assert law_quantile(law, 0.3) == law.quantile(0.3)
    with pytest.raises(ParameterError):
        law_quantile(samples, 1.0)
    with pytest.raises(ParameterError):
        law_quantile(np.array([]), 0.5)


def test_quadratic_limits_complete_degenerate():
    out = sample_quadratic_limits(1.0, (1.0,), 0.0, 100, 0)
    assert np.all(out.centered_qf == -1.0)
    assert np.all(out.centered_qf_sq == 0.0)
    assert abs(quadratic_limit_mean(1.0, (1.0,), 0.0) + 1.0) < 1e-15


def test_quadratic_limits_bipartite_cancellation():
    out = sample_quadratic_limits(1.0, (1.0, -1.0), 0.0, 20_000, 7)
    # S = -Y/2 and T = Y/2 share the same chi-square draw
    assert np.max(np.abs(out.centered_qf + out.centered_qf_sq)) < 1e-12
    mean = quadratic_limit_mean(1.0, (1.0, -1.0), 0.0)
    assert abs(mean + 0.5) < 1e-15
    assert abs(out.centered_qf.mean() - mean) < 0.02


def test_quadratic_limit_mean_matches_monte_carlo():
    eigs = (1.0, -0.5, -0.5)
    out = sample_quadratic_limits(1.2, eigs, 0.0, 50_000, 11)
    mean = quadratic_limit_mean(1.2, eigs, 0.0)
    se = out.centered_qf.std() / math.sqrt(out.centered_qf.size)
    assert abs(out.centered_qf.mean() - mean) < 5.0 * se


def test_quadratic_limits_spectral_defect():
    out = sample_quadratic_limits(1.0, (1.0,), 1.0, 40_000, 13)
    # no tail eigenvalues: T is deterministic and S is the Gaussian part
    assert np.all(out.centered_qf_sq == 1.0)
    assert abs(quadratic_limit_mean(1.0, (1.0,), 1.0)) < 1e-15
    assert abs(out.centered_qf.mean()) < 0.03
    assert abs(out.centered_qf.var() - 2.0) < 0.06


def test_quadratic_limits_validation():
    with pytest.raises(ParameterError):
        sample_quadratic_limits(0.9, (1.0,), 0.0, 10, 0)
    with pytest.raises(ParameterError):
        sample_quadratic_limits(1.0, (0.5,), 0.0, 10, 0)
    with pytest.raises(ParameterError):
        sample_quadratic_limits(1.0, (1.0,), -0.1, 10, 0)
    with pytest.raises(ParameterError):
        sample_quadratic_limits(1.0, (1.0, 1.0), 0.0, 10, 0)
    with pytest.raises(ParameterError):
        quadratic_limit_mean(1.0, (1.0, 1.0), 0.0)


def test_mple_limit_deterministic():
    a = sample_mple_limit(0.0, (1.0,), 0.0, 500, 21)
    b = sample_mple_limit(0.0, (1.0,), 0.0, 500, 21)
    c = sample_mple_limit(0.0, (1.0,), 0.0, 500, 22)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert np.all(np.isfinite(a))


def test_mple_limit_sign_probability():
    # for the pure mean-field spectrum the draw is U^2/3 - 1/U^2, so
    # P(V <= 0) = P(U^2 <= sqrt(3)); compare against the tabulated law
    draws = sample_mple_limit(0.0, (1.0,), 0.0, 100_000, 31)
    assert abs((draws <= 0.0).mean() - 0.7436776469082957) < 0.007


def test_log_partition_shift_values():
    assert abs(log_partition_shift(1.0, (1.0, -1.0), 0.0) + math.log(2.0) / 2.0) < 1e-12
    assert abs(log_partition_shift(1.5, (1.0,), 0.0) + 0.19715651274930113) < 1e-12
    assert abs(log_partition_shift(1.5, (1.0, -1.0), 0.0) + 0.16620091956895466) < 1e-12
    assert abs(log_partition_shift(1.5, (1.0,), 1.0) + 0.15828582222983578) < 1e-12
    with pytest.raises(ParameterError):
        log_partition_shift(0.9, (1.0,), 0.0)
    with pytest.raises(ParameterError):
        log_partition_shift(1.0, (1.0,), -1.0)


def _bipartite_log_partition(n: int, theta: float) -> float:
    # direct two-block binomial collapse of the 2^n state sum: x'Qx
    # depends only on the block sums s1, s2 through (4/n) s1 s2
    half = n // 2
    k = np.arange(half + 1, dtype=np.float64)
    logc = gammaln(half + 1.0) - gammaln(k + 1.0) - gammaln(half - k + 1.0)
    s = 2.0 * k - half
    expo = (
        logc[:, None]
        + logc[None, :]
        + (theta * 2.0 / n) * s[:, None] * s[None, :]
    )
    return float(logsumexp(expo))


def test_log_partition_shift_matches_enumeration_route():
    limit = log_partition_shift(1.5, (1.0, -1.0), 0.0)
    gaps = []
    for n in (512, 1024):
        shift_n = _bipartite_log_partition(n, 1.5) - cw_log_partition(n, 1.5)
        gaps.append(abs(shift_n - limit))
    assert gaps[1] < gaps[0]
    assert gaps[1] < 1e-3


def test_delta_log_partition_regimes():
    limit, drift = delta_log_partition(1.5, 1.0)
    assert abs(limit - R_15 / 2.0) < 1e-12
    assert abs(drift - M_15**2 / 2.0) < 1e-12
    limit0, drift0 = delta_log_partition(1.0, 1.0)
    assert abs(limit0 - 0.875384942595181) < 1e-9
    assert drift0 == 0.0
    with pytest.raises(ParameterError):
        delta_log_partition(0.99, 1.0)


def test_mle_critical_cdf_monotone():
    hs = [-2.0, -1.0, 0.0, 1.0, 2.0]
    vals = [mle_critical_cdf(h) for h in hs]
    assert all(0.0 < v < 1.0 for v in vals)
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert abs(vals[2] - 0.6272004691046272) < 1e-9
    assert abs(vals[0] - 0.38271505611850515) < 1e-9
    assert abs(vals[4] - 0.9892068324869331) < 1e-9
