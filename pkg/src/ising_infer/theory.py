"""Limit-law machinery: magnetization constants, the quartic critical
family, quadratic-form limits, and asymptotic log-partition expansions.

Scalar integrals run through adaptive quadrature on the exactly-supported
interval where the integrand exceeds e^-40 of its peak; distribution tables
are dense symmetric grids with trapezoid CDFs and monotone (piecewise
linear) inverse interpolation. Quantiles of finite samples use the
ceil(p*N) order statistic, matching the left-continuous convention
Psi(p) = inf{t : F(t) >= p}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import ParameterError
from .streams import as_generator

H_MAX = 50.0
TAIL_LOG_CUT = 40.0


def spontaneous_magnetization(theta: float) -> float:
    """The nonnegative root m of m = tanh(theta*m); zero for theta <= 1.

    Solved by Brent bracketing on [1e-12, 1] and polished by one Newton
    step; the returned value has fixed-point residual below 1e-14.
    """
    if theta < 0:
        raise ParameterError("theta must be nonnegative")
    if theta <= 1.0:
        return 0.0
    m = brentq(
        lambda x: x - math.tanh(theta * x), 1e-12, 1.0, xtol=1e-16, rtol=8.9e-16
    )
    w = m - math.tanh(theta * m)
    slope = 1.0 - theta / math.cosh(theta * m) ** 2
    if slope != 0.0:
        m -= w / slope
    if abs(m - math.tanh(theta * m)) > 1e-14:
        raise ParameterError(f"fixed point residual too large at theta={theta}")
    return m


def magnetization_variance(theta: float) -> float:
    """sigma^2 = (1 - m^2)/(1 - theta(1 - m^2)), the sqrt(n) fluctuation
    variance of the magnetization; defined for theta > 1 only."""
    if theta <= 1.0:
        raise ParameterError("magnetization_variance requires theta > 1")
    m = spontaneous_magnetization(theta)
    one_minus = 1.0 - m * m
    return one_minus / (1.0 - theta * one_minus)


def magnetization_slope(theta: float) -> float:
    """dm/dtheta = m * sigma^2 for theta > 1."""
    return spontaneous_magnetization(theta) * magnetization_variance(theta)


def information_rate(theta: float) -> float:
    """R(theta) = m^2 * sigma^2, the inverse limiting estimator variance."""
    m = spontaneous_magnetization(theta)
    return m * m * magnetization_variance(theta)


# ---------------------------------------------------------------------------
# The quartic critical family


def _support_edge(h: float) -> float:
    # positive root of u^4/12 - h u^2/2 = TAIL_LOG_CUT
    usq = 6.0 * (h / 2.0 + math.sqrt(h * h / 4.0 + TAIL_LOG_CUT / 3.0))
    return math.sqrt(usq)


def _peak_log(h: float) -> float:
    # max of -u^4/12 + h u^2/2, attained at u^2 = 3h for h > 0, else at 0
    return 0.75 * h * h if h > 0 else 0.0


@dataclass(frozen=True, eq=False)
class CriticalLaw:
    """The tilted quartic law with density proportional to
    exp(-u^4/12 + h u^2/2).

    Attributes
    ----------
    h : float
        Tilt parameter, |h| <= 50.
    log_normalizer : float
        F(h) = log of the normalizing integral over the real line.
    u, pdf, cdf : np.ndarray
        Symmetric grid spanning the support where the density exceeds
        e^-40 of its peak, with the normalized density and trapezoid CDF.
    moment2, moment4 : float
        E U^2 and E U^4 by adaptive quadrature.
    """

    h: float
    log_normalizer: float
    u: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    moment2: float
    moment4: float

    def quantile(self, p) -> np.ndarray | float:
        p_arr = np.asarray(p, dtype=np.float64)
        if np.any((p_arr <= 0.0) | (p_arr >= 1.0)):
            raise ParameterError("quantile levels must lie strictly in (0, 1)")
        out = np.interp(p_arr, self.cdf, self.u)
        return out if p_arr.shape else float(out)

    def cdf_at(self, x) -> np.ndarray | float:
        x_arr = np.asarray(x, dtype=np.float64)
        out = np.interp(x_arr, self.u, self.cdf, left=0.0, right=1.0)
        return out if x_arr.shape else float(out)

    def sample(self, seed, size: int) -> np.ndarray:
        rng = as_generator(seed)
        return np.interp(rng.random(size), self.cdf, self.u)


@lru_cache(maxsize=64)
def critical_law(h: float, grid_points: int = 4096) -> CriticalLaw:
    """Build the tilted quartic law at tilt ``h``.

    Args:
        h: tilt parameter with |h| <= 50.
        grid_points: table resolution, at least 1024.
    """
    if abs(h) > H_MAX:
        raise ParameterError(f"|h| is capped at {H_MAX}")
    if grid_points < 1024:
        raise ParameterError("grid_points must be at least 1024")
    edge = _support_edge(h)
    peak = _peak_log(h)

    def shifted(u, power=0):
        return u**power * np.exp(-(u**4) / 12.0 + h * u * u / 2.0 - peak)

    total = 2.0 * quad(shifted, 0.0, edge, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    log_norm = peak + math.log(total)
    m2 = 2.0 * quad(shifted, 0, edge, args=(2,), epsabs=1e-14, limit=200)[0] / total
    m4 = 2.0 * quad(shifted, 0, edge, args=(4,), epsabs=1e-14, limit=200)[0] / total

    u = np.linspace(-edge, edge, grid_points)
    log_pdf = -(u**4) / 12.0 + h * u * u / 2.0 - log_norm
    pdf = np.exp(log_pdf)
    steps = np.diff(u) * 0.5 * (pdf[1:] + pdf[:-1])
    cdf = np.concatenate([[0.0], np.cumsum(steps)])
    cdf /= cdf[-1]
    for arr in (u, pdf, cdf):
        arr.flags.writeable = False
    return CriticalLaw(
        h=h, log_normalizer=log_norm, u=u, pdf=pdf, cdf=cdf, moment2=m2, moment4=m4
    )


def law_quantile(law_or_samples, p: float) -> float:
    """Left-continuous quantile of a CriticalLaw table or a sample array.

    Tables interpolate monotonically; samples return the ceil(p*N) order
    statistic.
    """
    if not 0.0 < p < 1.0:
        raise ParameterError("quantile levels must lie strictly in (0, 1)")
    if isinstance(law_or_samples, CriticalLaw):
        return float(law_or_samples.quantile(p))
    samples = np.sort(np.asarray(law_or_samples, dtype=np.float64))
    if samples.size == 0:
        raise ParameterError("cannot take a quantile of an empty sample")
    rank = math.ceil(p * samples.size)
    return float(samples[max(rank, 1) - 1])


# ---------------------------------------------------------------------------
# Quadratic-form limit laws


@dataclass(frozen=True, eq=False)
class LimitSampleSet:
    """Joint draws of the centered quadratic-form limits.

    ``centered_qf`` is the weak limit of x'Bx and ``centered_qf_sq`` that
    of x'B^2x, with B the centered coupling; rows are replications.
    """

    theta: float
    centered_qf: np.ndarray
    centered_qf_sq: np.ndarray


def _tail_eigs(limit_eigs, j_max: int) -> np.ndarray:
    eigs = np.asarray(limit_eigs, dtype=np.float64)
    if eigs.size == 0 or eigs[0] != 1.0:
        raise ParameterError("limit_eigs must lead with the Perron eigenvalue 1")
    return eigs[1 : 1 + j_max]


def sample_quadratic_limits(
    theta: float,
    limit_eigs,
    kappa: float,
    reps: int,
    seed,
    j_max: int = 64,
) -> LimitSampleSet:
    """Monte Carlo draws of the quadratic-form limit pair at ``theta``.

    The chi-square series is truncated after ``j_max`` tail eigenvalues,
    which is exact for every cataloged family (their limit spectra are
    finite). Requires 1 - theta(1-m^2)*lambda > 0 for each tail eigenvalue.

    Args:
        theta: inverse temperature, theta >= 1.
        limit_eigs: limiting eigenvalues, leading entry 1.
        kappa: spectral defect, nonnegative.
        reps: number of replications.
        seed: int seed or Generator.
        j_max: series truncation length.
    """
    if theta < 1.0:
        raise ParameterError("quadratic-form limits are defined for theta >= 1")
    if kappa < 0:
        raise ParameterError("kappa must be nonnegative")
    rng = as_generator(seed)
    m = spontaneous_magnetization(theta)
    one_minus = 1.0 - m * m
    c = theta * one_minus
    lam = _tail_eigs(limit_eigs, j_max)
    denom = 1.0 - c * lam
    if np.any(denom <= 0.0):
        raise ParameterError("spectral gap violated: 1 - theta(1-m^2)lambda <= 0")
    y = rng.chisquare(1.0, size=(reps, lam.size)) if lam.size else np.zeros((reps, 0))
    w = rng.normal(0.0, math.sqrt(2.0 * kappa), size=reps) if kappa > 0 else 0.0
    s = one_minus * (
        (y / denom - 1.0) @ lam - 1.0 + one_minus * theta * kappa + w
    )
    t = one_minus * (y @ (lam * lam / denom) + kappa)
    return LimitSampleSet(
        theta=theta, centered_qf=np.asarray(s), centered_qf_sq=np.asarray(t)
    )


def quadratic_limit_mean(theta: float, limit_eigs, kappa: float) -> float:
    """Closed-form mean of the centered quadratic-form limit at ``theta``.

    Each chi-square in the series has unit mean, so

        E S = (1-m^2) [ sum_j lambda_j (1/(1 - c lambda_j) - 1)
                        - 1 + (1-m^2) theta kappa ],  c = theta (1-m^2).

    Reduces to -(1-m^2) when the tail spectrum is empty and kappa = 0.
    """
    if theta < 1.0:
        raise ParameterError("quadratic-form limits are defined for theta >= 1")
    if kappa < 0:
        raise ParameterError("kappa must be nonnegative")
    m = spontaneous_magnetization(theta)
    one_minus = 1.0 - m * m
    c = theta * one_minus
    lam = _tail_eigs(limit_eigs, j_max=1 << 20)
    denom = 1.0 - c * lam
    if np.any(denom <= 0.0):
        raise ParameterError("spectral gap violated: 1 - theta(1-m^2)lambda <= 0")
    tail = float(np.sum(lam * (1.0 / denom - 1.0)))
    return one_minus * (tail - 1.0 + one_minus * theta * kappa)


def sample_mple_limit(
    h: float,
    limit_eigs,
    kappa: float,
    reps: int,
    seed,
    j_max: int = 64,
) -> np.ndarray:
    """Draws of the critical MPLE limit U_h^2/3 + (S - T)/U_h^2.

    U_h follows the tilted quartic law, independent of the quadratic-form
    pair (S, T) taken at theta = 1.
    """
    rng = as_generator(seed)
    law = critical_law(h)
    u = law.sample(rng, reps)
    st = sample_quadratic_limits(1.0, limit_eigs, kappa, reps, rng, j_max=j_max)
    usq = u * u
    return usq / 3.0 + (st.centered_qf - st.centered_qf_sq) / usq


# ---------------------------------------------------------------------------
# Log-partition asymptotics


def log_partition_shift(theta0: float, limit_eigs, kappa: float) -> float:
    """Limit of [log-partition of the coupling model] minus [mean-field
    log-partition in its nx̄²/2 convention] along theta_n -> theta0.

    Equals the log moment generating function of the theta = 0
    quadratic-form limit at argument theta0(1-m^2)/2:

        -c/2 + kappa c^2/4 - (1/2) sum_j [log(1 - c lambda_j) + c lambda_j]

    with c = theta0 (1 - m^2). Matrix-convention comparisons must add
    theta0/2 on the mean-field side.
    """
    if theta0 < 1.0:
        raise ParameterError("the shift is defined on theta0 >= 1")
    if kappa < 0:
        raise ParameterError("kappa must be nonnegative")
    m = spontaneous_magnetization(theta0)
    c = theta0 * (1.0 - m * m)
    lam = _tail_eigs(limit_eigs, j_max=1 << 20)
    if np.any(1.0 - c * lam <= 0.0):
        raise ParameterError("spectral gap violated: log(1 - c lambda) undefined")
    tail = float(np.sum(np.log1p(-c * lam) + c * lam))
    return -0.5 * c + 0.25 * kappa * c * c - 0.5 * tail


def delta_log_partition(theta0: float, h: float) -> tuple[float, float]:
    """Asymptotics of Z_n(theta0 + h/sqrt(n)) - Z_n(theta0) (mean field).

    Returns (limit, drift) where the full expansion is
    drift * sqrt(n) + limit + o(1): at theta0 > 1 the pair is
    (R(theta0) h^2/2, h m^2/2); at theta0 = 1 it is (F(h) - F(0), 0).
    """
    if theta0 < 1.0:
        raise ParameterError("asymptotics cover theta0 >= 1 only")
    if theta0 == 1.0:
        limit = critical_law(h).log_normalizer - critical_law(0.0).log_normalizer
        return limit, 0.0
    m = spontaneous_magnetization(theta0)
    return information_rate(theta0) * h * h / 2.0, h * m * m / 2.0


def mle_critical_cdf(h: float) -> float:
    """P(U_0^2 <= E U_h^2): the limiting distribution function, at ``h``,
    of the centered and rescaled maximum-likelihood point estimate at
    criticality."""
    e = critical_law(h).moment2
    law0 = critical_law(0.0)
    root = math.sqrt(e)
    return float(law0.cdf_at(root) - law0.cdf_at(-root))
