"""Special functions behind the closed-form F1 score.

Only three are provided: the complementary error function, the regularized
incomplete beta function and the CDF of the noncentral F distribution
(noncentral chi-square in the numerator).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, SeriesConvergenceError

_FPMIN = 1e-300
_CF_EPS = 1e-15


@dataclass(frozen=True)
class SeriesTolerance:
    """Truncation control for the Poisson-weighted beta series."""

    abs_term_cutoff: float = 1e-12
    max_terms: int = 10000

    def __post_init__(self):
        if not self.abs_term_cutoff > 0:
            raise DomainError("abs_term_cutoff must be positive")
        if self.max_terms < 1:
            raise DomainError("max_terms must be >= 1")


DEFAULT_TOLERANCE = SeriesTolerance()


def erfc(z):
    """Complementary error function, ``2/sqrt(pi) * int_z^inf exp(-r^2) dr``.

    Accepts scalars or arrays. Non-finite input raises :class:`DomainError`.
    """
    arr = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("erfc requires finite input")
    out = special.erfc(arr)
    return float(out) if out.ndim == 0 else out


def _betacf(x, a, b):
    # modified Lentz evaluation of the continued fraction for I_x(a, b)
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    max_iter = 10000 + int(20 * math.sqrt(max(a, b)))
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise SeriesConvergenceError(
        f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})",
        partial_sum=h,
        n_terms=max_iter,
    )


def _log_beta(a, b):
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def reg_inc_beta(x: float, a: float, b: float) -> float:
    """Regularized incomplete beta function I_x(a, b).

    Evaluated by continued fraction; for ``x > (a+1)/(a+b+2)`` the symmetry
    I_x(a, b) = 1 - I_{1-x}(b, a) is used so the fraction converges quickly.
    """
    if not (0.0 <= x <= 1.0) or not (a > 0) or not (b > 0):
        raise DomainError(f"reg_inc_beta domain: x={x}, a={a}, b={b}")
    if not (math.isfinite(a) and math.isfinite(b)):
        raise DomainError("reg_inc_beta requires finite a, b")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return min(1.0, math.exp(log_front) * _betacf(x, a, b) / a)
    return max(0.0, 1.0 - math.exp(log_front) * _betacf(1.0 - x, b, a) / b)


def _log_poisson(j, h):
    return -h + j * math.log(h) - math.lgamma(j + 1.0)


def _lower_tail_bound(j, h):
    # P(J <= j - 1) for J ~ Poisson(h), j - 1 < h; geometric bound on the ratios (k/h)
    if j <= 0:
        return 0.0
    k = j - 1
    return math.exp(_log_poisson(k, h)) / (1.0 - k / h)


def _upper_tail_bound(j, h):
    # P(J >= j + 1) for J ~ Poisson(h), j + 2 > h
    k = j + 1
    return math.exp(_log_poisson(k, h)) / (1.0 - h / (k + 1.0))


def _bisect_int(pred, lo, hi):
    """Smallest integer in [lo, hi] where the monotone predicate turns true (pred(hi) is true)."""
    while lo < hi:
        mid = (lo + hi) // 2
        if pred(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def noncentral_f_cdf(
    f: float,
    d1: float,
    d2: float,
    lam: float,
    tol: SeriesTolerance = DEFAULT_TOLERANCE,
) -> float:
    """CDF of the noncentral F distribution at ``f``.

    The numerator is a noncentral chi-square with ``d1`` degrees of freedom and
    noncentrality ``lam``; the denominator is a central chi-square with ``d2``.
    The CDF is the Poisson mixture

        sum_j  e^{-lam/2} (lam/2)^j / j!  *  I_x(d1/2 + j, d2/2),
        x = d1 f / (d1 f + d2).

    Poisson weights are handled in log space and the series is summed over the
    window that carries all but ``abs_term_cutoff`` of the mass, so large ``lam``
    does not underflow ``e^{-lam/2}``. The beta terms inside the window come from
    one continued-fraction evaluation at the top index followed by the stable
    downward recurrence I_x(a, b) = I_x(a+1, b) + x^a (1-x)^b / (a B(a, b)).
    """
    if not (d1 >= 1 and d2 >= 1):
        raise DomainError("degrees of freedom must be >= 1")
    if not lam >= 0 or not math.isfinite(lam):
        raise DomainError("noncentrality must be finite and >= 0")
    if math.isnan(f):
        raise DomainError("f is NaN")
    if f <= 0:
        return 0.0
    if math.isinf(f):
        return 1.0
    x = d1 * f / (d1 * f + d2)
    a = d1 / 2.0
    b = d2 / 2.0
    h = lam / 2.0
    if h == 0.0:
        # also catches subnormal lam whose half underflows
        return reg_inc_beta(x, a, b)

    eps = tol.abs_term_cutoff
    mode = int(math.floor(h))

    # window [j_lo, j_hi] outside which the Poisson mass is below eps/2 on each side
    if mode == 0 or _lower_tail_bound(mode, h) <= eps / 2:
        j_lo = mode
    else:
        j_lo = _bisect_int(lambda j: _lower_tail_bound(j, h) > eps / 2, 0, mode) - 1
        j_lo = max(j_lo, 0)
    top = mode + 1
    step = int(10 * math.sqrt(h)) + 10
    while _upper_tail_bound(top, h) > eps / 2:
        top += step
    j_hi = _bisect_int(lambda j: _upper_tail_bound(j, h) <= eps / 2, mode + 1, top)

    # I_x(a + j, b) decreases in j: once it is below eps/2 the remaining terms are negligible
    if reg_inc_beta(x, a + j_lo, b) <= eps / 2:
        return 0.0
    if j_hi - j_lo + 1 > tol.max_terms:
        j_hi = _bisect_int(lambda j: reg_inc_beta(x, a + j, b) <= eps / 2, j_lo, j_hi)
    n_terms = j_hi - j_lo + 1
    if n_terms > tol.max_terms:
        partial = _window_sum(x, a, b, h, j_lo, j_lo + tol.max_terms - 1)
        raise SeriesConvergenceError(
            f"noncentral F series needs {n_terms} terms (max_terms={tol.max_terms})",
            partial_sum=partial,
            n_terms=tol.max_terms,
        )
    return min(max(_window_sum(x, a, b, h, j_lo, j_hi), 0.0), 1.0)


def _window_sum(x, a, b, h, j_lo, j_hi):
    js = np.arange(j_lo, j_hi + 1, dtype=float)
    i_top = reg_inc_beta(x, a + j_hi, b)
    aj = a + js[:-1]
    log_t = (aj * math.log(x) + b * math.log1p(-x)
             + special.gammaln(aj + b) - special.gammaln(aj + 1.0) - math.lgamma(b))
    betas = np.empty_like(js)
    betas[-1] = i_top
    betas[:-1] = i_top + np.cumsum(np.exp(log_t)[::-1])[::-1]
    np.minimum(betas, 1.0, out=betas)
    weights = np.exp(-h + js * math.log(h) - special.gammaln(js + 1.0))
    return float(np.dot(weights, betas))
