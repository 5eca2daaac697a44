"""Single-name CDS pricing off a Brownian driver absorbed at zero.

The reference's driver y starts at y0 > 0 and the name defaults when y
first hits 0. Everything here is closed form: the absorbed transition
density (image construction or sine-transform), the survival probability,
the risky annuity, the protection leg, and the resulting CDS value per
unit notional.

Units: tau in years, flat continuously compounded short rate, coupon paid
continuously. Value is from the protection buyer's side: protection leg
minus coupon leg.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from .specfun import gauss_legendre, norm_cdf, norm_pdf

# Below this, the closed-form annuity divides 0/0 in the rate; switch to the
# exact zero-rate limit instead. Scaled by 1/tau so the test is dimensionless.
_RATE_FLOOR = 1e-8


def green_1d_images(tau, y0, y):
    """Absorbed-at-zero Brownian transition density, image construction.

    g(tau, y0, y) = phi((y-y0)/sqrt(tau))/sqrt(tau) - phi((y+y0)/sqrt(tau))/sqrt(tau)

    Vanishes at y = 0, integrates to the survival probability.
    """
    tau = float(tau)
    if tau <= 0:
        raise ValueError("tau must be positive")
    y = np.asarray(y, dtype=float)
    rt = math.sqrt(tau)
    out = np.asarray((norm_pdf((y - y0) / rt) - norm_pdf((y + y0) / rt)) / rt)
    return out if out.ndim else float(out)


def green_1d_integral(tau, y0, y, k_max=40.0, n_nodes=2000):
    """Same density via the sine-transform representation.

    g = (2/pi) int_0^kmax e^(-k^2 tau/2) sin(k y0) sin(k y) dk, evaluated by
    Gauss-Legendre. The integrand dies like e^(-k^2 tau/2), so k_max ~
    sqrt(80/tau) suffices; the default covers tau >= 0.05.

    Kept as an independent route for validating the image construction.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    k, w = gauss_legendre(n_nodes, 0.0, k_max)
    y = np.asarray(y, dtype=float)
    vals = np.exp(-0.5 * k * k * tau) * np.sin(k * y0) * np.sin(
        np.multiply.outer(y, k))
    out = (2.0 / math.pi) * vals @ w
    return out if out.ndim else float(out)


def survival_1d(tau, y0):
    """P(driver stays above 0 up to tau) = 2 N(y0/sqrt(tau)) - 1."""
    tau = np.asarray(tau, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be positive")
    out = 2.0 * norm_cdf(y0 / np.sqrt(tau)) - 1.0
    return out if out.ndim else float(out)


def annuity_1d(tau, y0, rate):
    """Risky annuity int_0^tau e^(-rate*s) Q(s) ds, closed form.

    The textbook expression mixes e^(+y0 sqrt(2 rate)) with a far normal
    tail; evaluated literally it overflows once y0 sqrt(2 rate) > ~700.
    Both exponential-tilted terms are therefore folded into scaled
    complementary error functions whose exponents are non-positive.
    """
    tau = np.asarray(tau, dtype=float)
    y0 = np.asarray(y0, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be positive")
    if np.any(np.asarray(y0) <= 0):
        raise ValueError("y0 must be positive")
    rate = float(rate)
    if rate < 0:
        raise ValueError("rate must be non-negative")

    a = y0 / np.sqrt(tau)
    if rate * np.min(tau) < _RATE_FLOOR:
        # zero-rate limit: int_0^tau (2N(y0/sqrt(s)) - 1) ds
        out = (tau * (2.0 * norm_cdf(a) - 1.0)
               + 2.0 * y0 * np.sqrt(tau) * norm_pdf(a)
               + 2.0 * y0 * y0 * (norm_cdf(a) - 1.0))
        return out if out.ndim else float(out)

    b = np.sqrt(2.0 * rate * tau)
    q = 2.0 * norm_cdf(a) - 1.0
    # e^(y0 sqrt(2r)) N(-a-b) = 0.5 e^(-y0^2/2tau - r tau) erfcx((a+b)/sqrt2)
    t1 = 0.5 * np.exp(-0.5 * y0 * y0 / tau - rate * tau) * _sp.erfcx(
        (a + b) / math.sqrt(2.0))
    t2 = 0.5 * np.exp(-y0 * np.sqrt(2.0 * rate)) * _sp.erfc(
        (a - b) / math.sqrt(2.0))
    out = (1.0 - np.exp(-rate * tau) * q - t1 - t2) / rate
    return out if out.ndim else float(out)


def default_leg_1d(tau, y0, rate, recovery):
    """Protection leg value (1-R) E[e^(-rate * default time); default <= tau].

    Follows from integrating the discounted default density by parts:
    (1-R) (1 - e^(-rate tau) Q(tau) - rate * annuity).
    """
    q = survival_1d(tau, y0)
    a = annuity_1d(tau, y0, rate)
    out = (1.0 - recovery) * (1.0 - np.exp(-rate * np.asarray(tau, dtype=float)) * q
                              - rate * a)
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class Cds1dQuote:
    """Valuation breakdown of a single-name CDS."""
    value: float
    annuity: float
    default_leg: float
    survival: float


def cds_value_1d(tau, y0, terms):
    """Protection-buyer value of a CDS on one name, per unit notional.

    value = default_leg - coupon * annuity. Positive when the running
    coupon undercompensates the default risk at this driver level.
    """
    a = annuity_1d(tau, y0, terms.rate)
    d = default_leg_1d(tau, y0, terms.rate, terms.recovery)
    q = survival_1d(tau, y0)
    return Cds1dQuote(value=d - terms.coupon * a, annuity=a, default_leg=d,
                      survival=q)


def cds_values_1d(tau, y0, terms):
    """Vectorized protection-buyer CDS value over arrays of tau and y0.

    Same payout as cds_value_1d but skipping the quote container; used in
    the exposure quadratures where the valuation runs over a grid.
    """
    a = annuity_1d(tau, y0, terms.rate)
    d = default_leg_1d(tau, y0, terms.rate, terms.recovery)
    return d - terms.coupon * a


def breakeven_coupon_1d(tau, y0, rate, recovery):
    """Coupon making the CDS worthless at inception: default_leg / annuity."""
    a = annuity_1d(tau, y0, rate)
    d = default_leg_1d(tau, y0, rate, recovery)
    return d / a
