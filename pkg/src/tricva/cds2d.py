"""Joint seller-reference machinery on the planar wedge.

Two correlated drivers (x for the protection seller, y for the reference)
map to independent coordinates via alpha = x, beta = (y - rho x)/rho_bar,
then to polar coordinates. The positive quadrant becomes the wedge
0 < phi < varpi, varpi = arccos(-rho): the phi = 0 edge is the reference's
barrier (y = 0), the phi = varpi edge the seller's (x = 0).

Two independent representations of the absorbed transition density are
kept deliberately: an eigenfunction series in the wedge angle, and a sum
of free-space kernels over reflected sources. They validate each other and
the survival series.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .cds1d import cds_values_1d
from .specfun import (bessel_i_scaled, gauss_legendre, ln_gamma,
                      ln_hyp1f1_neg)

# Series order cutoffs. Terms die once the Bessel order passes the argument,
# with scale sqrt(z) for large z; the hard cap flags configurations the
# series cannot resolve rather than silently returning a partial sum.
_ORDER_CAP = 4000
# Skip boundary-flux evaluation when the source cannot have reached the edge:
# exp(-d^2/2tau) below ~1e-350 underflows any payout it multiplies.
_REACH_EXPONENT = 800.0


@dataclass(frozen=True)
class WedgeCoords:
    """Polar position of the joint driver state inside the wedge."""
    r0: float
    phi0: float
    varpi: float
    rho_xy: float
    rho_bar: float


def to_wedge(x0, y0, rho_xy):
    """Map initial distances (x0, y0) and their correlation to the wedge.

    Requires both drivers strictly above their barriers. The angle is
    measured from the reference's edge, so y0 -> 0 sends phi0 -> 0 and
    x0 -> 0 sends phi0 -> varpi.
    """
    if x0 <= 0 or y0 <= 0:
        raise ValueError("initial distances must be positive")
    if not -1.0 < rho_xy < 1.0:
        raise ValueError("correlation must be in (-1, 1)")
    rho_bar = math.sqrt(1.0 - rho_xy * rho_xy)
    alpha = x0
    beta = (y0 - rho_xy * x0) / rho_bar
    r0 = math.hypot(alpha, beta)
    varpi = math.acos(-rho_xy)
    phi0 = varpi + math.atan2(-alpha, beta)
    # the quadrant maps strictly inside the wedge
    assert 0.0 < phi0 < varpi, (x0, y0, rho_xy, phi0, varpi)
    return WedgeCoords(r0=r0, phi0=phi0, varpi=varpi, rho_xy=rho_xy,
                       rho_bar=rho_bar)


def _order_cutoff(z):
    """Largest Bessel order that still contributes at argument z.

    ive(nu, z) plateaus near 1/sqrt(2 pi z) and then falls off like
    exp(-nu^2 / 2z), so orders beyond ~sqrt(z) are dead weight; for small
    z the linear rule dominates and is conservative.
    """
    return 5.0 + min(3.0 * z, 7.0 * math.sqrt(max(z, 0.0)))


def green_2d_eigen(tau, r, phi, wedge, n_terms=None):
    """Absorbed transition density by angular eigenfunction expansion.

    G(tau, r, phi) = (2 / (varpi tau)) e^(-(r^2+r0^2)/2tau)
                     sum_n I_(nu_n)(r r0 / tau) sin(nu_n phi) sin(nu_n phi0)

    with nu_n = n pi / varpi. The scaled Bessel form keeps every factor
    bounded: exp(-(r-r0)^2/2tau) * ive(nu, r r0/tau).

    Returns a density in the plane (per unit area), broadcast over r, phi.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    r = np.asarray(r, dtype=float)
    phi = np.asarray(phi, dtype=float)
    z = r * wedge.r0 / tau
    if n_terms is None:
        nu_stop = _order_cutoff(float(np.max(z)))
        n_terms = int(math.ceil(nu_stop * wedge.varpi / math.pi))
        if n_terms > _ORDER_CAP:
            warnings.warn("eigenfunction series truncated at order cap",
                          RuntimeWarning, stacklevel=2)
            n_terms = _ORDER_CAP
    n = np.arange(1, n_terms + 1)
    nu = n * math.pi / wedge.varpi
    shape_z = np.broadcast_shapes(z.shape, phi.shape)
    zb = np.broadcast_to(z, shape_z)[..., None]
    phib = np.broadcast_to(phi, shape_z)[..., None]
    terms = (bessel_i_scaled(nu, zb) * np.sin(nu * phib)
             * np.sin(nu * wedge.phi0))
    pref = (2.0 / (wedge.varpi * tau)) * np.exp(
        -0.5 * (r - wedge.r0) ** 2 / tau)
    out = np.asarray(pref * np.broadcast_to(terms.sum(axis=-1), shape_z))
    return out if out.ndim else float(out)


def _f_wedge(p, q, n_nodes):
    """f(p, q) = 1 - (1/2pi) int_R exp(-p(cosh(2 q z) - cos q))/(z^2+1/4) dz.

    Even in q, f(p, 0) = f(0, q) = 0. The Lorentzian is flattened by
    z = tan(u)/2, after which the integrand lives on [-uc, uc] with
    uc = atan(2 zc) and the cutoff zc solves p(cosh(2 q zc) - cos q) = 60,
    keeping every node inside the numerically live region.
    """
    if p < 0:
        raise ValueError("p must be non-negative")
    q = abs(q)
    if p == 0.0 or q == 0.0:
        return 0.0
    # cosh argument where the exponent reaches 60 below its minimum
    c = (60.0 / p) + math.cos(q)
    if c <= 1.0:
        # exponent exceeds 60 already at z = 0: the integral is below e^-60
        return 1.0
    zc = math.acosh(c) / (2.0 * q)
    uc = math.atan(2.0 * zc)
    u, w = gauss_legendre(n_nodes, 0.0, uc)
    ex = -p * (np.cosh(q * np.tan(u)) - math.cos(q))
    integral = 4.0 * np.sum(w * np.exp(ex))
    return 1.0 - integral / (2.0 * math.pi)


def h_kernel(p, q, n_nodes=600):
    """Wedge correction kernel h(p, q) of the reflected-source density.

    h(p, q) = [sign(pi+q) f(p, pi+q) + sign(pi-q) f(p, pi-q)] / 2.

    For |q| < pi this carries the free kernel (h -> 1 as p -> infinity);
    beyond |q| = pi the two halves cancel the free part and only the
    diffraction correction survives. Even in q.
    """
    sp = 1.0 if math.pi + q >= 0 else -1.0
    sm = 1.0 if math.pi - q >= 0 else -1.0
    return 0.5 * (sp * _f_wedge(p, math.pi + q, n_nodes)
                  + sm * _f_wedge(p, math.pi - q, n_nodes))


def _free_kernel_factor(tau, r, r0, psi, p, n_nodes):
    # exp(-(r^2+r0^2-2 r r0 cos psi)/2tau) h(p, psi) / (2 pi tau) with the
    # exponent written against (r-r0)^2 so it never overflows
    ex = -0.5 * ((r - r0) ** 2 + 2.0 * r * r0 * (1.0 - math.cos(psi))) / tau
    if ex < -_REACH_EXPONENT:
        return 0.0
    return math.exp(ex) * h_kernel(p, psi, n_nodes) / (2.0 * math.pi * tau)


def green_2d_images(tau, r, phi, wedge, n_images=None, n_nodes=600):
    """Absorbed transition density as a sum over reflected sources.

    Sources at phi0 + 2 n varpi carry weight +1 and mirrored sources at
    -phi0 + 2 n varpi weight -1; each contributes a free-space kernel times
    the diffraction correction h. Scalar in (r, phi).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    r = float(r)
    phi = float(phi)
    if n_images is None:
        # reflected-pair contributions fall off ~ 1/n^3; this count keeps the
        # truncation tail under ~2e-7 even for slow kernels (small r r0/tau)
        n_images = int(math.ceil(24.0 * math.pi / wedge.varpi))
    p = r * wedge.r0 / tau
    total = 0.0
    for n in range(-n_images, n_images + 1):
        psi_pos = phi - (wedge.phi0 + 2.0 * n * wedge.varpi)
        psi_neg = phi - (-wedge.phi0 + 2.0 * n * wedge.varpi)
        total += _free_kernel_factor(tau, r, wedge.r0, psi_pos, p, n_nodes)
        total -= _free_kernel_factor(tau, r, wedge.r0, psi_neg, p, n_nodes)
    return total


def survival_2d(tau, wedge, max_terms=500):
    """Joint survival probability, Bessel representation.

    Q = (2 r0 / sqrt(2 pi tau)) sum_k sin(nu phi0)/(2k+1)
        [ive((nu-1)/2, z) + ive((nu+1)/2, z)],  nu = (2k+1) pi / varpi,

    with z = r0^2 / 4 tau; the exponential prefactor of the unscaled
    Bessel functions cancels exactly against e^(-z).
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    z = wedge.r0 ** 2 / (4.0 * tau)
    nu_stop = _order_cutoff(z)
    pref = 2.0 * wedge.r0 / math.sqrt(2.0 * math.pi * tau)
    total = 0.0
    for k in range(max_terms):
        nu = (2 * k + 1) * math.pi / wedge.varpi
        term = (math.sin(nu * wedge.phi0) / (2 * k + 1)
                * (bessel_i_scaled(0.5 * (nu - 1.0), z)
                   + bessel_i_scaled(0.5 * (nu + 1.0), z)))
        total += term
        if 0.5 * (nu - 1.0) > nu_stop:
            break
    else:
        warnings.warn("survival series hit the term cap", RuntimeWarning,
                      stacklevel=2)
    return pref * total


def survival_2d_1f1(tau, wedge, max_terms=500):
    """Joint survival probability, confluent hypergeometric representation.

    Q = sum_k (4 sin(nu phi0) / ((2k+1) pi)) w^(nu/2)
        Gamma(1+nu/2)/Gamma(1+nu) 1F1(nu/2, 1+nu, -w),  w = r0^2 / 2 tau.

    Every factor is assembled in logs; independent of survival_2d down to
    truncation, which the tests exploit.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    w = wedge.r0 ** 2 / (2.0 * tau)
    lw = math.log(w)
    total = 0.0
    nu_stop = 2.0 * _order_cutoff(w / 2.0)  # comparable reach to Bessel form
    for k in range(max_terms):
        nu = (2 * k + 1) * math.pi / wedge.varpi
        ln_mag = (0.5 * nu * lw + ln_gamma(1.0 + 0.5 * nu)
                  - ln_gamma(1.0 + nu) + ln_hyp1f1_neg(0.5 * nu, 1.0 + nu, w))
        term = (4.0 * math.sin(nu * wedge.phi0) / ((2 * k + 1) * math.pi)
                * math.exp(ln_mag))
        total += term
        if nu > nu_stop and abs(term) < 1e-16 * max(abs(total), 1e-300):
            break
    else:
        warnings.warn("survival series hit the term cap", RuntimeWarning,
                      stacklevel=2)
    return total


def _edge_flux_coefficients(tau, r, wedge, max_terms):
    """Angular derivative of the eigenfunction series on the phi = varpi
    edge: G_phi(tau, r, varpi) as an array over r. Negative (density falls
    off toward the absorbing edge)."""
    z = r * wedge.r0 / tau
    nu_stop = _order_cutoff(float(np.max(z)))
    n_terms = min(int(math.ceil(nu_stop * wedge.varpi / math.pi)) + 1,
                  max_terms)
    if n_terms == max_terms:
        warnings.warn("edge flux series truncated at order cap",
                      RuntimeWarning, stacklevel=3)
    n = np.arange(1, n_terms + 1)
    nu = n * math.pi / wedge.varpi
    signs = np.where(n % 2 == 0, 1.0, -1.0)  # cos(n pi)
    terms = bessel_i_scaled(nu, z[:, None]) * (
        nu * signs * np.sin(nu * wedge.phi0))
    pref = (2.0 / (wedge.varpi * tau)) * np.exp(
        -0.5 * (r - wedge.r0) ** 2 / tau)
    return pref * terms.sum(axis=1)


def exposure_root(tau_left, terms, y_hi):
    """Distance above which a long-protection CDS has negative value.

    The value is strictly decreasing in the driver, positive at the
    barrier (where protection is a sure thing) and negative for safe
    names unless the coupon is zero. Returns y_hi when the value is
    still positive there.
    """
    if terms.coupon <= 0:
        return y_hi
    v_hi = cds_values_1d(tau_left, y_hi, terms)
    if v_hi >= 0:
        return y_hi
    return brentq(lambda y: cds_values_1d(tau_left, y, terms),
                  1e-12 * y_hi, y_hi, xtol=1e-14, rtol=1e-14)


def cva_2d(wedge, terms, recovery_seller, horizon=None, n_time=64,
           n_radial=200, max_terms=_ORDER_CAP):
    """Unilateral credit adjustment when only seller and reference can fail.

    Integrates the discounted positive CDS exposure against the density
    flux through the seller's edge:

      CVA = -(1 - R_s)/2 int_0^T dt e^(-rate t)
            int_0^inf G_phi(t, r, varpi) V(t, T, rho_bar r)^+ dr / r.

    Positive by construction (flux coefficient is negative). The radial
    integral stops at the exposure root, where the positive part kinks to
    zero; integrating across that kink would wreck the quadrature order.
    Time nodes the diffusion cannot reach are skipped outright: their
    true flux underflows and a truncated series would leave pure noise.
    """
    T = terms.maturity if horizon is None else horizon
    t_nodes, t_w = gauss_legendre(n_time, 0.0, T)
    r_hi = wedge.r0 + 8.0 * math.sqrt(T)
    r_lo = r_hi * 1e-6
    # closest approach of the source to the seller edge
    gap = wedge.r0 * math.sin(min(wedge.varpi - wedge.phi0, 0.5 * math.pi))
    total = 0.0
    for t, wt in zip(t_nodes, t_w):
        if gap * gap / (2.0 * t) > _REACH_EXPONENT:
            continue
        tau_left = T - t
        if tau_left <= 0:
            continue
        r_star = exposure_root(tau_left, terms,
                               wedge.rho_bar * r_hi) / wedge.rho_bar
        if r_star <= r_lo:
            continue
        r_nodes, r_w = gauss_legendre(n_radial, r_lo, min(r_star, r_hi))
        flux = _edge_flux_coefficients(t, r_nodes, wedge, max_terms)
        exposure = cds_values_1d(tau_left, wedge.rho_bar * r_nodes, terms)
        exposure = np.maximum(exposure, 0.0)
        integrand = flux * exposure / r_nodes
        total += wt * math.exp(-terms.rate * t) * np.sum(r_w * integrand)
    return -0.5 * (1.0 - recovery_seller) * total
