"""Monte Carlo verification of survival probabilities and adjustments.

Plain Euler paths on the driver distances with absorbing barriers at
zero. The estimates carry a discrete-monitoring bias (paths can dip
below the barrier between grid times unseen) which shrinks like sqrt(dt)
and is removed for comparisons by Richardson extrapolation over the two
finest step sizes. Exact first-passage sampling is out of scope: this
module is an oracle, not a production pricer.
"""

import math
from dataclasses import dataclass

import numpy as np

from .cds1d import cds_values_1d
from .model import CorrelationTriple, validate_correlations

_CHUNK = 16384


@dataclass(frozen=True)
class McConfig:
    """Simulation size, step, seed, and the antithetic-variates flag."""
    n_paths: int
    dt: float
    seed: int
    antithetic: bool = False


@dataclass(frozen=True)
class McEstimate:
    """Sample mean with its standard error.

    n_effective counts independent observations: paths, or pairs when
    antithetic variates make the two halves dependent.
    """
    mean: float
    std_error: float
    n_effective: int


def _check_config(cfg, horizon):
    if cfg.n_paths < 10_000:
        raise ValueError("need at least 1e4 paths for a usable estimate")
    if cfg.dt <= 0 or cfg.dt > horizon / 50.0 + 1e-12:
        raise ValueError("dt must be positive and at most horizon/50")
    if cfg.antithetic and cfg.n_paths % 2:
        raise ValueError("antithetic runs need an even path count")


def _correlation_cholesky(dims, rho):
    corr = np.eye(dims)
    if dims == 2:
        r = float(rho)
        if not -1.0 < r < 1.0:
            raise ValueError("pairwise correlation must be in (-1, 1)")
        corr[0, 1] = corr[1, 0] = r
    elif dims == 3:
        triple = rho if isinstance(rho, CorrelationTriple) \
            else CorrelationTriple(*rho)
        validate_correlations(triple)
        corr[0, 1] = corr[1, 0] = triple.rho_xy
        corr[0, 2] = corr[2, 0] = triple.rho_xz
        corr[1, 2] = corr[2, 1] = triple.rho_yz
    elif dims != 1:
        raise ValueError("dims must be 1, 2 or 3")
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError as err:
        raise ValueError("correlation matrix not positive definite") from err


def _stats(samples, antithetic):
    if antithetic:
        half = len(samples) // 2
        samples = 0.5 * (samples[:half] + samples[half:])
    n = len(samples)
    mean = float(samples.mean())
    std = float(samples.std(ddof=1))
    return McEstimate(mean=mean, std_error=std / math.sqrt(n),
                      n_effective=n)


def _chunk_sizes(n_paths, antithetic):
    unit = 2 if antithetic else 1
    left = n_paths // unit
    while left > 0:
        take = min(left, _CHUNK // unit)
        yield take * unit
        left -= take


def _place(out, chunk, cursor, antithetic):
    """Store a chunk so antithetic mates sit half an array apart.

    _stats pairs out[i] with out[i + n/2]; chunks lay mates out as
    [g; -g], so the two halves go to separate regions. Returns the
    advanced cursor (pairs when antithetic, paths otherwise).
    """
    if antithetic:
        half = len(chunk) // 2
        n_half = len(out) // 2
        out[cursor:cursor + half] = chunk[:half]
        out[n_half + cursor:n_half + cursor + half] = chunk[half:]
        return cursor + half
    out[cursor:cursor + len(chunk)] = chunk
    return cursor + len(chunk)


def simulate_survival(dims, x0s, rho, tau, cfg):
    """Fraction of Euler paths with all drivers positive at every step.

    Increments are Cholesky-correlated Gaussians on a uniform grid of
    at most cfg.dt; the estimate is biased high (continuous crossings
    between grid points go unseen).
    """
    x0s = np.atleast_1d(np.asarray(x0s, dtype=float))
    if len(x0s) != dims:
        raise ValueError("x0s length must equal dims")
    if np.any(x0s <= 0):
        raise ValueError("drivers must start above the barrier")
    _check_config(cfg, tau)
    chol = _correlation_cholesky(dims, rho)
    n_steps = max(int(math.ceil(tau / cfg.dt - 1e-12)), 50)
    sq = math.sqrt(tau / n_steps)
    rng = np.random.default_rng(cfg.seed)
    out = np.empty(cfg.n_paths)
    done = 0
    for size in _chunk_sizes(cfg.n_paths, cfg.antithetic):
        x = np.tile(x0s, (size, 1))
        alive = np.ones(size, dtype=bool)
        half = size // 2
        for _ in range(n_steps):
            if cfg.antithetic:
                g = rng.standard_normal((half, dims))
                dw = np.concatenate([g, -g]) @ chol.T
            else:
                dw = rng.standard_normal((size, dims)) @ chol.T
            x += sq * dw
            alive &= (x > 0.0).all(axis=1)
        done = _place(out, alive.astype(float), done, cfg.antithetic)
    return _stats(out, cfg.antithetic)


def simulate_cva_dva(drivers, rho, terms, cfg, recovery_seller,
                     recovery_buyer):
    """Path-wise credit adjustments at the first default among the trio.

    drivers = (seller, reference, buyer) starting distances. When the
    seller crosses first before maturity the path pays
    (1 - R_seller) e^(-rate t) V^+ with V the closed-form CDS value at
    the reference's current distance; the buyer crossing first pays the
    symmetric V^- amount into DVA (reported positive). Reference-first
    paths contribute nothing. Same-step double crossings are resolved
    conservatively: a reference crossing dominates, and a simultaneous
    seller+buyer crossing is dropped (an O(dt) tie either way).
    """
    x0s = np.asarray(drivers, dtype=float)
    if x0s.shape != (3,):
        raise ValueError("drivers must be the three starting distances")
    if np.any(x0s <= 0):
        raise ValueError("drivers must start above the barrier")
    _check_config(cfg, terms.maturity)
    chol = _correlation_cholesky(3, rho)
    n_steps = max(int(math.ceil(terms.maturity / cfg.dt - 1e-12)), 50)
    dt = terms.maturity / n_steps
    sq = math.sqrt(dt)
    rng = np.random.default_rng(cfg.seed)
    cva = np.zeros(cfg.n_paths)
    dva = np.zeros(cfg.n_paths)
    done = 0
    for size in _chunk_sizes(cfg.n_paths, cfg.antithetic):
        x = np.tile(x0s, (size, 1))
        alive = np.ones(size, dtype=bool)
        half = size // 2
        cva_c = np.zeros(size)
        dva_c = np.zeros(size)
        for k in range(1, n_steps + 1):
            if cfg.antithetic:
                g = rng.standard_normal((half, 3))
                dw = np.concatenate([g, -g]) @ chol.T
            else:
                dw = rng.standard_normal((size, 3)) @ chol.T
            x += sq * dw
            crossed = x <= 0.0
            newly = alive & crossed.any(axis=1)
            if newly.any():
                t_k = k * dt
                tau_left = terms.maturity - t_k
                seller = newly & crossed[:, 0] & ~crossed[:, 1] \
                    & ~crossed[:, 2]
                buyer = newly & crossed[:, 2] & ~crossed[:, 1] \
                    & ~crossed[:, 0]
                disc = math.exp(-terms.rate * t_k)
                if tau_left > 0 and seller.any():
                    v = cds_values_1d(tau_left, x[seller, 1], terms)
                    cva_c[seller] = ((1.0 - recovery_seller) * disc
                                     * np.maximum(v, 0.0))
                if tau_left > 0 and buyer.any():
                    v = cds_values_1d(tau_left, x[buyer, 1], terms)
                    dva_c[buyer] = ((1.0 - recovery_buyer) * disc
                                    * np.maximum(-v, 0.0))
                alive &= ~crossed.any(axis=1)
        _place(cva, cva_c, done, cfg.antithetic)
        done = _place(dva, dva_c, done, cfg.antithetic)
    return _stats(cva, cfg.antithetic), _stats(dva, cfg.antithetic)


def richardson(fine, coarse):
    """Extrapolate away the sqrt(dt) monitoring bias.

    fine ran at half the step of coarse: with E(dt) = E0 + c sqrt(dt),
    E0 = (sqrt(2) E_fine - E_coarse) / (sqrt(2) - 1). The errors add in
    quadrature with the same weights.
    """
    k = math.sqrt(2.0)
    mean = (k * fine.mean - coarse.mean) / (k - 1.0)
    se = math.sqrt(2.0 * fine.std_error ** 2 + coarse.std_error ** 2) \
        / (k - 1.0)
    return McEstimate(mean=mean, std_error=se,
                      n_effective=min(fine.n_effective,
                                      coarse.n_effective))
