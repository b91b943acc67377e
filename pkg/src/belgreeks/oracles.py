"""Reference values independent of the Monte Carlo machinery."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats


@dataclass(frozen=True)
class OracleValue:
    value: float
    method: str
    accuracy: float

    def __float__(self):
        return float(self.value)


def _d1(s0, k, sigma, r, T):
    return (math.log(s0 / k) + (r + 0.5 * sigma * sigma) * T) / (sigma * math.sqrt(T))


def _check_positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")


def bs_price(s0, k, sigma, r, T) -> OracleValue:
    _check_positive(s0=s0, k=k, sigma=sigma, T=T)
    d1 = _d1(s0, k, sigma, r, T)
    d2 = d1 - sigma * math.sqrt(T)
    return OracleValue(s0 * stats.norm.cdf(d1) - k * math.exp(-r * T) * stats.norm.cdf(d2),
                       "black_scholes", 1e-12 * s0)


def bs_delta(s0, k, sigma, r, T) -> OracleValue:
    _check_positive(s0=s0, k=k, sigma=sigma, T=T)
    return OracleValue(float(stats.norm.cdf(_d1(s0, k, sigma, r, T))), "black_scholes", 1e-12)


def bs_gamma(s0, k, sigma, r, T) -> OracleValue:
    _check_positive(s0=s0, k=k, sigma=sigma, T=T)
    d1 = _d1(s0, k, sigma, r, T)
    return OracleValue(float(stats.norm.pdf(d1) / (s0 * sigma * math.sqrt(T))), "black_scholes", 1e-12)


# --- Merton jump-diffusion ---------------------------------------------------

def _poisson_terms(mean, accuracy):
    """Smallest n such that P(N >= n) < accuracy for N ~ Poisson(mean)."""
    return int(stats.poisson.isf(accuracy, mean)) + 2 if mean > 0 else 1


def _merton_series(s0, k, sigma, r, T, intensity, jump_mean, jump_sd, terms, accuracy, greek):
    _check_positive(s0=s0, k=k, sigma=sigma, T=T)
    if intensity < 0:
        raise ValueError("intensity must be non-negative")
    kbar = math.exp(jump_mean + 0.5 * jump_sd**2) - 1.0
    lam_t = intensity * (1.0 + kbar) * T
    needed = _poisson_terms(lam_t, accuracy)
    if terms is None:
        terms = needed
    tail = float(stats.poisson.sf(terms - 1, lam_t)) if lam_t > 0 else 0.0
    if tail >= accuracy:
        raise ValueError(f"{terms} terms leave a Poisson tail of {tail:.3g} >= accuracy {accuracy}; "
                         f"need at least {needed}")
    n = np.arange(terms)
    w = stats.poisson.pmf(n, lam_t) if lam_t > 0 else (n == 0).astype(float)
    sig_n = np.sqrt(sigma**2 + n * jump_sd**2 / T)
    r_n = r - intensity * kbar + n * math.log1p(kbar) / T
    d1 = (math.log(s0 / k) + (r_n + 0.5 * sig_n**2) * T) / (sig_n * math.sqrt(T))
    if greek == "delta":
        vals = stats.norm.cdf(d1)
        # each conditional delta is at most 1, so the tail mass bounds the truncation error
        bound = tail
    else:
        vals = stats.norm.pdf(d1) / (s0 * sig_n * math.sqrt(T))
        bound = tail * float(np.max(vals)) if vals.size else 0.0
    return OracleValue(float(np.sum(w * vals)), f"merton_series[{terms}]", max(bound, 1e-15))


def merton_delta(s0, k, sigma, r, T, intensity, jump_mean, jump_sd, terms=None, accuracy=1e-12) -> OracleValue:
    """Call delta in Merton's model with the drift compensated by ``intensity * (E[e^y] - 1)``."""
    return _merton_series(s0, k, sigma, r, T, intensity, jump_mean, jump_sd, terms, accuracy, "delta")


def merton_gamma(s0, k, sigma, r, T, intensity, jump_mean, jump_sd, terms=None, accuracy=1e-12) -> OracleValue:
    return _merton_series(s0, k, sigma, r, T, intensity, jump_mean, jump_sd, terms, accuracy, "gamma")


# --- Bachelier Asian closed-form weight --------------------------------------

def bachelier_asian_weight_oracle(path) -> np.ndarray:
    """``(6/(sigma T)) ((1/T) int W dt - W_T/3)`` by left-point quadrature on the path's grid."""
    grid = path.grid
    dW = path.noise.dW[:, :, 0]
    W = np.zeros((dW.shape[0], grid.n_steps + 1))
    np.cumsum(dW, axis=1, out=W[:, 1:])
    T = grid.horizon
    int_W = W[:, :-1] @ grid.dt
    sigma = path.model.sigma
    return 6.0 / (sigma * T) * (int_W / T - W[:, -1] / 3.0)


# --- Fourier pricer for SVJ / SVJJ --------------------------------------------

def _heston_cd(u, tau, kappa, theta, eta, rho):
    """Heston (C, D) coefficients of the log-price characteristic function."""
    iu = 1j * u
    beta = kappa - rho * eta * iu
    d = np.sqrt(beta * beta + eta * eta * (iu + u * u))
    g = (beta - d) / (beta + d)
    e = np.exp(-d * tau)
    D = (beta - d) / eta**2 * (1 - e) / (1 - g * e)
    C = kappa * theta / eta**2 * ((beta - d) * tau - 2 * np.log((1 - g * e) / (1 - g)))
    return C, D


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


def svj_log_cf(u, params, T):
    """Characteristic function of ``log(S_T / S0)`` for SVJ or SVJJ parameters."""
    u = np.asarray(u, dtype=complex)
    p = params
    C, D = _heston_cd(u, T, p.kappa, p.theta, p.eta, p.rho)
    m, s = p.jump_law.mean, p.jump_law.sd
    mark_cf = np.exp(1j * u * m - 0.5 * s * s * u * u)
    if p.gamma == 0:
        jump = p.intensity * T * (mark_cf - 1)
    else:
        # variance jumps by gamma at each jump time: E[exp(gamma D(u, T - tau))] over tau
        taus = 0.5 * T * (_GL_NODES + 1)
        _, Dt = _heston_cd(u[..., None], taus, p.kappa, p.theta, p.eta, p.rho)
        avg = 0.5 * T * np.sum(_GL_WEIGHTS * (mark_cf[..., None] * np.exp(p.gamma * Dt) - 1), axis=-1)
        jump = p.intensity * avg
    drift = (p.r - p.jump_compensator()) * T
    return np.exp(1j * u * drift + C + D * p.sigma0_sq + jump)


def _quad(f, tol):
    val, err = integrate.quad(f, 0.0, np.inf, limit=1000, epsabs=tol, epsrel=tol)
    return val, err


@dataclass(frozen=True)
class FourierResult:
    price: OracleValue
    put: OracleValue
    delta: OracleValue
    gamma: OracleValue


def fourier_european_price_delta(params, K: float, T: float, tol: float = 1e-10) -> FourierResult:
    """European call price, put price, delta and gamma by characteristic-function inversion.

    The call comes from the two exercise probabilities, the put from a single
    integral on a shifted contour, so put-call parity checks one against the other.
    """
    s0 = params.s0
    _check_positive(s0=s0, K=K, T=T)
    y = math.log(K / s0)
    mean_growth = float(np.real(svj_log_cf(-1j, params, T)))

    def p2_integrand(u):
        return float(np.real(np.exp(-1j * u * y) * svj_log_cf(u, params, T) / (1j * u)))

    def p1_integrand(u):
        return float(np.real(np.exp(-1j * u * y) * svj_log_cf(u - 1j, params, T) / (1j * u * mean_growth)))

    def density_integrand(u):
        return float(np.real(np.exp(-1j * u * y) * svj_log_cf(u, params, T)))

    def lewis_integrand(u):
        # contour shifted to Im = -1/2; gives the put independently of P1, P2
        return float(np.real(np.exp(-1j * u * y) * svj_log_cf(u - 0.5j, params, T)) / (u * u + 0.25))

    i2, e2 = _quad(p2_integrand, tol)
    i1, e1 = _quad(p1_integrand, tol)
    i0, e0 = _quad(density_integrand, tol)
    il, el = _quad(lewis_integrand, tol)
    P1, P2 = 0.5 + i1 / np.pi, 0.5 + i2 / np.pi
    disc = math.exp(-params.r * T)
    fwd = s0 * mean_growth
    call = disc * (fwd * P1 - K * P2)
    put = disc * (K - math.sqrt(s0 * K) * il / np.pi)
    price_acc = disc * (fwd * e1 + K * e2 + math.sqrt(s0 * K) * el) / np.pi
    delta = disc * mean_growth * P1
    gamma = disc * K * (i0 / np.pi) / s0**2
    method = "fourier_" + ("svjj" if params.gamma else "svj")
    return FourierResult(OracleValue(call, method, price_acc), OracleValue(put, method, price_acc),
                         OracleValue(delta, method, disc * mean_growth * e1 / np.pi),
                         OracleValue(gamma, method, disc * K * e0 / np.pi / s0**2))
