import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate, stats

from belgreeks.estimators import WeightedGreek, run_estimator
from belgreeks.models import Merton, SvjParams, make_svj, make_svjj
from belgreeks.oracles import (bs_delta, bs_gamma, bs_price, fourier_european_price_delta, merton_delta,
                               merton_gamma, svj_log_cf)
from belgreeks.payoffs import european_call

from conftest import SV_PARAMS

# Frozen from an independent evaluation with math.erf: Phi(0.1) and phi(0.1) / 20.
BS_ATM_DELTA = 0.539827837277029
BS_ATM_GAMMA = 0.01984762737385059


def test_black_scholes_frozen_values():
    assert float(bs_delta(100, 100, 0.2, 0, 1)) == pytest.approx(BS_ATM_DELTA, abs=1e-12)
    assert float(bs_gamma(100, 100, 0.2, 0, 1)) == pytest.approx(BS_ATM_GAMMA, abs=1e-12)
    assert BS_ATM_DELTA == pytest.approx(0.5 * (1 + math.erf(0.1 / math.sqrt(2))), abs=1e-15)


@pytest.mark.parametrize("sigma,T", [(0.1, 0.5), (0.3, 2.0), (0.2, 1.0)])
def test_atm_delta_symmetry(sigma, T):
    assert float(bs_delta(50, 50, sigma, 0, T)) == pytest.approx(stats.norm.cdf(0.5 * sigma * math.sqrt(T)), abs=1e-14)


def test_deep_in_the_money_delta():
    assert float(bs_delta(100, 1e-6, 0.2, 0, 1)) == pytest.approx(1.0, abs=1e-12)


def test_black_scholes_greeks_match_price_differences():
    h = 1e-3
    p = lambda s: float(bs_price(s, 95, 0.25, 0.02, 0.7))
    assert (p(100 + h) - p(100 - h)) / (2 * h) == pytest.approx(float(bs_delta(100, 95, 0.25, 0.02, 0.7)), abs=1e-8)
    assert (p(100 + h) - 2 * p(100) + p(100 - h)) / h**2 == pytest.approx(float(bs_gamma(100, 95, 0.25, 0.02, 0.7)),
                                                                        abs=1e-5)


def test_oracle_inputs_validated():
    with pytest.raises(ValueError):
        bs_delta(100, 100, 0.0, 0, 1)
    with pytest.raises(ValueError):
        merton_delta(100, 100, 0.2, 0, 1, -1.0, 0, 0.1)


# --- Merton ------------------------------------------------------------------

def test_merton_without_jumps_is_black_scholes():
    assert float(merton_delta(100, 100, 0.2, 0, 1, 0.0, -0.1, 0.1)) == pytest.approx(BS_ATM_DELTA, abs=1e-14)
    assert float(merton_gamma(100, 100, 0.2, 0, 1, 0.0, -0.1, 0.1)) == pytest.approx(BS_ATM_GAMMA, abs=1e-14)


def _merton_price_by_quadrature(s0, k, sigma, T, lam, m, s):
    # condition on the number of jumps and integrate Black-Scholes over the total log-jump
    kbar = math.exp(m + 0.5 * s * s) - 1
    total = 0.0
    for n in range(40):
        pn = stats.poisson.pmf(n, lam * T)
        if n == 0:
            total += pn * float(bs_price(s0 * math.exp(-lam * kbar * T), k, sigma, 0, T))
            continue
        sd = s * math.sqrt(n)
        f = lambda y: float(bs_price(s0 * math.exp(y - lam * kbar * T), k, sigma, 0, T)) * stats.norm.pdf(y, n * m, sd)
        total += pn * integrate.quad(f, n * m - 12 * sd, n * m + 12 * sd, epsabs=1e-13, epsrel=1e-13)[0]
    return total


def test_merton_series_matches_quadrature_differences():
    args = (0.2, 1.0, 1.0, -0.1, 0.1)
    h = 1e-2
    p = lambda s0: _merton_price_by_quadrature(s0, 100, *args)
    fd_delta = (p(100 + h) - p(100 - h)) / (2 * h)
    fd_gamma = (p(100 + h) - 2 * p(100) + p(100 - h)) / h**2
    assert float(merton_delta(100, 100, 0.2, 0, 1, 1.0, -0.1, 0.1)) == pytest.approx(fd_delta, abs=1e-7)
    assert float(merton_gamma(100, 100, 0.2, 0, 1, 1.0, -0.1, 0.1)) == pytest.approx(fd_gamma, abs=1e-5)


def test_merton_refinement_within_declared_accuracy():
    base = merton_delta(100, 100, 0.2, 0, 1, 1.0, -0.1, 0.1)
    n = int(base.method.split("[")[1].rstrip("]"))
    fine = merton_delta(100, 100, 0.2, 0, 1, 1.0, -0.1, 0.1, terms=2 * n)
    assert abs(base.value - fine.value) <= base.accuracy
    assert base.accuracy < 1e-12


def test_merton_rejects_too_few_terms():
    with pytest.raises(ValueError, match="terms"):
        merton_delta(100, 100, 0.2, 0, 1, 5.0, -0.1, 0.1, terms=3)


def test_merton_weighted_delta_close_to_series():
    model = Merton(coordinates="log")
    res = run_estimator(WeightedGreek(model, european_call(100.0), "BEL_delta"), 100_000, 64, seed=13)
    assert res.agrees_with(float(merton_delta(100, 100, 0.2, 0, 1, 1.0, -0.1, 0.1)), k=3)


# --- Fourier -----------------------------------------------------------------

def test_fourier_black_scholes_limit():
    p = SvjParams(kappa=4.0, theta=0.04, eta=1e-3, sigma0_sq=0.04, rho=0.0, intensity=0.0)
    res = fourier_european_price_delta(p, 100.0, 1.0)
    assert res.price.value == pytest.approx(float(bs_price(100, 100, 0.2, 0, 1)), abs=1e-3)
    assert res.delta.value == pytest.approx(BS_ATM_DELTA, abs=1e-4)


@pytest.mark.parametrize("compensation", ["compensated", "martingale"])
@pytest.mark.parametrize("gamma", [0.0, 0.4])
@pytest.mark.parametrize("r", [0.0, 0.03])
@pytest.mark.parametrize("K", [80.0, 100.0, 120.0])
def test_put_call_parity(compensation, gamma, r, K):
    p = SvjParams(**{**SV_PARAMS, "r": r}, gamma=gamma, compensation=compensation)
    res = fourier_european_price_delta(p, K, 1.0)
    # C - P = e^{-rT} (E[S_T] - K); the forward equals S0 e^{rT} only for the martingale drift
    forward = p.s0 * float(np.real(svj_log_cf(-1j, p, 1.0)))
    if compensation == "martingale":
        assert forward == pytest.approx(p.s0 * math.exp(r), rel=1e-12)
    gap = res.price.value - res.put.value - math.exp(-r) * (forward - K)
    assert abs(gap) <= max(res.price.accuracy, 1e-9)


@pytest.mark.parametrize("gamma", [0.0, 0.4])
def test_fourier_greeks_match_price_differences(gamma):
    p = SvjParams(gamma=gamma, **SV_PARAMS)
    h = 0.05
    price = lambda s0: fourier_european_price_delta(replace(p, s0=s0), 100.0, 1.0).price.value
    res = fourier_european_price_delta(p, 100.0, 1.0)
    assert res.delta.value == pytest.approx((price(100 + h) - price(100 - h)) / (2 * h), abs=1e-6)
    assert res.gamma.value == pytest.approx((price(100 + h) - 2 * price(100) + price(100 - h)) / h**2, abs=1e-5)


def test_fourier_refinement_within_declared_accuracy():
    p = SvjParams(**SV_PARAMS)
    coarse = fourier_european_price_delta(p, 100.0, 1.0, tol=1e-8)
    fine = fourier_european_price_delta(p, 100.0, 1.0, tol=1e-12)
    for a, b in ((coarse.price, fine.price), (coarse.delta, fine.delta), (coarse.gamma, fine.gamma)):
        assert abs(a.value - b.value) <= max(a.accuracy, 1e-12)


@pytest.mark.parametrize("build,gamma", [(make_svj, 0.0), (make_svjj, 0.4)])
def test_svj_weighted_call_delta_against_fourier(build, gamma):
    p = SvjParams(gamma=gamma, **SV_PARAMS)
    family = "SVJJ_delta" if gamma else "SVJ_delta"
    res = run_estimator(WeightedGreek(build(p), european_call(100.0), family), 100_000, 128, seed=14)
    ref = fourier_european_price_delta(p, 100.0, 1.0).delta
    assert res.agrees_with(ref.value, k=3, extra=ref.accuracy)
