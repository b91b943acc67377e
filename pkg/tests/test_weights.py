import numpy as np
import pytest
from hypothesis import given, strategies as st

from belgreeks.estimators import (PathwiseGreek, RejectedPathsError, WeightedGreek, run_estimator)
from belgreeks.models import (GBM, SvjParams, make_bachelier_jump_asian, make_exp_levy_asian, make_svj,
                              make_svjj, simulate_path)
from belgreeks.oracles import bachelier_asian_weight_oracle, bs_gamma, fourier_european_price_delta
from belgreeks.payoffs import european_call, gaussian_bump
from belgreeks.stochastic_core import LogNormalReturnMarks, NoiseBundle, TimeGrid, make_noise
from belgreeks.weights import (BelDelta, BelGamma, ExpLevyAsianClosedForm, HypoellipticWeight, MalliavinWeight,
                               SvjDelta, SvjGamma, Tempering, bel_delta_weight, bel_gamma_weight, hypoelliptic_weight,
                               make_weight, svj_delta_weight, svjj_delta_weight)

from conftest import SV_PARAMS, combined_ok


def paths_for(model, weight, n_steps=64, n_paths=500, seed=1, dates=(1.0,)):
    w = weight.prepare(dates, dates[-1])
    g = TimeGrid.uniform(dates[-1], n_steps, sorted(set(dates) | set(w.mandatory_nodes())))
    nz = make_noise(g, model.brownian_dim, model.jump_intensity, model.mark_law, seed, 0, n_paths)
    return w, simulate_path(model, g, nz, w.order, w.accumulators(model), want_inverse=w.needs_inverse)


# --- tempering ---------------------------------------------------------------

@given(st.floats(0.05, 1.0), st.integers(1, 200))
def test_minimal_tempering_integrates_to_one(T1, n):
    g = TimeGrid.uniform(1.0, n, (T1,))
    a = Tempering.minimal(T1)
    assert a.integral(g, T1) == pytest.approx(1.0, abs=1e-14)
    assert np.all(a.values(g)[g.index_of(T1):] == 0.0)


def test_piecewise_tempering_integral():
    a = Tempering.piecewise((0, 0.5, 0.75, 1), (2, 1, -1))
    g = TimeGrid.uniform(1.0, 16, a.nodes)
    assert a.integral(g, 0.75) == pytest.approx(1.25)
    assert a.integral(g, 1.0) == pytest.approx(1.0)


def test_tempering_validation():
    with pytest.raises(ValueError):
        Tempering((0.0, 1.0), (1.0, 2.0))
    with pytest.raises(ValueError):
        Tempering((0.1, 1.0), (1.0,))


# --- elliptic weights --------------------------------------------------------

@pytest.mark.parametrize("coords", ["spot", "log"])
def test_classical_formula_recovered_without_jumps(coords):
    m = GBM(coordinates=coords)
    w, p = paths_for(m, BelDelta(Tempering.constant(1.0)))
    WT = p.noise.dW.sum(axis=1)[:, 0]
    assert np.allclose(w.evaluate(p).value, WT / (m.s0 * m.sigma * 1.0), rtol=1e-12, atol=1e-15)


def test_generic_weight_matches_svj_formula():
    for m, fam in ((make_svj(SvjParams(**SV_PARAMS)), "SVJ_delta"),
                   (make_svjj(SvjParams(gamma=0.4, **SV_PARAMS)), "SVJJ_delta")):
        w, p = paths_for(m, BelDelta(), dates=(0.5, 1.0))
        sv = SvjDelta(double_jump=fam == "SVJJ_delta").prepare((0.5, 1.0), 1.0).evaluate(p)
        assert sv.family == fam
        assert np.allclose(w.evaluate(p).value, sv.value, rtol=1e-10, atol=1e-12)


def test_svj_delta_uses_only_first_window():
    m = make_svj(SvjParams(**SV_PARAMS))
    w, p = paths_for(m, SvjDelta(), dates=(0.5, 1.0))
    assert w.until == 0.5
    nz = p.noise
    k = p.grid.index_of(0.5)
    dW = nz.dW.copy()
    dW[:, k:] *= -3.0
    late = NoiseBundle(nz.grid, dW, nz.jumps, nz.jump_interval, nz.jump_rank, nz.jump_dW, nz.seed, nz.stream)
    q = simulate_path(m, p.grid, late, 0, w.accumulators(m))
    assert np.array_equal(w.evaluate(p).value, w.evaluate(q).value)


def test_log_gbm_gamma_has_only_product_term():
    m = GBM(coordinates="log")
    w, p = paths_for(m, BelGamma(coordinates=(0, 0)))
    from belgreeks.weights import BelGammaAccumulator
    g = p.integrals[BelGammaAccumulator(1.0).key]
    assert np.all(g["grad_R"] == 0) and np.all(g["second_variation"] == 0)


def test_gbm_call_gamma_matches_closed_form():
    m = GBM()
    res = run_estimator(WeightedGreek(m, european_call(100.0), "BEL_gamma"), 200_000, 32, seed=4)
    assert res.agrees_with(float(bs_gamma(100, 100, 0.2, 0, 1)), k=3)


def test_svj_gamma_matches_fourier():
    params = SvjParams(**SV_PARAMS)
    m = make_svj(params)
    res = run_estimator(WeightedGreek(m, european_call(100.0), SvjGamma()), 200_000, 64, seed=5)
    ref = fourier_european_price_delta(params, 100.0, 1.0).gamma
    assert res.agrees_with(ref.value, k=3, extra=ref.accuracy)


def test_weighted_delta_agrees_with_pathwise_on_smooth_payoff():
    m = GBM()
    f = gaussian_bump(105.0, 10.0)
    a = run_estimator(WeightedGreek(m, f, "BEL_delta"), 100_000, 32, seed=2)
    b = run_estimator(PathwiseGreek(m, f), 100_000, 32, seed=2)
    assert combined_ok(a, b)


@pytest.mark.parametrize("build,family", [
    (lambda: GBM(), "BEL_delta"),
    (lambda: GBM(coordinates="log"), "BEL_gamma"),
    (lambda: make_svj(SvjParams(**SV_PARAMS)), "SVJ_delta"),
    (lambda: make_svj(SvjParams(**SV_PARAMS)), "SVJ_gamma"),
    (lambda: make_svjj(SvjParams(gamma=0.4, **SV_PARAMS)), "SVJJ_delta"),
    (lambda: make_bachelier_jump_asian(1.0, 1.0), "hypoelliptic"),
    (lambda: make_exp_levy_asian(0.0, 0.2, LogNormalReturnMarks(-0.1, 0.1)), "hypoelliptic"),
])
def test_weights_have_mean_zero(build, family):
    m = build()
    w, p = paths_for(m, make_weight(family), n_steps=32, n_paths=20_000, seed=12)
    pi = w.evaluate(p).value
    assert abs(pi.mean()) <= 4 * pi.std(ddof=1) / np.sqrt(pi.size)


# --- hypoelliptic weights ----------------------------------------------------

def test_bachelier_weight_matches_closed_form_under_refinement():
    m = make_bachelier_jump_asian(1.0, 1.0)
    steps = [64, 128, 256, 512]
    gaps = []
    for n in steps:
        w, p = paths_for(m, HypoellipticWeight(), n_steps=n, n_paths=2000, seed=3)
        gaps.append(np.abs(w.evaluate(p).value - bachelier_asian_weight_oracle(p)).max())
    slope = np.polyfit(np.log(1.0 / np.array(steps)), np.log(gaps), 1)[0]
    assert slope >= 0.9


def test_bachelier_oracle_zero_noise():
    m = make_bachelier_jump_asian(1.0, 1.0)
    w, p = paths_for(m, HypoellipticWeight(), n_steps=8, n_paths=3)
    nz = p.noise
    quiet = NoiseBundle(nz.grid, np.zeros_like(nz.dW), nz.jumps, nz.jump_interval, nz.jump_rank, nz.jump_dW,
                        nz.seed, nz.stream)
    q = simulate_path(m, p.grid, quiet, 1)
    assert np.all(bachelier_asian_weight_oracle(q) == 0)


def test_exp_levy_closed_form_matches_generic_assembly():
    m = make_exp_levy_asian(0.0, 0.2, LogNormalReturnMarks(-0.1, 0.1))
    w, p = paths_for(m, HypoellipticWeight(), n_steps=64, n_paths=2000, seed=6)
    closed = ExpLevyAsianClosedForm().prepare((1.0,), 1.0).evaluate(p)
    assert np.allclose(w.evaluate(p).value, closed.value, rtol=1e-9, atol=1e-12)


def test_exp_levy_first_term_formula():
    m = make_exp_levy_asian(0.0, 0.2, LogNormalReturnMarks(-0.1, 0.1))
    w, p = paths_for(m, HypoellipticWeight(), n_steps=64, n_paths=500, seed=7)
    aux = p.integrals["h_derivative"]
    B, P = aux["int_A"], aux["int_A2"]
    pi1 = (aux["W_T"] * P - aux["int_A_dW"] * B) / (m.sigma * m.s0 * (P - B * B))
    C = p.integrals["malliavin"]["C"]
    I = p.integrals["malliavin"]["stochastic_integral"]
    generic_first = np.einsum("pa,pa->p", I, np.linalg.solve(C, np.eye(2)[None].repeat(500, 0))[:, :, 0])
    assert np.allclose(generic_first, pi1, rtol=1e-8)
    assert np.allclose(np.linalg.det(C), m.sigma**4 * m.s0**2 * (P - B * B), rtol=1e-8)
    assert np.all(P - B * B >= 0)


def test_degenerate_paths_rejected_and_counted():
    m = make_exp_levy_asian(0.0, 0.2, None)
    w, p = paths_for(m, HypoellipticWeight(tolerance=1.0), n_steps=16, n_paths=50)
    pi = w.evaluate(p)
    assert pi.rejected_count == 50
    assert np.all(pi.value == 0)
    from belgreeks.payoffs import asian_fixed_strike
    est = WeightedGreek(m, asian_fixed_strike(100.0), HypoellipticWeight(tolerance=1.0))
    with pytest.raises(RejectedPathsError):
        run_estimator(est, 100, 16)


# --- interfaces --------------------------------------------------------------

def test_non_finite_weight_rejected():
    with pytest.raises(FloatingPointError):
        MalliavinWeight(np.array([1.0, np.nan]), "BEL_delta", ("spot",))
    MalliavinWeight(np.array([1.0, np.nan]), "hypoelliptic", ("spot",), np.array([False, True]))


def test_functional_interface_checks_family():
    m = GBM()
    w, p = paths_for(m, BelDelta())
    assert np.allclose(bel_delta_weight(p, m, Tempering.minimal(1.0), 0).value * m.spot_jacobian()[0],
                       w.evaluate(p).value)
    g = bel_gamma_weight(simulate_path(m, p.grid, p.noise, 2), m, 0, 0)
    assert g.target == (0, 0)
    with pytest.raises(ValueError):
        hypoelliptic_weight(p, m, 0)
    with pytest.raises(ValueError):
        svj_delta_weight(p)
    sv = make_svj(SvjParams(**SV_PARAMS))
    _, q = paths_for(sv, SvjDelta())
    with pytest.raises(ValueError):
        svjj_delta_weight(q)


def test_weights_require_prepare():
    m = GBM()
    _, p = paths_for(m, BelDelta())
    with pytest.raises(ValueError):
        BelDelta().evaluate(p)
    with pytest.raises(ValueError):
        BelGamma().evaluate(p)


def test_unknown_family():
    with pytest.raises(ValueError):
        make_weight("vega")
