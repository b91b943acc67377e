import numpy as np
import pytest
from hypothesis import given, strategies as st

from belgreeks.models import (GBM, CustomModel, ExpLevyAsian, Merton, NonFiniteStateError, SingularVariationError,
                              SvjParams, TruncationLevel, make_bachelier_jump_asian, make_exp_levy_asian, make_svj,
                              make_svjj, malliavin_covariance, right_inverse, simulate_path)
from belgreeks.models.base import right_inverse_jac
from belgreeks.models.svj import Truncations
from belgreeks.stochastic_core import (LogNormalReturnMarks, NoiseBundle, NormalMarks, PointMass, TimeGrid,
                                       make_noise)

from conftest import SV_PARAMS


def noise_for(model, n_steps=64, n_paths=200, seed=1, horizon=1.0, mandatory=(1.0,)):
    g = TimeGrid.uniform(horizon, n_steps, mandatory)
    return g, make_noise(g, model.brownian_dim, model.jump_intensity, model.mark_law, seed, 0, n_paths)


MODELS = {
    "gbm": lambda: GBM(),
    "gbm_log": lambda: GBM(coordinates="log"),
    "merton": lambda: Merton(),
    "merton_log": lambda: Merton(coordinates="log"),
    "svj_implicit": lambda: make_svj(SvjParams(**SV_PARAMS)),
    "svj_euler": lambda: make_svj(SvjParams(**SV_PARAMS), vol_scheme="euler"),
    "svjj": lambda: make_svjj(SvjParams(gamma=0.4, **SV_PARAMS)),
    "bachelier": lambda: make_bachelier_jump_asian(1.0, 2.0, s0=1.0),
    "exp_levy": lambda: make_exp_levy_asian(0.05, 0.2, LogNormalReturnMarks(-0.1, 0.1)),
}


# --- scheme basics -----------------------------------------------------------

def test_zero_coefficients_give_constant_path():
    m = CustomModel(z0=(1.5, -2.0), brownian=2)
    g, nz = noise_for(m, 16, 10)
    p = simulate_path(m, g, nz, 1, record=True)
    assert np.all(p.node_x == np.array([1.5, -2.0]))
    assert np.all(p.node_U == np.eye(2))


def test_gbm_strong_error_shrinks_like_sqrt_dt():
    m = GBM(sigma=0.4)
    errs = []
    steps = [32, 64, 128, 256, 512]
    for n in steps:
        g, nz = noise_for(m, n, 4000, seed=3)
        p = simulate_path(m, g, nz, 0)
        WT = nz.dW.sum(axis=1)[:, 0]
        exact = m.s0 * np.exp(-0.5 * m.sigma**2 + m.sigma * WT)
        errs.append(np.mean(np.abs(p.x_T[:, 0] - exact)))
    slope = np.polyfit(np.log(1.0 / np.array(steps)), np.log(errs), 1)[0]
    assert 0.4 <= slope <= 1.1


def test_bachelier_variation_is_exact():
    m = make_bachelier_jump_asian(1.0, 3.0)
    g, nz = noise_for(m, 32, 50)
    p = simulate_path(m, g, nz, 1, record=True)
    for i, t in enumerate(g.nodes):
        expected = np.array([[1.0, 0.0], [t, 1.0]])
        assert np.allclose(p.node_U[:, i], expected, rtol=0, atol=1e-13)


def test_bachelier_spot_is_brownian_motion():
    m = make_bachelier_jump_asian(1.0, 0.0)
    g, nz = noise_for(m, 32, 50)
    p = simulate_path(m, g, nz, 0)
    assert np.allclose(p.x_T[:, 0], nz.dW.sum(axis=1)[:, 0], rtol=0, atol=1e-13)


def test_bachelier_average_with_zero_noise():
    m = make_bachelier_jump_asian(1.0, 0.0, s0=2.5)
    g, nz = noise_for(m, 20, 3)
    quiet = NoiseBundle(g, np.zeros_like(nz.dW), nz.jumps, nz.jump_interval, nz.jump_rank, nz.jump_dW,
                        nz.seed, nz.stream)
    p = simulate_path(m, g, quiet, 0)
    assert np.allclose(p.x_T[:, 1], 2.5 * 1.0)


def test_bachelier_malliavin_covariance_closed_form():
    sigma, T = 0.7, 1.0
    m = make_bachelier_jump_asian(sigma, 1.0)
    g, nz = noise_for(m, 512, 20)
    C = malliavin_covariance(simulate_path(m, g, nz, 1, want_inverse=True))
    exact = sigma**2 * np.array([[T, -T**2 / 2], [-T**2 / 2, T**3 / 3]])
    assert np.allclose(C, exact, atol=2 / 512)


def test_exp_levy_covariance_entries():
    m = make_exp_levy_asian(0.0, 0.2, LogNormalReturnMarks(-0.1, 0.1))
    g, nz = noise_for(m, 64, 300)
    p = simulate_path(m, g, nz, 1, integrals=[m.h_derivative_accumulator()], want_inverse=True)
    C = malliavin_covariance(p)
    aux = p.integrals["h_derivative"]
    s2, s0 = m.sigma**2, m.s0
    assert np.allclose(C[:, 0, 0], s2 * s0**2 * 1.0, rtol=1e-10)
    assert np.allclose(C[:, 0, 1], -s2 * s0 * aux["int_A"], rtol=1e-9)
    assert np.allclose(C[:, 1, 1], s2 * aux["int_A2"], rtol=1e-9)


def test_exp_levy_det_positive():
    m = make_exp_levy_asian(0.0, 0.2, LogNormalReturnMarks(-0.1, 0.1))
    g, nz = noise_for(m, 32, 10**4)
    C = malliavin_covariance(simulate_path(m, g, nz, 1, want_inverse=True))
    assert np.all(np.linalg.det(C) > 0)


def test_gbm_covariance_positive():
    m = GBM()
    g, nz = noise_for(m, 32, 1000)
    C = malliavin_covariance(simulate_path(m, g, nz, 1, want_inverse=True))
    assert np.all(C > 0)


def test_covariance_needs_inverse():
    m = GBM()
    g, nz = noise_for(m, 8, 4)
    with pytest.raises(ValueError):
        malliavin_covariance(simulate_path(m, g, nz, 1))


def test_exp_levy_multiplicative_jump():
    m = ExpLevyAsian(sigma=0.2, intensity=2.0, marks=PointMass(-0.5))
    g, nz = noise_for(m, 16, 200)
    p = simulate_path(m, g, nz, 0, record=True)
    assert nz.jumps.times.size > 0
    assert np.allclose(p.jump_right[:, 0], 0.5 * p.jump_left[:, 0], rtol=1e-15)
    assert np.all(p.x_T[:, 0] > 0)


def test_exp_levy_rejects_marks_below_minus_one():
    with pytest.raises(ValueError):
        make_exp_levy_asian(0.0, 0.2, PointMass(-1.0))
    with pytest.raises(ValueError):
        make_exp_levy_asian(0.0, 0.2, NormalMarks(0.0, 0.1))


def test_left_limit_is_pre_jump_euler_state():
    m = Merton(intensity=5.0)
    g, nz = noise_for(m, 16, 400)
    p = simulate_path(m, g, nz, 0, record=True)
    first = nz.jump_rank == 0
    x0 = p.node_x[nz.jumps.path[first], nz.jump_interval[first], 0]
    dt = nz.jumps.times[first] - g.nodes[nz.jump_interval[first]]
    kbar = np.exp(m.jump_mean + 0.5 * m.jump_sd**2) - 1
    expected = x0 + (m.r - m.intensity * kbar) * x0 * dt + m.sigma * x0 * nz.jump_dW[first, 0]
    assert np.allclose(p.jump_left[first, 0], expected, rtol=1e-15, atol=0)
    assert np.allclose(p.jump_right[:, 0], p.jump_left[:, 0] * np.exp(nz.jumps.marks), rtol=1e-15)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_state_aborts_with_location():
    m = CustomModel(z0=(1.0,), drift_fn=lambda t, x: np.square(x) * x * 1e3, drift_jac_fn=lambda t, x: 3e3 * x[:, :, None]**2)
    g, nz = noise_for(m, 64, 4)
    with pytest.raises(NonFiniteStateError, match="grid node"):
        simulate_path(m, g, nz, 0)


def test_singular_variation_reported():
    # drift -x/dt on a 2-step grid kills the first variation after one step
    m = CustomModel(z0=(1.0,), drift_fn=lambda t, x: -2.0 * x, drift_jac_fn=lambda t, x: np.full(x.shape + (1,), -2.0),
                    diffusion_fn=lambda t, x: np.ones((x.shape[0], 1, 1)))
    g = TimeGrid.uniform(1.0, 2)
    nz = make_noise(g, 1, 0.0, None, 0, 0, 3)
    with pytest.raises(SingularVariationError, match="time 0.5"):
        simulate_path(m, g, nz, 1, want_inverse=True)


def test_mismatched_noise_rejected():
    m = GBM()
    g, nz = noise_for(m, 8, 4)
    with pytest.raises(ValueError):
        simulate_path(m, TimeGrid.uniform(1.0, 16), nz)
    with pytest.raises(ValueError):
        simulate_path(make_svj(SvjParams(**SV_PARAMS)), g, nz)


# --- variation processes -----------------------------------------------------

@pytest.mark.parametrize("name", sorted(MODELS))
def test_first_variation_matches_finite_difference(name):
    m = MODELS[name]()
    g, nz = noise_for(m, 64, 100, seed=5)
    z = m.initial_state()
    p = simulate_path(m, g, nz, 1)
    for k in range(m.dim):
        h = 1e-5 * max(abs(z[k]), 1.0)
        e = np.zeros(m.dim)
        e[k] = h
        up = simulate_path(m, g, nz, 0, initial_state=z + e).x_T
        dn = simulate_path(m, g, nz, 0, initial_state=z - e).x_T
        fd = (up - dn) / (2 * h)
        scale = np.abs(p.U_T[:, :, k]).max()
        assert np.abs(fd - p.U_T[:, :, k]).max() <= 1e-4 * scale


@pytest.mark.parametrize("name", ["gbm", "gbm_log", "merton", "svj_implicit", "svj_euler", "svjj"])
def test_second_variation_matches_finite_difference(name):
    m = MODELS[name]()
    g, nz = noise_for(m, 64, 100, seed=6)
    z = m.initial_state()
    p = simulate_path(m, g, nz, 2)
    for k in range(m.dim):
        h = 1e-5 * max(abs(z[k]), 1.0)
        e = np.zeros(m.dim)
        e[k] = h
        up = simulate_path(m, g, nz, 1, initial_state=z + e).U_T
        dn = simulate_path(m, g, nz, 1, initial_state=z - e).U_T
        fd = (up - dn) / (2 * h)
        scale = max(np.abs(p.U2_T[:, :, :, k]).max(), 1e-12)
        assert np.abs(fd - p.U2_T[:, :, :, k]).max() <= 1e-4 * max(scale, 1e-6)


# --- SVJ family --------------------------------------------------------------

def test_sv_parameters_valid_and_derived_exponents():
    p = SvjParams(**SV_PARAMS)
    assert p.delta == pytest.approx(4 * 4 * 0.08 / 0.36)
    assert p.xi > 0


def test_feller_and_correlation_enforced():
    with pytest.raises(ValueError, match="Feller"):
        SvjParams(kappa=1.0, theta=0.04, eta=0.6)
    with pytest.raises(ValueError):
        SvjParams(rho=1.0)
    with pytest.raises(ValueError):
        TruncationLevel(N=1)


@given(st.floats(-3.0, 3.0))
def test_truncated_coefficients_bounded_and_floor(x):
    tr = Truncations(1000.0, 1e-4, 0.3)
    p = float(tr.p(np.array([x]))[0])
    assert p >= 0.5 * 1e-4
    if x >= 1e-4:
        assert p == x
    if x <= 0:
        assert p == 1e-4
    if x >= 1e-3:
        assert float(tr.g(np.array([x]))[0]) == 0.3 / x
    assert np.isfinite(tr.g(np.array([x]))).all()


@pytest.mark.parametrize("fn", ["h", "g", "p"])
def test_truncations_are_c2(fn):
    tr = Truncations(10.0, 0.05, 0.3)
    f, d1, d2 = (getattr(tr, fn), getattr(tr, fn + "_d1"), getattr(tr, fn + "_d2"))
    xs = np.concatenate([np.linspace(-0.5, 0.5, 2001), np.linspace(9.0, 12.0, 2001)])
    h = 1e-6
    assert np.allclose((f(xs + h) - f(xs - h)) / (2 * h), d1(xs), atol=1e-3 * max(1, np.abs(d1(xs)).max()))
    assert np.allclose((d1(xs + h) - d1(xs - h)) / (2 * h), d2(xs), atol=1e-3 * max(1, np.abs(d2(xs)).max()))


def test_floor_default_and_coupled_choice():
    p = SvjParams(**SV_PARAMS)
    assert TruncationLevel().floor_value(p) == 1e-4
    assert TruncationLevel(N=1000, floor=None).floor_value(p) == pytest.approx(1000 ** (-p.xi))


@pytest.mark.parametrize("scheme", ["implicit", "euler"])
def test_truncated_and_raw_paths_identical_inside_band(scheme):
    m = make_svj(SvjParams(**SV_PARAMS), vol_scheme=scheme)
    raw = m.untruncated()
    g, nz = noise_for(m, 64, 2000, seed=9)
    a = simulate_path(m, g, nz, 2, record=True)
    b = simulate_path(raw, g, nz, 2, record=True)
    sig = a.node_x[:, :, 1]
    lo = max(m.floor, 1.0 / m.trunc.N)
    inside = np.all((sig >= lo) & (sig <= m.trunc.N), axis=1)
    assert inside.mean() > 0.9
    assert np.array_equal(a.node_x[inside], b.node_x[inside])
    assert np.array_equal(a.U2_T[inside], b.U2_T[inside])


def test_implicit_scheme_keeps_vol_positive():
    m = make_svj(SvjParams(**SV_PARAMS))
    g, nz = noise_for(m, 16, 5000, seed=2)
    p = simulate_path(m, g, nz, 0, record=True)
    assert np.all(p.node_x[:, :, 1] > 0)


def test_svjj_dominates_svj_under_shared_noise():
    a = make_svj(SvjParams(**SV_PARAMS))
    b = make_svjj(SvjParams(gamma=0.4, **SV_PARAMS))
    g, nz = noise_for(a, 64, 2000, seed=4)
    pa = simulate_path(a, g, nz, 0, record=True)
    pb = simulate_path(b, g, nz, 0, record=True)
    assert np.all(pb.node_x[:, :, 1] >= pa.node_x[:, :, 1])
    assert np.all(pb.jump_right[:, 1] >= pb.jump_left[:, 1])


def test_svjj_jump_map_arithmetic():
    m = make_svjj(SvjParams(gamma=0.4, **SV_PARAMS))
    y = m.jump(0.0, np.array([[4.6, 0.3]]), np.array([-0.05]))
    assert y[0, 0] == -0.05
    assert 0.3 + y[0, 1] == pytest.approx(0.7)


def test_svjj_with_zero_gamma_is_svj():
    a = make_svj(SvjParams(**SV_PARAMS))
    b = make_svjj(SvjParams(gamma=0.0, **SV_PARAMS))
    g, nz = noise_for(a, 32, 300, seed=8)
    assert np.array_equal(simulate_path(a, g, nz, 1).x_T, simulate_path(b, g, nz, 1).x_T)


def test_svj_rejects_variance_jumps():
    from belgreeks.models import SvjModel
    with pytest.raises(ValueError):
        SvjModel(SvjParams(gamma=0.4, **SV_PARAMS))


def test_ellipticity_bound_along_paths():
    m = make_svj(SvjParams(**SV_PARAMS), vol_scheme="euler")
    g, nz = noise_for(m, 64, 500, seed=3)
    p = simulate_path(m, g, nz, 1, record=True)
    eps = m.epsilon
    assert eps > 0
    x = p.node_x.reshape(-1, 2)
    U = p.node_U.reshape(-1, 2, 2)
    RU = right_inverse(m.diffusion(0.0, x)) @ U
    lhs = np.sum(RU**2, axis=1)
    rhs = np.sum(U**2, axis=1) / eps
    assert np.all(lhs <= rhs * (1 + 1e-12))


def test_model_declares_families():
    assert "SVJ_delta" in MODELS["svj_implicit"]().families
    assert "SVJJ_delta" in MODELS["svjj"]().families
    assert MODELS["bachelier"]().families == frozenset({"hypoelliptic"})
    assert MODELS["bachelier"]().epsilon == 0.0
    with pytest.raises(ValueError):
        GBM().check_family("hypoelliptic")


def test_vol_scheme_validated():
    with pytest.raises(ValueError):
        make_svj(SvjParams(**SV_PARAMS), vol_scheme="milstein")


# --- right inverse -----------------------------------------------------------

@given(st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_right_inverse_is_right_inverse(vals):
    X = np.array(vals).reshape(1, 2, 3)
    if np.linalg.matrix_rank(X[0]) < 2 or np.linalg.cond(X[0] @ X[0].T) > 1e8:
        return
    R = right_inverse(X)
    assert np.allclose(X @ R, np.eye(2), atol=1e-8)


def test_right_inverse_jacobian_matches_finite_difference():
    rng = np.random.default_rng(0)
    for d, m in ((2, 2), (2, 3)):
        X = rng.normal(size=(1, d, m))
        dX = rng.normal(size=(1, d, m, d))
        R = right_inverse(X)
        dR = right_inverse_jac(X, dX, R)
        for c in range(d):
            h = 1e-6
            fd = (right_inverse(X + h * dX[..., c]) - right_inverse(X - h * dX[..., c])) / (2 * h)
            assert np.allclose(fd, dR[..., c], atol=1e-6)
