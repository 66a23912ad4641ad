import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from fddmimo.channel import (ArrayConfig, PathLossModel, ScenarioConfig,
                             UserGeometry, array_response, attenuation_from_db,
                             hexagon_contains, path_gain, path_gains,
                             path_loss_db, sample_geometry, steering_matrix,
                             synthesize_pair, wavelength)
from fddmimo.reconstruction import eta

from conftest import F_DL, F_UL, random_geometry

angles = st.floats(-np.pi / 2 + 1e-3, np.pi / 2 - 1e-3)


# -- array response --------------------------------------------------------------

def test_broadside_is_all_ones():
    cfg = ArrayConfig(4, 0.03, 0.025)
    assert np.array_equal(array_response(0.0, 0.03, cfg), np.ones(4))


def test_single_element():
    cfg = ArrayConfig(1, 0.03, 0.025)
    assert np.array_equal(array_response(0.7, 0.03, cfg), [1.0])


def test_thirty_degrees_half_wavelength():
    cfg = ArrayConfig(3, 1.0, 1.0, d=0.5)
    assert np.allclose(array_response(np.pi / 6, 1.0, cfg), [1, -1j, -1], atol=1e-12)


def test_steering_matrix_columns():
    cfg = ArrayConfig(8, 0.03, 0.025)
    th = np.array([-0.3, 0.1, 0.9])
    A = steering_matrix(th, cfg.lambda_dl, cfg)
    for i, t in enumerate(th):
        assert np.array_equal(A[:, i], array_response(t, cfg.lambda_dl, cfg))


@given(angles, st.integers(1, 300), st.sampled_from([0.03, 0.025, 0.1]))
def test_steering_unit_modulus_and_norm(theta, N, lam):
    cfg = ArrayConfig(N, 0.03, 0.025)
    a = array_response(theta, lam, cfg)
    assert a[0] == 1
    assert np.allclose(np.abs(a), 1.0, atol=1e-12)
    assert abs(np.vdot(a, a).real - N) < 1e-9 * N


@given(st.floats(-60, 60), st.floats(5, 120))
def test_gram_asymptotic_orthogonality(t1, sep):
    t2 = t1 + sep if t1 + sep <= 60 else t1 - sep
    if abs(t2) > 60:
        return
    cfg = ArrayConfig.from_frequencies(256, F_UL, F_DL)
    A = steering_matrix(np.deg2rad([t1, t2]), cfg.lambda_ul, cfg)
    G = A.conj().T @ A / 256
    assert abs(G[0, 1]) <= 0.1


# -- path gains --------------------------------------------------------------------

def test_path_gain_examples():
    lam = 0.03
    assert path_gain(0.0, 12.3, 1.0, lam) == 0
    assert np.isclose(path_gain(0.7, lam, 0.0, lam), 0.7, atol=1e-12)
    assert np.isclose(path_gain(1.0, lam / 4, np.pi / 2, lam), 1.0, atol=1e-12)


@given(st.floats(0, 10), st.floats(1, 500), st.floats(0, 2 * np.pi))
def test_path_gain_modulus(b, r, phi):
    assert np.isclose(abs(path_gain(b, r, phi, 0.03)), b, rtol=1e-12, atol=1e-300)


def test_phase_models_agree_on_ul_modulus(rng):
    geo = random_geometry(rng, 4)
    cfg = ArrayConfig.from_frequencies(8, F_UL, F_DL)
    for model in ('propagation', 'principal', 'exact'):
        g_ul, g_dl = path_gains(geo, cfg, model)
        assert np.allclose(np.abs(g_ul), geo.b) and np.allclose(np.abs(g_dl), geo.b)
    with pytest.raises(ValueError):
        path_gains(geo, cfg, 'bogus')


def test_propagation_model_correlation_is_eta():
    # E[g_dl conj(g_ul)] = eta b^2 when the UL phase is uniform
    rng = np.random.default_rng(7)
    cfg = ArrayConfig.from_frequencies(4, F_UL, F_DL)
    n = 20000
    geo = UserGeometry(np.zeros(n) + 0.1, np.ones(n), rng.uniform(50, 300, n),
                       rng.uniform(0, 2 * np.pi, n))
    g_ul, g_dl = path_gains(geo, cfg, 'propagation')
    est = np.mean(g_dl * g_ul.conj())
    assert abs(est - eta(cfg.kappa)) < 4 / np.sqrt(n)


# -- synthesis ---------------------------------------------------------------------

def test_equal_wavelengths_bit_identical(rng):
    geo = random_geometry(rng, 3)
    cfg = ArrayConfig(16, 0.03, 0.03)
    for model in ('propagation', 'principal', 'exact'):
        pair = synthesize_pair(geo, cfg, model)
        assert np.array_equal(pair.h_ul, pair.h_dl)


def test_single_unit_path_unit_modulus(rng):
    geo = UserGeometry([0.4], [1.0], [123.4], [2.0])
    pair = synthesize_pair(geo, ArrayConfig.from_frequencies(16, F_UL, F_DL))
    assert np.allclose(np.abs(pair.h_ul), 1) and np.allclose(np.abs(pair.h_dl), 1)


def test_synthesis_matches_straight_sum(rng):
    geo = random_geometry(rng, 3)
    cfg = ArrayConfig.from_frequencies(12, F_UL, F_DL)
    pair = synthesize_pair(geo, cfg)
    g_ul, g_dl = path_gains(geo, cfg)
    for h, g, lam in ((pair.h_ul, g_ul, cfg.lambda_ul), (pair.h_dl, g_dl, cfg.lambda_dl)):
        ref = np.zeros(cfg.N, complex)
        for ell in range(geo.L):
            for n in range(cfg.N):
                ref[n] += g[ell] * np.exp(-2j * np.pi / lam * n * cfg.d * np.sin(geo.theta[ell]))
        assert np.allclose(h, ref, atol=1e-12)


# -- geometry type ---------------------------------------------------------------------

def test_geometry_canonical_order_and_readonly():
    geo = UserGeometry([0.2, -0.1, 0.3], [1.0, 2.0, 1.0], [10, 20, 30], [0, 1, 2])
    assert np.array_equal(geo.b, [2.0, 1.0, 1.0])
    assert np.array_equal(geo.theta, [-0.1, 0.2, 0.3])      # tie broken by angle
    assert np.array_equal(geo.r, [20, 10, 30])
    with pytest.raises(ValueError):
        geo.b[0] = 5.0
    assert np.allclose(geo.sigma, np.diag(geo.b ** 2))
    assert geo.replace(b=[1, 1, 1]).L == 3


@pytest.mark.parametrize('kw', [dict(theta=[1.6]), dict(b=[-1.0]), dict(r=[0.0]),
                                dict(theta=[0.1, 0.2])])
def test_geometry_validation(kw):
    base = dict(theta=[0.1], b=[1.0], r=[10.0], phi=[0.0])
    base.update(kw)
    with pytest.raises(ValueError):
        UserGeometry(**base)


def test_array_config_defaults_and_validation():
    cfg = ArrayConfig.from_frequencies(8, F_UL, F_DL)
    assert np.isclose(cfg.d, wavelength(F_UL) / 2)
    assert np.isclose(cfg.kappa, 1.2)
    assert cfg.with_N(4).N == 4 and cfg.with_N(4).d == cfg.d
    with pytest.raises(ValueError):
        ArrayConfig(0, 0.03, 0.03)
    with pytest.raises(ValueError):
        ArrayConfig(4, -0.03, 0.03)


# -- path loss -------------------------------------------------------------------------

def test_path_loss_reference_distance():
    m = PathLossModel()
    assert np.isclose(path_loss_db(1.0, 0.03, m), 20 * np.log10(4 * np.pi / 0.03))


def test_path_loss_decade_step():
    m = PathLossModel(r0=2.0, m=3.5)
    step = path_loss_db(20.0, 0.03, m) - path_loss_db(2.0, 0.03, m)
    assert np.isclose(step, 35.0)


def test_path_loss_ten_ghz_example():
    pl = path_loss_db(250.0, 0.03, PathLossModel(r0=1.0, m=3.0))
    assert abs(pl - 124.4) < 0.05
    assert np.isclose(pl, 20 * np.log10(4 * np.pi / 0.03) + 30 * np.log10(250))


def test_path_loss_clamps_below_reference():
    m = PathLossModel(r0=5.0)
    with pytest.warns(RuntimeWarning):
        pl = path_loss_db(1.0, 0.03, m)
    assert np.isclose(pl, path_loss_db(5.0, 0.03, m))


def test_attenuation_conventions():
    pl = np.array([60.0, 100.0])
    literal = attenuation_from_db(pl, PathLossModel(attenuation='literal'))
    power = attenuation_from_db(pl, PathLossModel())
    assert np.allclose(-10 * np.log10(literal), pl)
    assert np.allclose(-10 * np.log10(power ** 2), pl)
    with pytest.raises(ValueError):
        PathLossModel(attenuation='volts')


# -- sampling ----------------------------------------------------------------------------

def test_sample_geometry_deterministic():
    sc = ScenarioConfig()
    a, b = sample_geometry(42, sc), sample_geometry(42, sc)
    for name in ('theta', 'b', 'r', 'phi'):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_sample_geometry_rejects_zero_paths():
    with pytest.raises(ValueError):
        sample_geometry(0, ScenarioConfig(), L=0)


def test_sample_geometry_phase_uniform():
    sc = ScenarioConfig(L=1)
    rng = np.random.default_rng(0)
    phi = np.array([sample_geometry(rng, sc).phi[0] for _ in range(10000)])
    assert stats.kstest(phi / (2 * np.pi), 'uniform').pvalue > 0.01


def test_sample_geometry_inside_cell():
    sc = ScenarioConfig(isd=500.0)
    dh = sc.bs_height - sc.ue_height
    rng = np.random.default_rng(1)
    for _ in range(500):
        geo = sample_geometry(rng, sc)
        horizontal = np.sqrt(geo.distance ** 2 - dh ** 2)
        assert sc.min_distance - 1e-9 <= horizontal <= 500 / np.sqrt(3) + 1e-9
        assert np.all(geo.r >= geo.distance)
        assert np.all(geo.r <= geo.distance + sc.excess_distance_max)
        assert np.all(np.abs(geo.theta) < np.pi / 2)


def test_sample_geometry_attenuation_matches_path_loss():
    # without shadowing, b is the inverted path loss of each path distance
    sc = ScenarioConfig(path_loss=PathLossModel(shadow_sigma=0.0))
    geo = sample_geometry(5, sc)
    pl = path_loss_db(geo.r, wavelength(sc.f_ul_hz), sc.path_loss)
    assert np.allclose(-20 * np.log10(geo.b), pl)


def test_hexagon_contains():
    R = 100.0
    assert hexagon_contains(0.0, 0.0, R)
    assert hexagon_contains(R - 1e-9, 0.0, R)
    assert not hexagon_contains(0.0, R, R)            # beyond the apothem
    assert hexagon_contains(0.0, R * np.sqrt(3) / 2 - 1e-9, R)
