from dataclasses import replace

import numpy as np
import pytest

from hybrid_attitude.checks import numerical_fim
from hybrid_attitude.exceptions import (
    ConfigurationError,
    ParameterizationSingularityError,
    SingularFIMError,
)
from hybrid_attitude.fiveg_model import (
    SPEED_OF_LIGHT,
    BsLayout,
    RadioConfig,
    aoa_covariance,
    aoa_fim,
    aoa_weight,
    angles_from_direction,
    bs_layout,
    channel_gain,
    commutation_matrix,
    direction_from_angles,
    direction_jacobian,
    fiveg_observations,
    los_unit_vectors,
    noise_power,
    simulate_aoa,
    steering_response,
    upa_geometry,
)
from hybrid_attitude.frames import random_rotation, vec

CFG = RadioConfig()


def unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def test_layout_preset():
    assert np.array_equal(bs_layout(np.zeros(3), 1).positions[0], [10, 10, 10])
    assert np.array_equal(bs_layout(np.zeros(3), 4).positions[3], [-5, -10, 15])
    lay = bs_layout(np.zeros(3), 8)
    assert np.array_equal(lay.positions[6], [0, 15, 10])
    assert np.linalg.norm(lay.positions[6]) == pytest.approx(np.sqrt(325))
    assert np.allclose(bs_layout([1, 2, 3], 2).positions[1], [-9, -8, 13])


def test_layout_errors():
    with pytest.raises(ConfigurationError):
        bs_layout(np.zeros(3), 9)
    with pytest.raises(ConfigurationError):
        bs_layout(np.zeros(3), 0)
    with pytest.raises(ConfigurationError):
        bs_layout(np.zeros(3), 1, offsets=[[0, 0, 0]])
    lay = bs_layout(np.zeros(3), 1, offsets=[[10, 0, 0]])
    assert np.allclose(los_unit_vectors(lay)[:, 0], [1, 0, 0])


def test_upa_geometry():
    one = upa_geometry(replace(CFG, array_rows=1, array_cols=1))
    assert np.array_equal(one.element_positions, np.zeros((1, 3)))
    arr = upa_geometry(CFG)
    assert arr.element_positions.shape == (25, 3)
    d = np.diff(np.unique(arr.element_positions[:, 0]))
    assert np.allclose(d, SPEED_OF_LIGHT / (2 * 28e9))
    assert d[0] == pytest.approx(0.005353, abs=5e-7)
    assert np.abs(arr.element_positions.mean(axis=0)).max() < 1e-15
    assert not arr.element_positions[:, 2].any()


def test_los_unit_vectors():
    E = los_unit_vectors(bs_layout(np.zeros(3), 8))
    assert np.allclose(E[:, 0], np.ones(3) / np.sqrt(3))
    assert np.abs(np.linalg.norm(E, axis=0) - 1).max() < 1e-12
    with pytest.raises(ZeroDivisionError):
        los_unit_vectors(BsLayout(np.zeros((1, 3)), np.zeros(3)))


def test_steering_response():
    one = upa_geometry(replace(CFG, array_rows=1, array_cols=1))
    assert np.allclose(steering_response(one, [1, 0, 0], 0.3 + 0.1j, 28e9), [0.3 + 0.1j])
    arr = upa_geometry(CFG)
    assert np.allclose(steering_response(arr, [0, 0, 1], 1.0, 28e9), 1.0)
    t = unit([0.3, -0.5, 0.8])
    h = steering_response(arr, t, 1.0, 28e9)
    assert np.allclose(steering_response(arr, -t, 1.0, 28e9), np.conj(h))
    assert np.allclose(np.abs(steering_response(arr, t, 2 - 1j, 28e9)), np.sqrt(5))


def test_channel_gain():
    lam = SPEED_OF_LIGHT / 28e9
    assert abs(channel_gain(lam / (4 * np.pi), 28e9, 0)) == pytest.approx(1.0, rel=1e-14)
    g = channel_gain(17.32, 28e9, 0)
    assert abs(g) == pytest.approx(4.919e-5, rel=1e-3)
    assert abs(g) == pytest.approx(lam / (4 * np.pi * 17.32), rel=1e-14)
    assert channel_gain(10.0, 28e9, 5) == channel_gain(10.0, 28e9, 5)
    with pytest.raises(ValueError):
        channel_gain(0.0, 28e9, 0)


def test_noise_power():
    assert noise_power(replace(CFG, bandwidth_hz=1.0)) == pytest.approx(3.981e-21, rel=1e-4)
    p = noise_power(CFG)
    assert p == pytest.approx(1.194e-12, rel=1e-3)
    assert 10 * np.log10(p) + 30 == pytest.approx(-89.2, abs=0.05)
    assert noise_power(replace(CFG, noise_psd_dbm_hz=-np.inf)) == 0.0


def test_direction_parameterization():
    az, el = 0.7, -0.4
    t = direction_from_angles(az, el)
    assert np.allclose(angles_from_direction(t), (az, el))
    J = direction_jacobian(az, el)
    h = 1e-7
    num = np.column_stack([
        (direction_from_angles(az + h, el) - direction_from_angles(az - h, el)) / (2 * h),
        (direction_from_angles(az, el + h) - direction_from_angles(az, el - h)) / (2 * h),
    ])
    assert np.allclose(J, num, atol=1e-8)


def test_fim_linear_in_T_and_power():
    arr = upa_geometry(CFG)
    t, g = unit([0.4, 0.2, 0.5]), channel_gain(15.0, 28e9, 1)
    base = aoa_fim(arr, t, g, CFG)
    assert np.allclose(aoa_fim(arr, t, g, replace(CFG, n_transmissions=256)), 2 * base, rtol=1e-12)
    assert np.allclose(aoa_fim(arr, t, g, replace(CFG, tx_power_dbm=27.0)), 10 * base, rtol=1e-12)
    assert np.all(np.linalg.eigvalsh(base) > 0)


def test_fim_finite_difference():
    arr = upa_geometry(CFG)
    rng = np.random.default_rng(2)
    for _ in range(5):
        t = unit(rng.normal(size=3))
        g = channel_gain(rng.uniform(10, 30), 28e9, rng)
        a, b = aoa_fim(arr, t, g, CFG), numerical_fim(arr, t, g, CFG)
        assert np.abs(a - b).max() / np.abs(a).max() < 1e-4


def test_fim_errors():
    arr = upa_geometry(CFG)
    with pytest.raises(ParameterizationSingularityError):
        aoa_fim(arr, [0, 0, 1], 1e-5, CFG)
    with pytest.raises(SingularFIMError):
        aoa_fim(arr, unit([1, 1, 1]), 0.0, CFG)


def test_covariance_isotropic():
    # t = [1, 0, 0] sits at az = el = 0, where the Jacobian columns are orthonormal
    Q = aoa_covariance(4.0 * np.eye(2), np.array([1.0, 0, 0]))
    assert np.allclose(np.linalg.eigvalsh(Q), [0, 0.25, 0.25], atol=1e-15)


def test_covariance_shrinks_with_T():
    arr = upa_geometry(CFG)
    t, g = unit([0.4, 0.2, 0.5]), channel_gain(15.0, 28e9, 1)
    traces = [np.trace(aoa_covariance(aoa_fim(arr, t, g, replace(CFG, n_transmissions=T)), t))
              for T in (16, 64, 256)]
    assert traces[0] > traces[1] > traces[2]


def test_covariance_and_weight_pinv():
    rng = np.random.default_rng(3)
    for _ in range(10):
        t = unit(rng.normal(size=3))
        A = rng.normal(size=(2, 2))
        efim = A @ A.T + 0.1 * np.eye(2)
        Q, W = aoa_covariance(efim, t), aoa_weight(efim, t)
        assert np.allclose(Q, Q.T) and np.linalg.eigvalsh(Q).min() > -1e-12
        assert np.abs(Q @ t).max() < 1e-10
        assert np.linalg.matrix_rank(Q, tol=1e-9 * np.abs(Q).max()) == 2
        s = np.abs(Q).max() * np.abs(W).max()
        assert np.abs(Q @ W @ Q - Q).max() < 1e-8 * np.abs(Q).max() * s
        assert np.abs(W @ Q @ W - W).max() < 1e-8 * np.abs(W).max() * s
        assert np.allclose(Q @ W, (Q @ W).T, atol=1e-8)
        assert np.allclose(W @ Q, (W @ Q).T, atol=1e-8)
        assert np.allclose(W, np.linalg.pinv(Q), rtol=1e-6, atol=1e-8 * np.abs(W).max())


def _E(L):
    return los_unit_vectors(bs_layout(np.zeros(3), L))


def test_simulate_aoa_noise_free():
    R = random_rotation(np.random.default_rng(4))
    E = _E(3)
    aoa = simulate_aoa(E, R, [np.eye(2)] * 3, rng=0, noise_scale=0.0)
    assert np.array_equal(aoa.D, R.T @ E)
    assert aoa.Q_D.shape == (9, 9)
    for ell in range(3):
        blk = aoa.Q_D[3 * ell:3 * ell + 3, 3 * ell:3 * ell + 3]
        assert np.abs(blk @ aoa.D[:, ell]).max() < 1e-10
    off = aoa.Q_D.copy()
    for ell in range(3):
        off[3 * ell:3 * ell + 3, 3 * ell:3 * ell + 3] = 0
    assert not off.any()


def test_simulate_aoa_unit_columns_and_covariance():
    R = random_rotation(np.random.default_rng(5))
    E = _E(1)
    efim = np.array([[4e6, 1e6], [1e6, 2e6]])
    rng = np.random.default_rng(6)
    draws = np.array([simulate_aoa(E, R, [efim], rng).D[:, 0] for _ in range(10000)])
    assert np.abs(np.linalg.norm(draws, axis=1) - 1).max() < 1e-12
    t = R.T @ E[:, 0]
    C = np.cov((draws - t).T)
    Q = aoa_covariance(efim, t)
    wq, V = np.linalg.eigh(Q)
    for k in (1, 2):
        v = V[:, k]
        assert abs(v @ C @ v / wq[k] - 1) < 0.15


def test_fiveg_observations_deterministic():
    R = random_rotation(np.random.default_rng(7))
    lay = bs_layout(np.zeros(3), 3)
    a, ea = fiveg_observations(lay, R, CFG, 1, 2)
    b, eb = fiveg_observations(lay, R, CFG, 1, 2)
    assert np.array_equal(a.D, b.D) and all(np.array_equal(x, y) for x, y in zip(ea, eb))
    assert a.n_bs == 3


def test_commutation_matrix():
    X = np.arange(12.0).reshape(3, 4)
    K = commutation_matrix(3, 4)
    assert np.array_equal(K @ vec(X), vec(X.T))
    assert np.array_equal(K.T @ K, np.eye(12))


def test_radio_validation():
    with pytest.raises(ConfigurationError):
        RadioConfig(n_transmissions=0)
    with pytest.raises(ConfigurationError):
        RadioConfig(carrier_hz=-1.0)
    assert RadioConfig(tx_power_dbm=30.0).tx_power_w == pytest.approx(1.0)
