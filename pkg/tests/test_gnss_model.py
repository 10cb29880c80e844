import numpy as np
import pytest

from hybrid_attitude.exceptions import GeometrySynthesisError
from hybrid_attitude.frames import random_rotation
from hybrid_attitude.gnss_model import (
    GnssNoiseModel,
    build_design,
    dd_geometry,
    sample_ambiguities,
    simulate_epoch,
    synth_constellation,
)


def test_zenith_satellite():
    geo = [(0, 90), (0, 30), (90, 30), (180, 30), (270, 30)]
    c = synth_constellation(5, geometry=geo)
    assert np.allclose(c.los[0], [0, 0, 1], atol=1e-15)
    assert c.pivot_index == 0


def test_seeded_constellation():
    a, b = synth_constellation(5, rng=3), synth_constellation(5, rng=3)
    assert np.array_equal(a.los, b.los)
    assert np.abs(np.linalg.norm(a.los, axis=1) - 1).max() < 1e-12
    for i in range(5):
        for j in range(i + 1, 5):
            ang = np.degrees(np.arccos(np.clip(a.los[i] @ a.los[j], -1, 1)))
            assert ang >= 10.0
    assert np.all((a.elevation_deg >= 15) & (a.elevation_deg <= 75))


def test_constellation_errors():
    with pytest.raises(ValueError):
        synth_constellation(2, rng=0)
    with pytest.raises(ValueError):
        synth_constellation(3, geometry=[(0, 10), (0, 0), (0, 20)])
    with pytest.raises(GeometrySynthesisError):
        synth_constellation(8, rng=0, min_separation_deg=80.0, max_attempts=5)


def test_design_blocks():
    c = synth_constellation(5, rng=1)
    noise = GnssNoiseModel(sigma_phase=0.001)
    d = build_design(c, noise, 3)
    assert np.allclose(d.P_M, [[1, .5, .5], [.5, 1, .5], [.5, .5, 1]])
    N = 4
    top = d.sigma_eps[:N, :N]
    assert np.allclose(top, 0.1 ** 2 * 2 * (np.eye(N) + np.ones((N, N))))
    assert np.allclose(np.linalg.eigvalsh(top), [0.02, 0.02, 0.02, 0.1])
    assert np.allclose(d.sigma_eps[N:, N:], 0.001 ** 2 * 2 * (np.eye(N) + np.ones((N, N))))
    assert np.allclose(d.A, np.vstack([np.zeros((N, N)), noise.wavelength * np.eye(N)]))
    G0 = dd_geometry(c)
    others = [j for j in range(5) if j != c.pivot_index]
    assert np.allclose(G0, c.los[c.pivot_index] - c.los[others])
    assert np.allclose(d.G, np.vstack([G0, G0]))
    assert np.allclose(d.Q_Y, np.kron(d.P_M, d.sigma_eps))
    assert np.linalg.eigvalsh(d.Q_Y).min() > 0


def test_design_single_baseline():
    d = build_design(synth_constellation(5, rng=1), GnssNoiseModel(), 1)
    assert np.array_equal(d.P_M, [[1.0]])
    assert np.allclose(d.Q_Y, d.sigma_eps)


def test_design_rank():
    d = build_design(synth_constellation(6, rng=2), GnssNoiseModel(), 1)
    assert np.linalg.matrix_rank(np.hstack([d.A, d.G])) == d.n_amb + 3


def test_diagonal_cofactor():
    d = build_design(synth_constellation(5, rng=1), GnssNoiseModel(dd_correlation="diagonal"), 1)
    assert np.allclose(d.sigma_eps[4:, 4:], 2e-6 * np.eye(4))


def test_noise_model_validation():
    with pytest.raises(ValueError):
        GnssNoiseModel(sigma_phase=0.0)
    with pytest.raises(ValueError):
        GnssNoiseModel(dd_correlation="banded")
    assert GnssNoiseModel(sigma_phase=0.002).sigma_code == pytest.approx(0.2)


def _setup(M=3, n=5, seed=0):
    rng = np.random.default_rng(seed)
    d = build_design(synth_constellation(n, rng=rng), GnssNoiseModel(), M)
    F = rng.normal(size=(3, M))
    Z = sample_ambiguities(d.n_amb, M, 100, rng)
    return d, random_rotation(rng), F, Z


def test_noise_free_epoch_exact():
    d, R, F, Z = _setup()
    ep = simulate_epoch(d, R, F, Z, rng=0, noise_free=True)
    assert np.array_equal(ep.Y, d.A @ Z + d.G @ R @ F)


def test_epoch_deterministic():
    d, R, F, Z = _setup()
    a = simulate_epoch(d, R, F, Z, rng=9)
    b = simulate_epoch(d, R, F, Z, rng=9)
    assert np.array_equal(a.Y, b.Y)


def test_epoch_noise_covariance():
    d, R, F, Z = _setup(M=2, n=4)
    rng = np.random.default_rng(10)
    X = np.array([
        simulate_epoch(d, R, F, Z, rng).noise_realization.reshape(-1, order="F") for _ in range(10000)
    ])
    C = np.cov(X.T)
    rel = np.abs(np.diag(C) / np.diag(d.Q_Y) - 1)
    assert rel.max() < 0.1


def test_epoch_shape_mismatch():
    d, R, F, Z = _setup()
    with pytest.raises(ValueError):
        simulate_epoch(d, R, F[:, :2], Z, rng=0)


def test_ambiguities():
    assert not sample_ambiguities(3, 2, 0, rng=0).any()
    a, b = sample_ambiguities(5, 3, 100, 4), sample_ambiguities(5, 3, 100, 4)
    assert np.array_equal(a, b)
    big = sample_ambiguities(5, 3, 100, np.random.default_rng(5))
    assert big.shape == (5, 3) and np.abs(big).max() <= 100
    assert big.dtype.kind == "i"
