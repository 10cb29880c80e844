"""5G angle-of-arrival observation model.

The receiver is a uniform planar array lying in the body u1-u2 plane. Directions
in the body frame are parameterized as

    t(az, el) = [cos(el) cos(az), cos(el) sin(az), sin(el)]

and the AoA dispersion is the inverse of the equivalent Fisher information over
(az, el), with the complex channel gain treated as a nuisance, pushed forward to
the unit sphere through the Jacobian of ``t``.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    ConfigurationError,
    DegenerateInputError,
    ParameterizationSingularityError,
    SingularFIMError,
)

SPEED_OF_LIGHT = 2.99792458e8
POLE_TOL = 1e-6

# Table of BS offsets from the user, meters (columns BS 1..8).
TABLE1_OFFSETS = np.array(
    [
        [10.0, 10.0, 10.0],
        [-10.0, -10.0, 10.0],
        [5.0, 10.0, 15.0],
        [-5.0, -10.0, 15.0],
        [15.0, 0.0, 10.0],
        [-15.0, 0.0, 10.0],
        [0.0, 15.0, 10.0],
        [0.0, -15.0, 10.0],
    ]
)


@dataclass(frozen=True)
class RadioConfig:
    carrier_hz: float = 28e9
    bandwidth_hz: float = 300e6
    tx_power_dbm: float = 17.0
    n_transmissions: int = 128
    noise_psd_dbm_hz: float = -174.0
    array_rows: int = 5
    array_cols: int = 5

    def __post_init__(self):
        if self.carrier_hz <= 0 or self.bandwidth_hz <= 0:
            raise ConfigurationError("carrier and bandwidth must be positive", field="radio")
        if self.n_transmissions < 1:
            raise ConfigurationError("n_transmissions must be >= 1", field="radio.n_transmissions")
        if self.array_rows < 1 or self.array_cols < 1:
            raise ConfigurationError("array dimensions must be >= 1", field="radio.array")

    @property
    def tx_power_w(self):
        return 10.0 ** ((self.tx_power_dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ArrayGeometry:
    element_positions: np.ndarray  # (J1*J2, 3), body frame


@dataclass(frozen=True)
class BsLayout:
    positions: np.ndarray  # (L, 3), global frame
    user_position: np.ndarray  # (3,)

    @property
    def n_bs(self):
        return self.positions.shape[0]


@dataclass(frozen=True)
class AoaSet:
    """Measured body-frame directions ``D`` and their local-frame truth ``E``.

    ``Q_D`` and ``Q_D_weight`` are ordered like ``vec(D)``, i.e. one 3x3 block
    per base station.
    """

    D: np.ndarray  # (3, L)
    E: np.ndarray  # (3, L)
    Q_D: np.ndarray  # (3L, 3L)
    Q_D_weight: np.ndarray  # (3L, 3L)

    @property
    def n_bs(self):
        return self.D.shape[1]


def bs_layout(user_position, L, offsets=None):
    """Place ``L`` base stations at ``user_position + offset``.

    Offsets default to the eight-entry preset ``TABLE1_OFFSETS``; explicit
    ``offsets`` (shape (L, 3)) override it.
    """
    user = np.asarray(user_position, dtype=float).reshape(3)
    if offsets is None:
        if not 1 <= L <= len(TABLE1_OFFSETS):
            raise ConfigurationError(
                f"preset layout supports 1..{len(TABLE1_OFFSETS)} base stations, got {L}",
                field="n_bs",
            )
        offsets = TABLE1_OFFSETS[:L]
    offsets = np.asarray(offsets, dtype=float).reshape(-1, 3)
    if offsets.shape[0] != L:
        raise ConfigurationError(f"expected {L} base-station offsets", field="bs_positions")
    if np.any(np.linalg.norm(offsets, axis=1) == 0.0):
        raise ConfigurationError("base station coincides with the user", field="bs_positions")
    return BsLayout(user + offsets, user)


def upa_geometry(cfg):
    """Centered ``rows x cols`` grid in the body u1-u2 plane, half-wavelength spacing."""
    d = SPEED_OF_LIGHT / (2.0 * cfg.carrier_hz)
    r = (np.arange(cfg.array_rows) - (cfg.array_rows - 1) / 2.0) * d
    c = (np.arange(cfg.array_cols) - (cfg.array_cols - 1) / 2.0) * d
    xx, yy = np.meshgrid(r, c, indexing="ij")
    pos = np.column_stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)])
    return ArrayGeometry(pos)


def los_unit_vectors(layout):
    """Columns ``(p_bs - p_user) / |p_bs - p_user|``, shape (3, L)."""
    diff = layout.positions - layout.user_position
    dist = np.linalg.norm(diff, axis=1)
    if np.any(dist == 0.0):
        raise ZeroDivisionError("base station coincides with user position")
    return (diff / dist[:, None]).T


def direction_from_angles(az, el):
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def angles_from_direction(t):
    t = np.asarray(t, dtype=float)
    return float(np.arctan2(t[1], t[0])), float(np.arcsin(np.clip(t[2], -1.0, 1.0)))


def direction_jacobian(az, el):
    """3x2 Jacobian of ``t`` with respect to (az, el)."""
    return np.array(
        [
            [-np.cos(el) * np.sin(az), -np.sin(el) * np.cos(az)],
            [np.cos(el) * np.cos(az), -np.sin(el) * np.sin(az)],
            [0.0, np.cos(el)],
        ]
    )


def _check_not_pole(el):
    if abs(np.cos(el)) < POLE_TOL:
        raise ParameterizationSingularityError(
            "direction is within 1e-6 of the array normal; azimuth undefined"
        )


def steering_response(array, t_bcs, gain, f):
    """Far-field channel ``gain * exp(-j 2 pi f / c <p_i, t>)`` per element."""
    k = 2.0 * np.pi * f / SPEED_OF_LIGHT
    return gain * np.exp(-1j * k * (array.element_positions @ np.asarray(t_bcs, dtype=float)))


def channel_gain(distance, f, rng):
    """Free-space amplitude ``(c / f) / (4 pi d)`` with a uniform random phase."""
    if distance <= 0:
        raise ValueError("distance must be positive")
    rng = np.random.default_rng(rng)
    magnitude = (SPEED_OF_LIGHT / f) / (4.0 * np.pi * distance)
    return magnitude * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi))


def noise_power(cfg):
    """Receiver noise power in watts from the PSD (dBm/Hz) and bandwidth."""
    return 10.0 ** ((cfg.noise_psd_dbm_hz - 30.0) / 10.0) * cfg.bandwidth_hz


def channel_derivatives(array, az, el, gain, f):
    """Columns d h / d(az, el, Re gain, Im gain), shape (J, 4)."""
    k = 2.0 * np.pi * f / SPEED_OF_LIGHT
    h = steering_response(array, direction_from_angles(az, el), gain, f)
    Jt = direction_jacobian(az, el)
    proj = array.element_positions @ Jt  # (J, 2)
    d_angles = (-1j * k) * proj * h[:, None]
    unit = h / gain
    return np.column_stack([d_angles, unit, 1j * unit])


def efim_from_full(J_full):
    """Schur complement of the nuisance (gain) block of a 4x4 FIM."""
    J11, J12, J22 = J_full[:2, :2], J_full[:2, 2:], J_full[2:, 2:]
    return J11 - J12 @ np.linalg.solve(J22, J12.T)


def aoa_fim(array, t_bcs, gain, cfg):
    """Equivalent Fisher information of (azimuth, elevation), 2x2.

    Full information over (az, el, Re gain, Im gain) is
    ``2 T P_T / sigma_n^2 * Re(dh^H dh)``; the gain block is then eliminated.
    """
    if gain == 0:
        raise SingularFIMError("zero channel gain gives a singular Fisher information")
    az, el = angles_from_direction(t_bcs)
    _check_not_pole(el)
    dh = channel_derivatives(array, az, el, gain, cfg.carrier_hz)
    scale = 2.0 * cfg.n_transmissions * cfg.tx_power_w / noise_power(cfg)
    J_full = scale * np.real(dh.conj().T @ dh)
    efim = efim_from_full(J_full)
    return 0.5 * (efim + efim.T)


def aoa_covariance(efim, t_bcs):
    """Push the (az, el) covariance ``efim^-1`` onto the unit sphere.

    Returns the rank-2 matrix ``J efim^-1 J^T`` whose null vector is ``t_bcs``.
    """
    az, el = angles_from_direction(t_bcs)
    _check_not_pole(el)
    Jt = direction_jacobian(az, el)
    cov = np.linalg.inv(efim)
    Q = Jt @ cov @ Jt.T
    return 0.5 * (Q + Q.T)


def aoa_weight(efim, t_bcs):
    """Moore-Penrose inverse of :func:`aoa_covariance`.

    With ``Q = J C J^T`` and ``J`` of full column rank, ``pinv(Q) = pinv(J)^T C^-1 pinv(J)``,
    which avoids thresholding the numerically-zero eigenvalue along ``t_bcs``.
    """
    az, el = angles_from_direction(t_bcs)
    _check_not_pole(el)
    Jp = np.linalg.pinv(direction_jacobian(az, el))
    W = Jp.T @ efim @ Jp
    return 0.5 * (W + W.T)


def _sqrt_psd(C):
    w, V = np.linalg.eigh(0.5 * (C + C.T))
    return V * np.sqrt(np.clip(w, 0.0, None))


def simulate_aoa(E, R_true, per_bs_efim, rng, noise_scale=1.0):
    """Synthesize body-frame AoA observations ``D ~ R^T E`` with angle-domain noise.

    For each base station the true body direction is converted to (az, el),
    perturbed by a Gaussian with covariance ``efim^-1`` (scaled by
    ``noise_scale**2``) and mapped back to a unit vector. Two standard normals
    are drawn per base station, in base-station order, even when
    ``noise_scale == 0``.
    """
    E = np.asarray(E, dtype=float)
    R_true = np.asarray(R_true, dtype=float)
    L = E.shape[1]
    if len(per_bs_efim) != L:
        raise ValueError("one EFIM per base station is required")
    rng = np.random.default_rng(rng)
    D = np.empty((3, L))
    Q_D = np.zeros((3 * L, 3 * L))
    W_D = np.zeros((3 * L, 3 * L))
    for ell in range(L):
        t = R_true.T @ E[:, ell]
        efim = np.asarray(per_bs_efim[ell], dtype=float)
        az, el = angles_from_direction(t)
        _check_not_pole(el)
        n = rng.standard_normal(2)
        cov = np.linalg.inv(efim)
        d_az, d_el = noise_scale * (_sqrt_psd(cov) @ n)
        D[:, ell] = t if noise_scale == 0 else direction_from_angles(az + d_az, el + d_el)
        blk = slice(3 * ell, 3 * ell + 3)
        Q_D[blk, blk] = aoa_covariance(efim, t)
        W_D[blk, blk] = aoa_weight(efim, t)
    return AoaSet(D, E, Q_D, W_D)


def fiveg_observations(layout, R_true, cfg, rng_gain, rng_noise, noise_scale=1.0,
                       array=None):
    """Gains, EFIMs and AoA observations for every base station of ``layout``."""
    if array is None:
        array = upa_geometry(cfg)
    E = los_unit_vectors(layout)
    dists = np.linalg.norm(layout.positions - layout.user_position, axis=1)
    rng_gain = np.random.default_rng(rng_gain)
    efims = []
    for ell in range(layout.n_bs):
        gain = channel_gain(dists[ell], cfg.carrier_hz, rng_gain)
        efims.append(aoa_fim(array, R_true.T @ E[:, ell], gain, cfg))
    return simulate_aoa(E, R_true, efims, rng_noise, noise_scale=noise_scale), efims


def commutation_matrix(rows, cols):
    """Permutation ``K`` with ``K @ vec(X) == vec(X.T)`` for ``X`` of shape (rows, cols)."""
    K = np.zeros((rows * cols, rows * cols))
    for i in range(rows):
        for j in range(cols):
            K[i * cols + j, j * rows + i] = 1.0
    return K


def check_aoa_set(aoa):
    if aoa.D.shape != aoa.E.shape or aoa.D.shape[0] != 3:
        raise DegenerateInputError("D and E must both be 3 x L")
    if not np.allclose(np.linalg.norm(aoa.E, axis=0), 1.0, atol=1e-12, rtol=0):
        raise DegenerateInputError("columns of E must be unit vectors")
