"""Double-differenced GNSS observation model for a multi-antenna platform.

Observations of one baseline are stacked as ``[code (N); phase (N)]`` in meters,
so the ambiguity design is ``A = [0; wavelength * I]`` and the geometry design is
``G = [G0; G0]`` with ``G0`` holding the between-satellite differences of the
line-of-sight vectors (pivot minus non-pivot).
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import CovarianceNotSPDError, GeometrySynthesisError

GPS_L1_WAVELENGTH = 0.19029

# Flips the sign of G0 when set; used by ``cli validate --inject-fault`` only.
_DEBUG_FLIP_G0 = False


@dataclass(frozen=True)
class Constellation:
    """Receiver-to-satellite unit line-of-sight vectors (local frame, ENU)."""

    los: np.ndarray  # (N+1, 3)
    pivot_index: int
    azimuth_deg: np.ndarray = None
    elevation_deg: np.ndarray = None

    @property
    def n_sats(self):
        return self.los.shape[0]


@dataclass(frozen=True)
class GnssNoiseModel:
    sigma_phase: float = 0.001
    sigma_code: float = None
    wavelength: float = GPS_L1_WAVELENGTH
    dd_correlation: str = "full"

    def __post_init__(self):
        if self.sigma_code is None:
            object.__setattr__(self, "sigma_code", 100.0 * self.sigma_phase)
        if self.sigma_phase <= 0 or self.sigma_code <= 0 or self.wavelength <= 0:
            raise ValueError("GNSS noise parameters must be strictly positive")
        if self.dd_correlation not in ("full", "diagonal"):
            raise ValueError("dd_correlation must be 'full' or 'diagonal'")


@dataclass(frozen=True)
class GnssDesign:
    A: np.ndarray  # (2N, N)
    G: np.ndarray  # (2N, 3)
    sigma_eps: np.ndarray  # (2N, 2N)
    P_M: np.ndarray  # (M, M)
    Q_Y: np.ndarray  # (2NM, 2NM)
    wavelength: float

    @property
    def n_amb(self):
        return self.A.shape[1]

    @property
    def n_baselines(self):
        return self.P_M.shape[0]


@dataclass(frozen=True)
class GnssEpoch:
    Y: np.ndarray  # (2N, M)
    Z_true: np.ndarray  # (N, M) int
    noise_realization: np.ndarray = field(repr=False, default=None)


def los_from_az_el(azimuth_deg, elevation_deg):
    az = np.radians(np.asarray(azimuth_deg, dtype=float))
    el = np.radians(np.asarray(elevation_deg, dtype=float))
    return np.column_stack([np.cos(el) * np.sin(az), np.cos(el) * np.cos(az), np.sin(el)])


def _pivot(elevation):
    # highest elevation; argmax keeps the lowest index on ties
    return int(np.argmax(elevation))


def _min_separation_deg(los):
    cosines = np.clip(los @ los.T, -1.0, 1.0)
    iu = np.triu_indices(los.shape[0], k=1)
    return float(np.degrees(np.arccos(cosines[iu])).min())


def synth_constellation(n_sats, geometry=None, rng=None, min_separation_deg=10.0,
                        elevation_range=(15.0, 75.0), max_attempts=1000):
    """Build a constellation from explicit (az, el) pairs or a random draw.

    Parameters
    ----------
    n_sats : int
        Number of tracked satellites (N + 1), at least 3.
    geometry : sequence of (azimuth_deg, elevation_deg), optional
        Explicit geometry. When omitted, ``rng`` (a ``numpy.random.Generator`` or a
        seed) drives a uniform azimuth / elevation draw, redrawn until all pairwise
        separations reach ``min_separation_deg``.
    """
    if n_sats < 3:
        raise ValueError("at least 3 satellites are required")
    if geometry is not None:
        geometry = np.asarray(geometry, dtype=float)
        if geometry.shape != (n_sats, 2):
            raise ValueError(f"expected {n_sats} (azimuth, elevation) pairs")
        az, el = geometry[:, 0], geometry[:, 1]
        if np.any(el <= 0.0) or np.any(el > 90.0):
            raise ValueError("elevations must lie in (0, 90] degrees")
        los = los_from_az_el(az, el)
        if _min_separation_deg(los) <= 0.0:
            raise ValueError("satellite directions must be distinct")
        return Constellation(los, _pivot(el), az, el)

    rng = np.random.default_rng(rng)
    lo, hi = elevation_range
    for _ in range(max_attempts):
        az = rng.uniform(0.0, 360.0, n_sats)
        el = rng.uniform(lo, hi, n_sats)
        los = los_from_az_el(az, el)
        if _min_separation_deg(los) >= min_separation_deg:
            return Constellation(los, _pivot(el), az, el)
    raise GeometrySynthesisError(
        f"no {n_sats}-satellite geometry with {min_separation_deg} deg separation "
        f"after {max_attempts} attempts"
    )


def dd_geometry(constellation):
    """Rows ``u_pivot - u_j`` for every non-pivot satellite j, shape (N, 3)."""
    los = constellation.los
    others = [j for j in range(los.shape[0]) if j != constellation.pivot_index]
    G0 = los[constellation.pivot_index] - los[others]
    return -G0 if _DEBUG_FLIP_G0 else G0


def baseline_correlation(M):
    """Correlation between the M baselines sharing the master antenna."""
    return 0.5 * (np.eye(M) + np.ones((M, M)))


def dd_cofactor(N, kind="full"):
    if kind == "diagonal":
        return 2.0 * np.eye(N)
    return 2.0 * (np.eye(N) + np.ones((N, N)))


def build_design(constellation, noise, M):
    """Assemble ``A``, ``G``, the single-baseline covariance and ``Q_Y``."""
    if M < 1:
        raise ValueError("need at least one baseline")
    G0 = dd_geometry(constellation)
    N = G0.shape[0]
    lam = noise.wavelength
    A = np.vstack([np.zeros((N, N)), lam * np.eye(N)])
    G = np.vstack([G0, G0])
    C = dd_cofactor(N, noise.dd_correlation)
    Z0 = np.zeros((N, N))
    sigma_eps = np.block([[noise.sigma_code ** 2 * C, Z0], [Z0, noise.sigma_phase ** 2 * C]])
    P_M = baseline_correlation(M)
    return GnssDesign(A, G, sigma_eps, P_M, np.kron(P_M, sigma_eps), lam)


def sample_ambiguities(N, M, half_range, rng):
    rng = np.random.default_rng(rng)
    if half_range == 0:
        return np.zeros((N, M), dtype=np.int64)
    return rng.integers(-half_range, half_range, size=(N, M), endpoint=True)


def simulate_epoch(design, R_true, F, Z_true, rng, noise_free=False):
    """Draw one multi-baseline epoch ``Y = A Z + G R F + noise``.

    The noise ``vec(Xi)`` is ``L @ n`` with ``L`` the lower Cholesky factor of
    ``Q_Y`` and ``n`` standard normal. ``noise_free=True`` skips the draw and
    consumes nothing from ``rng``.
    """
    F = np.asarray(F, dtype=float)
    Z_true = np.asarray(Z_true)
    two_n, M = design.G.shape[0], F.shape[1]
    if Z_true.shape != (design.n_amb, M) or design.n_baselines != M:
        raise ValueError("inconsistent dimensions between design, F and Z_true")
    mean = design.A @ Z_true + design.G @ np.asarray(R_true) @ F
    if noise_free:
        noise = np.zeros((two_n, M))
    else:
        try:
            L = np.linalg.cholesky(design.Q_Y)
        except np.linalg.LinAlgError as exc:
            raise CovarianceNotSPDError("Q_Y is not positive definite") from exc
        rng = np.random.default_rng(rng)
        noise = (L @ rng.standard_normal(two_n * M)).reshape(two_n, M, order="F")
    return GnssEpoch(mean + noise, Z_true, noise)
