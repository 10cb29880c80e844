"""Seeded Monte-Carlo campaigns for the hybrid, GNSS-only and 5G-only estimators.

Every trial derives six independent generators from its seed (satellite geometry,
attitude, ambiguities, GNSS noise, channel-gain phases, AoA noise), so the same
seed gives the same scenario whatever the number of base stations or the methods
run. This pairs the methods and the columns of a table trial by trial.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .estimator import fiveg_only_solve, hybrid_solve
from .exceptions import ConfigurationError, HybridAttitudeError
from .fiveg_model import TABLE1_OFFSETS, RadioConfig, bs_layout, fiveg_observations
from .frames import EulerAngles, geodesic_angle_deg, random_rotation, rotation_from_euler
from .gnss_model import (
    GnssNoiseModel,
    build_design,
    sample_ambiguities,
    simulate_epoch,
    synth_constellation,
)
from .so3 import SearchControl

METHODS = ("hybrid", "gnss_only", "fiveg_only")
METRICS = ("float_Z", "float_R", "fixed_R_fro", "fixed_R_deg")
# weighting used when the carrier-phase noise is switched off (sigma_phase = 0)
NOMINAL_SIGMA = 0.001

# (sigma_phase, n_transmissions) per table; even ids are success rates, odd ids errors
TABLE_SETUPS = {
    2: (0.03, 64), 3: (0.03, 64),
    4: (0.03, 512), 5: (0.03, 512),
    6: (0.003, 512), 7: (0.003, 512),
}
TABLE_SATS = (5, 6, 7, 8)
TABLE_BS = (0, 1, 2, 3, 4)

# (label, n_transmissions, tx_power_dbm)
FIGURE_SETUPS = {
    "fig2": (("i", 64, 17.0), ("ii", 256, 17.0), ("iii", 256, 20.0)),
    "fig3": (("i", 64, 17.0), ("ii", 128, 20.0)),
    "fig4": (("i", 64, 17.0), ("ii", 128, 17.0), ("iii", 128, 20.0)),
}
FIG4_BS = (2, 4, 6, 8)


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulated setup.

    ``constellation`` is ``"per_trial"`` (fresh geometry every trial), ``"fixed"``
    (one geometry drawn from ``constellation_seed``) or an explicit sequence of
    (azimuth, elevation) pairs in degrees. ``attitude_truth`` is ``"random"`` or
    an :class:`EulerAngles`. ``sigma_phase = 0`` gives noise-free GNSS epochs,
    weighted as if ``sigma_phase`` were ``NOMINAL_SIGMA``.
    """

    n_satellites: int = 5
    n_baselines: int = 3
    baseline_matrix: tuple = None
    sigma_phase: float = 0.001
    dd_correlation: str = "full"
    n_bs: int = 3
    bs_offsets: tuple = None
    radio: RadioConfig = field(default_factory=RadioConfig)
    fiveg_noise_scale: float = 1.0
    attitude_truth: object = "random"
    constellation: object = "per_trial"
    constellation_seed: int = 0
    ambiguity_half_range: int = 100
    search: SearchControl = field(default_factory=SearchControl)

    def __post_init__(self):
        if self.n_satellites < 3:
            raise ConfigurationError("at least 3 satellites are required", field="n_satellites")
        if self.n_baselines < 1:
            raise ConfigurationError("at least one baseline is required", field="n_baselines")
        F = self.F
        if F.shape != (3, self.n_baselines) or not np.all(np.isfinite(F)):
            raise ConfigurationError(
                f"baseline matrix must be 3 x {self.n_baselines}", field="baseline_matrix"
            )
        if np.linalg.matrix_rank(F) < min(3, self.n_baselines):
            raise ConfigurationError("baselines must be linearly independent", field="baseline_matrix")
        if not self.sigma_phase >= 0.0:
            raise ConfigurationError("sigma_phase must be >= 0", field="sigma_phase")
        if self.dd_correlation not in ("full", "diagonal"):
            raise ConfigurationError("must be 'full' or 'diagonal'", field="dd_correlation")
        if self.n_bs < 0:
            raise ConfigurationError("n_bs must be >= 0", field="n_bs")
        if self.bs_offsets is None and self.n_bs > len(TABLE1_OFFSETS):
            raise ConfigurationError(
                f"the preset layout has {len(TABLE1_OFFSETS)} base stations", field="n_bs"
            )
        if self.bs_offsets is not None and np.shape(self.bs_offsets) != (self.n_bs, 3):
            raise ConfigurationError(f"expected {self.n_bs} offsets of length 3", field="bs_offsets")
        if not self.fiveg_noise_scale >= 0.0:
            raise ConfigurationError("must be >= 0", field="fiveg_noise_scale")
        if not (self.attitude_truth == "random" or isinstance(self.attitude_truth, EulerAngles)):
            raise ConfigurationError("'random' or yaw/pitch/roll angles", field="attitude_truth")
        if isinstance(self.constellation, str):
            if self.constellation not in ("per_trial", "fixed"):
                raise ConfigurationError("'per_trial', 'fixed' or a list", field="constellation")
        elif np.shape(self.constellation) != (self.n_satellites, 2):
            raise ConfigurationError(
                f"expected {self.n_satellites} (azimuth, elevation) pairs", field="constellation"
            )
        if self.ambiguity_half_range < 0:
            raise ConfigurationError("must be >= 0", field="ambiguity_half_range")

    @property
    def F(self):
        if self.baseline_matrix is None:
            if self.n_baselines > 3:
                return np.full((3, self.n_baselines), np.nan)
            return np.eye(3)[:, : self.n_baselines]
        return np.asarray(self.baseline_matrix, dtype=float)

    def to_dict(self):
        d = asdict(self)
        if isinstance(self.attitude_truth, EulerAngles):
            d["attitude_truth"] = {
                k: float(np.rad2deg(v)) for k, v in self.attitude_truth._asdict().items()
            }
        return d


@dataclass(frozen=True)
class MethodResult:
    """Errors of one method in one trial. Inapplicable metrics are NaN."""

    float_Z_error: float = math.nan
    float_R_error: float = math.nan
    fixed_R_error_frobenius: float = math.nan
    fixed_R_error_deg: float = math.nan
    success: bool = None
    n_candidates: int = 0
    bound_closed: bool = True
    failed: bool = False
    error: str = ""

    def metric(self, name):
        return {
            "float_Z": self.float_Z_error,
            "float_R": self.float_R_error,
            "fixed_R_fro": self.fixed_R_error_frobenius,
            "fixed_R_deg": self.fixed_R_error_deg,
        }[name]


@dataclass(frozen=True)
class TrialResult:
    seed: int
    methods: dict

    # the hybrid method is the headline result of a trial
    @property
    def float_Z_error(self):
        return self.methods["hybrid"].float_Z_error

    @property
    def float_R_error(self):
        return self.methods["hybrid"].float_R_error

    @property
    def fixed_R_error_frobenius(self):
        return self.methods["hybrid"].fixed_R_error_frobenius

    @property
    def fixed_R_error_deg(self):
        return self.methods["hybrid"].fixed_R_error_deg

    @property
    def success(self):
        return self.methods["hybrid"].success


@dataclass(frozen=True)
class MethodSummary:
    n_trials: int
    n_failed: int
    n_bound_not_closed: int
    success_rate: float  # NaN for fiveg_only
    mean: dict
    rmse: dict


@dataclass(frozen=True)
class AggregateMetrics:
    n_trials: int
    base_seed: int
    methods: dict  # name -> MethodSummary
    config: dict
    trials: tuple = field(default=(), repr=False)

    @property
    def success_rate(self):
        return self.methods["hybrid"].success_rate


def _substreams(seed):
    names = ("geometry", "attitude", "ambiguity", "gnss_noise", "gain", "aoa_noise")
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {n: np.random.default_rng(s) for n, s in zip(names, children)}


def _failed(exc):
    return MethodResult(failed=True, bound_closed=False, error=f"{type(exc).__name__}: {exc}")


def _ambiguity_result(float_sol, fixed, Z_true, R_true):
    return MethodResult(
        float_Z_error=float(np.linalg.norm(float_sol.Z_float - Z_true)),
        float_R_error=float(np.linalg.norm(float_sol.R_float - R_true)),
        fixed_R_error_frobenius=float(np.linalg.norm(fixed.R_fixed - R_true)),
        fixed_R_error_deg=geodesic_angle_deg(fixed.R_fixed, R_true),
        success=bool(np.array_equal(fixed.Z_fixed, Z_true)),
        n_candidates=fixed.n_candidates_evaluated,
        bound_closed=fixed.bound_closed,
    )


def simulate_scenario(config, seed):
    """Draw the truth and the observations of one trial.

    Returns
    -------
    dict with keys ``R_true``, ``Z_true``, ``design``, ``epoch``, ``aoa`` (None when
    ``n_bs == 0``) and ``F``.
    """
    rng = _substreams(seed)
    M = config.n_baselines
    if isinstance(config.constellation, str):
        geo_rng = rng["geometry"]
        if config.constellation == "fixed":
            geo_rng = np.random.default_rng(config.constellation_seed)
        constellation = synth_constellation(config.n_satellites, rng=geo_rng)
    else:
        constellation = synth_constellation(config.n_satellites, geometry=config.constellation)
    if config.attitude_truth == "random":
        R_true = random_rotation(rng["attitude"])
    else:
        R_true = rotation_from_euler(config.attitude_truth)
    noise = GnssNoiseModel(
        sigma_phase=config.sigma_phase or NOMINAL_SIGMA, dd_correlation=config.dd_correlation
    )
    design = build_design(constellation, noise, M)
    Z_true = sample_ambiguities(design.n_amb, M, config.ambiguity_half_range, rng["ambiguity"])
    F = config.F
    epoch = simulate_epoch(
        design, R_true, F, Z_true, rng["gnss_noise"], noise_free=config.sigma_phase == 0
    )
    aoa = None
    if config.n_bs > 0:
        layout = bs_layout(np.zeros(3), config.n_bs, config.bs_offsets)
        aoa, _ = fiveg_observations(
            layout, R_true, config.radio, rng["gain"], rng["aoa_noise"],
            noise_scale=config.fiveg_noise_scale,
        )
    return dict(R_true=R_true, Z_true=Z_true, design=design, epoch=epoch, aoa=aoa, F=F)


def run_trial(config, seed, methods=METHODS):
    """One end-to-end execution of every requested method on a common scenario.

    ``fiveg_only`` runs only when ``n_bs >= 2``; with ``n_bs == 0`` the hybrid
    pipeline is the GNSS-only pipeline and both entries hold the same result.
    Solver errors are recorded in the result instead of being raised.
    """
    seed = int(seed)
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    try:
        sc = simulate_scenario(config, seed)
    except (HybridAttitudeError, np.linalg.LinAlgError) as exc:
        return TrialResult(seed, {m: _failed(exc) for m in methods})

    out = {}
    R_true, Z_true, ctrl = sc["R_true"], sc["Z_true"], config.search
    need_gnss = "gnss_only" in methods or ("hybrid" in methods and sc["aoa"] is None)
    if need_gnss:
        try:
            fl, fx = hybrid_solve(sc["design"], sc["epoch"], None, sc["F"], ctrl)
            out["gnss_only"] = _ambiguity_result(fl, fx, Z_true, R_true)
        except (HybridAttitudeError, np.linalg.LinAlgError) as exc:
            out["gnss_only"] = _failed(exc)
    if "hybrid" in methods:
        if sc["aoa"] is None:
            out["hybrid"] = out["gnss_only"]
        else:
            try:
                fl, fx = hybrid_solve(sc["design"], sc["epoch"], sc["aoa"], sc["F"], ctrl)
                out["hybrid"] = _ambiguity_result(fl, fx, Z_true, R_true)
            except (HybridAttitudeError, np.linalg.LinAlgError) as exc:
                out["hybrid"] = _failed(exc)
    if "fiveg_only" in methods and config.n_bs >= 2:
        try:
            R = fiveg_only_solve(sc["aoa"], ctrl)
            out["fiveg_only"] = MethodResult(
                fixed_R_error_frobenius=float(np.linalg.norm(R - R_true)),
                fixed_R_error_deg=geodesic_angle_deg(R, R_true),
            )
        except (HybridAttitudeError, np.linalg.LinAlgError) as exc:
            out["fiveg_only"] = _failed(exc)
    if "gnss_only" not in methods:
        out.pop("gnss_only", None)
    return TrialResult(seed, out)


def _run_chunk(args):
    config, seeds, methods = args
    return [run_trial(config, s, methods) for s in seeds]


def run_trials(config, seeds, methods=METHODS, jobs=1):
    """Trial results in seed order; ``jobs > 1`` spreads them over processes."""
    seeds = [int(s) for s in seeds]
    if jobs <= 1 or len(seeds) <= 1:
        return [run_trial(config, s, methods) for s in seeds]
    n_chunks = min(len(seeds), 4 * jobs)
    chunks = [seeds[i::n_chunks] for i in range(n_chunks)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_run_chunk, [(config, c, methods) for c in chunks]))
    by_seed = {r.seed: r for part in parts for r in part}
    return [by_seed[s] for s in seeds]


def _summarize(results, n_trials, exclude_unclosed=False):
    failed = sum(r.failed for r in results)
    unclosed = sum((not r.failed) and (not r.bound_closed) for r in results)
    usable = [r for r in results if not r.failed and (r.bound_closed or not exclude_unclosed)]
    mean, rmse = {}, {}
    for m in METRICS:
        vals = [r.metric(m) for r in usable]
        vals = [v for v in vals if not math.isnan(v)]
        if vals:
            # fsum is exactly rounded, so the result does not depend on trial order
            mean[m] = math.fsum(vals) / len(vals)
            rmse[m] = math.sqrt(math.fsum(v * v for v in vals) / len(vals))
        else:
            mean[m] = rmse[m] = math.nan
    has_success = any(r.success is not None for r in results)
    succ = sum(bool(r.success) for r in results) / n_trials if has_success else math.nan
    return MethodSummary(n_trials, failed, unclosed, succ, mean, rmse)


def aggregate(trials, config=None, base_seed=0, exclude_unclosed=False):
    """Reduce trial results to per-method success rates, means and RMSEs.

    Success rates use every trial as denominator. Error statistics use every
    trial that did not raise; trials whose search stopped at ``max_candidates``
    are kept unless ``exclude_unclosed`` is set.
    """
    trials = list(trials)
    if not trials:
        raise ValueError("no trials to aggregate")
    n = len(trials)
    names = [m for m in METHODS if any(m in t.methods for t in trials)]
    methods = {
        m: _summarize([t.methods[m] for t in trials if m in t.methods], n, exclude_unclosed)
        for m in names
    }
    cfg = config.to_dict() if config is not None else {}
    return AggregateMetrics(n, base_seed, methods, cfg, tuple(sorted(trials, key=lambda t: t.seed)))


def run_campaign(config, n_trials, parallelism=1, base_seed=0, methods=METHODS,
                 exclude_unclosed=False):
    """Run trials with seeds ``base_seed + i`` for ``i < n_trials`` and aggregate."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    seeds = range(base_seed, base_seed + n_trials)
    trials = run_trials(config, seeds, methods, parallelism)
    return aggregate(trials, config, base_seed, exclude_unclosed)


@dataclass(frozen=True)
class TableGrid:
    sat_range: tuple
    bs_range: tuple
    success: np.ndarray  # (len(sat_range), len(bs_range)), fractions
    error_deg: np.ndarray  # mean fixed attitude error, degrees
    n_failed: np.ndarray
    n_trials: int


def sweep_tables(base, sat_range=TABLE_SATS, bs_range=TABLE_BS, n_trials=100, base_seed=0,
                 parallelism=1, exclude_unclosed=False):
    """Success rate and mean fixed attitude error of the hybrid method on a grid.

    Rows are numbers of satellites, columns numbers of base stations; the
    ``L = 0`` column is the GNSS-only method.
    """
    sat_range, bs_range = tuple(sat_range), tuple(bs_range)
    if not sat_range or not bs_range:
        raise ValueError("ranges must be nonempty")
    shape = (len(sat_range), len(bs_range))
    success, error, failed = np.zeros(shape), np.zeros(shape), np.zeros(shape, dtype=int)
    for i, n_sat in enumerate(sat_range):
        for j, L in enumerate(bs_range):
            cfg = replace(base, n_satellites=n_sat, n_bs=L)
            agg = run_campaign(cfg, n_trials, parallelism, base_seed, ("hybrid",), exclude_unclosed)
            s = agg.methods["hybrid"]
            success[i, j] = s.success_rate
            error[i, j] = s.mean["fixed_R_deg"]
            failed[i, j] = s.n_failed
    return TableGrid(sat_range, bs_range, success, error, failed, n_trials)


def table_config(table_id, base=None):
    """Base config of the setup behind a table id (2..7)."""
    if table_id not in TABLE_SETUPS:
        raise ConfigurationError(f"table id must be one of {sorted(TABLE_SETUPS)}", field="table")
    base = base or ScenarioConfig()
    sigma, T = TABLE_SETUPS[table_id]
    return replace(base, sigma_phase=sigma, radio=replace(base.radio, n_transmissions=T))


def _setup_config(base, T, power, L):
    return replace(base, n_bs=L, radio=replace(base.radio, n_transmissions=T, tx_power_dbm=power))


def figure_data(figure_id, base=None, n_trials=100, base_seed=0, parallelism=1):
    """Long-format rows ``(setup, method, metric, trial_or_L, value)`` for a figure.

    fig2: mean float-Z, float-R and fixed-R (Frobenius) errors of GNSS-only and
    hybrid with one base station (``trial_or_L`` is L).
    fig3: per-trial fixed-R errors (Frobenius and degrees) of the three methods
    with three base stations (``trial_or_L`` is the trial index), plus their means.
    fig4: fixed attitude RMSE in degrees versus L.
    """
    if figure_id not in FIGURE_SETUPS:
        raise ConfigurationError(f"figure id must be one of {sorted(FIGURE_SETUPS)}", field="figure")
    base = base or ScenarioConfig()
    seeds = range(base_seed, base_seed + n_trials)
    rows = []
    # the GNSS-only result does not depend on the 5G setup: run it once
    gnss = aggregate(run_trials(replace(base, n_bs=0), seeds, ("gnss_only",), parallelism))
    g = gnss.methods["gnss_only"]
    for label, T, power in FIGURE_SETUPS[figure_id]:
        if figure_id == "fig2":
            cfg = _setup_config(base, T, power, 1)
            h = aggregate(run_trials(cfg, seeds, ("hybrid",), parallelism)).methods["hybrid"]
            for method, summary, L in (("gnss_only", g, 0), ("hybrid", h, 1)):
                for m in ("float_Z", "float_R", "fixed_R_fro"):
                    rows.append((label, method, f"{m}_mean", L, summary.mean[m]))
        elif figure_id == "fig3":
            cfg = _setup_config(base, T, power, 3)
            agg = aggregate(run_trials(cfg, seeds, ("hybrid", "fiveg_only"), parallelism))
            per_method = {"gnss_only": gnss, "fiveg_only": agg, "hybrid": agg}
            for method in ("gnss_only", "fiveg_only", "hybrid"):
                src = per_method[method]
                for k, t in enumerate(src.trials):
                    r = t.methods[method]
                    rows.append((label, method, "fixed_R_fro", k, r.fixed_R_error_frobenius))
                    rows.append((label, method, "fixed_R_deg", k, r.fixed_R_error_deg))
                s = src.methods[method]
                rows.append((label, method, "fixed_R_fro_mean", 3, s.mean["fixed_R_fro"]))
                rows.append((label, method, "fixed_R_deg_mean", 3, s.mean["fixed_R_deg"]))
        else:
            for L in FIG4_BS:
                cfg = _setup_config(base, T, power, L)
                agg = aggregate(run_trials(cfg, seeds, ("hybrid", "fiveg_only"), parallelism))
                rows.append((label, "gnss_only", "fixed_R_deg_rmse", L, g.rmse["fixed_R_deg"]))
                for method in ("fiveg_only", "hybrid"):
                    rows.append(
                        (label, method, "fixed_R_deg_rmse", L, agg.methods[method].rmse["fixed_R_deg"])
                    )
    return rows
