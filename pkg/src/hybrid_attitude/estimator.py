"""Hybrid GNSS + AoA attitude estimator.

Unknowns are ``x = [vec(Z); vec(R)]`` (ambiguities, then the unconstrained 3x3
attitude). The stacked model is

    [vec(Y); vec(D^T)] = [[I (x) A, F^T (x) G], [0, I (x) E^T]] x

with weight ``blkdiag(Q_Y^-1, W_D)``. The pipeline is float solution ->
integer search with the SO(3)-constrained conditional cost -> fixed attitude.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .exceptions import ModelError, ObservabilityError, RankDeficiencyError
from .fiveg_model import check_aoa_set, commutation_matrix
from .frames import project_to_so3, project_to_so3_batch, unvec, vec
from .ils import IntegerSearch
from .so3 import SearchControl, minimize_quadratic_so3, psd_sqrt_factor, sphere_lower_bound

CONDITION_LIMIT = 1e14
NEAR_SINGULAR_RATIO = 1e-12


@dataclass(frozen=True)
class HybridModel:
    observation: np.ndarray  # (2NM + 3L,)
    design: np.ndarray  # (2NM + 3L, NM + 9)
    weight: np.ndarray  # (2NM + 3L, 2NM + 3L)
    N: int
    M: int
    L: int

    @property
    def n_gnss_rows(self):
        return 2 * self.N * self.M

    @property
    def n_amb(self):
        return self.N * self.M


@dataclass(frozen=True)
class FloatSolution:
    Z_float: np.ndarray  # (N, M)
    R_float: np.ndarray  # (3, 3), not orthonormal
    Q_Z: np.ndarray
    Q_R: np.ndarray
    Q_RZ: np.ndarray
    Q_ZR: np.ndarray
    normal_matrix: np.ndarray
    residual: float = 0.0

    @property
    def covariance(self):
        return np.block([[self.Q_Z, self.Q_ZR], [self.Q_RZ, self.Q_R]])


@dataclass
class FixedSolution:
    Z_fixed: np.ndarray  # (N, M) int
    R_fixed: np.ndarray  # (3, 3) rotation
    cost: float
    n_candidates_evaluated: int
    bound_closed: bool = True
    success: bool = None

    @property
    def bound_not_closed(self):
        return not self.bound_closed


def gnss_blocks(design, F):
    """``(I (x) A, F^T (x) G)`` for the multi-baseline GNSS model."""
    F = np.asarray(F, dtype=float)
    M = F.shape[1]
    return np.kron(np.eye(M), design.A), np.kron(F.T, design.G)


def aoa_blocks(aoa):
    """Design ``I (x) E^T`` and the weight reordered from ``vec(D)`` to ``vec(D^T)``."""
    L = aoa.n_bs
    K = commutation_matrix(3, L)
    W = K @ aoa.Q_D_weight @ K.T
    return np.kron(np.eye(3), aoa.E.T), 0.5 * (W + W.T)


def assemble_hybrid(design, epoch, aoa, F):
    """Stack GNSS and (optional) AoA observations into one linear model.

    ``aoa=None`` or an empty set gives the GNSS-only model.
    """
    F = np.asarray(F, dtype=float)
    N, M = design.n_amb, F.shape[1]
    if epoch.Y.shape != (2 * N, M) or design.n_baselines != M or F.shape[0] != 3:
        raise ModelError("GNSS design, observations and baselines have inconsistent shapes")
    try:
        c_p = scipy.linalg.cho_factor(design.P_M)
        c_s = scipy.linalg.cho_factor(design.sigma_eps)
    except np.linalg.LinAlgError as exc:
        raise ModelError("Q_Y is not invertible") from exc
    Q_Y_inv = np.kron(
        scipy.linalg.cho_solve(c_p, np.eye(M)), scipy.linalg.cho_solve(c_s, np.eye(2 * N))
    )
    IA, FG = gnss_blocks(design, F)
    rows = [np.hstack([IA, FG])]
    obs = [vec(epoch.Y)]
    weights = [0.5 * (Q_Y_inv + Q_Y_inv.T)]
    L = 0
    if aoa is not None and aoa.n_bs > 0:
        check_aoa_set(aoa)
        L = aoa.n_bs
        IE, W_D = aoa_blocks(aoa)
        rows.append(np.hstack([np.zeros((3 * L, N * M)), IE]))
        obs.append(vec(aoa.D.T))
        weights.append(W_D)
    return HybridModel(
        np.concatenate(obs), np.vstack(rows), scipy.linalg.block_diag(*weights), N, M, L
    )


def _deficient_block(Nmat, n_amb):
    def bad(S):
        if S.size == 0:
            return False
        w = np.linalg.eigvalsh(0.5 * (S + S.T))
        return w[0] <= 0 or w[-1] / w[0] > CONDITION_LIMIT

    NZZ = Nmat[:n_amb, :n_amb]
    if bad(NZZ):
        return "ambiguity"
    NRR = Nmat[n_amb:, n_amb:]
    schur = NRR - Nmat[n_amb:, :n_amb] @ np.linalg.solve(NZZ, Nmat[:n_amb, n_amb:])
    if bad(schur):
        return "attitude"
    return "joint"


def normal_equations(model):
    MW = model.design.T @ model.weight
    Nmat = MW @ model.design
    return 0.5 * (Nmat + Nmat.T), MW @ model.observation


def solve_float(model):
    """Unconstrained weighted least-squares solution and its covariance.

    Raises
    ------
    RankDeficiencyError
        If the normal matrix is singular or its condition number exceeds 1e14;
        ``block`` tells whether the ambiguity or the attitude part is deficient.
    """
    Nmat, rhs = normal_equations(model)
    n_amb = model.n_amb
    # condition is judged after symmetric diagonal scaling, so unit choices do not matter
    d = np.sqrt(np.clip(np.diag(Nmat), 1e-300, None))
    w = np.linalg.eigvalsh(Nmat / np.outer(d, d))
    if np.any(np.diag(Nmat) <= 0) or w[0] <= 0 or w[-1] / w[0] > CONDITION_LIMIT:
        block = _deficient_block(Nmat, n_amb)
        cond = np.inf if w[0] <= 0 else w[-1] / w[0]
        raise RankDeficiencyError(
            f"normal matrix is singular or ill-conditioned ({block} block)", block, cond
        )
    cho = scipy.linalg.cho_factor(Nmat)
    x = scipy.linalg.cho_solve(cho, rhs)
    Q = scipy.linalg.cho_solve(cho, np.eye(Nmat.shape[0]))
    Q = 0.5 * (Q + Q.T)
    e = model.observation - model.design @ x
    return FloatSolution(
        Z_float=unvec(x[:n_amb], model.N, model.M),
        R_float=unvec(x[n_amb:], 3, 3),
        Q_Z=Q[:n_amb, :n_amb],
        Q_R=Q[n_amb:, n_amb:],
        Q_RZ=Q[n_amb:, :n_amb],
        Q_ZR=Q[:n_amb, n_amb:],
        normal_matrix=Nmat,
        residual=float(e @ model.weight @ e),
    )


def _gain(float_sol):
    # Q_RZ Q_Z^-1
    cho = scipy.linalg.cho_factor(float_sol.Q_Z)
    return scipy.linalg.cho_solve(cho, float_sol.Q_ZR).T


def conditional_covariance(float_sol):
    Q = float_sol.Q_R - _gain(float_sol) @ float_sol.Q_ZR
    return 0.5 * (Q + Q.T)


def conditional_attitude(float_sol, Z):
    """Attitude float solution conditioned on integer ambiguities ``Z``.

    Returns
    -------
    R_cond : ndarray, shape (3, 3)
        ``vec(R_hat) - Q_RZ Q_Z^-1 vec(Z_hat - Z)``.
    Q_Rcond : ndarray, shape (9, 9)
        ``Q_R - Q_RZ Q_Z^-1 Q_ZR``; independent of ``Z``.
    """
    K = _gain(float_sol)
    dz = vec(float_sol.Z_float) - vec(np.asarray(Z, dtype=float))
    r = vec(float_sol.R_float) - K @ dz
    Q = float_sol.Q_R - K @ float_sol.Q_ZR
    return unvec(r, 3, 3), 0.5 * (Q + Q.T)


def conditional_weight(Q_Rcond):
    """Inverse of the conditional covariance, as a pseudo-inverse when near singular.

    Eigen-directions with variance below 1e-12 of the largest are dropped.
    """
    Q = 0.5 * (Q_Rcond + Q_Rcond.T)
    w, V = np.linalg.eigh(Q)
    keep = w > NEAR_SINGULAR_RATIO * w[-1]
    return (V[:, keep] / w[keep]) @ V[:, keep].T


def _conditional_factor(Q_Rcond):
    # U with U^T U = conditional_weight(Q_Rcond)
    Q = 0.5 * (Q_Rcond + Q_Rcond.T)
    w, V = np.linalg.eigh(Q)
    keep = w > NEAR_SINGULAR_RATIO * w[-1]
    return V[:, keep].T / np.sqrt(w[keep])[:, None]


class _CandidateEvaluator:
    """Full cost ``C(Z)`` for batches of integer candidates."""

    def __init__(self, float_sol, ctrl):
        self.ctrl = ctrl
        self.K = _gain(float_sol)
        self.z_hat = vec(float_sol.Z_float)
        self.r_hat = vec(float_sol.R_float)
        self.U = _conditional_factor(conditional_covariance(float_sol))

    def conditional(self, cands):
        r = self.r_hat[None] - (self.z_hat[None] - cands) @ self.K.T
        return r.reshape(-1, 3, 3).transpose(0, 2, 1)

    def lower_bound(self, R_cond):
        # sphere relaxation of the attitude term
        b = R_cond.transpose(0, 2, 1).reshape(-1, 9) @ self.U.T
        return sphere_lower_bound(self.U, b)

    def fix(self, R_cond):
        b = R_cond.transpose(0, 2, 1).reshape(-1, 9) @ self.U.T
        return minimize_quadratic_so3(
            self.U, b, project_to_so3_batch(R_cond),
            self.ctrl.so3_tolerance, self.ctrl.so3_max_iterations,
        )


def constrained_search(float_sol, ctrl=None):
    """Integer ambiguities minimizing the SO(3)-constrained cost, by expansion.

    ``C(Z) = |vec(Z - Z_hat)|^2_{Q_Z^-1} + min_R |vec(R - R_hat(Z))|^2_{Q_R(Z)^-1}``.
    Candidates are enumerated in order of the first (unconstrained) term; the
    candidate set grows by ``expansion_factor`` until the best cost found does not
    exceed the unconstrained distance of the next candidate, which certifies the
    optimum because the attitude term is nonnegative. Candidates whose distance
    plus a cheap lower bound of the attitude term already exceed the incumbent are
    not evaluated in full.

    If ``max_candidates`` is reached first, the incumbent is returned with
    ``bound_closed=False``.
    """
    ctrl = ctrl or SearchControl()
    N, M = float_sol.Z_float.shape
    search = IntegerSearch(vec(float_sol.Z_float), float_sol.Q_Z)
    ev = _CandidateEvaluator(float_sol, ctrl)
    best_cost, best_z, best_R = np.inf, None, None
    n_evaluated = 0
    processed = 0
    k = min(ctrl.initial_candidate_count, ctrl.max_candidates)
    while True:
        cands, dist = search.enumerate(k + 1)
        new_z, new_d = cands[processed:k].astype(float), dist[processed:k]
        if new_z.shape[0]:
            R_cond = ev.conditional(new_z)
            bound = new_d + ev.lower_bound(R_cond)
            order = np.argsort(bound, kind="stable")
            start, size = 0, 1
            while start < order.size:
                chunk = order[start:start + size]
                start += size
                size = min(2 * size, 256)
                chunk = chunk[bound[chunk] < best_cost]
                if chunk.size == 0:
                    break
                R_fix, so3_cost = ev.fix(R_cond[chunk])
                n_evaluated += chunk.size
                total = new_d[chunk] + so3_cost
                i = int(np.argmin(total))
                if total[i] < best_cost:
                    best_cost = float(total[i])
                    best_z = new_z[chunk[i]]
                    best_R = R_fix[i]
        processed = k
        if best_cost <= dist[k]:
            closed = True
            break
        if k >= ctrl.max_candidates:
            closed = False
            break
        k = min(int(math.ceil(k * ctrl.expansion_factor)), ctrl.max_candidates)
    return FixedSolution(
        Z_fixed=np.rint(unvec(best_z, N, M)).astype(np.int64),
        R_fixed=best_R,
        cost=best_cost,
        n_candidates_evaluated=n_evaluated,
        bound_closed=closed,
    )


def ambiguity_cost(float_sol, Z):
    dz = vec(np.asarray(Z, dtype=float)) - vec(float_sol.Z_float)
    return float(dz @ np.linalg.solve(float_sol.Q_Z, dz))


def total_cost(float_sol, Z, ctrl=None):
    """``C(Z)`` for a single integer matrix, and the rotation attaining it."""
    ctrl = ctrl or SearchControl()
    ev = _CandidateEvaluator(float_sol, ctrl)
    R_cond = ev.conditional(vec(np.asarray(Z, dtype=float))[None])
    R, c = ev.fix(R_cond)
    return ambiguity_cost(float_sol, Z) + float(c[0]), R[0]


def hybrid_solve(design, epoch, aoa, F, ctrl=None):
    """Float solution followed by constrained ambiguity resolution."""
    model = assemble_hybrid(design, epoch, aoa, F)
    float_sol = solve_float(model)
    return float_sol, constrained_search(float_sol, ctrl)


def gnss_only_solve(design, epoch, F, ctrl=None):
    return hybrid_solve(design, epoch, None, F, ctrl)


def _fill_radial(W_D):
    """Give the direction dropped by each rank-2 AoA block the block's largest weight.

    The pseudo-inverse weight ignores residuals along the measured direction, so it
    cannot tell ``t`` from ``-t``; with two base stations the half-turn about
    ``t1 x t2`` then fits as well as the truth. Correct solutions leave a radial
    residual of second order in the angle error, so the fill does not move them.
    """
    W = np.array(W_D, dtype=float, copy=True)
    for k in range(0, W.shape[0], 3):
        blk = 0.5 * (W[k:k + 3, k:k + 3] + W[k:k + 3, k:k + 3].T)
        w, V = np.linalg.eigh(blk)
        w = np.where(w > NEAR_SINGULAR_RATIO * w[-1], w, w[-1])
        W[k:k + 3, k:k + 3] = (V * w) @ V.T
    return W


def fiveg_only_solve(aoa, ctrl=None):
    """Attitude from AoA observations alone.

    Minimizes ``|vec(D^T) - (I (x) E^T) vec(R)|^2`` in the AoA weight over SO(3),
    starting from the unweighted orthogonal-Procrustes solution. The radial
    direction of each rank-2 block is weighted as well (see ``_fill_radial``).

    Raises
    ------
    ObservabilityError
        Fewer than two base stations, or all directions collinear.
    """
    ctrl = ctrl or SearchControl()
    check_aoa_set(aoa)
    if aoa.n_bs < 2:
        raise ObservabilityError("attitude is unobservable from fewer than two AoA directions")
    s = np.linalg.svd(aoa.E, compute_uv=False)
    if s[1] <= 1e-9 * s[0]:
        raise ObservabilityError("AoA directions are collinear; attitude is unobservable")
    IE, W = aoa_blocks(replace(aoa, Q_D_weight=_fill_radial(aoa.Q_D_weight)))
    Wh = psd_sqrt_factor(W)
    U = Wh @ IE
    b = (Wh @ vec(aoa.D.T))[None]
    R0 = project_to_so3(aoa.E @ aoa.D.T)
    R, _ = minimize_quadratic_so3(U, b, R0[None], ctrl.so3_tolerance, ctrl.so3_max_iterations)
    return R[0]
