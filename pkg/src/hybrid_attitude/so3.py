"""Quadratic minimization over SO(3).

Every attitude problem in the package has the form

    min_{R in SO(3)} || U vec(R) - b ||^2

(weighted nearest rotation: ``U = W^(1/2)``, ``b = U vec(R0)``; AoA-only attitude:
``U = W^(1/2) kron(I, E^T)``, ``b = W^(1/2) vec(D^T)``). Problems are solved in
batches with a Riemannian Newton iteration on ``R exp(skew(delta))``: the exact
Hessian, shifted to positive definite where needed, steps capped at one radian,
and a backtracking line search that keeps every step a descent step. Each problem
is started from its own initial rotation plus its three half-turns about the body
axes, and the best basin is kept.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .exceptions import NonConvergenceError
from .frames import project_to_so3, project_to_so3_batch, vec

_GENERATORS = np.array(
    [
        [[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]],
        [[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]],
        [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]],
    ]
)
_MAX_STEP = 1.0  # radians
_HALF_TURNS = np.array([np.eye(3), np.diag([1.0, -1.0, -1.0]),
                        np.diag([-1.0, 1.0, -1.0]), np.diag([-1.0, -1.0, 1.0])])


@dataclass(frozen=True)
class SearchControl:
    initial_candidate_count: int = 2
    expansion_factor: float = 2.0
    max_candidates: int = 10000
    so3_tolerance: float = 1e-10
    so3_max_iterations: int = 100

    def __post_init__(self):
        if self.initial_candidate_count < 1 or self.max_candidates < 1:
            raise ValueError("candidate counts must be positive")
        if not self.expansion_factor > 1.0:
            raise ValueError("expansion_factor must exceed 1")
        if self.so3_tolerance <= 0 or self.so3_max_iterations < 1:
            raise ValueError("SO(3) solver settings must be positive")


def _vec_batch(R):
    return R.transpose(0, 2, 1).reshape(R.shape[0], 9)


@njit(cache=True)
def _expm(d):
    # Rodrigues formula for exp(skew(d))
    theta = np.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
    K = np.array([[0.0, -d[2], d[1]], [d[2], 0.0, -d[0]], [-d[1], d[0], 0.0]])
    if theta < 1e-8:
        a = 1.0 - theta * theta / 6.0
        c = 0.5 - theta * theta / 24.0
    else:
        a = np.sin(theta) / theta
        c = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + c * (K @ K)


@njit(cache=True)
def _cost(U, b, R):
    e = U @ R.T.copy().ravel() - b
    return e @ e


@njit(cache=True)
def _gradient(U, b, R, J):
    s = U.T @ (U @ R.T.copy().ravel() - b)
    for k in range(3):
        J[:, k] = (R @ _GENERATORS[k]).T.copy().ravel()
    return 2.0 * (J.T @ s), s


@njit(cache=True)
def _newton_kernel(U, b, R0, tol, max_iter, max_step):
    B = R0.shape[0]
    m = U.shape[0]
    R_out = np.empty_like(R0)
    cost_out = np.empty(B)
    conv = np.zeros(B, dtype=np.bool_)
    J = np.empty((9, 3))
    J2 = np.empty((9, 3))
    unorm = np.sqrt(np.sum(U * U))
    for p in range(B):
        R = R0[p].copy()
        cost = _cost(U, b[p], R)
        # gradient scale: |U| times the largest possible residual norm
        gtol = tol * max(1.0, unorm * (unorm * np.sqrt(3.0) + np.sqrt(b[p] @ b[p])))
        polish = 2
        for _ in range(max_iter + polish + 1):
            grad, s = _gradient(U, b[p], R, J)
            S = s.reshape(3, 3).T.copy()  # unvec
            gnorm = np.sqrt(grad @ grad)
            if gnorm <= gtol:
                conv[p] = True
            if conv[p]:
                # a few extra Newton steps reach full precision at negligible cost
                if polish == 0:
                    break
                polish -= 1
            elif _ >= max_iter:
                break
            UJ = U @ J if m > 0 else np.zeros((0, 3))
            X = S.T @ R
            hess = 2.0 * (UJ.T @ UJ) + (X + X.T) - 2.0 * np.trace(X) * np.eye(3)
            # shift an indefinite Hessian to positive definite (modified Newton)
            w = np.linalg.eigvalsh(hess)
            floor = 1e-10 * max(abs(w[2]), 1e-300)
            if w[0] < floor:
                hess = hess + (floor - w[0]) * np.eye(3)
            step = -np.linalg.solve(hess, grad)
            norm = np.sqrt(step @ step)
            if norm > max_step:
                step *= max_step / norm
            t = 1.0
            accepted = False
            for _ls in range(40):
                trial = R @ _expm(t * step)
                ct = _cost(U, b[p], trial)
                if ct < cost:
                    accepted = True
                elif _ls == 0 and ct <= cost + 1e-14 * max(cost, 1.0):
                    # cost is flat to rounding near the minimum: accept the full
                    # Newton step if it clearly reduces the gradient instead
                    g_trial, _s = _gradient(U, b[p], trial, J2)
                    accepted = np.sqrt(g_trial @ g_trial) < 0.5 * gnorm
                if accepted:
                    R = trial
                    cost = ct
                    break
                t *= 0.5
            if not accepted:
                # no descent possible at machine precision: stationary point
                conv[p] = True
                break
        R_out[p] = R
        cost_out[p] = cost
    return R_out, cost_out, conv


def _newton(U, b, R, tol, max_iter):
    """Riemannian Newton for a batch of problems. Returns (R, cost, converged)."""
    R, _, converged = _newton_kernel(
        np.ascontiguousarray(U, dtype=float), np.ascontiguousarray(b, dtype=float),
        np.ascontiguousarray(R, dtype=float), tol, int(max_iter), _MAX_STEP,
    )
    # re-orthonormalize accumulated products
    R = project_to_so3_batch(R)
    return R, quadratic_cost(U, b, R), converged


def psd_sqrt_factor(W, rel_floor=0.0):
    """Return ``U`` with ``U^T U = W`` (rows for eigenvalues above the floor)."""
    W = 0.5 * (np.asarray(W, dtype=float) + np.asarray(W, dtype=float).T)
    w, V = np.linalg.eigh(W)
    keep = w > rel_floor * max(w.max(), 0.0)
    keep &= w > 0
    return np.sqrt(w[keep])[:, None] * V[:, keep].T


def quadratic_cost(U, b, R):
    """``|| U vec(R) - b ||^2`` for a stack of rotations, shape (B,)."""
    e = _vec_batch(R) @ U.T - b
    return np.einsum("bi,bi->b", e, e)


def sphere_lower_bound(U, b, iterations=60):
    """Lower bound of ``min || U vec(R) - b_i ||^2`` over SO(3), shape (B,).

    Relaxes SO(3) to the sphere ``|vec(R)|^2 = 3`` and evaluates the Lagrange dual
    ``q(mu) = |b|^2 - g^T (W - mu I)^-1 g + 3 mu`` (``W = U^T U``, ``g = U^T b``),
    which bounds the relaxed minimum from below for every ``mu`` below the smallest
    eigenvalue of ``W``. ``mu`` is found by bisection on ``q'(mu) = 3 - |r(mu)|^2``.
    """
    b = np.atleast_2d(np.asarray(b, dtype=float))
    w, V = np.linalg.eigh(U.T @ U)
    g2 = ((b @ U) @ V) ** 2
    bb = np.einsum("bi,bi->b", b, b)
    w0 = w[0]
    lo = np.full(b.shape[0], w0 - np.sqrt(g2.sum(axis=1) / 3.0) - 1.0)
    hi = np.full(b.shape[0], w0)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        phi = np.sum(g2 / (w[None] - mid[:, None]) ** 2, axis=1)
        up = phi <= 3.0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
    q = bb - np.sum(g2 / (w[None] - lo[:, None]), axis=1) + 3.0 * lo
    return np.maximum(q, 0.0)


def minimize_quadratic_so3(U, b, R_init, tol=1e-10, max_iter=100):
    """Solve a batch of problems ``min || U vec(R) - b_i ||^2`` over SO(3).

    Parameters
    ----------
    U : ndarray, shape (m, 9)
    b : ndarray, shape (B, m)
    R_init : ndarray, shape (B, 3, 3)
        Starting rotation per problem; the three half-turns about its body axes are
        tried as well.

    Returns
    -------
    R : ndarray, shape (B, 3, 3)
    cost : ndarray, shape (B,)

    Raises
    ------
    NonConvergenceError
        When, for some problem, none of the four starts reaches the gradient
        tolerance within ``max_iter`` iterations.
    """
    U = np.asarray(U, dtype=float)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    R_init = np.asarray(R_init, dtype=float).reshape(-1, 3, 3)
    B = R_init.shape[0]
    starts = (R_init[:, None] @ _HALF_TURNS[None]).reshape(4 * B, 3, 3)
    b4 = np.repeat(b, 4, axis=0)
    R, cost, conv = _newton(U, b4, starts, tol, max_iter)
    R, cost, conv = R.reshape(B, 4, 3, 3), cost.reshape(B, 4), conv.reshape(B, 4)
    masked = np.where(conv, cost, np.inf)
    best = np.argmin(masked, axis=1)
    failed = ~conv.any(axis=1)
    if failed.any():
        i = int(np.flatnonzero(failed)[0])
        j = int(np.argmin(cost[i]))
        raise NonConvergenceError(
            "no SO(3) restart converged", best_rotation=R[i, j], best_cost=float(cost[i, j])
        )
    rows = np.arange(B)
    return R[rows, best], cost[rows, best]


def weighted_so3_fix(R_cond, weight, ctrl=None):
    """Nearest rotation to ``R_cond`` in the metric ``weight`` (9x9, on ``vec``).

    Minimizes ``vec(R - R_cond)^T weight vec(R - R_cond)`` starting from the
    Frobenius projection of ``R_cond`` and its three half-turns.

    Returns
    -------
    R : ndarray, shape (3, 3)
    cost : float
    """
    ctrl = ctrl or SearchControl()
    U = psd_sqrt_factor(weight)
    R_cond = np.asarray(R_cond, dtype=float)
    b = (U @ vec(R_cond))[None]
    R, cost = minimize_quadratic_so3(
        U, b, project_to_so3(R_cond)[None], ctrl.so3_tolerance, ctrl.so3_max_iterations
    )
    return R[0], float(cost[0])
