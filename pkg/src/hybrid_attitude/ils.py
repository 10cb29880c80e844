"""Integer least squares: LAMBDA decorrelation and k-best lattice enumeration.

The float vector ``a`` with covariance ``Q`` is transformed as ``z = Z^T a``,
``Q_z = Z^T Q Z`` for a unimodular integer ``Z``; candidates found in the
reduced space are mapped back with ``a = Z^-T z``.
"""

import math

import numpy as np
from numba import njit


def ldl_lower(Q):
    """Factor ``Q = L^T diag(D) L`` with ``L`` unit lower triangular.

    This is the backward (last-to-first) factorization used by LAMBDA, so the
    conditional variances ``D`` refer to conditioning on later entries.
    """
    Q = np.array(Q, dtype=float, copy=True)
    n = Q.shape[0]
    L = np.zeros((n, n))
    D = np.zeros(n)
    for i in range(n - 1, -1, -1):
        if Q[i, i] <= 0.0:
            raise np.linalg.LinAlgError("matrix is not positive definite")
        D[i] = Q[i, i]
        L[i, : i + 1] = Q[i, : i + 1] / np.sqrt(Q[i, i])
        for j in range(i):
            Q[j, : j + 1] -= L[i, : j + 1] * L[i, j]
        L[i, : i + 1] /= L[i, i]
    return L, D


def _round(x):
    # round half away from zero
    return math.floor(x + 0.5) if x >= 0 else -math.floor(-x + 0.5)


def decorrelate(Q_Z):
    """Integer Gauss transformations and permutations until no swap is possible.

    Returns
    -------
    transform : ndarray of int64, shape (n, n)
        Unimodular ``Z`` with ``Q_reduced = Z^T Q_Z Z``.
    Q_reduced : ndarray
    L, D : ndarray
        Factors of ``Q_reduced = L^T diag(D) L``; ``|L[j, i]| <= 0.5`` below the
        diagonal.
    inv_transpose : ndarray of int64
        ``Z^-T``, mapping reduced-space integers back to the original space.
    """
    Q_Z = np.asarray(Q_Z, dtype=float)
    n = Q_Z.shape[0]
    L, D = ldl_lower(Q_Z)
    iZt = np.eye(n, dtype=np.int64)
    i1 = n - 2
    swapped = True
    while swapped:
        i = n - 1
        swapped = False
        while not swapped and i > 0:
            i -= 1
            if i <= i1:
                for j in range(i + 1, n):
                    mu = _round(L[j, i])
                    if mu != 0:
                        L[j:, i] -= mu * L[j:, j]
                        iZt[:, j] += mu * iZt[:, i]
            delta = D[i] + L[i + 1, i] ** 2 * D[i + 1]
            if delta < D[i + 1]:
                lam = D[i + 1] * L[i + 1, i] / delta
                eta = D[i] / delta
                D[i] = eta * D[i + 1]
                D[i + 1] = delta
                a0 = L[i, :i].copy()
                a1 = L[i + 1, :i].copy()
                L[i, :i] = -L[i + 1, i] * a0 + a1
                L[i + 1, :i] = eta * a0 + lam * a1
                L[i + 1, i] = lam
                L[i + 2 :, [i, i + 1]] = L[i + 2 :, [i + 1, i]]
                iZt[:, [i, i + 1]] = iZt[:, [i + 1, i]]
                i1 = i
                swapped = True
    Z = np.rint(np.linalg.inv(iZt.T)).astype(np.int64)
    Q_red = Z.T @ Q_Z @ Z
    return Z, 0.5 * (Q_red + Q_red.T), L, D, iZt


@njit(cache=True)
def _kbest_search(ahat, L, D, ncands):
    # Schnorr-Euchner depth-first enumeration with a shrinking ellipsoid.
    n = ahat.shape[0]
    fixed = np.zeros((ncands, n))
    sqnorm = np.zeros(ncands)
    chi2 = 1.0e300
    dist = np.zeros(n)
    acond = np.zeros(n)
    zcond = np.zeros(n)
    step = np.zeros(n)
    S = np.zeros((n, n))
    count = 0
    k = n - 1
    acond[k] = ahat[k]
    zcond[k] = np.floor(acond[k] + 0.5)
    left = acond[k] - zcond[k]
    step[k] = 1.0 if left >= 0 else -1.0
    while True:
        newdist = dist[k] + left * left / D[k]
        if newdist < chi2:
            if k != 0:
                k -= 1
                dist[k] = newdist
                for c in range(k + 1):
                    S[k, c] = S[k + 1, c] + (zcond[k + 1] - acond[k + 1]) * L[k + 1, c]
                acond[k] = ahat[k] + S[k, k]
                zcond[k] = np.floor(acond[k] + 0.5)
                left = acond[k] - zcond[k]
                step[k] = 1.0 if left >= 0 else -1.0
            else:
                # candidates are kept in a binary max-heap keyed on distance
                if count < ncands:
                    c = count
                    count += 1
                    while c > 0 and sqnorm[(c - 1) // 2] < newdist:
                        p = (c - 1) // 2
                        sqnorm[c] = sqnorm[p]
                        fixed[c, :] = fixed[p, :]
                        c = p
                    sqnorm[c] = newdist
                    fixed[c, :] = zcond
                    if count == ncands:
                        chi2 = sqnorm[0]
                else:
                    c = 0
                    while True:
                        child = 2 * c + 1
                        if child >= ncands:
                            break
                        if child + 1 < ncands and sqnorm[child + 1] > sqnorm[child]:
                            child += 1
                        if sqnorm[child] <= newdist:
                            break
                        sqnorm[c] = sqnorm[child]
                        fixed[c, :] = fixed[child, :]
                        c = child
                    sqnorm[c] = newdist
                    fixed[c, :] = zcond
                    chi2 = sqnorm[0]
                zcond[0] += step[0]
                left = acond[0] - zcond[0]
                step[0] = -step[0] - (1.0 if step[0] > 0 else -1.0)
        else:
            if k == n - 1:
                break
            k += 1
            zcond[k] += step[k]
            left = acond[k] - zcond[k]
            step[k] = -step[k] - (1.0 if step[k] > 0 else -1.0)
    order = np.argsort(sqnorm, kind="mergesort")
    return fixed[order], sqnorm[order]


class IntegerSearch:
    """Decorrelated k-best enumerator for one float vector and covariance.

    The decorrelation is computed once, so repeated calls of :meth:`enumerate`
    with growing counts (as in search-and-expansion) only redo the tree search.
    """

    def __init__(self, a_float, Q):
        self.a_float = np.asarray(a_float, dtype=float).ravel()
        self.Z, self.Q_reduced, self.L, self.D, self.iZt = decorrelate(Q)
        z = self.Z.T @ self.a_float
        # search around the fractional part; the integer shift is added back
        self._shift = np.rint(z)
        self._zfrac = z - self._shift

    def enumerate(self, count):
        """The ``count`` best integer vectors, as (candidates (count, n), distances)."""
        if count < 1:
            raise ValueError("count must be >= 1")
        zc, dist = _kbest_search(self._zfrac, self.L, self.D, int(count))
        cands = (zc + self._shift) @ self.iZt.T.astype(float)
        return np.rint(cands).astype(np.int64), dist


def ils_enumerate(z_float, Q_Z, count):
    """Integer vectors closest to ``z_float`` in the ``Q_Z^-1`` metric.

    Parameters
    ----------
    z_float : array_like, shape (n,)
    Q_Z : array_like, shape (n, n)
        Symmetric positive definite covariance of ``z_float``.
    count : int
        Number of candidates to return.

    Returns
    -------
    candidates : ndarray of int64, shape (count, n)
        Sorted by ascending squared distance.
    distances : ndarray, shape (count,)
        ``(z - z_float)^T Q_Z^-1 (z - z_float)`` for every candidate.
    """
    return IntegerSearch(z_float, Q_Z).enumerate(count)
