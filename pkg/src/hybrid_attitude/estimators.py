"""scikit-learn style wrapper around the functional estimator.

There is nothing to train: ``fit`` solves one epoch (float solution, ambiguity
search, fixed attitude) and ``predict`` rotates body-frame vectors into the
local frame with the fitted attitude. ``get_params``/``set_params`` come from
``BaseEstimator``, so the wrapper can be cloned and configured like any other.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .estimator import fiveg_only_solve, hybrid_solve
from .exceptions import DegenerateInputError
from .fiveg_model import AoaSet, check_aoa_set
from .gnss_model import GnssDesign, GnssEpoch
from .so3 import SearchControl


def check_baselines(F):
    F = np.asarray(F, dtype=float)
    if F.ndim != 2 or F.shape[0] != 3 or not np.all(np.isfinite(F)):
        raise DegenerateInputError("baseline matrix must be a finite 3 x M array")
    return F


def check_body_vectors(V):
    """Accept one 3-vector or an (n, 3) array; returns (n, 3)."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[None]
    if V.ndim != 2 or V.shape[1] != 3 or not np.all(np.isfinite(V)):
        raise DegenerateInputError("expected finite vectors of shape (n, 3)")
    return V


class HybridAttitudeEstimator(BaseEstimator):
    """Attitude from one GNSS epoch and optional AoA measurements.

    Parameters
    ----------
    method : {"hybrid", "gnss_only", "fiveg_only"}
    initial_candidate_count, expansion_factor, max_candidates : search settings
    so3_tolerance, so3_max_iterations : SO(3) solver settings

    Attributes
    ----------
    rotation_ : ndarray (3, 3)
        Fixed attitude (body to local frame).
    ambiguities_ : ndarray of int, or None for ``fiveg_only``
    float_solution_, fixed_solution_ : solver outputs (None for ``fiveg_only``)
    """

    def __init__(self, method="hybrid", initial_candidate_count=2, expansion_factor=2.0,
                 max_candidates=10000, so3_tolerance=1e-10, so3_max_iterations=100):
        self.method = method
        self.initial_candidate_count = initial_candidate_count
        self.expansion_factor = expansion_factor
        self.max_candidates = max_candidates
        self.so3_tolerance = so3_tolerance
        self.so3_max_iterations = so3_max_iterations

    def _control(self):
        return SearchControl(self.initial_candidate_count, self.expansion_factor,
                             self.max_candidates, self.so3_tolerance, self.so3_max_iterations)

    def fit(self, design=None, epoch=None, aoa=None, F=None):
        """Solve one epoch.

        ``design``/``epoch``/``F`` are required unless ``method == "fiveg_only"``;
        ``aoa`` is required for ``hybrid`` and ``fiveg_only``.
        """
        ctrl = self._control()
        if self.method not in ("hybrid", "gnss_only", "fiveg_only"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.method != "gnss_only":
            if not isinstance(aoa, AoaSet):
                raise DegenerateInputError(f"method {self.method!r} needs an AoaSet")
            check_aoa_set(aoa)
        if self.method == "fiveg_only":
            self.rotation_ = fiveg_only_solve(aoa, ctrl)
            self.ambiguities_ = self.float_solution_ = self.fixed_solution_ = None
            return self
        if not isinstance(design, GnssDesign) or not isinstance(epoch, GnssEpoch):
            raise DegenerateInputError("a GnssDesign and a GnssEpoch are required")
        F = check_baselines(F)
        fl, fx = hybrid_solve(design, epoch, aoa if self.method == "hybrid" else None, F, ctrl)
        self.float_solution_, self.fixed_solution_ = fl, fx
        self.rotation_ = fx.R_fixed
        self.ambiguities_ = fx.Z_fixed
        return self

    def predict(self, body_vectors):
        """Local-frame coordinates ``R @ v`` of body-frame vectors, shape (n, 3)."""
        if not hasattr(self, "rotation_"):
            raise NotFittedError("call fit before predict")
        return check_body_vectors(body_vectors) @ self.rotation_.T
