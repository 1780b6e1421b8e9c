"""scikit-learn wrapper around full-batch GD for the labeled loss families."""
import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import UsageError
from .gd_engine import StepSchedule, run_gd
from .loss_zoo import LABELED, SIGMOID_CURVATURE, Dataset, LossModel

_CURVATURE = {"least-squares": 1.0, "ridge": 1.0, "logistic": 0.25,
              "nonconvex-sigmoid-squared": SIGMOID_CURVATURE}


class FullBatchGD(RegressorMixin, BaseEstimator):
    """Linear model trained by T steps of full-batch gradient descent from zero.

    beta is read off the training features as the families' curvature times
    max ||x||^2 (plus lam for ridge). ``predict`` returns the linear score X @ w.
    """

    def __init__(self, family="least-squares", T=100, schedule="half-inv-beta",
                 schedule_c=None, lam=0.0):
        self.family = family
        self.T = T
        self.schedule = schedule
        self.schedule_c = schedule_c
        self.lam = lam

    def _model(self, X):
        if self.family not in LABELED:
            raise UsageError(f"family must be one of {', '.join(LABELED)}")
        r2 = float(np.max(np.einsum("ij,ij->i", X, X)))
        if self.family == "ridge":
            if not self.lam > 0:
                raise UsageError("ridge needs lam > 0")
            return LossModel("ridge", X.shape[1], r2 + self.lam, self.lam, self.lam, self.lam)
        if self.lam:
            raise UsageError(f"{self.family} takes no ridge weight")
        if r2 == 0:
            raise UsageError("all-zero features give beta = 0")
        return LossModel(self.family, X.shape[1], _CURVATURE[self.family] * r2)

    def _schedule(self, model):
        c = self.schedule_c
        if self.schedule == "constant":
            return StepSchedule.constant(c if c is not None else 1.0 / model.beta)
        if self.schedule == "inverse-t":
            return StepSchedule.inverse_t(c if c is not None else 0.5 / model.beta)
        if self.schedule == "half-inv-beta":
            return StepSchedule.half_inv_beta()
        if self.schedule == "sc-optimal":
            return StepSchedule.sc_optimal()
        raise UsageError(f"unknown schedule {self.schedule!r}")

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if not (isinstance(self.T, (int, np.integer)) and self.T >= 0):
            raise UsageError("T must be a non-negative integer")
        model = self._model(X)
        traj = run_gd(model, Dataset(X, y), np.zeros(X.shape[1]), self._schedule(model), int(self.T))
        self.model_ = model
        self.trajectory_ = traj
        self.coef_ = traj.output
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return X @ self.coef_
