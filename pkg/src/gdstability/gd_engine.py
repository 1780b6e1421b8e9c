"""Full-batch gradient descent, step-size schedules and the SGD baseline."""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DivergenceError, UsageError
from .loss_zoo import Dataset, LossModel, empirical_risk, erm_minimizer, sample_grads, sample_losses

SCHEDULES = ("constant", "inverse-t", "half-inv-beta", "sc-optimal")


@dataclass(frozen=True)
class StepSchedule:
    kind: str
    c: Optional[float] = None

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise UsageError(f"unknown schedule {self.kind!r}")
        if self.kind in ("constant", "inverse-t"):
            if self.c is None or not self.c > 0:
                raise UsageError(f"{self.kind} needs a positive constant")

    @classmethod
    def constant(cls, c):
        return cls("constant", float(c))

    @classmethod
    def inverse_t(cls, C):
        return cls("inverse-t", float(C))

    @classmethod
    def half_inv_beta(cls):
        return cls("half-inv-beta")

    @classmethod
    def sc_optimal(cls):
        return cls("sc-optimal")


def schedule_eta(s: StepSchedule, t: int, beta: float, gamma: Optional[float] = None) -> float:
    if t < 1:
        raise UsageError("t starts at 1")
    if s.kind == "constant":
        return s.c
    if s.kind == "inverse-t":
        return s.c / t
    if s.kind == "half-inv-beta":
        return 1.0 / (2.0 * beta)
    if gamma is None:
        raise UsageError("sc-optimal needs gamma")
    return 2.0 / (beta + gamma)


def step_sizes(s: StepSchedule, T: int, beta: float, gamma: Optional[float] = None) -> np.ndarray:
    return np.array([schedule_eta(s, t, beta, gamma) for t in range(1, T + 1)], dtype=float)


@dataclass(frozen=True, eq=False)
class Trajectory:
    iterates: np.ndarray      # (T+1, d): W_1 .. W_{T+1}
    etas: np.ndarray          # (T,)
    risks: np.ndarray         # (T+1,): R_S(W_t)
    tracked_index: int        # 1-based
    tracked_sq_norms: np.ndarray  # (T,): ||grad f(W_t, z_i)||^2

    @property
    def T(self) -> int:
        return self.etas.shape[0]

    @property
    def output(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def path_error(self) -> float:
        return float(self.etas @ self.tracked_sq_norms)


def gd_batch(model: LossModel, X, y, W1, etas, record=False):
    """Run full-batch GD on a batch of datasets at once.

    X has shape (B, n, d).  Per-sample gradients are reduced over the sample
    axis, which numpy accumulates in index order for a non-innermost axis.
    Returns terminal weights (B, d), the per-dataset path sum
    sum_t eta_t mean_j ||grad f(W_t, z_j)||^2, and a (B,) mask of runs that
    stayed finite.  With ``record`` the full iterate stack (T+1, B, d) is
    returned as a fourth item.
    """
    B, n, d = X.shape
    W = np.broadcast_to(np.asarray(W1, dtype=float), (B, d)).copy()
    path = np.zeros(B)
    ok = np.ones(B, dtype=bool)
    hist = [W.copy()] if record else None
    with np.errstate(all="ignore"):
        for eta in etas:
            G = sample_grads(model, W, X, y)
            path += eta * np.einsum("bnd,bnd->bn", G, G).mean(axis=1)
            W = W - eta * G.mean(axis=1)
            bad = ~np.all(np.isfinite(W), axis=1)
            if bad.any():
                ok &= ~bad
                W[bad] = 0.0
            if record:
                hist.append(W.copy())
    if record:
        return W, path, ok, np.stack(hist)
    return W, path, ok


def _check_run(S, W1, T, i, model):
    if T < 0:
        raise UsageError("T must be non-negative")
    if not 1 <= i <= S.n:
        raise UsageError(f"tracked index {i} outside 1..{S.n}")
    W1 = np.atleast_1d(np.asarray(W1, dtype=float))
    if W1.shape != (model.d,) or S.d != model.d:
        raise UsageError("dimension mismatch between model, data and W1")
    return W1


def run_gd(model: LossModel, S: Dataset, W1, s: StepSchedule, T: int,
           tracked_index: int = 1) -> Trajectory:
    """W_{t+1} = W_t - (eta_t / n) sum_j grad f(W_t, z_j), for t = 1..T."""
    W1 = _check_run(S, W1, T, tracked_index, model)
    etas = step_sizes(s, T, model.beta, model.gamma)
    iterates = [W1]
    norms = []
    W = W1
    with np.errstate(all="ignore"):
        for t, eta in enumerate(etas, start=1):
            G = sample_grads(model, W, S.X, S.y)
            g_i = G[tracked_index - 1]
            norms.append(g_i @ g_i)
            W = W - eta * G.mean(axis=0)
            if not np.all(np.isfinite(W)):
                raise DivergenceError(t)
            iterates.append(W)
    iterates = np.array(iterates)
    risks = sample_losses(model, iterates, S.X[None], None if S.y is None else S.y[None]).mean(axis=1)
    return Trajectory(iterates, etas, risks, tracked_index, np.array(norms, dtype=float))


def path_error(traj: Trajectory) -> float:
    return traj.path_error


def opt_error(model: LossModel, traj: Trajectory, S: Dataset, w_star=None) -> float:
    """R_S(A(S)) - R_S(W*_S)."""
    if w_star is None:
        w_star = erm_minimizer(model, S)
    return empirical_risk(model, traj.output, S) - empirical_risk(model, w_star, S)


def run_sgd_baseline(model: LossModel, S: Dataset, W1, s: StepSchedule, T: int,
                     seed, tracked_index: int = 1) -> Trajectory:
    """Single-sample SGD with a uniformly drawn index per step."""
    W1 = _check_run(S, W1, T, tracked_index, model)
    etas = step_sizes(s, T, model.beta, model.gamma)
    picks = np.random.default_rng(seed).integers(0, S.n, size=T)
    iterates = [W1]
    norms = []
    W = W1
    with np.errstate(all="ignore"):
        for t, (eta, j) in enumerate(zip(etas, picks), start=1):
            G = sample_grads(model, W, S.X, S.y)
            norms.append(G[tracked_index - 1] @ G[tracked_index - 1])
            W = W - eta * G[j]
            if not np.all(np.isfinite(W)):
                raise DivergenceError(t)
            iterates.append(W)
    iterates = np.array(iterates)
    risks = sample_losses(model, iterates, S.X[None], None if S.y is None else S.y[None]).mean(axis=1)
    return Trajectory(iterates, etas, risks, tracked_index, np.array(norms, dtype=float))


def sgd_batch(model: LossModel, X, y, W1, etas, picks):
    """SGD over a batch of datasets; picks has shape (B, T) of 0-based indices."""
    B, n, d = X.shape
    W = np.broadcast_to(np.asarray(W1, dtype=float), (B, d)).copy()
    rows = np.arange(B)
    ok = np.ones(B, dtype=bool)
    with np.errstate(all="ignore"):
        for t, eta in enumerate(etas):
            j = picks[:, t]
            Xj = X[rows, j][:, None, :]
            yj = None if y is None else y[rows, j][:, None]
            W = W - eta * sample_grads(model, W, Xj, yj)[:, 0, :]
            bad = ~np.all(np.isfinite(W), axis=1)
            if bad.any():
                ok &= ~bad
                W[bad] = 0.0
    return W, ok
