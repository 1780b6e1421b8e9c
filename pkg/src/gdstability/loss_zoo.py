"""Smooth loss families, bounded sampling distributions and ERM solvers.

Every family except quadratic-point is a function of the margin u = w.x,
so losses, per-sample gradients and Hessians come from three scalar
derivatives of phi(u, y).  All array helpers accept a leading batch shape:
weights ``(..., d)``, features ``(..., n, d)``, labels ``(..., n)``.
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConvergenceError, NumericOverflowError, UsageError

FAMILIES = ("quadratic-point", "least-squares", "ridge", "logistic",
            "nonconvex-sigmoid-squared")
LABELED = FAMILIES[1:]

# sup_u |d^2/du^2 (sigmoid(u) - y)^2| over y in [0, 1]:
# 2 * (max sigmoid'^2 + max |sigmoid''|) = 2 * (1/16 + 1/(6 sqrt 3))
SIGMOID_CURVATURE = 2.0 * (1.0 / 16.0 + 1.0 / (6.0 * np.sqrt(3.0)))

ERM_TOL = 1e-10


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


@dataclass(frozen=True)
class Example:
    features: np.ndarray
    label: Optional[float] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered sample S.  ``y`` is None for quadratic-point."""

    X: np.ndarray
    y: Optional[np.ndarray] = None

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        object.__setattr__(self, "X", X)
        if self.y is not None:
            y = np.asarray(self.y, dtype=float).reshape(-1)
            if y.shape[0] != X.shape[0]:
                raise UsageError("features and labels differ in length")
            object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.n

    def example(self, i: int) -> Example:
        """The i-th example, 1-based."""
        if not 1 <= i <= self.n:
            raise UsageError(f"index {i} outside 1..{self.n}")
        label = None if self.y is None else float(self.y[i - 1])
        return Example(self.X[i - 1].copy(), label)

    @classmethod
    def from_examples(cls, examples):
        X = np.array([np.atleast_1d(np.asarray(z.features, dtype=float)) for z in examples])
        if examples and examples[0].label is not None:
            return cls(X, np.array([z.label for z in examples], dtype=float))
        return cls(X)


@dataclass(frozen=True)
class LossModel:
    family: str
    d: int
    beta: float
    gamma: Optional[float] = None
    mu: Optional[float] = None
    lam: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UsageError(f"unknown family {self.family!r}")
        if self.d < 1:
            raise UsageError("dimension must be positive")
        if not self.beta > 0:
            raise UsageError("beta must be positive")
        if self.gamma is not None and self.gamma < 0:
            raise UsageError("gamma must be non-negative")
        if self.mu is not None and not self.mu > 0:
            raise UsageError("mu must be positive")

    @property
    def labeled(self) -> bool:
        return self.family in LABELED

    @property
    def convex(self) -> bool:
        return self.family != "nonconvex-sigmoid-squared"


@dataclass(frozen=True, eq=False)
class DataDistribution:
    """Product-uniform features on the box [low, high] plus a bounded label rule.

    least-squares / ridge: y = w_true.x + U[-noise, noise]
    logistic:              y = +1 with probability sigmoid(w_true.x), else -1
    sigmoid-squared:       y = sigmoid(w_true.x) + U[-noise, noise]
    """

    family: str
    low: np.ndarray
    high: np.ndarray
    noise: float = 0.0
    w_true: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        low = np.asarray(self.low, dtype=float).reshape(-1)
        high = np.asarray(self.high, dtype=float).reshape(-1)
        if low.shape != high.shape or np.any(high < low):
            raise UsageError("box bounds must satisfy low <= high coordinatewise")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        if self.noise < 0:
            raise UsageError("noise must be non-negative")
        if self.family in LABELED:
            w = np.ones(self.d) / np.sqrt(self.d) if self.w_true is None else self.w_true
            object.__setattr__(self, "w_true", np.asarray(w, dtype=float).reshape(-1))
            if self.w_true.shape[0] != self.d:
                raise UsageError("w_true dimension mismatch")
        if self.family == "nonconvex-sigmoid-squared":
            # labels must stay in [0, 1] without clipping so that w_true is the population minimizer
            if self.noise > _sigmoid(-self.margin_bound()):
                raise UsageError("noise too large: labels would leave [0, 1]")

    @property
    def d(self) -> int:
        return self.low.shape[0]

    def feature_norm_bound(self) -> float:
        """max ||x||^2 over the box."""
        return float(np.sum(np.maximum(self.low ** 2, self.high ** 2)))

    def margin_bound(self) -> float:
        return float(np.abs(self.w_true) @ np.maximum(np.abs(self.low), np.abs(self.high)))

    def moments(self):
        mean = 0.5 * (self.low + self.high)
        var = (self.high - self.low) ** 2 / 12.0
        return mean, var

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        X = rng.uniform(self.low, self.high, size=(n, self.d))
        if self.family == "quadratic-point":
            return Dataset(X)
        u = X @ self.w_true
        if self.family == "logistic":
            y = np.where(rng.uniform(size=n) < _sigmoid(u), 1.0, -1.0)
        elif self.family == "nonconvex-sigmoid-squared":
            y = _sigmoid(u) + rng.uniform(-self.noise, self.noise, size=n)
        else:
            y = u + rng.uniform(-self.noise, self.noise, size=n)
        return Dataset(X, y)

    def sample_example(self, rng: np.random.Generator) -> Example:
        return self.sample(1, rng).example(1)


def make_distribution(family: str, d: int, *, low=None, high=None, scale: float = 1.0,
                      decay: float = 0.0, noise: float = 0.0, w_true=None) -> DataDistribution:
    """Default boxes: [0, 1]^d for quadratic-point, else half-widths scale * 2^(-decay k)."""
    if family not in FAMILIES:
        raise UsageError(f"unknown family {family!r}")
    if low is None or high is None:
        if family == "quadratic-point":
            low, high = np.zeros(d), np.ones(d)
        else:
            half = scale * 2.0 ** (-decay * np.arange(d))
            low, high = -half, half
    return DataDistribution(family, np.broadcast_to(low, (d,)), np.broadcast_to(high, (d,)),
                            noise, w_true)


def make_model(dist: DataDistribution, lam: float = 0.0, mu: Optional[float] = None) -> LossModel:
    """Declare beta (and gamma, mu where analytic) from the distribution's box."""
    family, d = dist.family, dist.d
    r2 = dist.feature_norm_bound()
    if family == "quadratic-point":
        return LossModel(family, d, 1.0, 1.0, mu or 1.0)
    if family == "ridge":
        if not lam > 0:
            raise UsageError("ridge needs lam > 0")
        return LossModel(family, d, r2 + lam, lam, mu or lam, lam)
    if lam:
        raise UsageError(f"{family} takes no ridge weight")
    if r2 == 0:
        raise UsageError("degenerate feature box gives beta = 0")
    if family == "least-squares":
        return LossModel(family, d, r2, None, mu)
    if family == "logistic":
        return LossModel(family, d, r2 / 4.0, None, mu)
    return LossModel(family, d, SIGMOID_CURVATURE * r2, None, mu)


# ---------------------------------------------------------------- scalar parts

def _phi(family, u, y):
    if family in ("least-squares", "ridge"):
        r = u - y
        return 0.5 * r * r, r, np.ones_like(u)
    if family == "logistic":
        yu = y * u
        return np.logaddexp(0.0, -yu), -y * _sigmoid(-yu), _sigmoid(yu) * _sigmoid(-yu)
    s = _sigmoid(u)
    ds = s * (1.0 - s)
    r = s - y
    return r * r, 2.0 * r * ds, 2.0 * (ds * ds + r * ds * (1.0 - 2.0 * s))


def _margins(W, X):
    return np.einsum("...nd,...d->...n", X, W)


def sample_losses(model: LossModel, W, X, y=None):
    """Per-sample losses, shape (..., n)."""
    if model.family == "quadratic-point":
        D = W[..., None, :] - X
        return 0.5 * np.einsum("...nd,...nd->...n", D, D)
    val = _phi(model.family, _margins(W, X), y)[0]
    if model.lam:
        val = val + 0.5 * model.lam * np.einsum("...d,...d->...", W, W)[..., None]
    return val


def sample_grads(model: LossModel, W, X, y=None):
    """Per-sample gradients, shape (..., n, d)."""
    if model.family == "quadratic-point":
        return W[..., None, :] - X
    G = _phi(model.family, _margins(W, X), y)[1][..., None] * X
    if model.lam:
        G = G + model.lam * W[..., None, :]
    return G


def risk_grad_hess(model: LossModel, w, X, y=None):
    """R_S, its gradient and Hessian for a single dataset."""
    n, d = X.shape
    if model.family == "quadratic-point":
        D = w - X
        return 0.5 * np.sum(D * D) / n, D.mean(axis=0), np.eye(d)
    val, d1, d2 = _phi(model.family, X @ w, y)
    H = (X.T * d2) @ X / n + model.lam * np.eye(d)
    r = val.mean() + 0.5 * model.lam * (w @ w)
    return r, X.T @ d1 / n + model.lam * w, H


# ------------------------------------------------------------------ public ops

def _check_point(model, w, z):
    w = np.atleast_1d(np.asarray(w, dtype=float))
    x = np.atleast_1d(np.asarray(z.features, dtype=float))
    if w.shape != (model.d,) or x.shape != (model.d,):
        raise UsageError(f"expected dimension {model.d}, got w{w.shape} x{x.shape}")
    if model.labeled and z.label is None:
        raise UsageError(f"{model.family} needs a labeled example")
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(x))):
        raise UsageError("non-finite input")
    y = None if z.label is None else np.array([float(z.label)])
    return w, x[None, :], y


def eval_loss(model: LossModel, w, z: Example) -> float:
    w, X, y = _check_point(model, w, z)
    val = float(sample_losses(model, w, X, y)[0])
    if not np.isfinite(val):
        raise NumericOverflowError("loss overflowed")
    return val


def eval_grad(model: LossModel, w, z: Example) -> np.ndarray:
    w, X, y = _check_point(model, w, z)
    g = sample_grads(model, w, X, y)[0]
    if not np.all(np.isfinite(g)):
        raise NumericOverflowError("gradient overflowed")
    return g


def empirical_risk(model: LossModel, w, S: Dataset) -> float:
    if S.n == 0:
        raise UsageError("empty dataset")
    return float(sample_losses(model, np.asarray(w, dtype=float), S.X, S.y).mean())


def empirical_grad(model: LossModel, w, S: Dataset) -> np.ndarray:
    if S.n == 0:
        raise UsageError("empty dataset")
    return sample_grads(model, np.asarray(w, dtype=float), S.X, S.y).mean(axis=0)


def self_bounding_check(model: LossModel, w, z: Example) -> bool:
    g = eval_grad(model, w, z)
    return bool(g @ g <= 4.0 * model.beta * eval_loss(model, w, z) + 1e-9)


def newton_solve(model: LossModel, X, y, w0, tol: float = ERM_TOL, max_iter: int = 500):
    """Damped Newton on R_S with a 1/beta gradient-step fallback.

    Indefinite Hessians (sigmoid family) are shifted to positive definite,
    so the iteration settles at a local minimizer near w0.
    """
    w = np.array(w0, dtype=float)
    d = w.shape[0]
    gn = np.inf
    for _ in range(max_iter):
        r, g, H = risk_grad_hess(model, w, X, y)
        gn = float(np.linalg.norm(g))
        if not np.isfinite(gn):
            break
        if gn <= tol:
            return w, gn
        lo = np.linalg.eigvalsh(H)[0]
        shift = 0.0 if lo > 1e-12 * model.beta else 1e-6 * model.beta - lo
        p = np.linalg.solve(H + shift * np.eye(d), -g)
        slope = g @ p
        if shift == 0.0 and gn < 1e-6:
            # quadratic convergence region; line search is below rounding level here
            w = w + p
            continue
        step = 1.0
        while step > 1e-10:
            cand = w + step * p
            if risk_grad_hess(model, cand, X, y)[0] <= r + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            cand = w - g / model.beta
        w = cand
    raise ConvergenceError("ERM solver did not reach tolerance", gn)


def _closed_form_erm(model, X, y):
    n, d = X.shape
    if model.family == "quadratic-point":
        return X.mean(axis=0)
    if model.family == "least-squares":
        return np.linalg.lstsq(X, y, rcond=None)[0]
    return np.linalg.solve(X.T @ X / n + model.lam * np.eye(d), X.T @ y / n)


def erm_minimizer(model: LossModel, S: Dataset, return_info: bool = False):
    """W*_S with ||grad R_S|| <= 1e-10.

    Closed form for quadratic-point, least-squares (min-norm) and ridge;
    Newton iterations from the origin otherwise.  With ``return_info`` also
    returns ``(grad_norm, numeric)``.
    """
    if S.n == 0:
        raise UsageError("empty dataset")
    numeric = model.family in ("logistic", "nonconvex-sigmoid-squared")
    if numeric:
        w, gn = newton_solve(model, S.X, S.y, np.zeros(model.d))
    else:
        w = _closed_form_erm(model, S.X, S.y)
        gn = float(np.linalg.norm(empirical_grad(model, w, S)))
        if gn > ERM_TOL:
            # one refinement pass for badly scaled features
            w, gn = newton_solve(model, S.X, S.y, w, max_iter=5)
    return (w, gn, numeric) if return_info else w


def population_risk(model: LossModel, dist: DataDistribution, w, m: int, seed) -> tuple:
    """Monte Carlo (mean, stderr) of R(w) over m fresh samples."""
    if m < 2:
        raise UsageError("m must be at least 2")
    S = dist.sample(m, np.random.default_rng(seed))
    vals = sample_losses(model, np.asarray(w, dtype=float), S.X, S.y)
    if np.all(vals == vals[0]):
        return float(vals[0]), 0.0   # exact on degenerate distributions
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(m))


def analytic_risk(model: LossModel, dist: DataDistribution, w):
    """Exact R(w) for quadratic-point, least-squares and ridge; None otherwise."""
    W = np.asarray(w, dtype=float)
    mean, var = dist.moments()
    if model.family == "quadratic-point":
        D = W - mean
        return 0.5 * (np.sum(D * D, axis=-1) + var.sum())
    if model.family not in ("least-squares", "ridge"):
        return None
    sigma = np.outer(mean, mean) + np.diag(var)
    D = W - dist.w_true
    val = 0.5 * (np.einsum("...d,de,...e->...", D, sigma, D) + dist.noise ** 2 / 3.0)
    return val + 0.5 * model.lam * np.sum(W * W, axis=-1)


def population_minimum(model: LossModel, dist: DataDistribution, seed: int = 0,
                       m: int = 200_000) -> tuple:
    """(R*, exact).  Logistic falls back to ERM on a large fixed sample."""
    mean, var = dist.moments()
    if model.family == "quadratic-point":
        return 0.5 * float(var.sum()), True
    if model.family in ("least-squares", "ridge"):
        sigma = np.outer(mean, mean) + np.diag(var)
        w = np.linalg.lstsq(sigma + model.lam * np.eye(model.d), sigma @ dist.w_true, rcond=None)[0]
        return float(analytic_risk(model, dist, w)), True
    if model.family == "nonconvex-sigmoid-squared":
        return dist.noise ** 2 / 3.0, True
    S = dist.sample(m, np.random.default_rng(seed))
    w = erm_minimizer(model, S)
    return float(sample_losses(model, w, S.X, S.y).mean()), False
