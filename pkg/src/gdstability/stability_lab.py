"""Replace-one Monte Carlo estimation of stability, generalization and optimization errors."""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (ConvergenceError, DiagnosticUnavailableError, RegimeMisconfigurationError,
                     UsageError)
from .gd_engine import StepSchedule, gd_batch, step_sizes
from .loss_zoo import (DataDistribution, Dataset, Example, LossModel, erm_minimizer, newton_solve,
                       population_minimum, sample_grads, sample_losses)
from .bound_calc import gamma_loo

PURPOSES = {"dataset": 0, "replacement": 1, "population": 2, "sgd": 3}
MAX_FAILURE_FRACTION = 0.10
_CHUNK_FLOATS = 4_000_000


def derive_seed(master: int, rep: int, i: int, purpose: str) -> np.random.SeedSequence:
    """Counter-based seed for one (rep, i, purpose) triple."""
    return np.random.SeedSequence([int(master), int(rep), int(i), PURPOSES[purpose]])


def _rng(master, rep, i, purpose):
    return np.random.default_rng(derive_seed(master, rep, i, purpose))


@dataclass(frozen=True)
class ReplicatePlan:
    n: int
    reps: int
    indices: Optional[Sequence[int]] = None   # 1-based; None means all of 1..n
    seed: int = 0
    m: Optional[int] = None                   # population samples, default 10 n

    def __post_init__(self):
        if self.n < 1 or self.reps < 1:
            raise UsageError("need n >= 1 and reps >= 1")
        if self.indices is not None:
            idx = tuple(int(i) for i in self.indices)
            if not idx or any(not 1 <= i <= self.n for i in idx):
                raise UsageError(f"indices must lie in 1..{self.n}")
            object.__setattr__(self, "indices", idx)
        if self.m is not None and self.m < 2:
            raise UsageError("population m must be at least 2")

    @property
    def population_m(self) -> int:
        return self.m if self.m is not None else max(10 * self.n, 2)

    def pairs(self):
        idx = self.indices if self.indices is not None else range(1, self.n + 1)
        return [(rep, i) for rep in range(self.reps) for i in idx]


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float

    @classmethod
    def of(cls, values):
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            return cls(float("nan"), float("nan"))
        se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
        return cls(float(v.mean()), se)


@dataclass(frozen=True)
class StabilityReport:
    family: str
    schedule: StepSchedule
    n: int
    T: int
    pairs_used: int
    failures: int
    eps_stab: Estimate
    eps_gen_direct: Estimate
    eps_gen_exch: Estimate
    eps_opt: Estimate
    eps_path: Estimate
    eps_c: Estimate
    excess: Estimate
    w_gap: Estimate
    risk_w1: Estimate
    risk_w1_gap: Estimate
    ctilde: Estimate
    r_star: float
    r_star_exact: bool
    etas: np.ndarray = field(repr=False)


def replace_one(S: Dataset, i: int, z: Example) -> Dataset:
    """S^(i): the i-th (1-based) example swapped for z, order preserved."""
    if not 1 <= i <= S.n:
        raise UsageError(f"index {i} outside 1..{S.n}")
    X = S.X.copy()
    X[i - 1] = np.asarray(z.features, dtype=float)
    if S.y is None:
        return Dataset(X)
    y = S.y.copy()
    y[i - 1] = z.label
    return Dataset(X, y)


def _stack(model, datasets):
    X = np.stack([S.X for S in datasets])
    y = np.stack([S.y for S in datasets]) if model.labeled else None
    return X, y


def _draw_pair(dist, plan, rep, i):
    S = dist.sample(plan.n, _rng(plan.seed, rep, i, "dataset"))
    z = dist.sample_example(_rng(plan.seed, rep, i, "replacement"))
    return S, replace_one(S, i, z)


def _chunks(pairs, n, d):
    size = max(1, _CHUNK_FLOATS // (2 * n * d))
    for k in range(0, len(pairs), size):
        yield pairs[k:k + size]


def estimate_stability(model: LossModel, dist: DataDistribution, plan: ReplicatePlan,
                       s: StepSchedule, T: int, W1=None) -> StabilityReport:
    """Run GD on S and S^(i) for every (rep, i) pair and average the error terms.

    All pairs in a chunk are trained together as one batch; per-pair values are
    kept in (rep, i) order and reduced once at the end.
    """
    d, n = model.d, plan.n
    W1 = np.zeros(d) if W1 is None else np.asarray(W1, dtype=float)
    etas = step_sizes(s, T, model.beta, model.gamma)
    r_star, r_star_exact = population_minimum(model, dist)
    pairs = plan.pairs()
    cols = {k: [] for k in ("stab", "direct", "exch", "opt", "path", "c", "excess",
                            "wgap", "rw1", "rw1gap", "ctilde")}
    failures = 0
    for chunk in _chunks(pairs, n, d):
        drawn = [_draw_pair(dist, plan, rep, i) for rep, i in chunk]
        base = [p[0] for p in drawn]
        X, y = _stack(model, base + [p[1] for p in drawn])
        W, path, ok = gd_batch(model, X, y, W1, etas)
        P = len(chunk)
        for k, (rep, i) in enumerate(chunk):
            S, Sp = drawn[k]
            w, wp = W[k], W[P + k]
            if not (ok[k] and ok[P + k]):
                failures += 1
                continue
            try:
                w_star = erm_minimizer(model, S)
            except ConvergenceError:
                failures += 1
                continue
            pop = dist.sample(plan.population_m, _rng(plan.seed, rep, i, "population"))
            ws = np.stack([w, w_star, W1, wp])
            train = sample_losses(model, ws, S.X[None], None if S.y is None else S.y[None])
            risk_s = train.mean(axis=1)
            risk_pop = sample_losses(model, ws[:2], pop.X[None],
                                     None if pop.y is None else pop.y[None]).mean(axis=1)
            f_wp_zi = sample_losses(model, wp, S.X[i - 1:i], None if S.y is None else S.y[i - 1:i])[0]
            dw = w - wp
            cols["stab"].append(dw @ dw)
            cols["direct"].append(risk_pop[0] - risk_s[0])
            cols["exch"].append(f_wp_zi - train[0, i - 1])
            cols["opt"].append(risk_s[0] - risk_s[1])
            cols["path"].append(path[k])
            cols["c"].append(risk_s[1])
            cols["excess"].append(risk_pop[0] - r_star)
            cols["wgap"].append(np.sum((W1 - w_star) ** 2))
            cols["rw1"].append(risk_s[2])
            cols["rw1gap"].append(risk_s[2] - risk_s[1])
            cols["ctilde"].append(risk_s[1] + risk_pop[1])
    if failures > MAX_FAILURE_FRACTION * len(pairs):
        raise RegimeMisconfigurationError(
            f"{failures} of {len(pairs)} replicates failed; check the schedule against beta")
    e = {k: Estimate.of(v) for k, v in cols.items()}
    return StabilityReport(model.family, s, n, T, len(pairs) - failures, failures,
                           e["stab"], e["direct"], e["exch"], e["opt"], e["path"], e["c"],
                           e["excess"], e["wgap"], e["rw1"], e["rw1gap"], e["ctilde"],
                           float(r_star), bool(r_star_exact), etas)


def estimate_interpolation_error(model: LossModel, dist: DataDistribution, n: int, reps: int,
                                 seed: int) -> tuple:
    """(mean, stderr) of R_S(W*_S) over reps datasets."""
    vals = []
    for rep in range(reps):
        S = dist.sample(n, _rng(seed, rep, 0, "dataset"))
        w = erm_minimizer(model, S)
        vals.append(sample_losses(model, w, S.X, S.y).mean())
    est = Estimate.of(vals)
    return est.mean, est.se


def gd_limit(model: LossModel, S: Dataset, W1, tol: float = 1e-10):
    """Long-run limit of GD from W1 on S.

    Least-squares converges to the projection of W1 onto the minimizer set;
    strongly convex families have a unique minimizer; logistic and sigmoid
    are run with 1/beta steps and then polished by Newton in the same basin.
    """
    W1 = np.asarray(W1, dtype=float)
    if model.family in ("quadratic-point", "ridge"):
        w = erm_minimizer(model, S)
    elif model.family == "least-squares":
        w = W1 + np.linalg.lstsq(S.X, S.y - S.X @ W1, rcond=None)[0]
    else:
        w = W1.copy()
        for _ in range(2000):
            g = sample_grads(model, w, S.X, S.y).mean(axis=0)
            if np.linalg.norm(g) <= 1e-6:
                break
            w = w - g / model.beta
        try:
            w = newton_solve(model, S.X, S.y, w, tol=tol)[0]
        except ConvergenceError as exc:
            raise DiagnosticUnavailableError(str(exc)) from exc
    gn = np.linalg.norm(sample_grads(model, w, S.X, S.y).mean(axis=0))
    if not gn <= tol:
        raise DiagnosticUnavailableError(f"reference run stalled at gradient norm {gn:.3e}")
    return w


def stationary_point_diagnostic(model: LossModel, dist: DataDistribution, plan: ReplicatePlan,
                                s: StepSchedule, T: int, W1=None) -> tuple:
    """(E||A(S) - W*_{S,W1}||^2, E[R_S(W*_{S,W1})]) over the plan's datasets."""
    d = model.d
    W1 = np.zeros(d) if W1 is None else np.asarray(W1, dtype=float)
    etas = step_sizes(s, T, model.beta, model.gamma)
    dists, risks = [], []
    for chunk in _chunks(plan.pairs(), plan.n, d):
        base = [dist.sample(plan.n, _rng(plan.seed, rep, i, "dataset")) for rep, i in chunk]
        X, y = _stack(model, base)
        W, _, ok = gd_batch(model, X, y, W1, etas)
        if not ok.all():
            raise DiagnosticUnavailableError("training run diverged")
        for k, S in enumerate(base):
            lim = gd_limit(model, S, W1)
            dists.append(np.sum((W[k] - lim) ** 2))
            risks.append(sample_losses(model, lim, S.X, S.y).mean())
    return float(np.mean(dists)), float(np.mean(risks))


@dataclass(frozen=True)
class RecursionCheck:
    kind: str
    steps_checked: int
    violations: int
    max_excess: float   # largest (mapped - allowed) seen; <= tol means pass


def recursion_check(model: LossModel, dist: DataDistribution, plan: ReplicatePlan,
                    s: StepSchedule, T: int, W1=None, kind: str = "nonexpansive",
                    tol: float = 1e-10) -> RecursionCheck:
    """Check the per-step leave-one-out map on every recorded (S, S^(i)) pair.

    The map w -> w - (eta_t/n) sum_{j != i} grad f(w, z_j) must be
    non-expansive ("nonexpansive", convex losses, eta_t < 2/beta) or contract
    squared distances by 1 - eta_t gamma_loo ("contraction").
    """
    if kind not in ("nonexpansive", "contraction"):
        raise UsageError(f"unknown check {kind!r}")
    d, n = model.d, plan.n
    W1 = np.zeros(d) if W1 is None else np.asarray(W1, dtype=float)
    etas = step_sizes(s, T, model.beta, model.gamma)
    g_loo = gamma_loo(model.gamma or 0.0, model.beta, n) if kind == "contraction" else 0.0
    steps = viol = 0
    worst = -np.inf
    for chunk in _chunks(plan.pairs(), n, d):
        drawn = [_draw_pair(dist, plan, rep, i) for rep, i in chunk]
        P = len(chunk)
        X, y = _stack(model, [p[0] for p in drawn] + [p[1] for p in drawn])
        _, _, ok, hist = gd_batch(model, X, y, W1, etas, record=True)
        rows = np.arange(P)
        idx = np.array([i - 1 for _, i in chunk])
        for t, eta in enumerate(etas):
            Wa, Wb = hist[t, :P], hist[t, P:]
            Ga = sample_grads(model, Wa, X[:P], None if y is None else y[:P])
            Gb = sample_grads(model, Wb, X[P:], None if y is None else y[P:])
            shared = (Ga.sum(axis=1) - Ga[rows, idx]) - (Gb.sum(axis=1) - Gb[rows, idx])
            D = Wa - Wb
            mapped = D - eta / n * shared
            allowed = (1.0 - eta * g_loo) * np.einsum("pd,pd->p", D, D)
            gap = np.einsum("pd,pd->p", mapped, mapped) - allowed
            gap = gap[ok[:P] & ok[P:]]
            steps += gap.size
            viol += int(np.sum(gap > tol))
            if gap.size:
                worst = max(worst, float(gap.max()))
    return RecursionCheck(kind, steps, viol, worst)
