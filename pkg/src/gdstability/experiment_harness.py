"""Grid experiments: empirical errors against theoretical bounds, rate fits, GD vs SGD."""
import math
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed

from . import bound_calc as bc
from .errors import UsageError
from .gd_engine import StepSchedule, gd_batch, sgd_batch, step_sizes
from .loss_zoo import erm_minimizer, make_distribution, make_model, population_minimum, sample_losses
from .stability_lab import Estimate, ReplicatePlan, StabilityReport, _rng, estimate_stability

REGIMES = ("nonconvex", "convex", "convex-interpolation", "strongly-convex", "pl")
T_RULES = ("sqrt-n", "linear-n", "log-n")   # plus "fixed:<T>"
SIGMA = 4.0

_DEFAULT_FAMILY = {"nonconvex": "nonconvex-sigmoid-squared", "convex": "least-squares",
                   "convex-interpolation": "least-squares", "strongly-convex": "ridge", "pl": "ridge"}
_DEFAULT_T_RULE = {"nonconvex": "sqrt-n", "convex": "sqrt-n", "convex-interpolation": "linear-n",
                   "strongly-convex": "log-n", "pl": "log-n"}
_DEFAULT_SCHEDULE = {"nonconvex": "inverse-t", "convex": "half-inv-beta",
                     "convex-interpolation": "half-inv-beta", "strongly-convex": "sc-optimal",
                     "pl": "constant"}


@dataclass
class ExperimentConfig:
    regime: str = "convex"
    family: Optional[str] = None
    d: int = 8
    n_grid: Tuple[int, ...] = (32, 64, 128, 256, 512, 1024)
    t_rule: Optional[str] = None
    schedule: Optional[str] = None
    schedule_c: Optional[float] = None
    reps: int = 200
    seed: int = 0
    population_m: Optional[int] = None
    out_dir: str = "results"
    # distribution and model parameters
    noise: Optional[float] = None
    decay: float = 1.0
    scale: float = 1.0
    lam: float = 0.5
    mu: Optional[float] = None
    indices: Tuple[int, ...] = (1,)
    bound_mode: str = bc.MEASURED

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise UsageError(f"regime: must be one of {', '.join(REGIMES)}")
        self.family = self.family or _DEFAULT_FAMILY[self.regime]
        self.t_rule = self.t_rule or _DEFAULT_T_RULE[self.regime]
        self.schedule = self.schedule or _DEFAULT_SCHEDULE[self.regime]
        if self.noise is None:
            if self.regime == "convex-interpolation":
                self.noise = 0.0
            else:
                self.noise = 0.2 if self.family == "nonconvex-sigmoid-squared" else 0.5
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.indices = tuple(int(i) for i in self.indices)
        self._validate()

    def _validate(self):
        grid = self.n_grid
        if not grid or any(n < 1 for n in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise UsageError("n_grid: must be positive and strictly increasing")
        if self.reps < 1:
            raise UsageError("reps: must be at least 1")
        if self.d < 1:
            raise UsageError("d: must be positive")
        if self.bound_mode not in (bc.MEASURED, bc.THEORETICAL):
            raise UsageError("bound_mode: must be measured or theoretical")
        if any(i < 1 or i > grid[0] for i in self.indices):
            raise UsageError(f"indices: must lie in 1..{grid[0]} (smallest n)")
        rule = self.t_rule
        if rule.startswith("fixed:"):
            try:
                if int(rule[6:]) < 0:
                    raise ValueError
            except ValueError:
                raise UsageError("t_rule: fixed:<T> needs a non-negative integer") from None
        elif rule not in T_RULES:
            raise UsageError(f"t_rule: must be fixed:<T> or one of {', '.join(T_RULES)}")
        if self.family == "nonconvex-sigmoid-squared" and self.regime != "nonconvex":
            raise UsageError(f"family: the sigmoid family is nonconvex, not valid for regime {self.regime}")
        if self.regime in ("strongly-convex", "pl") and self.family not in ("ridge", "quadratic-point"):
            raise UsageError(f"family: regime {self.regime} needs ridge or quadratic-point")
        if rule == "log-n" and self.regime not in ("strongly-convex", "pl"):
            raise UsageError(f"t_rule: log-n needs a strongly convex objective, not regime {self.regime}")
        if self.regime == "nonconvex":
            if self.schedule != "inverse-t":
                raise UsageError("schedule: nonconvex regime needs inverse-t")
            if rule == "linear-n":
                raise UsageError("t_rule: nonconvex regime needs T <= n/log n; linear-n exceeds it")
        if self.regime == "convex-interpolation":
            if self.family != "least-squares" or self.noise != 0:
                raise UsageError("noise: convex-interpolation needs noise-free least-squares")
        if self.regime == "strongly-convex" and self.schedule not in ("sc-optimal", "constant", "inverse-t"):
            raise UsageError("schedule: strongly convex regime needs sc-optimal, constant or inverse-t")
        if self.schedule in ("constant", "inverse-t") and self.schedule_c is not None and not self.schedule_c > 0:
            raise UsageError("schedule_c: must be positive")
        self.build()

    def build(self):
        """(model, distribution, schedule) described by this config."""
        dist = make_distribution(self.family, self.d, scale=self.scale, decay=self.decay, noise=self.noise)
        model = make_model(dist, lam=self.lam if self.family == "ridge" else 0.0, mu=self.mu)
        c = self.schedule_c
        if self.schedule == "inverse-t":
            s = StepSchedule.inverse_t(c if c is not None else 0.5 / model.beta)
        elif self.schedule == "constant":
            s = StepSchedule.constant(c if c is not None else 1.0 / model.beta)
        elif self.schedule == "half-inv-beta":
            s = StepSchedule.half_inv_beta()
        else:
            s = StepSchedule.sc_optimal()
        return model, dist, s

    def horizon(self, n: int, model) -> int:
        rule = self.t_rule
        if rule.startswith("fixed:"):
            return int(rule[6:])
        if rule == "sqrt-n":
            return math.ceil(math.sqrt(n))
        if rule == "linear-n":
            return n
        return math.ceil((model.beta / model.gamma + 1) * math.log(n) / 2)

    def as_dict(self) -> Dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def cell_seed(master: int, n: int) -> int:
    """Per-grid-point master seed, so different n do not share sample prefixes."""
    return int(np.random.SeedSequence([int(master), int(n)]).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class Check:
    name: str
    empirical: float
    se: float
    bound: float
    mode: str
    holds: bool

    @property
    def margin(self) -> float:
        return self.empirical - self.bound


@dataclass
class ExperimentRow:
    regime: str
    n: int
    T: int
    seed: int
    report: StabilityReport
    bounds: bc.BoundReport
    checks: List[Check] = field(default_factory=list)
    bound_gen: float = float("nan")
    bound_excess: float = float("nan")
    bound_mode: str = bc.MEASURED

    @property
    def bound_holds(self) -> bool:
        return all(c.holds for c in self.checks)


_PRIMARY = {
    "nonconvex": {bc.MEASURED: ("gen", "excess"),
                  bc.THEORETICAL: ("gen_initial_risk", "excess_initial_risk")},
    "convex": {bc.MEASURED: ("gen", "excess"), bc.THEORETICAL: ("gen_explicit", "excess_explicit")},
    "strongly-convex": {bc.MEASURED: ("gen", "excess"),
                        bc.THEORETICAL: ("gen_explicit", "excess_explicit")},
    "pl": {bc.MEASURED: ("gen", "excess"), bc.THEORETICAL: ("gen", "excess")},
}


def regime_inputs(model, report: StabilityReport, schedule: StepSchedule) -> bc.RegimeInputs:
    pos = lambda e: max(e.mean, 0.0)   # noqa: E731  Monte Carlo means of non-negative quantities
    return bc.RegimeInputs(
        beta=model.beta, n=report.n, T=report.T, gamma=model.gamma, mu=model.mu,
        C=schedule.c if schedule.kind == "inverse-t" else None, etas=report.etas,
        eps_opt=pos(report.eps_opt), eps_c=pos(report.eps_c), eps_path=pos(report.eps_path),
        eps_stab=pos(report.eps_stab), w_gap=pos(report.w_gap), ctilde=pos(report.ctilde),
        risk_w1=pos(report.risk_w1), risk_w1_gap=pos(report.risk_w1_gap))


def evaluate_bounds(regime: str, inputs: bc.RegimeInputs) -> bc.BoundReport:
    if regime == "nonconvex":
        return bc.nonconvex_bounds(inputs)
    if regime in ("convex", "convex-interpolation"):
        rep = bc.convex_bounds(inputs)
        rep.regime = regime
        return rep
    if regime == "strongly-convex":
        return bc.strongly_convex_bounds(inputs)
    return bc.pl_bounds(inputs)


def _empirical_for(name: str, report: StabilityReport):
    """Empirical estimates a bound of this name constrains."""
    if name.startswith("gen"):
        return [report.eps_gen_exch, report.eps_gen_direct]
    if name.startswith("excess"):
        return [report.excess]
    if name.startswith("stability"):
        return [report.eps_stab]
    if name.startswith("path_bound"):
        return [report.eps_path]
    if name.startswith("opt_bound"):
        return [report.eps_opt]
    return []


def check_bounds(bounds: bc.BoundReport, report: StabilityReport) -> List[Check]:
    out = []
    for name, value in bounds.values.items():
        for est in _empirical_for(name, report):
            emp = abs(est.mean) if name.startswith("gen") else est.mean
            out.append(Check(name, emp, est.se, value, bounds.modes[name],
                             bool(emp <= value + SIGMA * est.se)))
    return out


def run_cell(config: ExperimentConfig, n: int) -> ExperimentRow:
    model, dist, s = config.build()
    T = config.horizon(n, model)
    seed = cell_seed(config.seed, n)
    indices = tuple(i for i in config.indices if i <= n)
    plan = ReplicatePlan(n, config.reps, indices, seed, config.population_m)
    report = estimate_stability(model, dist, plan, s, T)
    bounds = evaluate_bounds(config.regime, regime_inputs(model, report, s))
    row = ExperimentRow(config.regime, n, T, seed, report, bounds, check_bounds(bounds, report),
                        bound_mode=config.bound_mode)
    key = "convex" if config.regime == "convex-interpolation" else config.regime
    gen_name, exc_name = _PRIMARY[key][config.bound_mode]
    row.bound_gen = bounds.values.get(gen_name, float("nan"))
    row.bound_excess = bounds.values.get(exc_name, float("nan"))
    return row


def run_regime(config: ExperimentConfig, jobs: int = 1) -> List[ExperimentRow]:
    """One row per n in the grid; grid points run in parallel, rows come back in grid order."""
    if jobs == 1:
        return [run_cell(config, n) for n in config.n_grid]
    return Parallel(n_jobs=jobs)(delayed(run_cell)(config, n) for n in config.n_grid)


def fit_rate(points) -> Tuple[float, float, float]:
    """Least-squares fit of log(value) against log(n): (slope, intercept, r^2)."""
    pts = [(float(n), float(v)) for n, v in points]
    if len(pts) < 3:
        raise UsageError("need at least 3 points")
    if any(v <= 0 or n <= 0 for n, v in pts):
        raise UsageError("all n and values must be positive")
    x = np.log([p[0] for p in pts])
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss if ss > 0 else 1.0
    return float(slope), float(intercept), float(r2)


@dataclass(frozen=True)
class RateResult:
    quantity: str
    slope: float
    intercept: float
    r2: float
    used: int
    excluded: int


def rate_of(rows: List[ExperimentRow], quantity: str) -> RateResult:
    """Fit excess risk ("excess") or the exchange generalization estimate ("gen")."""
    pick = {"excess": lambda r: r.report.excess.mean, "gen": lambda r: r.report.eps_gen_exch.mean}[quantity]
    pts = [(r.n, pick(r)) for r in rows]
    kept = [(n, v) for n, v in pts if v > 0]
    slope, intercept, r2 = fit_rate(kept)
    return RateResult(quantity, slope, intercept, r2, len(kept), len(pts) - len(kept))


def default_rate_quantity(regime: str) -> str:
    return "gen" if regime == "strongly-convex" else "excess"


@dataclass
class Summary:
    counts: Dict[str, List[int]]        # bound name -> [holds, fails]
    violations: List[str]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_bounds(rows: List[ExperimentRow]) -> Summary:
    if not rows:
        raise UsageError("no rows to verify")
    counts: Dict[str, List[int]] = {}
    violations = []
    for row in rows:
        for c in row.checks:
            tally = counts.setdefault(c.name, [0, 0])
            tally[0 if c.holds else 1] += 1
            if not c.holds:
                violations.append(f"{row.regime} n={row.n} T={row.T} {c.name} ({c.mode}): "
                                  f"empirical {c.empirical:.6g} +- {c.se:.3g} > bound {c.bound:.6g}")
    return Summary(counts, violations)


# ----------------------------------------------------------------- GD vs SGD

@dataclass(frozen=True)
class ComparisonRow:
    regime: str
    n: int
    T_gd: int
    T_sgd: int
    gd_excess: Estimate
    sgd_excess: Estimate
    gd_bound: float
    gd_bound_holds: bool


def _sgd_etas(regime, model, T):
    t = np.arange(1, T + 1, dtype=float)
    if regime == "strongly-convex":
        return 2.0 / ((t + model.beta / model.gamma) * model.gamma)
    if regime == "convex-interpolation":
        return np.full(T, 1.0 / (2.0 * model.beta))
    return np.full(T, 1.0 / math.sqrt(max(T, 1)))


def compare_cell(config: ExperimentConfig, n: int) -> ComparisonRow:
    if config.regime not in ("convex", "convex-interpolation", "strongly-convex"):
        raise UsageError("GD/SGD comparison needs a convex or strongly convex regime")
    model, dist, s = config.build()
    if config.regime == "strongly-convex":
        s = StepSchedule.sc_optimal()
        T_gd = math.ceil((model.beta / model.gamma + 1) * math.log(n) / 2) if n > 1 else 0
    else:
        s = StepSchedule.half_inv_beta()
        T_gd = math.ceil(math.sqrt(n))
    T_sgd = n
    seed = cell_seed(config.seed, n)
    m = config.population_m or max(10 * n, 2)
    r_star, _ = population_minimum(model, dist)
    data = [dist.sample(n, _rng(seed, rep, 0, "dataset")) for rep in range(config.reps)]
    X = np.stack([S.X for S in data])
    y = np.stack([S.y for S in data]) if model.labeled else None
    W1 = np.zeros(model.d)
    W_gd, _, ok_gd = gd_batch(model, X, y, W1, step_sizes(s, T_gd, model.beta, model.gamma))
    picks = np.stack([_rng(seed, rep, 0, "sgd").integers(0, n, size=T_sgd) for rep in range(config.reps)])
    W_sgd, ok_sgd = sgd_batch(model, X, y, W1, _sgd_etas(config.regime, model, T_sgd), picks)
    gd_ex, sgd_ex, wgap, c = [], [], [], []
    for rep, S in enumerate(data):
        pop = dist.sample(m, _rng(seed, rep, 0, "population"))
        risks = sample_losses(model, np.stack([W_gd[rep], W_sgd[rep]]), pop.X[None],
                              None if pop.y is None else pop.y[None]).mean(axis=1)
        w_star = erm_minimizer(model, S)
        if ok_gd[rep]:
            gd_ex.append(risks[0] - r_star)
        if ok_sgd[rep]:
            sgd_ex.append(risks[1] - r_star)
        wgap.append(np.sum(w_star ** 2))
        c.append(sample_losses(model, w_star, S.X, S.y).mean())
    inputs = bc.RegimeInputs(beta=model.beta, n=n, T=T_gd, gamma=model.gamma,
                             etas=step_sizes(s, T_gd, model.beta, model.gamma),
                             w_gap=float(np.mean(wgap)), eps_c=max(float(np.mean(c)), 0.0))
    if config.regime == "strongly-convex":
        bound = bc.strongly_convex_bounds(inputs).values.get("excess_explicit", float("inf"))
    else:
        bound = bc.convex_bounds(inputs).values.get("excess_explicit", float("inf"))
    gd = Estimate.of(gd_ex)
    return ComparisonRow(config.regime, n, T_gd, T_sgd, gd, Estimate.of(sgd_ex), bound,
                         bool(gd.mean <= bound + SIGMA * gd.se))


def compare_gd_sgd(config: ExperimentConfig, jobs: int = 1) -> List[ComparisonRow]:
    if jobs == 1:
        return [compare_cell(config, n) for n in config.n_grid]
    return Parallel(n_jobs=jobs)(delayed(compare_cell)(config, n) for n in config.n_grid)
