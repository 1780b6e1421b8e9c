"""Closed-form generalization, stability, path and optimization bounds for full-batch GD.

Each regime function returns a BoundReport whose entries carry a mode.
"measured" entries take error terms estimated by stability_lab; "theoretical"
entries need only initial-point quantities (W-gap, E[R_S(W_1)], eps_c).
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import RegimeViolationError, UsageError

MEASURED = "measured"
THEORETICAL = "theoretical"

_STEP_RTOL = 1e-12
_SERIES_THRESHOLD = 1e-6


def _nonneg(**kw):
    for name, v in kw.items():
        if v is None:
            continue
        if not (v >= 0) or not math.isfinite(v):
            raise UsageError(f"{name} must be finite and non-negative, got {v}")


def generic_gen_bound(beta: float, eps_opt: float, eps_c: float, eps_stab: float) -> float:
    """2 sqrt(2 beta (eps_opt + eps_c) eps_stab) + 2 beta eps_stab, any symmetric algorithm."""
    _nonneg(beta=beta, eps_opt=eps_opt, eps_c=eps_c, eps_stab=eps_stab)
    return 2.0 * math.sqrt(2.0 * beta * (eps_opt + eps_c) * eps_stab) + 2.0 * beta * eps_stab


def stationary_gen_bound(beta: float, dist_sq: float, risk_at_limit: float, eps_stab: float) -> float:
    """Generic bound written around the stationary point GD converges to from W_1."""
    _nonneg(beta=beta, dist_sq=dist_sq, risk_at_limit=risk_at_limit, eps_stab=eps_stab)
    return 4.0 * math.sqrt(beta * (beta * dist_sq + risk_at_limit) * eps_stab) + 2.0 * beta * eps_stab


def excess_decomposition(eps_gen: float, eps_opt: float) -> float:
    return eps_gen + eps_opt


def gamma_loo(gamma: float, beta: float, n: int) -> float:
    if gamma < 0 or beta <= 0 or n < 1:
        raise UsageError("need gamma >= 0, beta > 0, n >= 1")
    return max(gamma - beta / n, 0.0)


# ---------------------------------------------------------------- sum-products

def sum_product_exact(etas: Sequence[float], factor: str, *, beta: Optional[float] = None,
                      gamma: Optional[float] = None) -> float:
    """Brute-force sum_t eta_t prod_{j>t} factor_j.

    factor "expansive": (1 + beta eta_j)^2, "contractive": (1 - eta_j gamma).
    """
    etas = np.asarray(etas, dtype=float)
    if factor == "expansive":
        if beta is None:
            raise UsageError("expansive factor needs beta")
        fac = (1.0 + beta * etas) ** 2
    elif factor == "contractive":
        if gamma is None:
            raise UsageError("contractive factor needs gamma")
        fac = 1.0 - gamma * etas
    else:
        raise UsageError(f"unknown factor {factor!r}")
    acc = 0.0
    for eta, f in zip(etas, fac):
        acc = acc * f + eta
    return float(acc)


def lambda_const(g: float, T: int, C: float) -> float:
    """(1 - (1 - C g)^T) / g, the constant-step contractive sum-product.

    A truncated binomial series takes over when C g T is tiny, so g -> 0
    returns C T instead of 0/0.
    """
    if T == 0:
        return 0.0
    x = C * g
    if x * T < _SERIES_THRESHOLD:
        # C * sum_k (-1)^(k+1) binom(T, k) x^(k-1); terms shrink by about x T
        total, term = 0.0, 1.0
        for k in range(1, 6):
            term = term * (T - k + 1) / k if k > 1 else float(T)
            total += (-1) ** (k + 1) * term * x ** (k - 1)
        return C * total
    return -math.expm1(T * math.log1p(-x)) / g


def sum_product_closed(case: int, *, C: float, T: int, beta: Optional[float] = None,
                       gamma: Optional[float] = None, C_prime: Optional[float] = None) -> float:
    """Closed forms of the three sum-product cases.

    case 1: eta_t = C <= 2/(beta+gamma), factor (1 - eta gamma); exact.
    case 2: C'/t up to ceil(beta/gamma), then C/t with C >= 2/gamma, factor
            (1 - eta gamma / 2); upper bound C log(e^2 ceil(beta/gamma)).
    case 3: eta_t <= C/t < 2/beta, factor (1 + beta eta)^2; upper bound.
    """
    if T < 0:
        raise UsageError("T must be non-negative")
    if case == 1:
        if beta is None or gamma is None or not gamma > 0:
            raise UsageError("case 1 needs beta and gamma > 0")
        if not C <= 2.0 / (beta + gamma):
            raise UsageError("case 1 requires C <= 2/(beta + gamma)")
        return lambda_const(gamma, T, C)
    if case == 2:
        if beta is None or gamma is None or C_prime is None or not gamma > 0:
            raise UsageError("case 2 needs beta, gamma > 0 and C'")
        k = math.ceil(beta / gamma)
        if not C >= 2.0 / gamma:
            raise UsageError("case 2 requires C >= 2/gamma")
        if not C_prime < 2.0 / (gamma + beta):
            raise UsageError("case 2 requires C' < 2/(gamma + beta)")
        if not C / (k + 1) <= 2.0 / (beta + gamma) * (1 + _STEP_RTOL):
            raise UsageError("case 2 requires C/t <= 2/(beta + gamma) for t > ceil(beta/gamma)")
        return C * math.log(math.e ** 2 * k)
    if case == 3:
        if beta is None:
            raise UsageError("case 3 needs beta")
        if not 0 < C < 2.0 / beta:
            raise UsageError("case 3 requires 0 < C < 2/beta")
        if T == 0:
            return 0.0
        a = 2.0 * C * beta
        return C * math.exp(a) * T ** a * min(1.0 + 1.0 / a, math.log(math.e * T))
    raise UsageError(f"unknown case {case}")


# ------------------------------------------------------------------- reports

@dataclass
class RegimeInputs:
    beta: float
    n: int
    T: int
    gamma: Optional[float] = None
    gamma_loo: Optional[float] = None
    mu: Optional[float] = None
    C: Optional[float] = None           # inverse-t constant
    etas: Optional[Sequence[float]] = None
    eps_opt: Optional[float] = None
    eps_c: Optional[float] = None
    eps_path: Optional[float] = None
    eps_stab: Optional[float] = None
    w_gap: Optional[float] = None       # E||W_1 - W*_S||^2
    ctilde: Optional[float] = None      # E[R_S(pi_S) + R(pi_S)]
    risk_w1: Optional[float] = None     # E[R_S(W_1)]
    risk_w1_gap: Optional[float] = None  # E[R_S(W_1) - R*_S]

    def __post_init__(self):
        if self.n < 1 or self.T < 0:
            raise UsageError("need n >= 1 and T >= 0")
        _nonneg(beta=self.beta, gamma=self.gamma, gamma_loo=self.gamma_loo, mu=self.mu,
                C=self.C, eps_opt=self.eps_opt, eps_c=self.eps_c, eps_path=self.eps_path,
                eps_stab=self.eps_stab, w_gap=self.w_gap, ctilde=self.ctilde,
                risk_w1=self.risk_w1, risk_w1_gap=self.risk_w1_gap)
        if not self.beta > 0:
            raise UsageError("beta must be positive")
        if self.etas is not None:
            self.etas = np.asarray(self.etas, dtype=float)
            if self.etas.shape != (self.T,):
                raise UsageError("etas must have length T")


@dataclass
class BoundReport:
    regime: str
    values: Dict[str, float] = field(default_factory=dict)
    modes: Dict[str, str] = field(default_factory=dict)
    flags: Dict[str, bool] = field(default_factory=dict)
    notes: List[str] = field(default_factory=list)

    def add(self, name, value, mode):
        value = float(value)
        if not (math.isfinite(value) and value >= 0):
            raise ArithmeticError(f"bound {name} evaluated to {value}")
        self.values[name] = value
        self.modes[name] = mode

    def __getitem__(self, name):
        return self.values[name]

    def __contains__(self, name):
        return name in self.values


def _have(inp, *names):
    return all(getattr(inp, k) is not None for k in names)


def stability_from_sum(eps_path: float, s: float, n: int) -> float:
    return 4.0 * eps_path * s / n ** 2


def gen_from_sum(beta, eps_opt, eps_c, eps_path, s, n) -> float:
    """4 sqrt(2 beta (eps_opt+eps_c) eps_path s)/n + 8 beta eps_path s/n^2; shared by the convex
    and strongly convex theorems, with s the step-size sum or the contractive sum-product."""
    return (4.0 * math.sqrt(2.0 * beta * (eps_opt + eps_c) * eps_path * s) / n
            + 8.0 * beta * eps_path * s / n ** 2)


def _constant_step(etas):
    return etas.size > 0 and np.all(etas == etas[0])


def nonconvex_bounds(inp: RegimeInputs) -> BoundReport:
    if inp.C is None:
        raise UsageError("nonconvex bounds need the inverse-t constant C")
    eps = inp.beta * inp.C
    if not eps < 1:
        raise RegimeViolationError(f"beta*C = {eps} must be < 1")
    etas = inp.C / np.arange(1, inp.T + 1) if inp.etas is None else inp.etas
    if np.any(etas > inp.C / np.arange(1, inp.T + 1) * (1 + _STEP_RTOL)):
        raise RegimeViolationError("step sizes exceed C/t")
    rep = BoundReport("nonconvex")
    n, T = inp.n, inp.T
    eT = math.e * max(T, 1)
    cbar = min(eps + 0.5, eps * math.log(eT))
    rep.flags["beta_C_lt_1"] = True
    if inp.eps_path is not None:
        sp = sum_product_exact(etas, "expansive", beta=inp.beta)
        rep.add("stability", stability_from_sum(inp.eps_path, sp, n), MEASURED)
        if T > 0:
            rep.add("stability_closed",
                    stability_from_sum(inp.eps_path, sum_product_closed(3, C=inp.C, T=T, beta=inp.beta), n),
                    MEASURED)
    if _have(inp, "eps_path", "eps_opt", "eps_c"):
        root = math.sqrt((inp.eps_opt + inp.eps_c) * inp.eps_path)
        rep.add("gen_sharp", 4 * math.sqrt(2) / n * root * eT ** eps * math.sqrt(cbar)
                + 8 * inp.eps_path / n ** 2 * eT ** (2 * eps) * cbar, MEASURED)
        gen = 4 * math.sqrt(3) * eT ** eps / n * root + 12 * eT ** (2 * eps) / n ** 2 * inp.eps_path
        rep.add("gen", gen, MEASURED)
        rep.add("excess", excess_decomposition(gen, inp.eps_opt), MEASURED)
    if inp.risk_w1 is not None:
        L = math.log(eT)
        g = (8 * math.sqrt(3) / n * math.sqrt(L) * eT ** eps + 48 / n ** 2 * L * eT ** (2 * eps)) * inp.risk_w1
        rep.add("gen_initial_risk", g, THEORETICAL)
        if inp.eps_opt is not None:
            rep.add("excess_initial_risk", g + inp.eps_opt, THEORETICAL)
    return rep


def convex_bounds(inp: RegimeInputs) -> BoundReport:
    if inp.etas is None:
        raise UsageError("convex bounds need the step sizes")
    etas = inp.etas
    if np.any(etas > 1.0 / (2.0 * inp.beta) * (1 + _STEP_RTOL)):
        raise RegimeViolationError("convex theorems need eta_t <= 1/(2 beta)")
    rep = BoundReport("convex")
    n, T, beta = inp.n, inp.T, inp.beta
    s = float(etas.sum())
    if inp.eps_path is not None:
        rep.add("stability", stability_from_sum(inp.eps_path, s, n), MEASURED)
    if _have(inp, "w_gap", "eps_c"):
        rep.add("stability_wgap", 32 * beta * s / n ** 2 * (inp.w_gap + inp.eps_c * s), THEORETICAL)
        rep.add("path_bound", 4 * beta * inp.w_gap + 8 * beta * inp.eps_c * s, THEORETICAL)
    if _have(inp, "eps_path", "eps_opt", "eps_c"):
        gen = gen_from_sum(beta, inp.eps_opt, inp.eps_c, inp.eps_path, s, n)
        rep.add("gen", gen, MEASURED)
        rep.add("excess", excess_decomposition(gen, inp.eps_opt), MEASURED)
    if inp.w_gap is not None and T > 0:
        rep.add("opt_bound", inp.w_gap / float(np.sum(etas * (1 - beta * etas / 2))), THEORETICAL)
    half = _constant_step(etas) and math.isclose(etas[0], 1 / (2 * beta), rel_tol=1e-12)
    rep.flags["half_inv_beta"] = bool(half)
    if half and _have(inp, "w_gap", "eps_c"):
        g = 8 * (1 / n + 2 * T / n ** 2) * (3 * beta * inp.w_gap + T * inp.eps_c)
        rep.add("gen_explicit", g, THEORETICAL)
        rep.add("excess_explicit", g + 3 * beta * inp.w_gap / T, THEORETICAL)
    return rep


def gamma_fn(gamma: float, T: int, beta: float) -> float:
    """Gamma(gamma, T) = sum_{t=1}^T exp(-4 t gamma/(beta+gamma))."""
    a = 4 * gamma / (beta + gamma)
    if a == 0:
        return float(T)
    return math.exp(-a) * -math.expm1(-a * T) / -math.expm1(-a)


def m_const(beta, gamma, g_loo, T) -> float:
    cap = 2 * T if g_loo == 0 else min(beta / g_loo, 2 * T)
    return beta * T * cap / (beta + gamma)


def strongly_convex_bounds(inp: RegimeInputs) -> BoundReport:
    if inp.gamma is None or not inp.gamma > 0:
        raise UsageError("strongly convex bounds need gamma > 0")
    if inp.etas is None:
        raise UsageError("strongly convex bounds need the step sizes")
    beta, gamma, n, T, etas = inp.beta, inp.gamma, inp.n, inp.T, inp.etas
    if np.any(etas > 2 / (beta + gamma) * (1 + _STEP_RTOL)):
        raise RegimeViolationError("strongly convex theorems need eta_t <= 2/(beta + gamma)")
    g_loo = gamma_loo(gamma, beta, n) if inp.gamma_loo is None else inp.gamma_loo
    rep = BoundReport("strongly-convex")
    const = _constant_step(etas)
    sc_opt = const and math.isclose(etas[0], 2 / (beta + gamma), rel_tol=1e-12)
    rep.flags["constant_step"] = bool(const)
    rep.flags["sc_optimal_step"] = bool(sc_opt)
    sp = lambda_const(g_loo, T, etas[0]) if const else sum_product_exact(etas, "contractive", gamma=g_loo)
    if inp.eps_path is not None:
        rep.add("stability", stability_from_sum(inp.eps_path, sp, n), MEASURED)
        if sc_opt:
            cap = 2 * T / beta if g_loo == 0 else min(1 / g_loo, 2 * T / beta)
            rep.add("stability_min", stability_from_sum(inp.eps_path, cap, n), MEASURED)
    if _have(inp, "eps_path", "eps_opt", "eps_c"):
        gen = gen_from_sum(beta, inp.eps_opt, inp.eps_c, inp.eps_path, sp, n)
        rep.add("gen", gen, MEASURED)
        rep.add("excess", excess_decomposition(gen, inp.eps_opt), MEASURED)
    if _have(inp, "w_gap", "eps_c"):
        G = gamma_fn(gamma, T, beta)
        rep.add("path_bound", 4 * beta ** 2 / (beta + gamma) * G * inp.w_gap
                + 8 * beta * T / (beta + gamma) * inp.eps_c, THEORETICAL)
        a = 4 * gamma / (beta + gamma)
        rep.add("path_bound_simple", 4 * beta ** 2 / (beta + gamma) * min(1 / math.expm1(a), T) * inp.w_gap
                + 8 * beta * T / (beta + gamma) * inp.eps_c, THEORETICAL)
    if inp.w_gap is not None:
        if sc_opt:
            rep.add("opt_bound", beta / 2 * math.exp(-4 * T / (beta / gamma + 1)) * inp.w_gap, THEORETICAL)
        elif inp.C is not None and T > 0:
            rep.add("opt_bound", beta / 2 * T ** (-2 * inp.C * beta * gamma / (beta + gamma)) * inp.w_gap,
                    THEORETICAL)
    if sc_opt and _have(inp, "w_gap", "eps_c"):
        m = m_const(beta, gamma, g_loo, T)
        M = max(beta * inp.w_gap, inp.eps_c)
        decay = math.exp(-2 * T * gamma / (beta + gamma))
        rep.add("gen_explicit", 8 * math.sqrt(6) / n * (math.sqrt(M) + (decay + 4 * math.sqrt(3) / n * math.sqrt(m)) * M)
                * math.sqrt(m), THEORETICAL)
        delta = m * M
        tail = beta * inp.w_gap / 2 * math.exp(-4 * T * gamma / (beta + gamma))
        inner = math.sqrt(delta) + decay + 4 * math.sqrt(3) / n * delta
        rep.add("excess_explicit", 8 * math.sqrt(6) / n * inner + tail, THEORETICAL)
        rep.add("excess_explicit_alt", 8 * math.sqrt(3) / n * inner + tail, THEORETICAL)
        rep.notes.append("explicit strongly convex excess bound carries two published constants; "
                         "excess_explicit uses 8*sqrt(6), excess_explicit_alt uses 8*sqrt(3)")
    return rep


def pl_bounds(inp: RegimeInputs) -> BoundReport:
    if inp.mu is None or not inp.mu > 0:
        raise UsageError("PL bounds need mu > 0")
    if inp.ctilde is None:
        raise UsageError("PL bounds need ctilde")
    beta, mu, n, c = inp.beta, inp.mu, inp.n, inp.ctilde
    rep = BoundReport("pl")
    if inp.eps_opt is not None:
        rep.add("stability", 16 * inp.eps_opt / mu + 8 * beta / (n ** 2 * mu ** 2) * c, MEASURED)
        interp = inp.eps_c is not None and inp.eps_c <= 1e-12
        rep.flags["interpolating"] = bool(interp)
        if interp:
            rep.add("gen", 8 * beta * math.sqrt(c) / (n * mu) * math.sqrt(inp.eps_opt)
                    + 16 * beta ** 2 * c / (n ** 2 * mu ** 2) + 44 * beta / mu * inp.eps_opt, MEASURED)
        else:
            rep.notes.append("generalization bound needs E[R*_S] = 0; not emitted")
    if _have(inp, "eps_opt", "eps_c"):
        rep.add("excess", 8 * beta * math.sqrt(c) / (n * mu) * math.sqrt(inp.eps_opt + inp.eps_c)
                + 8 * math.sqrt(2 * beta * inp.eps_opt * inp.eps_c) / math.sqrt(mu)
                + 16 * c * beta ** 2 / (n ** 2 * mu ** 2) + 45 * beta / mu * inp.eps_opt, MEASURED)
    if (inp.etas is not None and _constant_step(inp.etas) and inp.etas[0] <= 1 / beta
            and inp.risk_w1_gap is not None):
        rep.add("opt_bound", (1 - mu * inp.etas[0]) ** inp.T * inp.risk_w1_gap, THEORETICAL)
    return rep
