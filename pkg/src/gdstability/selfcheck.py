"""Deterministic oracle suite: closed forms against brute force, gradients against finite differences."""
import math
from typing import List, NamedTuple

import numpy as np

from . import bound_calc as bc
from .loss_zoo import (FAMILIES, eval_grad, eval_loss, make_distribution, make_model,
                       self_bounding_check)


class Outcome(NamedTuple):
    name: str
    passed: bool
    detail: str


def _probe_setup(family, rng):
    dist = make_distribution(family, 3, decay=0.5, noise=0.1)
    model = make_model(dist, lam=0.3 if family == "ridge" else 0.0)
    return model, dist


def _random_w(model, rng):
    return rng.normal(scale=2.0, size=model.d)


def sum_product_oracles(draws: int = 500, seed: int = 0) -> List[Outcome]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        beta = rng.uniform(0.1, 10)
        gamma = rng.uniform(0.01, 1) * beta
        C = rng.uniform(0.01, 1) * 2 / (beta + gamma)
        T = int(rng.integers(0, 300))
        exact = bc.sum_product_exact(np.full(T, C), "contractive", gamma=gamma)
        closed = bc.sum_product_closed(1, C=C, T=T, beta=beta, gamma=gamma)
        worst = max(worst, abs(closed - exact) / max(abs(exact), 1e-300))
    out = [Outcome("sum-product case 1 exact", worst <= 1e-12, f"max rel err {worst:.2e}")]
    bad2 = bad3 = 0
    for _ in range(draws):
        beta = rng.uniform(0.1, 10)
        gamma = rng.uniform(0.01, 1) * beta
        k = math.ceil(beta / gamma)
        # k >= beta/gamma keeps this interval non-empty
        C = rng.uniform(2 / gamma, 2 * (k + 1) / (beta + gamma))
        Cp = rng.uniform(0.01, 0.999) * 2 / (gamma + beta)
        T = int(rng.integers(1, 400))
        t = np.arange(1, T + 1)
        etas = np.where(t <= k, Cp / t, C / t)
        exact = bc.sum_product_exact(etas, "contractive", gamma=gamma / 2)
        bad2 += exact > bc.sum_product_closed(2, C=C, T=T, beta=beta, gamma=gamma, C_prime=Cp)
        C3 = rng.uniform(0.01, 0.999) * 2 / beta
        etas3 = C3 / t * rng.uniform(0.5, 1.0, size=T) ** rng.integers(0, 2)
        exact3 = bc.sum_product_exact(etas3, "expansive", beta=beta)
        bad3 += exact3 > bc.sum_product_closed(3, C=C3, T=T, beta=beta)
    out.append(Outcome("sum-product case 2 dominates", bad2 == 0, f"{bad2} failures of {draws}"))
    out.append(Outcome("sum-product case 3 dominates", bad3 == 0, f"{bad3} failures of {draws}"))
    return out


def gradient_oracles(probes: int = 200, sb_probes: int = 1000, seed: int = 0) -> List[Outcome]:
    rng = np.random.default_rng(seed)
    out = []
    h = 1e-6
    for family in FAMILIES:
        model, dist = _probe_setup(family, rng)
        fd_bad = smooth_bad = neg = sb_bad = 0
        for _ in range(probes):
            w, z = _random_w(model, rng), dist.sample_example(rng)
            g = eval_grad(model, w, z)
            fd = np.array([(eval_loss(model, w + h * e, z) - eval_loss(model, w - h * e, z)) / (2 * h)
                           for e in np.eye(model.d)])
            if np.linalg.norm(g - fd) > 1e-5 * max(np.linalg.norm(g), 1e-3):
                fd_bad += 1
            u = _random_w(model, rng)
            if np.linalg.norm(g - eval_grad(model, u, z)) > model.beta * np.linalg.norm(w - u) * (1 + 1e-9):
                smooth_bad += 1
        for _ in range(sb_probes):
            w, z = _random_w(model, rng), dist.sample_example(rng)
            neg += eval_loss(model, w, z) < 0
            sb_bad += not self_bounding_check(model, w, z)
        out.append(Outcome(f"{family} finite differences", fd_bad == 0, f"{fd_bad} of {probes}"))
        out.append(Outcome(f"{family} beta-smoothness", smooth_bad == 0, f"{smooth_bad} of {probes}"))
        out.append(Outcome(f"{family} self-bounding", sb_bad == 0 and neg == 0,
                           f"{sb_bad} violations, {neg} negative losses of {sb_probes}"))
    return out


def continuity_oracle(draws: int = 100, seed: int = 0) -> List[Outcome]:
    """Strongly convex bounds at gamma_loo = 1e-12 against the convex ones."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(draws):
        beta = rng.uniform(0.1, 10)
        T = int(rng.integers(1, 2000))
        etas = np.full(T, 1 / (2 * beta))
        common = dict(beta=beta, n=int(rng.integers(1, 10000)), T=T, etas=etas,
                      eps_opt=rng.uniform(0, 1), eps_c=rng.uniform(0, 1), eps_path=rng.uniform(0, 10))
        cvx = bc.convex_bounds(bc.RegimeInputs(**common))
        sc = bc.strongly_convex_bounds(bc.RegimeInputs(gamma=rng.uniform(0.01, 1) * beta,
                                                       gamma_loo=1e-12, **common))
        for name in ("stability", "gen"):
            worst = max(worst, abs(sc[name] - cvx[name]) / cvx[name])
    return [Outcome("strongly convex -> convex continuity", worst <= 1e-6, f"max rel diff {worst:.2e}")]


def run_all() -> List[Outcome]:
    return sum_product_oracles() + gradient_oracles() + continuity_oracle()
