import math

import numpy as np
import pytest

from gdstability import bound_calc as bc
from gdstability.errors import RegimeViolationError, UsageError
from gdstability.selfcheck import continuity_oracle, sum_product_oracles


def test_generic_gen_bound():
    assert bc.generic_gen_bound(1, 0.01, 0, 1e-4) == pytest.approx(0.00302843, abs=5e-9)
    assert bc.generic_gen_bound(3, 0.2, 0.1, 0) == 0
    assert bc.generic_gen_bound(2.5, 0, 0, 0.04) == pytest.approx(2 * 2.5 * 0.04)
    with pytest.raises(UsageError):
        bc.generic_gen_bound(1, -0.1, 0, 1e-4)


def test_excess_decomposition():
    assert bc.excess_decomposition(0.1, 0.2) == pytest.approx(0.3)
    assert bc.excess_decomposition(0, 0) == 0


def test_stationary_gen_bound_reduces_to_generic_form():
    beta, d2, r, s = 2.0, 0.3, 0.05, 1e-3
    assert bc.stationary_gen_bound(beta, d2, r, s) == pytest.approx(
        4 * math.sqrt(beta * (beta * d2 + r) * s) + 2 * beta * s)


def test_sum_product_exact_examples():
    assert bc.sum_product_exact([], "contractive", gamma=1.0) == 0
    assert bc.sum_product_exact([0.1, 0.1], "contractive", gamma=1.0) == pytest.approx(0.19, rel=1e-15)
    assert bc.sum_product_exact([0.5, 0.25], "expansive", beta=1.0) == pytest.approx(1.03125, rel=1e-15)


def test_sum_product_closed_examples():
    assert bc.sum_product_closed(1, C=0.1, T=2, beta=1.0, gamma=1.0) == pytest.approx(0.19, rel=1e-12)
    assert bc.sum_product_closed(1, C=0.1, T=0, beta=1.0, gamma=1.0) == 0
    v = bc.sum_product_closed(3, C=0.5, T=2, beta=1.0)
    # 0.5 * e * 2 * min(2, 1 + ln 2) evaluated independently
    assert v == pytest.approx(math.e * (1 + math.log(2)), rel=1e-12)
    assert v == pytest.approx(4.602451, abs=5e-7)
    assert v >= 1.03125


def test_sum_product_closed_preconditions():
    with pytest.raises(UsageError, match="C <= 2/"):
        bc.sum_product_closed(1, C=1.5, T=2, beta=1.0, gamma=1.0)
    with pytest.raises(UsageError, match="C < 2/beta"):
        bc.sum_product_closed(3, C=2.0, T=2, beta=1.0)
    with pytest.raises(UsageError, match="C >= 2/gamma"):
        bc.sum_product_closed(2, C=1.0, T=5, beta=1.0, gamma=0.5, C_prime=0.5)


def test_lambda_series_branch_is_continuous():
    C, T = 0.4, 300
    for g in (1e-7, 1e-9, 1e-12, 0.0):
        assert bc.lambda_const(g, T, C) == pytest.approx(C * T * (1 - C * g * (T - 1) / 2), rel=1e-9)
    g = 1e-5
    assert bc.lambda_const(g, T, C) == pytest.approx((1 - (1 - C * g) ** T) / g, rel=1e-9)


def test_oracle_suites():
    for o in sum_product_oracles() + continuity_oracle():
        assert o.passed, o


def test_gamma_loo():
    assert bc.gamma_loo(1, 1, 10) == pytest.approx(0.9)
    assert bc.gamma_loo(0.05, 1, 10) == 0
    assert bc.gamma_loo(0, 1, 10) == 0


def test_nonconvex_examples():
    rep = bc.nonconvex_bounds(bc.RegimeInputs(beta=1, n=100, T=2, C=0.5, eps_path=0, eps_opt=0.3, eps_c=0))
    assert rep["stability"] == 0 and rep["gen_sharp"] == 0 and rep["gen"] == 0
    rep = bc.nonconvex_bounds(bc.RegimeInputs(beta=1, n=100, T=2, C=0.5, eps_path=1, eps_opt=0.1, eps_c=0))
    e2 = 2 * math.e
    expect = 4 * math.sqrt(3) / 100 * math.sqrt(0.1) * e2 ** 0.5 + 12 / 1e4 * e2
    assert rep["gen"] == pytest.approx(expect, rel=1e-12)
    assert rep["gen"] == pytest.approx(0.0576076, abs=5e-8)
    assert rep["excess"] == pytest.approx(rep["gen"] + 0.1)
    assert rep["stability"] == pytest.approx(4 * 1.03125 / 100 ** 2)
    assert rep["stability_closed"] >= rep["stability"]
    with pytest.raises(RegimeViolationError):
        bc.nonconvex_bounds(bc.RegimeInputs(beta=2, n=10, T=2, C=0.5, eps_path=1))


def test_nonconvex_sharp_form_is_tighter_for_large_T():
    inp = bc.RegimeInputs(beta=1, n=1000, T=500, C=0.5, eps_path=2, eps_opt=0.05, eps_c=0.01)
    rep = bc.nonconvex_bounds(inp)
    assert rep["gen_sharp"] <= rep["gen"]


def test_convex_examples():
    etas = np.full(10, 0.5)
    rep = bc.convex_bounds(bc.RegimeInputs(beta=1, n=100, T=10, etas=etas, w_gap=1, eps_c=0))
    assert rep["gen_explicit"] == pytest.approx(0.288, rel=1e-12)
    assert rep["excess_explicit"] == pytest.approx(0.288 + 0.3, rel=1e-12)
    rep = bc.convex_bounds(bc.RegimeInputs(beta=1, n=100, T=8, etas=np.full(8, 0.5), w_gap=1, eps_c=0))
    assert rep["opt_bound"] == pytest.approx(1 / 3, rel=1e-12)
    # with eps_c = 0 doubling T only rescales the 1/n + 2T/n^2 bracket
    a = bc.convex_bounds(bc.RegimeInputs(beta=1, n=100, T=10, etas=etas, w_gap=1, eps_c=0))["gen_explicit"]
    b = bc.convex_bounds(bc.RegimeInputs(beta=1, n=100, T=20, etas=np.full(20, 0.5), w_gap=1,
                                         eps_c=0))["gen_explicit"]
    assert b / a == pytest.approx((1 / 100 + 40 / 1e4) / (1 / 100 + 20 / 1e4), rel=1e-12)
    with pytest.raises(RegimeViolationError):
        bc.convex_bounds(bc.RegimeInputs(beta=1, n=10, T=2, etas=[0.6, 0.6], eps_path=1))


def test_convex_gen_matches_generic_chain():
    # feeding the stability bound into the generic bound reproduces the convex gen form
    etas = np.full(25, 0.1)
    inp = bc.RegimeInputs(beta=2, n=50, T=25, etas=etas, eps_path=0.7, eps_opt=0.02, eps_c=0.05)
    rep = bc.convex_bounds(inp)
    chain = bc.generic_gen_bound(2, 0.02, 0.05, rep["stability"])
    assert rep["gen"] == pytest.approx(chain, rel=1e-12)


def test_strongly_convex_examples():
    assert bc.gamma_fn(1, 1, 1) == pytest.approx(math.exp(-2), rel=1e-14)
    assert 1 / math.expm1(2) == pytest.approx(0.156518, abs=5e-7)
    assert 1 / math.expm1(2) >= bc.gamma_fn(1, 1, 1)
    assert bc.m_const(1, 1, 0.9, 4) == pytest.approx(2.22222, abs=5e-6)
    rep = bc.strongly_convex_bounds(bc.RegimeInputs(beta=1, n=10, T=2, gamma=1, etas=[1.0, 1.0],
                                                    w_gap=1, eps_c=0))
    assert rep["opt_bound"] == pytest.approx(0.5 * math.exp(-4), rel=1e-12)
    assert rep["path_bound_simple"] >= rep["path_bound"]
    assert "excess_explicit" in rep and "excess_explicit_alt" in rep
    with pytest.raises(RegimeViolationError):
        bc.strongly_convex_bounds(bc.RegimeInputs(beta=1, n=10, T=1, gamma=1, etas=[1.5], eps_path=1))


def test_strongly_convex_inverse_t_opt_bound():
    etas = 1.2 / np.arange(1, 11)
    rep = bc.strongly_convex_bounds(bc.RegimeInputs(beta=1, n=10, T=10, gamma=0.5, C=1.2, etas=etas,
                                                    w_gap=2, eps_c=0))
    assert rep["opt_bound"] == pytest.approx(0.5 * 10 ** (-2 * 1.2 * 0.5 / 1.5) * 2)


def test_pl_examples():
    rep = bc.pl_bounds(bc.RegimeInputs(beta=1, n=4, T=0, mu=1, ctilde=1, eps_opt=0, eps_c=0))
    assert rep["gen"] == pytest.approx(1.0)
    rep = bc.pl_bounds(bc.RegimeInputs(beta=1, n=4, T=0, mu=1, ctilde=0, eps_opt=0, eps_c=0))
    assert all(v == 0 for v in rep.values.values())
    rep = bc.pl_bounds(bc.RegimeInputs(beta=1, n=10, T=0, mu=1, ctilde=1, eps_opt=0.01, eps_c=0.2))
    assert rep["stability"] == pytest.approx(0.24)
    assert "gen" not in rep and rep.notes
    with pytest.raises(UsageError):
        bc.pl_bounds(bc.RegimeInputs(beta=1, n=4, T=0, ctilde=1, eps_opt=0))


def test_pl_opt_bound():
    rep = bc.pl_bounds(bc.RegimeInputs(beta=2, n=4, T=5, mu=0.5, ctilde=1, etas=np.full(5, 0.5),
                                       risk_w1_gap=3.0))
    assert rep["opt_bound"] == pytest.approx(0.75 ** 5 * 3)


def test_reports_reject_bad_values():
    rep = bc.BoundReport("convex")
    with pytest.raises(ArithmeticError):
        rep.add("x", float("nan"), bc.MEASURED)
    with pytest.raises(UsageError):
        bc.RegimeInputs(beta=1, n=10, T=2, eps_path=-1)
