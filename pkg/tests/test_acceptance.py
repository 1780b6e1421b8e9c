"""Acceptance criteria 1-9, each printing one PASS/FAIL line.

Run with ``pytest -v tests/test_acceptance.py -s`` or directly as a script.
Criteria 4, 5 and 8 share one sweep of the standard grid (about 40 s on one core).
"""
import math
import sys
import time

import pytest

from gdstability import cli
from gdstability import experiment_harness as eh
from gdstability.gd_engine import StepSchedule
from gdstability.loss_zoo import make_distribution, make_model
from gdstability.selfcheck import continuity_oracle, gradient_oracles, sum_product_oracles
from gdstability.stability_lab import ReplicatePlan, estimate_stability, recursion_check

STANDARD_GRID = (32, 64, 128, 256, 512, 1024)


def report(number, passed, detail, capsys=None):
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}"
    if capsys is not None:
        with capsys.disabled():
            print("\n" + line)
    else:
        print(line)
    return passed


@pytest.fixture(scope="module")
def standard_grid():
    start = time.perf_counter()
    configs = cli.standard_sweep(eh.ExperimentConfig(n_grid=STANDARD_GRID, reps=200, seed=0))
    rows = {(c.regime, c.t_rule): eh.run_regime(c) for c in configs}
    return rows, time.perf_counter() - start


def test_criterion_1_sum_product_closed_forms(capsys):
    start = time.perf_counter()
    out = sum_product_oracles(draws=500)
    elapsed = time.perf_counter() - start
    ok = all(o.passed for o in out) and elapsed < 1.0
    detail = "; ".join(f"{o.name}: {o.detail}" for o in out)
    assert report(1, ok, f"{detail} ({elapsed:.2f} s)", capsys)


def test_criterion_2_gradient_and_self_bounding(capsys):
    start = time.perf_counter()
    out = gradient_oracles(probes=200, sb_probes=1000)
    elapsed = time.perf_counter() - start
    failed = [o for o in out if not o.passed]
    ok = not failed and elapsed < 5.0
    assert report(2, ok, f"{len(out)} suites over 5 families, {len(failed)} failing ({elapsed:.2f} s)", capsys)


def test_criterion_3_quadratic_stability_oracle(capsys):
    start = time.perf_counter()
    dist = make_distribution("quadratic-point", 1)
    model = make_model(dist)
    rep = estimate_stability(model, dist, ReplicatePlan(10, 500, seed=0), StepSchedule.constant(0.5), 200)
    elapsed = time.perf_counter() - start
    target = 1 / (6 * 10 ** 2)
    z = abs(rep.eps_stab.mean - target) / rep.eps_stab.se
    ok = z <= 4 and elapsed < 10.0
    assert report(3, ok, f"eps_stab {rep.eps_stab.mean:.6g} +- {rep.eps_stab.se:.2g} vs {target:.6g} "
                         f"({z:.2f} sigma, {elapsed:.2f} s)", capsys)


def test_criterion_4_bound_validity(standard_grid, capsys):
    rows, elapsed = standard_grid
    flat = [r for rs in rows.values() for r in rs]
    summ = eh.verify_bounds(flat)
    gen_checked = sum(1 for r in flat for c in r.checks if c.name == "gen")
    exc_checked = sum(1 for r in flat for c in r.checks if c.name == "excess")
    ok = summ.ok and elapsed < 600 and gen_checked == 2 * len(flat) and exc_checked == len(flat)
    detail = (f"{len(flat)} cells, {sum(sum(v) for v in summ.counts.values())} bound checks, "
              f"{len(summ.violations)} violations ({elapsed:.1f} s)")
    for v in summ.violations:
        detail += f"\n    {v}"
    assert report(4, ok, detail, capsys)


def test_criterion_5_rate_recovery(standard_grid, capsys):
    rows, _ = standard_grid
    convex = eh.rate_of(rows[("convex", "sqrt-n")], "excess")
    strong = eh.rate_of(rows[("strongly-convex", "log-n")], "gen")
    ok = (-0.65 <= convex.slope <= -0.35 and -1.2 <= strong.slope <= -0.8
          and convex.excluded == 0 and strong.excluded == 0)
    assert report(5, ok, f"convex excess slope {convex.slope:.3f} in [-0.65, -0.35]; "
                         f"strongly convex gen slope {strong.slope:.3f} in [-1.2, -0.8]", capsys)


def test_criterion_6_regime_continuity(capsys):
    start = time.perf_counter()
    (out,) = continuity_oracle(draws=100)
    elapsed = time.perf_counter() - start
    ok = out.passed and elapsed < 1.0
    assert report(6, ok, f"{out.detail} ({elapsed:.2f} s)", capsys)


def test_criterion_7_recursion_lemmas(capsys):
    start = time.perf_counter()
    plan = ReplicatePlan(64, 50, seed=0)
    ls = make_distribution("least-squares", 8, noise=0.5)
    convex = recursion_check(make_model(ls), ls, plan, StepSchedule.half_inv_beta(), 8, kind="nonexpansive")
    ridge = make_distribution("ridge", 8, noise=0.5)
    model = make_model(ridge, lam=0.5)
    T = math.ceil((model.beta / model.gamma + 1) * math.log(64) / 2)
    strong = recursion_check(model, ridge, plan, StepSchedule.sc_optimal(), T, kind="contraction")
    elapsed = time.perf_counter() - start
    ok = convex.violations == 0 and strong.violations == 0 and elapsed < 30.0
    assert report(7, ok, f"non-expansive: {convex.violations} of {convex.steps_checked} steps; "
                         f"contraction: {strong.violations} of {strong.steps_checked} steps; "
                         f"worst excess {max(convex.max_excess, strong.max_excess):.2e} ({elapsed:.2f} s)",
                  capsys)


def test_criterion_8_estimator_agreement(standard_grid, capsys):
    rows, _ = standard_grid
    flat = [r for rs in rows.values() for r in rs]
    worst, bad = 0.0, []
    for r in flat:
        g1, g2 = r.report.eps_gen_direct, r.report.eps_gen_exch
        z = abs(g1.mean - g2.mean) / math.hypot(g1.se, g2.se)
        worst = max(worst, z)
        if z > 4:
            bad.append(f"{r.regime} T={r.T} n={r.n}")
    assert report(8, not bad, f"{len(flat) - len(bad)} of {len(flat)} cells agree, "
                              f"largest gap {worst:.2f} combined sigma" + "".join(f"; {b}" for b in bad), capsys)


def test_criterion_9_determinism(tmp_path, capsys):
    cfg = tmp_path / "exp.cfg"
    cfg.write_text("regime = nonconvex\nn_grid = 32, 64, 128\nreps = 50\nseed = 17\n")
    codes = [cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    a = (tmp_path / "a" / "rows.csv").read_bytes()
    b = (tmp_path / "b" / "rows.csv").read_bytes()
    ok = a == b and codes == [0, 0]
    assert report(9, ok, f"rows.csv identical: {a == b} ({len(a)} bytes), exit codes {codes}", capsys)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
