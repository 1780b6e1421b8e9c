import numpy as np
import pytest

from gdstability.errors import DivergenceError, UsageError
from gdstability.gd_engine import (StepSchedule, gd_batch, opt_error, path_error, run_gd,
                                   run_sgd_baseline, schedule_eta, step_sizes)
from gdstability.loss_zoo import (Dataset, LossModel, empirical_risk, erm_minimizer,
                                  make_distribution, make_model)

QUAD = LossModel("quadratic-point", 1, 1.0, 1.0, 1.0)
S02 = Dataset(np.array([[0.0], [2.0]]))


def test_schedule_examples():
    assert schedule_eta(StepSchedule.half_inv_beta(), 1, 1.0) == 0.5
    assert schedule_eta(StepSchedule.inverse_t(0.5), 2, 1.0) == 0.25
    assert schedule_eta(StepSchedule.sc_optimal(), 5, 1.0, 1.0) == 1.0
    with pytest.raises(UsageError):
        schedule_eta(StepSchedule.sc_optimal(), 1, 1.0)
    with pytest.raises(UsageError):
        StepSchedule.constant(0.0)


def test_quadratic_closed_form():
    s = StepSchedule.constant(0.5)
    assert run_gd(QUAD, S02, [0.0], s, 1).output[0] == 0.5
    assert run_gd(QUAD, S02, [0.0], s, 2).output[0] == 0.75
    # W_{T+1} = mean + (1 - eta)^T (W_1 - mean)
    traj = run_gd(QUAD, S02, [0.0], s, 30)
    np.testing.assert_allclose(traj.iterates[:, 0], 1 - 0.5 ** np.arange(31), rtol=0, atol=1e-15)


def test_zero_steps():
    traj = run_gd(QUAD, S02, [0.3], StepSchedule.constant(0.5), 0)
    assert traj.T == 0 and traj.iterates.shape == (1, 1) and traj.output[0] == 0.3
    assert path_error(traj) == 0.0
    sgd = run_sgd_baseline(QUAD, S02, [0.3], StepSchedule.constant(0.5), 0, seed=1)
    assert sgd.output[0] == 0.3


def test_path_error_examples():
    s = StepSchedule.constant(0.5)
    assert path_error(run_gd(QUAD, S02, [0.0], s, 1, tracked_index=1)) == 0.0
    assert path_error(run_gd(QUAD, S02, [0.0], s, 1, tracked_index=2)) == 2.0


def test_opt_error_examples():
    s = StepSchedule.constant(0.5)
    assert opt_error(QUAD, run_gd(QUAD, S02, [0.0], s, 1), S02) == pytest.approx(0.125, abs=1e-15)
    assert opt_error(QUAD, run_gd(QUAD, S02, [1.0], s, 7), S02) == 0.0
    # geometric decay: R_S(W_t) - R_S(W*) = (1 - eta)^(2T) (W_1 - W*)^2 / 2
    for T in range(1, 21):
        err = opt_error(QUAD, run_gd(QUAD, S02, [0.0], s, T), S02)
        assert err <= 0.25 ** T * 0.5 * (1 + 1e-12)


@pytest.mark.parametrize("family", ["least-squares", "ridge", "logistic", "nonconvex-sigmoid-squared"])
def test_monotone_descent_below_2_over_beta(family):
    dist = make_distribution(family, 4, decay=0.5, noise=0.1)
    model = make_model(dist, lam=0.2 if family == "ridge" else 0.0)
    S = dist.sample(30, np.random.default_rng(4))
    traj = run_gd(model, S, np.ones(4), StepSchedule.constant(1.0 / model.beta), 50)
    assert np.all(np.diff(traj.risks) <= 1e-14)


def test_divergence_reports_step():
    big = Dataset(np.array([[1.0]]))
    with pytest.raises(DivergenceError) as exc:
        run_gd(QUAD, big, [0.0], StepSchedule.constant(1e200), 10)
    assert exc.value.step >= 1


def test_batch_matches_single_runs():
    dist = make_distribution("logistic", 3, decay=0.5)
    model = make_model(dist)
    rng = np.random.default_rng(0)
    data = [dist.sample(12, rng) for _ in range(4)]
    etas = step_sizes(StepSchedule.inverse_t(0.5 / model.beta), 15, model.beta)
    W, path, ok = gd_batch(model, np.stack([S.X for S in data]), np.stack([S.y for S in data]),
                           np.zeros(3), etas)
    assert ok.all()
    for k, S in enumerate(data):
        traj = run_gd(model, S, np.zeros(3), StepSchedule.inverse_t(0.5 / model.beta), 15)
        np.testing.assert_allclose(W[k], traj.output, rtol=1e-12, atol=1e-15)


def test_sgd_deterministic_and_converges_on_quadratic():
    s = StepSchedule.inverse_t(1.0)
    a = run_sgd_baseline(QUAD, S02, [0.0], s, 200, seed=5)
    b = run_sgd_baseline(QUAD, S02, [0.0], s, 200, seed=5)
    np.testing.assert_array_equal(a.iterates, b.iterates)
    # eta_t = 1/t makes W_{T+1} the running mean of the picked points
    assert abs(a.output[0] - erm_minimizer(QUAD, S02)[0]) < 0.3
    assert empirical_risk(QUAD, a.output, S02) >= 0.5


def test_bad_inputs():
    with pytest.raises(UsageError):
        run_gd(QUAD, S02, [0.0, 1.0], StepSchedule.constant(0.5), 1)
    with pytest.raises(UsageError):
        run_gd(QUAD, S02, [0.0], StepSchedule.constant(0.5), 1, tracked_index=3)
