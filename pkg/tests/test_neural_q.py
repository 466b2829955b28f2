import numpy as np
import pandas as pd
import pytest

from neuralq_lab.learning import METRIC_COLUMNS, RunConfig, SamplingMode, StepRule
from neuralq_lab.learning.neural_q import replay, semi_gradient, step_size, td_error, train
from neuralq_lab.learning.records import read_run_csv, write_run
from neuralq_lab.mdp import Transition, epsilon_greedy_policy, uniform_policy
from neuralq_lab.mdp.mdp_json import random_mdp
from neuralq_lab.mdp.oracles import value_iteration
from neuralq_lab.network import NetShape, Theta
from neuralq_lab.network.projection import BallConstraint, project_ball
from neuralq_lab.network.relu import forward, gradient
from neuralq_lab.network.snapshot import load_theta
from neuralq_lab.utils import BadDiscount, InvalidArgument, NoDataError, ShapeMismatch, WidthCapExceeded

HAND_FEATURES = np.array([[[1.0]], [[0.5]]])


def _run_config(shape: NetShape, **overrides) -> RunConfig:
    settings = dict(T=300, omega_coeff=20.0, seed=4)
    settings.update(overrides)
    return RunConfig(shape=shape, **settings)


# TD error and semi-gradient


def test_td_error_hand_trace():
    theta = Theta(NetShape(d=1, m=1, L=2), np.array([1.0, 1.0]))
    tr = Transition(s=0, a=0, r=0.25, s_next=1)
    assert td_error(theta, tr, 0.5, HAND_FEATURES) == pytest.approx(0.5, abs=1e-15)


def test_td_error_of_zero_network_is_minus_reward(small_mdp, tiny_shape):
    theta = Theta(tiny_shape, np.zeros(tiny_shape.n_params))
    tr = Transition(s=1, a=1, r=0.3, s_next=2)
    assert td_error(theta, tr, 0.9, small_mdp.features) == -0.3


def test_td_error_without_discount_ignores_next_state(small_mdp, tiny_shape):
    theta = Theta(tiny_shape, np.random.default_rng(0).normal(size=tiny_shape.n_params))
    tr = Transition(s=0, a=1, r=-0.2, s_next=2)
    expected = forward(theta, small_mdp.features[0, 1]) + 0.2
    assert td_error(theta, tr, 0.0, small_mdp.features) == pytest.approx(expected, abs=1e-15)


def test_semi_gradient_factorizes(small_mdp, tiny_shape):
    theta = Theta(tiny_shape, np.random.default_rng(1).normal(size=tiny_shape.n_params))
    tr = Transition(s=2, a=0, r=0.7, s_next=0)
    expected = td_error(theta, tr, 0.5, small_mdp.features) * gradient(theta, small_mdp.features[2, 0])
    np.testing.assert_array_equal(semi_gradient(theta, tr, 0.5, small_mdp.features), expected)


def test_semi_gradient_vanishes_with_zero_td_error(small_mdp, tiny_shape):
    theta = Theta(tiny_shape, np.zeros(tiny_shape.n_params))
    tr = Transition(s=0, a=0, r=0.0, s_next=1)
    assert not semi_gradient(theta, tr, 0.5, small_mdp.features).any()


def test_semi_gradient_reuses_a_given_td_error(small_mdp, tiny_shape):
    theta = Theta(tiny_shape, np.random.default_rng(2).normal(size=tiny_shape.n_params))
    tr = Transition(s=1, a=0, r=0.1, s_next=2)
    delta = td_error(theta, tr, 0.5, small_mdp.features)
    np.testing.assert_array_equal(
        semi_gradient(theta, tr, 0.5, small_mdp.features, delta=delta),
        semi_gradient(theta, tr, 0.5, small_mdp.features),
    )
    np.testing.assert_array_equal(
        semi_gradient(theta, tr, 0.5, small_mdp.features, delta=2.0),
        2.0 * gradient(theta, small_mdp.features[1, 0]),
    )


# Step sizes


def test_theorem_step_size_substitution():
    config = RunConfig(shape=NetShape(d=2, m=100, L=2), T=10_000, beta=0.5)
    assert step_size(config) == pytest.approx(1e-4, rel=1e-15)


def test_doubling_width_halves_step_size():
    narrow = RunConfig(shape=NetShape(d=2, m=100, L=2), T=400, beta=0.3)
    wide = RunConfig(shape=NetShape(d=2, m=200, L=2), T=400, beta=0.3)
    assert step_size(wide) == step_size(narrow) / 2


def test_other_step_rules():
    shape = NetShape(d=2, m=10, L=2)
    assert step_size(RunConfig(shape=shape, T=100, step_rule=StepRule.THEOREM_T)) == pytest.approx(1e-3)
    assert step_size(RunConfig(shape=shape, T=100, step_rule=StepRule.EXPLICIT, eta=0.02)) == 0.02
    with pytest.raises(InvalidArgument):
        RunConfig(shape=shape, T=100, step_rule=StepRule.EXPLICIT)


# Training


def test_iterates_stay_inside_the_ball(small_mdp, small_policy, tiny_shape):
    record = train(_run_config(tiny_shape, omega_coeff=0.5), small_mdp, small_policy)
    assert record.layer_distances.max() <= record.omega + 1e-12
    assert record.metrics["max_layer_dist"].max() <= record.omega + 1e-12
    assert record.metrics["proj_active"].sum() > 0
    assert BallConstraint(record.theta0, record.omega).contains(record.theta_final, tol=1e-12)


def test_training_is_deterministic(small_mdp, small_policy, tiny_shape):
    config = _run_config(tiny_shape)
    first = train(config, small_mdp, small_policy)
    second = train(config, small_mdp, small_policy)
    pd.testing.assert_frame_equal(first.metrics, second.metrics, check_exact=True)
    np.testing.assert_array_equal(first.theta_final.flat, second.theta_final.flat)
    np.testing.assert_array_equal(first.trajectory.s_next, second.trajectory.s_next)


def test_markov_run_follows_one_trajectory(small_mdp, small_policy, tiny_shape):
    record = train(_run_config(tiny_shape), small_mdp, small_policy)
    trajectory = record.trajectory
    assert len(trajectory) == 300
    assert trajectory.s[0] == record.initial_state
    np.testing.assert_array_equal(trajectory.s[1:], trajectory.s_next[:-1])


def test_iid_run_restarts_from_stationary_draws(small_mdp, small_policy, tiny_shape):
    record = train(_run_config(tiny_shape, sampling=SamplingMode.IID), small_mdp, small_policy)
    trajectory = record.trajectory
    assert np.any(trajectory.s[1:] != trajectory.s_next[:-1])


def test_each_step_is_one_projected_semi_gradient_step(small_mdp, small_policy, tiny_shape):
    record = train(_run_config(tiny_shape, T=50, omega_coeff=1.0), small_mdp, small_policy)
    constraint = BallConstraint(record.theta0, record.omega)
    expected = None
    for _, theta, tr in replay(record, small_mdp):
        if expected is not None:
            np.testing.assert_array_equal(theta.flat, expected.flat)
        g = semi_gradient(theta, tr, record.gamma, small_mdp.features)
        expected = project_ball(theta.with_flat(theta.flat - record.eta * g), constraint)
    np.testing.assert_array_equal(record.theta_final.flat, expected.flat)


def test_gradient_norm_grows_no_faster_than_sqrt_width(small_mdp, small_policy):
    widths = [16, 64, 256]
    ratios = []
    for m in widths:
        shape = NetShape(d=small_mdp.feature_dim, m=m, L=2)
        norms = [
            train(_run_config(shape, seed=seed, log_every=5), small_mdp, small_policy).metrics["grad_norm"].mean()
            for seed in range(4)
        ]
        ratios.append(np.mean(norms) / np.sqrt(m))
    assert np.all(np.isfinite(ratios))
    assert ratios[-1] <= 2.5 * ratios[0]
    assert ratios[1] <= 2.5 * ratios[0]


def test_logging_keeps_first_and_last_step(small_mdp, small_policy, tiny_shape):
    record = train(_run_config(tiny_shape, T=95, log_every=10), small_mdp, small_policy)
    assert list(record.metrics.columns) == METRIC_COLUMNS
    assert list(record.metrics["t"]) == list(range(0, 95, 10)) + [94]
    assert record.layer_distances.shape == (len(record.metrics), 2)


def test_run_rejects_discount_override_of_one(small_mdp, small_policy, tiny_shape):
    with pytest.raises(BadDiscount):
        train(_run_config(tiny_shape, gamma=1.0), small_mdp, small_policy)


def test_run_rejects_oversized_network(small_mdp, small_policy, tiny_shape):
    with pytest.raises(WidthCapExceeded):
        train(_run_config(tiny_shape, max_params=10), small_mdp, small_policy)
    with pytest.raises(ShapeMismatch):
        train(_run_config(NetShape(d=3, m=8, L=2)), small_mdp, small_policy)


def test_width_cap_from_environment(monkeypatch, small_mdp, small_policy, tiny_shape):
    monkeypatch.setenv("NEURALQ_MAX_PARAMS", "20")
    with pytest.raises(WidthCapExceeded):
        train(_run_config(tiny_shape), small_mdp, small_policy)


def test_supervised_regression_sanity(single_state):
    # One state, one action, no bootstrap: TD learning reduces to fitting f(theta; 1) = 0.75.
    mdp = single_state([0.75])
    config = RunConfig(
        shape=NetShape(d=1, m=64, L=2),
        T=5000,
        omega_coeff=50.0,
        step_rule=StepRule.EXPLICIT,
        eta=1e-3,
        gamma=0.0,
        seed=3,
    )
    record = train(config, mdp, uniform_policy(mdp))
    td = record.metrics["td_err_sq"].to_numpy()
    assert np.sqrt(td[-1]) < 0.1 * np.sqrt(td[0])
    assert record.q_star[0, 0] == pytest.approx(0.75)


@pytest.mark.slow
def test_q_gap_shrinks_on_frozen_mdp():
    mdp = random_mdp(5, 2, gamma=0.5, seed=7)
    policy = epsilon_greedy_policy(mdp, value_iteration(mdp), 0.3)
    improved = 0
    for seed in range(5):
        config = RunConfig(shape=NetShape(d=10, m=256, L=2), T=50_000, omega_coeff=50.0, seed=seed, log_every=10)
        gaps = train(config, mdp, policy).metrics["q_gap_sq"].to_numpy()
        tenth = len(gaps) // 10
        improved += gaps[-tenth:].mean() <= 0.5 * gaps[:tenth].mean()
    assert improved >= 4


# Run files


def test_run_files_round_trip(tmp_path, small_mdp, small_policy, tiny_shape):
    record = train(_run_config(tiny_shape, T=40), small_mdp, small_policy)
    csv_path = write_run(record, tmp_path, "cell", snapshot=True)
    metrics = read_run_csv(csv_path)
    pd.testing.assert_frame_equal(metrics, record.metrics, check_exact=True, check_dtype=False)
    np.testing.assert_array_equal(load_theta(tmp_path / "cell.theta").flat, record.theta_final.flat)
    assert (tmp_path / "cell.json").exists()


def test_header_only_run_file_has_no_data(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text(",".join(METRIC_COLUMNS) + "\n", encoding="utf-8")
    with pytest.raises(NoDataError):
        read_run_csv(path)
