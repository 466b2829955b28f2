import numpy as np
import pytest

from neuralq_lab.diagnostics import ProbeReport, ReferencePoint, RegularityStatus, SigmaPair
from neuralq_lab.diagnostics.bias import bias_probe, bias_terms
from neuralq_lab.diagnostics.linearization import (
    gradient_gap_probe,
    linearization_probe,
    sphere_point,
    width_regime,
)
from neuralq_lab.diagnostics.mixing import estimate_mixing, mixing_time_tau
from neuralq_lab.diagnostics.population import (
    estimation_gap_check,
    msbe,
    network_q_table,
    population_gradient,
    population_semi_gradient,
    search_gap_violation,
    solve_stationary_point,
    stationary_gap_along_run,
)
from neuralq_lab.diagnostics.sigma import (
    check_regularity,
    check_regularity_all_patterns,
    estimate_sigma,
    estimate_sigma_mc,
    second_moment,
)
from neuralq_lab.learning import RunConfig, SamplingMode, StepRule
from neuralq_lab.learning.neural_q import train
from neuralq_lab.mdp import fixed_policy, state_action_weights, uniform_policy
from neuralq_lab.mdp.mdp_json import random_mdp
from neuralq_lab.mdp.oracles import stationary_distribution, value_iteration
from neuralq_lab.mdp.sampling import sample_trajectory
from neuralq_lab.network import NetShape
from neuralq_lab.network.linearized import linearize
from neuralq_lab.network.projection import BallConstraint, radius_for
from neuralq_lab.network.relu import forward, init_gaussian
from neuralq_lab.utils import DirectionMissing, FitDegenerate, SigmaSingular


def _theta0(mdp, m: int = 16, L: int = 2, seed: int = 0):
    return init_gaussian(NetShape(d=mdp.feature_dim, m=m, L=L), np.random.default_rng(seed))


def _bisection_sup_alpha(sigma_pi, sigma_star, gamma, hi=1e6, iterations=200):
    lo = 0.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if np.linalg.eigvalsh(sigma_pi - mid * gamma**2 * sigma_star).min() > 0:
            lo = mid
        else:
            hi = mid
    return lo


# Sigma matrices


def test_second_moment_of_two_basis_gradients():
    np.testing.assert_array_equal(second_moment(np.eye(2), np.array([0.5, 0.5]), m=1), np.diag([0.5, 0.5]))


def test_sigma_matrices_are_symmetric_and_psd(small_mdp, small_policy):
    theta0 = _theta0(small_mdp, m=8)
    direction = sphere_point(theta0, 1.0, np.random.default_rng(1)) - theta0
    pair = estimate_sigma(theta0, small_mdp, small_policy, direction)
    for sigma in (pair.sigma_pi, pair.sigma_star):
        assert np.abs(sigma - sigma.T).max() <= 1e-10
        assert np.linalg.eigvalsh(sigma).min() >= -1e-8
    assert pair.exact and not pair.reduced


def test_sigma_star_needs_a_direction(small_mdp, small_policy):
    pair = estimate_sigma(_theta0(small_mdp, m=8), small_mdp, small_policy)
    with pytest.raises(DirectionMissing):
        check_regularity(pair, gamma=0.5)


def test_sigma_scales_with_gradient_square():
    rng = np.random.default_rng(2)
    grads, weights = rng.normal(size=(6, 5)), rng.dirichlet(np.ones(6))
    np.testing.assert_allclose(second_moment(3.0 * grads, weights, 4), 9.0 * second_moment(grads, weights, 4), rtol=1e-12)


def test_monte_carlo_sigma_is_close_to_exact(small_mdp, small_policy):
    theta0 = _theta0(small_mdp, m=8)
    exact = estimate_sigma(theta0, small_mdp, small_policy)
    sampled = estimate_sigma_mc(theta0, small_mdp, small_policy, 100_000, np.random.default_rng(3))
    assert not sampled.exact and sampled.n_samples == 100_000
    assert np.linalg.norm(exact.sigma_pi - sampled.sigma_pi, ord=2) <= 5e-2


# Regularity


def test_identity_pair_gives_inverse_gamma_squared():
    result = check_regularity(SigmaPair(sigma_pi=np.eye(3), sigma_star=np.eye(3)), gamma=0.5, safety=1.0)
    assert result.sup_alpha == pytest.approx(4.0, rel=1e-12)
    assert result.status is RegularityStatus.PASS
    assert result.beta == pytest.approx(0.5)


def test_zero_sigma_star_is_unbounded():
    result = check_regularity(SigmaPair(sigma_pi=np.eye(2), sigma_star=np.zeros((2, 2))), gamma=0.9)
    assert result.unbounded and result.status is RegularityStatus.PASS
    assert result.verdict().startswith("PASS")


def test_singular_sigma_is_inconclusive():
    with pytest.raises(SigmaSingular) as e:
        check_regularity(SigmaPair(sigma_pi=np.diag([1.0, 0.0]), sigma_star=np.eye(2)), gamma=0.5)
    assert e.value.min_eigenvalue < 1e-12


def test_regularity_matches_bisection_on_random_pairs():
    rng = np.random.default_rng(4)
    for _ in range(20):
        a, b = rng.normal(size=(6, 6)), rng.normal(size=(6, 3))
        sigma_pi, sigma_star = a @ a.T + 0.1 * np.eye(6), b @ b.T
        result = check_regularity(SigmaPair(sigma_pi=sigma_pi, sigma_star=sigma_star), gamma=0.9, safety=1.0)
        expected = _bisection_sup_alpha(sigma_pi, sigma_star, 0.9)
        assert abs(result.sup_alpha - expected) <= 1e-8 * max(1.0, expected)


def test_all_pattern_check_bounds_every_direction(small_mdp, small_policy):
    theta0 = _theta0(small_mdp)
    overall = check_regularity_all_patterns(theta0, small_mdp, small_policy)
    rng = np.random.default_rng(5)
    for _ in range(10):
        direction = sphere_point(theta0, 1.0, rng) - theta0
        pair = estimate_sigma(theta0, small_mdp, small_policy, direction, reduce_to_span=True)
        assert check_regularity(pair, small_mdp.gamma).sup_alpha >= overall.sup_alpha * (1 - 1e-9)
    assert len(overall.pattern) == small_mdp.n_states


# Mixing


def test_mixing_time_worked_example():
    assert mixing_time_tau(1.0, 0.5, 1e-6) == 20
    assert mixing_time_tau(0.5, 0.9, 0.6) == 0


def test_mixing_time_is_nonincreasing_in_eta():
    taus = [mixing_time_tau(2.0, 0.8, eta) for eta in np.logspace(-8, 0, 60)]
    assert all(later <= earlier for earlier, later in zip(taus, taus[1:]))


def test_mixing_time_satisfies_defining_inequality():
    for lam, rho, eta in [(1.0, 0.5, 1e-6), (3.0, 0.97, 1e-4), (1.2, 0.1, 0.3)]:
        tau = mixing_time_tau(lam, rho, eta)
        assert lam * rho**tau <= eta
        assert tau == 0 or lam * rho ** (tau - 1) > eta


def test_estimate_mixing_on_flip_chain(flip_chain):
    mdp = flip_chain(0.25)
    estimate = estimate_mixing(mdp, uniform_policy(mdp), eta_T=1e-6, horizon=60)
    assert estimate.rho == pytest.approx(0.5, abs=1e-6)
    assert estimate.lam * estimate.rho**estimate.tau_star <= 1e-6


def test_estimate_mixing_of_instant_chain_is_degenerate(flip_chain):
    mdp = flip_chain(0.5)
    with pytest.raises(FitDegenerate):
        estimate_mixing(mdp, uniform_policy(mdp), eta_T=1e-3)


# Linearization


def test_linearization_gap_vanishes_at_zero_radius(small_mdp):
    shapes = [NetShape(d=6, m=16, L=2), NetShape(d=6, m=16, L=3)]
    report = linearization_probe(shapes, small_mdp.features, n_seeds=3, omega_rule=lambda shape: 0.0)
    assert (report.select("linearization_gap")["value"] == 0.0).all()
    assert (report.select("grad_perturbation")["value"] <= 1e-12).all()
    assert len(report.cells) == 2 * 2 * 3


def test_linearization_medians_decrease_with_width(small_mdp):
    shapes = [NetShape(d=6, m=m, L=2) for m in (64, 256, 1024)]
    report = linearization_probe(shapes, small_mdp.features, n_seeds=20)
    for probe in ("linearization_gap", "grad_perturbation"):
        medians = report.medians(probe)
        assert list(medians.index) == [64, 256, 1024]
        assert medians.iloc[0] > medians.iloc[1] > medians.iloc[2]
    assert (report.to_frame()["n_samples"] == 6).all()


def test_sphere_point_lies_on_every_layer_sphere():
    theta0 = init_gaussian(NetShape(d=3, m=8, L=3), np.random.default_rng(6))
    theta = sphere_point(theta0, 0.25, np.random.default_rng(7))
    constraint = BallConstraint(theta0, 0.25)
    np.testing.assert_allclose(constraint.distances(theta), 0.25, rtol=1e-12)


def test_width_regime_reports_requirement():
    narrow = width_regime(NetShape(d=4, m=16, L=2))
    assert not narrow.satisfied and narrow.required_m > 16
    assert width_regime(NetShape(d=4, m=16, L=2), omega=1.0, c1=1e-3).satisfied


def test_gradient_gap_is_zero_at_first_step(small_mdp, small_policy, tiny_shape):
    record = train(RunConfig(shape=tiny_shape, T=20, omega_coeff=5.0), small_mdp, small_policy)
    report = gradient_gap_probe(record, small_mdp, every=5)
    frame = report.select("gradient_gap")
    assert list(frame["index"]) == [0, 5, 10, 15]
    assert frame["value"].iloc[0] == pytest.approx(0.0, abs=1e-12)


# Population quantities


def test_population_semi_gradient_vanishes_with_zero_residual(single_state):
    probe_mdp = single_state([0.0])
    theta0 = _theta0(probe_mdp, m=16, seed=8)
    model = linearize(theta0)
    value = model.value0(probe_mdp.features[0, 0])
    mdp = single_state([0.5 * value], gamma=0.5)
    drift = population_semi_gradient(theta0, model, mdp, uniform_policy(mdp))
    assert np.abs(drift).max() <= 1e-12


def test_population_semi_gradient_without_discount_is_least_squares_gradient(small_mdp, small_policy):
    theta0 = _theta0(small_mdp, m=8, seed=9)
    model = linearize(theta0)
    theta = sphere_point(theta0, 0.1, np.random.default_rng(10))
    mu = stationary_distribution(small_mdp, small_policy)
    weights = state_action_weights(mu, small_policy).ravel()
    sigma_pi = estimate_sigma(theta0, small_mdp, small_policy, mu=mu).sigma_pi
    values, grads = model.tabulate(small_mdp.features)
    grads = grads.reshape(6, -1)
    offset = (weights * (values.ravel() - small_mdp.reward.ravel())) @ grads
    expected = theta0.shape.m * sigma_pi @ (theta - theta0) + offset
    drift = population_semi_gradient(theta, model, small_mdp, small_policy, gamma=0.0, mu=mu)
    np.testing.assert_allclose(drift, expected, rtol=1e-9, atol=1e-12)


def test_population_semi_gradient_is_affine_on_fixed_pattern(small_mdp, small_policy):
    theta0 = _theta0(small_mdp, m=8, seed=11)
    model = linearize(theta0)
    rng = np.random.default_rng(12)
    checked = 0
    for _ in range(20):
        a, b = sphere_point(theta0, 0.05, rng), sphere_point(theta0, 0.05, rng)
        mid = a.with_flat((a.flat + b.flat) / 2)
        tables = [model.table(t, small_mdp.features) for t in (a, b, mid)]
        if len({tuple(np.argmax(table, axis=1)) for table in tables}) > 1:
            continue
        checked += 1
        expected = 0.5 * (
            population_semi_gradient(a, model, small_mdp, small_policy)
            + population_semi_gradient(b, model, small_mdp, small_policy)
        )
        np.testing.assert_allclose(population_semi_gradient(mid, model, small_mdp, small_policy), expected, atol=1e-10)
    assert checked > 0


@pytest.mark.slow
def test_population_semi_gradient_matches_long_run_average():
    mdp = random_mdp(3, 2, gamma=0.5, seed=13)
    policy = uniform_policy(mdp)
    theta0 = _theta0(mdp, m=8, seed=14)
    model = linearize(theta0)
    theta = sphere_point(theta0, 0.2, np.random.default_rng(15))
    q = model.table(theta, mdp.features)
    _, grads = model.tabulate(mdp.features)
    trajectory = sample_trajectory(mdp, policy, 1_000_000, np.random.default_rng(16))
    deltas = q[trajectory.s, trajectory.a] - trajectory.r - mdp.gamma * q[trajectory.s_next].max(axis=1)
    pair_ids = trajectory.s * mdp.n_actions + trajectory.a
    summed = np.bincount(pair_ids, weights=deltas, minlength=mdp.n_states * mdp.n_actions)
    average = summed / len(trajectory) @ grads.reshape(mdp.n_states * mdp.n_actions, -1)
    expected = population_semi_gradient(theta, model, mdp, policy)
    assert np.linalg.norm(average - expected) <= 1e-2 * np.linalg.norm(expected)


def test_estimation_gap_of_identical_points_is_zero(small_mdp, small_policy):
    theta0 = _theta0(small_mdp, m=8)
    theta = sphere_point(theta0, 0.1, np.random.default_rng(17))
    assert estimation_gap_check(theta, theta, linearize(theta0), small_mdp, small_policy, beta=0.5) == 0.0


def test_estimation_gap_holds_when_regularity_passes():
    mdp = random_mdp(4, 2, gamma=0.5, seed=3)
    policy = uniform_policy(mdp)
    theta0 = _theta0(mdp, m=16, seed=18)
    regularity = check_regularity_all_patterns(theta0, mdp, policy)
    assert regularity.status is RegularityStatus.PASS
    assert regularity.beta is not None
    constraint = BallConstraint(theta0, radius_for(theta0.shape, 20.0))
    search = search_gap_violation(
        linearize(theta0), mdp, policy, constraint, regularity.beta, 100, np.random.default_rng(19)
    )
    assert search.min_margin >= -1e-8
    assert search.n_violations == 0


def test_estimation_gap_violation_is_found_when_regularity_fails(single_state):
    mdp = single_state([0.0, 0.0], gamma=0.99)
    policy = fixed_policy(mdp, [[0.98, 0.02]])
    theta0 = _theta0(mdp, m=16, seed=20)
    regularity = check_regularity_all_patterns(theta0, mdp, policy)
    assert regularity.status is RegularityStatus.FAIL
    constraint = BallConstraint(theta0, radius_for(theta0.shape, 20.0))
    search = search_gap_violation(linearize(theta0), mdp, policy, constraint, 0.1, 100, np.random.default_rng(21))
    assert search.min_margin < 0
    assert search.n_violations > 0


def test_stationary_point_iteration_converges(small_mdp, small_policy):
    theta0 = _theta0(small_mdp, m=8, seed=22)
    constraint = BallConstraint(theta0, radius_for(theta0.shape, 20.0))
    point = solve_stationary_point(linearize(theta0), small_mdp, small_policy, constraint, eta=0.05, tol=1e-10)
    assert point.converged
    assert constraint.contains(point.theta, tol=1e-12)


def test_stationary_gap_along_run(small_mdp, small_policy, tiny_shape):
    record = train(RunConfig(shape=tiny_shape, T=30, omega_coeff=5.0), small_mdp, small_policy)
    model = linearize(record.theta0)
    # Only t = 0 is kept, where theta_t is the anchor itself.
    assert stationary_gap_along_run(record, model, small_mdp, small_policy, record.theta0, every=30) == 0.0
    assert stationary_gap_along_run(record, model, small_mdp, small_policy, record.theta0) > 0.0


def test_msbe_of_optimal_and_zero_tables(small_mdp, small_policy):
    assert msbe(value_iteration(small_mdp, tol=1e-12), small_mdp, small_policy) <= 1e-20
    weights = state_action_weights(stationary_distribution(small_mdp, small_policy), small_policy)
    assert msbe(np.zeros((3, 2)), small_mdp, small_policy) == pytest.approx(np.sum(weights * small_mdp.reward**2))


def test_network_q_table_matches_forward(small_mdp):
    theta = _theta0(small_mdp, m=8, seed=23)
    table = network_q_table(theta, small_mdp)
    for s in range(3):
        for a in range(2):
            assert table[s, a] == pytest.approx(forward(theta, small_mdp.features[s, a]), abs=1e-12)


def test_population_gradient_agrees_with_linearization_at_anchor(small_mdp, small_policy):
    theta0 = _theta0(small_mdp, m=8, seed=24)
    expected = population_semi_gradient(theta0, linearize(theta0), small_mdp, small_policy)
    np.testing.assert_allclose(population_gradient(theta0, small_mdp, small_policy), expected, rtol=1e-10, atol=1e-12)


# Bias along runs


def _bias_config(shape: NetShape, seed: int, sampling=SamplingMode.MARKOV, T: int = 2000) -> RunConfig:
    return RunConfig(
        shape=shape,
        T=T,
        omega_coeff=20.0,
        step_rule=StepRule.EXPLICIT,
        eta=1e-3,
        seed=seed,
        sampling=sampling,
    )


def test_bias_with_current_reference_is_zero(small_mdp, small_policy, tiny_shape):
    record = train(_bias_config(tiny_shape, 0, T=100), small_mdp, small_policy)
    zetas = bias_terms(record, small_mdp, small_policy, ReferencePoint.CURRENT)
    np.testing.assert_array_equal(zetas, 0.0)


def test_bias_vanishes_under_iid_resampling(small_mdp, small_policy, tiny_shape):
    record = train(_bias_config(tiny_shape, 1, SamplingMode.IID), small_mdp, small_policy)
    means = bias_probe(record, small_mdp, small_policy, window=100).select("bias_window")["value"].to_numpy()
    assert len(means) == 20
    assert abs(means.mean()) <= 4 * means.std(ddof=1) / np.sqrt(len(means))


def test_bias_probe_reports_windows_and_envelope(flip_chain):
    mdp = flip_chain(0.25)
    policy = uniform_policy(mdp)
    record = train(_bias_config(NetShape(d=2, m=8, L=2), 2, T=250), mdp, policy)
    report = bias_probe(record, mdp, policy, window=100)
    windows = report.select("bias_window")
    assert list(windows["index"]) == [0, 1, 2]
    assert list(windows["n_samples"]) == [100, 100, 50]
    assert len(report.select("bias_envelope")) == 1


@pytest.mark.slow
def test_bias_is_larger_on_slowly_mixing_chain(flip_chain):
    medians = {}
    for p in (0.05, 0.45):
        mdp = flip_chain(p)
        policy = uniform_policy(mdp)
        per_seed = []
        for seed in range(20):
            record = train(_bias_config(NetShape(d=2, m=16, L=2), seed), mdp, policy)
            windows = bias_probe(record, mdp, policy, window=100).select("bias_window")["value"]
            per_seed.append(np.abs(windows).mean())
        medians[p] = np.median(per_seed)
    assert medians[0.05] > medians[0.45]


# Reports


def test_probe_report_summary_and_csv(tmp_path):
    report = ProbeReport()
    for seed, value in enumerate([3.0, 1.0, 2.0]):
        report.add(probe="linearization_gap", m=64, L=2, omega=0.1, seed=seed, value=value)
    report.add(probe="tau_star", m=64, L=2, omega=0.1, seed=0, value=20.0)
    summary = report.summary()
    row = summary[summary["probe"] == "linearization_gap"].iloc[0]
    assert row["median"] == 2.0 and row["count"] == 3
    csv_text = report.to_csv(tmp_path / "probes.csv").read_text(encoding="utf-8")
    assert csv_text.splitlines()[0] == "probe,m,L,omega,seed,value"
    assert report.write_summary(tmp_path / "probes_summary.md").exists()
