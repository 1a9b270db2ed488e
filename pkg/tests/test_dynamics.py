import time

import numpy as np
import pandas as pd
import pytest
from conftest import bounces, constant_transition_model
from scipy import stats

from soundbounce.dynamics import (
    BounceBelief,
    TransitionModel,
    filter_outlier,
    predict_next_bounce,
    rollout_to_plane,
    train_transition_model,
    transition_pairs_from_posterior,
    write_rollout_csv,
)
from soundbounce.errors import HeadingUndefinedError, RejectedInputError
from soundbounce.mdn import GaussianD, MdnTrainConfig, sample_batched_mixture
from soundbounce.physics import BounceEvent

THRESHOLD = stats.chi2.ppf(0.975, df=2)


@pytest.fixture
def last_two():
    return bounces((0.1, 0.0, 0.0), (0.3, 0.1, 0.0))


@pytest.fixture
def belief():
    return BounceBelief(mean=np.zeros(2), covariance=np.eye(2) * 1e-4, time_mean=0.5, time_var=1e-4)


def test_chi_square_threshold_value():
    assert THRESHOLD == pytest.approx(7.3778, abs=1e-4)


def test_prediction_follows_heading(straight_transition, last_two, rng):
    previous, current = last_two
    belief = predict_next_bounce(straight_transition, previous, current, 500, rng)
    np.testing.assert_allclose(belief.mean, [0.2, 0.0], atol=1e-4)
    assert belief.time_mean == pytest.approx(0.5, abs=1e-4)
    assert belief.interval_mean == pytest.approx(0.2, abs=1e-4)
    assert belief.positions.shape == (500, 2)


def test_prediction_turns_with_alpha(last_two, rng):
    model = constant_transition_model(alpha_next=np.pi / 2)
    belief = predict_next_bounce(model, *last_two, rng=rng)
    np.testing.assert_allclose(belief.mean, [0.1, 0.1], atol=1e-3)


def test_coincident_bounces_have_no_heading(straight_transition):
    previous, current = bounces((0.0, 0.1, 0.1), (0.2, 0.1, 0.1))
    with pytest.raises(HeadingUndefinedError):
        predict_next_bounce(straight_transition, previous, current)
    with pytest.raises(HeadingUndefinedError):
        rollout_to_plane(straight_transition, previous, current)


def test_rollout_crossing_geometry(straight_transition, last_two, rng):
    samples = rollout_to_plane(straight_transition, *last_two, plane_x=0.35, k=4, n=3, rng=rng)
    assert len(samples) == 27
    assert set(samples.depth) == {3}
    np.testing.assert_allclose(samples.y, 0.0, atol=1e-3)
    np.testing.assert_allclose(samples.t, 0.8, atol=1e-3)
    np.testing.assert_allclose(samples.z, 0.5 * 9.81 * 0.1 * 0.1, atol=1e-3)


@pytest.mark.parametrize("k, n", [(2, 5), (3, 4), (4, 3)])
def test_rollout_leaf_count_is_bounded(k, n, last_two, rng):
    model = constant_transition_model(alpha_next=0.0, d_next=0.05, spread=0.02)
    samples = rollout_to_plane(model, *last_two, plane_x=0.2, k=k, n=n, rng=rng)
    assert len(samples) <= n**k
    assert np.all(samples.depth <= k)


def test_rollout_without_crossing(straight_transition, last_two, rng):
    samples = rollout_to_plane(straight_transition, *last_two, plane_x=5.0, k=2, n=3, rng=rng)
    assert samples.empty
    assert samples.bounces.shape == (12, 4)
    with pytest.raises(RejectedInputError):
        samples.mean


def test_rollout_rejects_bad_depth(straight_transition, last_two):
    with pytest.raises(RejectedInputError):
        rollout_to_plane(straight_transition, *last_two, k=0)


def test_rollout_spread_grows_with_depth(last_two):
    model = constant_transition_model(spread=0.02)
    near, far = [], []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        near.append(rollout_to_plane(model, *last_two, plane_x=0.15, k=4, n=5, rng=rng).std[0])
        far.append(rollout_to_plane(model, *last_two, plane_x=0.38, k=4, n=5, rng=rng).std[0])
    assert np.mean(far) > np.mean(near)


def test_rollout_csv(tmp_path, straight_transition, last_two, rng):
    samples = rollout_to_plane(straight_transition, *last_two, plane_x=0.35, k=4, n=2, rng=rng)
    frame = pd.read_csv(write_rollout_csv(samples, tmp_path / "rollout.csv"))
    assert list(frame.columns) == ["kind", "depth", "x", "y", "z", "t"]
    assert (frame["kind"] == "crossing").sum() == len(samples)
    assert (frame["kind"] == "bounce").sum() == samples.bounces.shape[0]


def test_mean_observation_passes_through(belief):
    observed = BounceEvent(0.51, np.zeros(2))
    replaced, result = filter_outlier(belief, observed)
    assert not replaced
    assert result is observed


def test_filter_boundary_is_inclusive(belief):
    radius = np.sqrt(THRESHOLD) * 0.01
    replaced, _ = filter_outlier(belief, BounceEvent(0.5, np.array([radius, 0.0])))
    assert not replaced
    replaced, _ = filter_outlier(belief, BounceEvent(0.5, np.array([radius * 1.001, 0.0])))
    assert replaced


def test_far_observation_is_replaced(belief):
    replaced, result = filter_outlier(belief, BounceEvent(0.52, np.array([0.1, 0.0])))
    assert replaced
    np.testing.assert_array_equal(result.position, belief.mean)
    assert result.time == 0.52


def test_far_time_is_replaced_too(belief):
    _, result = filter_outlier(belief, BounceEvent(0.9, np.array([0.1, 0.0])))
    assert result.time == belief.time_mean


def test_filter_confidence_range(belief):
    with pytest.raises(RejectedInputError):
        filter_outlier(belief, BounceEvent(0.5, np.zeros(2)), confidence=1.0)


def test_filter_passes_in_distribution_draws(rng):
    belief = BounceBelief(
        mean=np.array([0.3, 0.2]), covariance=np.array([[4e-4, 1e-4], [1e-4, 1e-4]]), time_mean=0.5, time_var=1e-4
    )
    draws = rng.multivariate_normal(belief.mean, belief.covariance, 1000)
    passed = sum(not filter_outlier(belief, BounceEvent(0.5, position))[0] for position in draws)
    assert passed >= 975 - 3 * np.sqrt(1000 * 0.975 * 0.025)


def test_transition_model_round_trip(tmp_path, straight_transition, last_two):
    path = straight_transition.save(tmp_path / "transition.json")
    restored = TransitionModel.load(path)
    query = np.array([0.2, 0.1])
    for a, b in zip(straight_transition.model.mixture_arrays(query), restored.model.mixture_arrays(query)):
        np.testing.assert_array_equal(a, b)


def test_transition_pairs_shape():
    posterior = GaussianD(np.array([0.8, 3.0]), np.array([1e-4, 0.01]), lower=[0.55, 1.0], upper=[0.95, 5.0])
    x, y = transition_pairs_from_posterior(posterior, 3, n_bounces=8, seed=0)
    assert x.shape == (18, 2)
    assert y.shape == (18, 3)
    np.testing.assert_allclose(y[:, 0] / x[:, 0], 0.8, atol=0.05)


def test_transition_pairs_need_2d_posterior():
    with pytest.raises(RejectedInputError):
        transition_pairs_from_posterior(GaussianD(np.array([0.8]), np.array([0.01])), 3)


@pytest.mark.slow
def test_trained_transition_predicts_restitution():
    posterior = GaussianD(np.array([0.8, 4.0]), np.array([1e-6, 1e-4]), lower=[0.55, 1.0], upper=[0.95, 5.0])
    config = MdnTrainConfig(n_components=2, hidden_sizes=(32, 32), optimizer="adam", learning_rate=3e-3, epochs=60)
    model = train_transition_model(posterior, n_sims=400, config=config, seed=1)
    previous, current = bounces((0.0, 0.0, 0.3), (0.25, 0.2, 0.3))
    belief = predict_next_bounce(model, previous, current, 2000, np.random.default_rng(0))
    assert belief.interval_mean == pytest.approx(0.2, abs=0.02)


def _alpha_variance(model: TransitionModel, inputs: np.ndarray) -> float:
    weights, means, variances = model.model.mixture_arrays(inputs)
    alphas = sample_batched_mixture(weights, means, variances, 500, np.random.default_rng(0))[..., 2]
    return float(alphas.var(axis=1).mean())


@pytest.mark.slow
def test_wide_kappa_posterior_widens_alpha():
    lower, upper = [0.55, 1.0], [0.95, 5.0]
    collapsed = GaussianD(np.array([0.8, 4.9]), np.array([1e-6, 1e-6]), lower=lower, upper=upper)
    wide = GaussianD(np.array([0.8, 1.5]), np.array([1e-6, 0.25]), lower=lower, upper=upper)
    config = MdnTrainConfig(n_components=2, hidden_sizes=(32, 32), optimizer="adam", learning_rate=3e-3, epochs=60)
    stiff = train_transition_model(collapsed, n_sims=400, config=config, seed=1)
    loose = train_transition_model(wide, n_sims=400, config=config, seed=1)
    inputs, _ = transition_pairs_from_posterior(collapsed, 20, seed=3)
    assert _alpha_variance(loose, inputs) > _alpha_variance(stiff, inputs)


@pytest.mark.slow
def test_rollout_fits_the_control_period(last_two):
    model = constant_transition_model(spread=1e-3, n_components=6, hidden_sizes=(64, 64))
    rng = np.random.default_rng(0)
    # nothing crosses a far plane, so every level is fully expanded
    rollout_to_plane(model, *last_two, plane_x=5.0, k=4, n=10, rng=rng)
    elapsed = []
    for _ in range(5):
        started = time.perf_counter()
        rollout_to_plane(model, *last_two, plane_x=5.0, k=4, n=10, rng=rng)
        elapsed.append(time.perf_counter() - started)
    assert np.median(elapsed) < 0.05
