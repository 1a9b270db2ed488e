import numpy as np
import pytest
from pydantic import ValidationError

from soundbounce.calibration import (
    CalibrationDataset,
    PriorBox,
    SimConfig,
    generate_dataset,
    hdr_coverage,
    joint_posterior,
    observe_hidden_ball,
    posterior_from_observation,
    posterior_modes,
    run_ablation,
    run_fusion,
    train_calibration_model,
)
from soundbounce.errors import RejectedInputError
from soundbounce.features import FeatureVector
from soundbounce.mdn import MdnTrainConfig, project_to_gaussian
from soundbounce.physics import SimParams


@pytest.fixture(scope="module")
def prior():
    return PriorBox()


@pytest.fixture(scope="module")
def trained(prior):
    dataset = generate_dataset(prior, 600, seed=21)
    config = MdnTrainConfig(n_components=2, hidden_sizes=(16, 16), optimizer="adam", learning_rate=1e-2, epochs=40)
    return dataset, train_calibration_model(dataset, config=config)


def test_prior_box_validation():
    with pytest.raises(ValidationError):
        PriorBox(e_range=(0.9, 0.5))
    with pytest.raises(ValidationError):
        PriorBox(e_range=(0.5, 1.2))
    with pytest.raises(ValidationError):
        PriorBox(log10_kappa_range=(1.0, float("inf")))


def test_prior_samples_inside_box(prior, rng):
    for _ in range(100):
        assert prior.contains(prior.sample(rng))
    assert not prior.contains(np.array([0.5, 3.0]))


def test_dataset_is_reproducible(prior):
    a = generate_dataset(prior, 30, seed=5)
    b = generate_dataset(prior, 30, seed=5)
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.features, b.features)
    c = generate_dataset(prior, 30, seed=6)
    assert not np.array_equal(a.theta, c.theta)


def test_collapsed_prior_gives_exact_ratio():
    prior = PriorBox(e_range=(0.8, 0.8), log10_kappa_range=(12.0, 12.0))
    dataset = generate_dataset(prior, 20, SimConfig(init_velocity_noise_sigma=0.0), seed=0)
    np.testing.assert_allclose(dataset.features[:, 0], 0.8, atol=1e-9)
    np.testing.assert_allclose(dataset.theta, np.tile([0.8, 12.0], (20, 1)))


def test_dataset_rejects_empty_request(prior):
    with pytest.raises(RejectedInputError):
        generate_dataset(prior, 0)


@pytest.mark.slow
def test_parallel_generation_matches_serial(prior):
    serial = generate_dataset(prior, 200, seed=3, workers=1)
    parallel = generate_dataset(prior, 200, seed=3, workers=2)
    np.testing.assert_array_equal(serial.features, parallel.features)


def test_dataset_csv_round_trip(prior, tmp_path):
    dataset = generate_dataset(prior, 10, seed=1)
    restored = CalibrationDataset.read_csv(dataset.write_csv(tmp_path / "dataset.csv"))
    np.testing.assert_array_equal(restored.theta, dataset.theta)
    np.testing.assert_array_equal(restored.features, dataset.features)


def test_dataset_subset_columns(prior):
    dataset = generate_dataset(prior, 10, seed=1)
    x, y = dataset.subset("position", ("log10_kappa",))
    assert x.shape == (10, 3)
    np.testing.assert_array_equal(y[:, 0], dataset.theta[:, 1])
    with pytest.raises(RejectedInputError):
        dataset.subset("both", ("gravity",))


def test_posterior_is_truncated_to_prior(trained, prior):
    dataset, model = trained
    posterior = posterior_from_observation(model, dataset.feature_vectors()[0], prior)
    np.testing.assert_array_equal(posterior.lower, prior.lower)
    np.testing.assert_array_equal(posterior.upper, prior.upper)
    assert not posterior.extrapolated


def test_far_observation_is_flagged(trained, prior):
    _, model = trained
    posterior = posterior_from_observation(model, FeatureVector(0.8, 2.0, 2.0, 0.0), prior)
    assert posterior.extrapolated


def test_single_observation_joint_posterior(trained, prior):
    dataset, model = trained
    obs = dataset.feature_vectors()[3]
    joint = joint_posterior(model, [obs], prior)
    single = project_to_gaussian(posterior_from_observation(model, obs, prior))
    np.testing.assert_allclose(joint.mean, single.mean)
    np.testing.assert_allclose(joint.variance, single.variance)


def test_duplicated_observations_halve_variance(trained, prior):
    dataset, model = trained
    observations = dataset.feature_vectors()[:5]
    once = joint_posterior(model, observations, prior)
    twice = joint_posterior(model, observations + observations, prior)
    np.testing.assert_allclose(twice.variance, once.variance / 2, rtol=1e-12)
    np.testing.assert_allclose(twice.mean, once.mean, rtol=1e-10)


def test_joint_posterior_needs_observations(trained, prior):
    with pytest.raises(RejectedInputError):
        joint_posterior(trained[1], [], prior)


def test_posterior_modes_stay_in_prior(trained, prior):
    dataset, model = trained
    modes = posterior_modes(model, dataset.features[:10], prior)
    assert modes.shape == (10, 2)
    assert all(prior.contains(m) for m in modes)


def test_hidden_ball_observations_are_reproducible():
    params = SimParams(e=0.75, log10_kappa=3.0)
    a = observe_hidden_ball(params, 5, seed=9)
    b = observe_hidden_ball(params, 5, seed=9)
    assert a == b


def test_fusion_variance_shrinks(trained, prior):
    _, model = trained
    frame = run_fusion(model, SimParams(e=0.75, log10_kappa=3.0), prior, counts=(1, 10), repeats=2, seed=4)
    assert set(frame["count"]) == {1, 10}
    for _, group in frame.groupby("repeat"):
        one = group[group["count"] == 1].iloc[0]
        ten = group[group["count"] == 10].iloc[0]
        assert ten["var_e"] < one["var_e"]
        assert ten["var_log10_kappa"] < one["var_log10_kappa"]


@pytest.fixture(scope="module")
def calibration_sets(prior):
    return generate_dataset(prior, 6000, seed=7), generate_dataset(prior, 1000, seed=8)


SLOW_CONFIG = MdnTrainConfig(n_components=4, hidden_sizes=(64, 64), optimizer="adam", learning_rate=3e-3, epochs=80)


@pytest.mark.slow
def test_ablation_orderings(calibration_sets, prior):
    train_set, test_set = calibration_sets
    table = run_ablation(train_set, test_set, prior, SLOW_CONFIG).set_index(["features", "target"])["mae"]
    assert table["time", "e"] < table["position", "e"]
    assert table["position", "log10_kappa"] < table["time", "log10_kappa"]
    for target in ("e", "log10_kappa"):
        assert table["both", target] <= min(table["time", target], table["position", target])
    assert table["both", "e"] <= 0.05
    assert table["both", "log10_kappa"] <= 0.8


@pytest.mark.slow
def test_fusion_sharpens_and_converges(calibration_sets, prior):
    train_set, _ = calibration_sets
    model = train_calibration_model(train_set, config=SLOW_CONFIG)
    frame = run_fusion(model, SimParams(e=0.75, log10_kappa=3.0), prior, counts=(1, 10, 100), repeats=20, seed=12)
    by_count = frame.groupby("count").mean()
    for target in ("e", "log10_kappa"):
        variance = by_count[f"var_{target}"]
        assert variance.loc[1] > variance.loc[10] > variance.loc[100]
        assert by_count.loc[100, f"error_{target}"] < by_count.loc[1, f"error_{target}"]


@pytest.mark.slow
def test_identifiability_and_coverage(calibration_sets, prior):
    train_set, test_set = calibration_sets
    model = train_calibration_model(train_set, config=SLOW_CONFIG)
    held_out = CalibrationDataset(test_set.theta[:100], test_set.features[:100])
    modes = posterior_modes(model, held_out.features, prior)
    errors = np.mean(np.abs(modes - held_out.theta), axis=0)
    assert errors[0] <= 0.05
    assert errors[1] <= 0.8
    assert hdr_coverage(model, held_out, prior, level=0.9) >= 0.6
