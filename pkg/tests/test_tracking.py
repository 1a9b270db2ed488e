from typing import Optional, Sequence

import numpy as np
import pandas as pd
import pytest
from conftest import bounces, constant_transition_model
from scipy import stats

from soundbounce.config import RunConfig, available_presets, load_preset
from soundbounce.dynamics import BounceBelief, train_transition_model
from soundbounce.errors import RejectedInputError
from soundbounce.mdn import GaussianD, MdnTrainConfig
from soundbounce.physics import BallState, BounceEvent, SimParams
from soundbounce.toss import TossConfig, sample_toss
from soundbounce.tracking import (
    BallSetup,
    Controller,
    CupConfig,
    EndEffector,
    MotionCommand,
    RobotPlane,
    build_controller,
    deterministic_controller_step,
    drop_into_cup,
    get_available_controllers,
    run_benchmark,
    run_cup_experiment,
    run_trial,
    simulate_toss_to_plane,
    step_fraction,
    stochastic_controller_step,
    summarize_benchmark,
    trajectory_energy,
)
from soundbounce.tracking.harness import RESULT_COLUMNS


class HoldController(Controller):
    """Never moves the paddle."""

    name = "hold"

    @classmethod
    def from_context(cls, plane, **context):
        return cls(plane)

    def command(self, history: Sequence[BounceEvent], now: float, position: np.ndarray) -> Optional[MotionCommand]:
        return None


class AimAtLastBounce(HoldController):
    """Sends the paddle to the newest observed y at a fixed height."""

    name = "aim"

    def __init__(self, plane: RobotPlane, z: float, reject: bool = False):
        super().__init__(plane)
        self.z = z
        self.reject = reject
        self.seen = 0

    def reset(self, rng=None):
        self.seen = 0

    def command(self, history, now, position):
        self.seen = len(history)
        return MotionCommand(target_y=float(history[-1].position[1]), target_z=self.z)

    def rejected_bounces(self):
        return list(range(self.seen)) if self.reject else []


@pytest.fixture
def stiff_params():
    return SimParams(e=0.8, log10_kappa=12.0)


@pytest.fixture
def straight_toss():
    return BallState(np.array([0.0, 0.3, 0.3]), np.array([1.0, 0.0, 0.0]))


def test_crossing_prediction_from_two_bounces():
    previous, current = bounces((0.0, 0.0, 0.0), (0.5, 0.5, 0.2))
    command = deterministic_controller_step(previous, current, 0.8, RobotPlane(plane_x=1.0), current_z=0.1)
    assert command.target_y == pytest.approx(0.4)


def test_crossing_time_and_height():
    previous, current = bounces((0.0, 0.0, 0.3), (1.0, 1.0, 0.3))
    command = deterministic_controller_step(previous, current, 0.8, RobotPlane(plane_x=1.4, y_bounds=(0.0, 1.0)))
    assert not command.lateral_only
    assert command.deadline == pytest.approx(1.5)
    assert command.target_z == pytest.approx(0.7358, abs=1e-4)
    assert command.target_y == pytest.approx(0.3)


def test_short_flight_only_tracks_laterally():
    previous, current = bounces((0.0, 0.0, 0.1), (0.5, 0.2, 0.2))
    command = deterministic_controller_step(previous, current, 0.8, RobotPlane(plane_x=0.85), current_z=0.1)
    assert command.lateral_only
    assert command.target_z == 0.1
    assert command.deadline == pytest.approx(0.5 + 0.8 * 0.5)


def test_heading_parallel_to_plane():
    previous, current = bounces((0.0, 0.3, 0.1), (0.4, 0.3, 0.3))
    command = deterministic_controller_step(previous, current, 0.8, RobotPlane())
    assert command.lateral_only
    assert command.target_y == pytest.approx(0.3)


def test_deterministic_step_validates_restitution():
    previous, current = bounces((0.0, 0.0, 0.1), (0.5, 0.2, 0.2))
    with pytest.raises(RejectedInputError):
        deterministic_controller_step(previous, current, 1.5, RobotPlane())


@pytest.mark.parametrize("gain, sigma, expected", [(0.02, 0.04, 0.5), (0.02, 0.01, 1.0), (0.02, 0.0, 1.0), (0.0, 0.1, 0.0)])
def test_step_fraction(gain, sigma, expected):
    assert step_fraction(gain, sigma) == pytest.approx(expected)


def test_registry(straight_transition, plane):
    assert get_available_controllers() == ["det", "stoch"]
    assert build_controller("DET", plane, e_estimate=0.8).e_estimate == 0.8
    assert build_controller("stoch", plane, transition_model=straight_transition).name == "stoch"
    with pytest.raises(ValueError):
        build_controller("pid", plane)
    with pytest.raises(ValueError):
        build_controller("det", plane)
    with pytest.raises(ValueError):
        build_controller("stoch", plane, transition_model=None)


def test_stochastic_first_bounce_is_lateral(straight_transition, plane):
    command, belief, _ = stochastic_controller_step(bounces((0.0, 0.1, 0.25)), straight_transition, plane, plane.center)
    assert command.lateral_only
    assert command.target_y == pytest.approx(0.25)
    assert belief is None


def test_stochastic_step_goes_to_crossing(straight_transition, rng):
    plane = RobotPlane(plane_x=0.35)
    history = bounces((0.1, 0.0, 0.0), (0.3, 0.1, 0.0))
    command, belief, _ = stochastic_controller_step(history, straight_transition, plane, np.array([0.2, 0.2]), rng=rng, n=3, k=4)
    assert command.target_y == pytest.approx(0.0, abs=1e-3)
    assert command.target_z == pytest.approx(0.5 * 9.81 * 0.01, abs=1e-3)
    assert command.deadline == pytest.approx(0.8, abs=1e-3)
    np.testing.assert_allclose(belief.mean, [0.2, 0.0], atol=1e-3)


def test_stochastic_step_filters_outlier(straight_transition, rng):
    belief = BounceBelief(mean=np.array([0.1, 0.0]), covariance=np.eye(2) * 1e-4, time_mean=0.3, time_var=1e-4)
    history = bounces((0.1, 0.0, 0.0), (0.3, 0.1, 0.08))
    _, _, effective = stochastic_controller_step(history, straight_transition, RobotPlane(), np.zeros(2), belief=belief, rng=rng)
    np.testing.assert_array_equal(effective[-1].position, [0.1, 0.0])


def test_stochastic_step_moves_partially_when_uncertain(rng):
    model = constant_transition_model(spread=0.05)
    history = bounces((0.1, 0.0, 0.0), (0.3, 0.1, 0.0))
    position = np.array([0.3, 0.3])
    command, _, _ = stochastic_controller_step(history, model, RobotPlane(plane_x=0.35), position, gain=1e-4, rng=rng)
    assert abs(command.target_y - position[0]) < 0.05


def test_effector_speed_is_capped(plane):
    effector = EndEffector(plane, (0.0, 0.0))
    effector.move_to(MotionCommand(target_y=0.5, target_z=0.4, deadline=0.01), 0.0)
    assert np.linalg.norm(effector.velocity) == pytest.approx(effector.max_speed)
    effector.advance(0.1)
    assert np.linalg.norm(effector.position) == pytest.approx(0.1)


def test_effector_targets_are_clipped(plane):
    effector = EndEffector(plane, (0.2, 0.2))
    effector.move_to(MotionCommand(target_y=2.0, target_z=-1.0), 0.0)
    effector.advance(5.0)
    np.testing.assert_allclose(effector.position, [plane.y_bounds[1], plane.z_bounds[0]])


def test_effector_meets_deadline(plane):
    effector = EndEffector(plane, (0.2, 0.2))
    effector.move_to(MotionCommand(target_y=0.3, target_z=0.2, deadline=0.5), 0.0)
    effector.advance(0.25)
    np.testing.assert_allclose(effector.position, [0.25, 0.2])
    effector.advance(1.0)
    np.testing.assert_allclose(effector.position, [0.3, 0.2])
    assert effector.energy == pytest.approx(0.5 * 0.2**2 * 0.5)


def test_stationary_effector_spends_nothing(plane):
    effector = EndEffector(plane)
    effector.advance(1.0)
    effector.advance(2.0)
    assert effector.energy == 0.0
    assert effector.hits(*plane.center)


def test_energy_is_additive():
    log = [(0.0, 0.0, 0.0), (1.0, 1.0, 0.0), (1.5, 1.0, 0.5), (3.0, 0.0, 0.0)]
    whole = trajectory_energy(log)
    assert whole == pytest.approx(trajectory_energy(log[:2]) + trajectory_energy(log[1:3]) + trajectory_energy(log[2:]))
    assert trajectory_energy(log[:2]) == pytest.approx(0.5)


def test_toss_reaches_plane(stiff_params, straight_toss, rng):
    events, crossing = simulate_toss_to_plane(stiff_params, straight_toss, 0.85, rng)
    assert crossing is not None
    y, z, t = crossing
    assert y == pytest.approx(0.3, abs=1e-4)
    assert z > 0
    assert all(event.position[0] < 0.85 for event in events)
    assert all(event.time < t for event in events)


def test_waiting_paddle_catches_ball(stiff_params, straight_toss, plane):
    _, crossing = simulate_toss_to_plane(stiff_params, straight_toss, plane.plane_x, np.random.default_rng(0))
    toss = TossConfig.noiseless()
    caught = run_trial(HoldController(plane), toss, plane, stiff_params, seed=1, start=crossing[:2], initial=straight_toss)
    assert caught.success and caught.failure_mode == "none"
    missed = run_trial(HoldController(plane), toss, plane, stiff_params, seed=1, start=(0.0, 0.45), initial=straight_toss)
    assert not missed.success and missed.failure_mode == "missed"
    assert missed.energy == 0.0


def test_crossing_outside_workspace(stiff_params, plane):
    initial = BallState(np.array([0.0, 0.7, 0.3]), np.array([1.0, 0.0, 0.0]))
    result = run_trial(HoldController(plane), TossConfig.noiseless(), plane, stiff_params, seed=0, initial=initial)
    assert result.failure_mode == "boundary"


def test_ball_stopping_short(stiff_params, plane):
    initial = BallState(np.array([0.0, 0.3, 0.3]), np.array([0.1, 0.0, 0.0]))
    result = run_trial(HoldController(plane), TossConfig.noiseless(), plane, stiff_params, seed=0, initial=initial)
    assert result.failure_mode == "short"
    assert result.crossing is None
    assert not result.success


@pytest.mark.parametrize("name", available_presets())
def test_preset_toss_reaches_the_plane(name):
    preset = load_preset(name)
    cfg = RunConfig()
    toss, plane, params = cfg.toss_config(preset), cfg.robot_plane(preset), preset.sim_params()
    rng = np.random.default_rng(11)
    reached = [
        simulate_toss_to_plane(params, sample_toss(toss, rng), plane.plane_x, rng)[1] is not None for _ in range(200)
    ]
    assert np.mean(reached) >= 0.8


def outlier_modes(controller, params, initial, plane, start):
    toss = TossConfig.noiseless(outlier_probability=1.0, outlier_magnitude=(1.0, 1.0))
    return [
        run_trial(controller, toss, plane, params, seed=seed, start=start, initial=initial).failure_mode
        for seed in range(10)
    ]


def test_kept_outlier_is_blamed_for_the_miss(stiff_params, straight_toss, plane):
    _, crossing = simulate_toss_to_plane(stiff_params, straight_toss, plane.plane_x, np.random.default_rng(0))
    modes = outlier_modes(AimAtLastBounce(plane, crossing[1]), stiff_params, straight_toss, plane, crossing[:2])
    assert set(modes) <= {"outlier", "none"}
    assert modes.count("outlier") >= 7


def test_rejected_outlier_is_not_blamed(stiff_params, straight_toss, plane):
    _, crossing = simulate_toss_to_plane(stiff_params, straight_toss, plane.plane_x, np.random.default_rng(0))
    controller = AimAtLastBounce(plane, crossing[1], reject=True)
    modes = outlier_modes(controller, stiff_params, straight_toss, plane, crossing[:2])
    assert set(modes) <= {"missed", "none"}
    assert modes.count("missed") >= 7


def test_clean_trial_miss_is_not_an_outlier_failure(stiff_params, straight_toss, plane):
    toss = TossConfig.noiseless(outlier_probability=1.0, outlier_from_bounce=50)
    result = run_trial(HoldController(plane), toss, plane, stiff_params, seed=2, start=(0.0, 0.45), initial=straight_toss)
    assert result.n_outliers == 0
    assert result.failure_mode == "missed"


def test_stochastic_controller_reports_rejected_bounces(straight_transition, plane, rng):
    controller = build_controller("stoch", plane, transition_model=straight_transition, n=3, k=2)
    controller.reset(rng)
    history = bounces((0.1, 0.0, 0.0), (0.3, 0.1, 0.0), (0.5, 0.2, 0.1))
    for i in range(len(history)):
        controller.command(history[: i + 1], history[i].time, plane.center)
    assert controller.rejected_bounces() == [2]
    controller.reset()
    assert controller.rejected_bounces() == []
    assert HoldController(plane).rejected_bounces() == ()


def test_summary_leaves_short_trials_out_of_success_rate():
    results = pd.DataFrame(
        {
            "ball": ["b"] * 4,
            "controller": ["det"] * 4,
            "success": [True, False, False, False],
            "failure_mode": ["none", "missed", "short", "short"],
            "energy": [1.0, 3.0, 10.0, 10.0],
        }
    )
    row = summarize_benchmark(results).iloc[0]
    assert row["trials"] == 4
    assert row["trials_scored"] == 2
    assert row["success_rate"] == pytest.approx(0.5)
    assert row["energy_mean"] == pytest.approx(2.0)
    assert row["energy_success_mean"] == pytest.approx(1.0)
    assert row["failures_short"] == 2
    assert row["failures_missed"] == 1
    assert row["failures_outlier"] == 0


def test_same_seed_same_toss_for_every_controller(plane):
    params = SimParams(e=0.85, log10_kappa=3.0)
    toss = TossConfig()
    det = run_trial(build_controller("det", plane, e_estimate=0.85), toss, plane, params, seed=42)
    hold = run_trial(HoldController(plane), toss, plane, params, seed=42)
    assert det.crossing == hold.crossing
    assert det.n_observed == hold.n_observed
    assert det.n_outliers == hold.n_outliers


def test_benchmark_is_paired(straight_transition):
    balls = {"demo": BallSetup(SimParams(e=0.85, log10_kappa=3.0), 0.85, straight_transition, k=2)}
    results = run_benchmark(balls, ("det", "stoch"), batches=2, trials_per_batch=2, seed=3, n_samples=3)
    assert list(results.columns) == RESULT_COLUMNS
    assert len(results) == 8
    by_controller = {name: group.reset_index(drop=True) for name, group in results.groupby("controller")}
    pd.testing.assert_series_equal(by_controller["det"]["crossing_t"], by_controller["stoch"]["crossing_t"])
    summary = summarize_benchmark(results)
    assert set(summary["controller"]) == {"det", "stoch"}
    assert (summary["trials"] == 4).all()
    assert {"success_rate", "energy_mean", "failures_missed"} <= set(summary.columns)


def test_cup_drop_must_start_above_incline(stiff_params, rng):
    with pytest.raises(RejectedInputError):
        drop_into_cup(stiff_params, (0.1, 0.0), rng)


def test_cup_map_with_collapsed_posterior():
    posterior = GaussianD(np.array([0.8, 12.0]), np.array([1e-12, 1e-12]))
    frame = run_cup_experiment(posterior, (-0.3, -0.1, 3), (0.0, 0.0, 1), n_per_cell=3, seed=0)
    assert list(frame.columns) == ["x", "y", "successes", "n"]
    assert len(frame) == 3
    assert frame["successes"].isin([0, 3]).all()


def test_cup_map_is_reproducible():
    posterior = GaussianD(np.array([0.8, 3.0]), np.array([1e-4, 0.01]))
    a = run_cup_experiment(posterior, (-0.3, -0.1, 2), (-0.04, 0.04, 2), n_per_cell=4, seed=5)
    b = run_cup_experiment(posterior, (-0.3, -0.1, 2), (-0.04, 0.04, 2), n_per_cell=4, seed=5)
    pd.testing.assert_frame_equal(a, b)


@pytest.mark.slow
def test_wide_kappa_cup_map_is_probabilistic():
    posterior = GaussianD(np.array([0.8, 1.5]), np.array([1e-4, 0.25]), lower=[0.55, 1.0], upper=[0.95, 5.0])
    frame = run_cup_experiment(posterior, seed=2)
    rates = frame["successes"] / frame["n"]
    assert ((rates > 0) & (rates < 1)).any()

    cell = frame.iloc[int((rates - 0.5).abs().argmin())]
    n = 20
    counts = np.array(
        [
            run_cup_experiment(posterior, np.array([cell["x"]]), np.array([cell["y"]]), n, seed=100 + repeat)[
                "successes"
            ].iloc[0]
            for repeat in range(30)
        ]
    )
    p = counts.mean() / n
    assert 0 < p < 1
    dispersion = np.sum((counts - n * p) ** 2) / (n * p * (1 - p))
    assert stats.chi2.ppf(0.001, 29) < dispersion < stats.chi2.ppf(0.999, 29)


def test_cup_map_rejects_bad_grid():
    posterior = GaussianD(np.array([0.8, 3.0]), np.array([1e-4, 0.01]))
    with pytest.raises(RejectedInputError):
        run_cup_experiment(posterior, (-0.2, 0.1, 3), (0.0, 0.0, 1), n_per_cell=1)
    with pytest.raises(RejectedInputError):
        run_cup_experiment(posterior, n_per_cell=0)


def test_cup_config_validation():
    with pytest.raises(ValueError):
        CupConfig(incline_degrees=95.0)


@pytest.mark.slow
@pytest.mark.parametrize("name", available_presets())
def test_stochastic_controller_beats_deterministic(name):
    preset = load_preset(name)
    cfg = RunConfig()
    prior = cfg.prior()
    theta = GaussianD(
        np.array([preset.e, preset.log10_kappa]), np.square(cfg.preset_theta_std), prior.lower, prior.upper
    )
    config = MdnTrainConfig(n_components=3, hidden_sizes=(32, 32), optimizer="adam", learning_rate=3e-3, epochs=80)
    toss = TossConfig.noiseless(**preset.toss_overrides())
    transition = train_transition_model(theta, n_sims=800, toss=toss, config=config, seed=1)
    balls = {name: BallSetup(preset.sim_params(), float(theta.mode()[0]), transition, preset.k)}

    def summary(outlier_from_bounce: int) -> pd.DataFrame:
        noisy = cfg.toss_config(preset).model_copy(update={"outlier_from_bounce": outlier_from_bounce})
        results = run_benchmark(balls, ("det", "stoch"), noisy, cfg.robot_plane(preset), batches=10, seed=11)
        return summarize_benchmark(results).set_index("controller")

    anywhere = summary(0)
    assert anywhere.loc["stoch", "success_rate"] > anywhere.loc["det", "success_rate"]
    assert anywhere.loc["stoch", "energy_mean"] < anywhere.loc["det", "energy_mean"]
    assert anywhere.loc["stoch", "failures_outlier"] < anywhere.loc["det", "failures_outlier"]
    after_second = summary(2)
    assert after_second.loc["stoch", "failures_outlier"] == 0
