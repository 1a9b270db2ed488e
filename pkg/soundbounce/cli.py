"""Command-line front end: one subcommand per experiment, each writing CSV/JSON plus a manifest."""

import argparse
import hashlib
import json
import sys
from importlib import metadata
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import ValidationError

from . import __version__
from .acoustics import MicArray, MultiChannelAudio, detect_bounce_events, synthesize_events
from .calibration import (
    THETA_NAMES,
    CalibrationDataset,
    add_localization_noise,
    generate_dataset,
    joint_posterior,
    observe_hidden_ball,
    posterior_from_observation,
    run_ablation,
    run_fusion,
    train_calibration_model,
)
from .config import BallPreset, RunConfig, config_sha256, load_preset, load_run_config, parse_overrides
from .dynamics import TransitionModel, train_transition_model
from .errors import ConfigError, RejectedInputError, SoundBounceError
from .features import extract_features
from .io import read_bounces_csv, read_gaussian_posterior, write_bounces_csv, write_posterior_json
from .mdn import GaussianD, MdnModel, load_checkpoint, save_checkpoint, write_training_curve
from .physics import SimParams, simulate_drop
from .toss import TossConfig
from .tracking import BallSetup, run_benchmark, run_cup_experiment, summarize_benchmark

MANIFEST_NAME = "manifest.json"
VERSIONED_PACKAGES = ("numpy", "scipy", "torch", "pandas", "pydantic", "soundfile")

Outputs = Dict[str, Path]


def setup_logging(level: str) -> None:
    logger.remove()
    logger.add(sys.stderr, level=level.upper())


def _add_common(parser: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    parser.add_argument("--config", help="YAML file of RunConfig keys")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="override one config key"
    )
    parser.add_argument("--seed", type=int, default=S, help="master seed")
    parser.add_argument("--out-dir", dest="out_dir", default=S, help="directory for results")
    parser.add_argument("--workers", type=int, default=S, help="processes for dataset generation")
    parser.add_argument("--log-level", dest="log_level", default=S, help="loguru level")
    parser.add_argument("--progress", action="store_true", default=S, help="show progress bars")


def _add_model_source(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", help="trained calibration checkpoint (JSON); trained on the fly if absent")
    parser.add_argument("--dataset", help="calibration dataset CSV to train on instead of simulating one")


def _add_posterior_source(parser: argparse.ArgumentParser) -> None:
    S = argparse.SUPPRESS
    parser.add_argument("--posterior", help="theta posterior JSON; a Gaussian around the preset if absent")
    parser.add_argument("--ball", default=S, help="ball preset name or YAML path")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="soundbounce", description="stochastic bouncing-ball calibration and tracking")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("simulate", help="simulate drops and write their bounces")
    _add_common(p)
    p.add_argument("--e", type=float, default=S, help="restitution")
    p.add_argument("--log10-kappa", dest="log10_kappa", type=float, default=S, help="log10 vMF concentration")
    p.add_argument("--drops", type=int, default=S, help="number of drops")
    p.add_argument("--height", dest="drop_height", type=float, default=S, help="drop height (m)")
    p.add_argument("--sigma", dest="init_velocity_noise_sigma", type=float, default=S, help="release noise (m/s)")
    p.add_argument("--bounces", dest="n_bounces", type=int, default=S, help="bounces per drop")
    p.add_argument("--out", help="bounce CSV path")

    p = sub.add_parser("calibrate", help="posterior over (e, log10 kappa) from observed bounces")
    _add_common(p)
    _add_model_source(p)
    p.add_argument("--obs", help="observed bounce CSV; hidden-ball drops of --ball if absent")
    p.add_argument("--ball", default=S, help="ball preset for simulated observations")
    p.add_argument("--train", dest="n_train", type=int, default=S, help="training simulations")
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--out", help="posterior JSON path")

    p = sub.add_parser("ablation", help="posterior-mode error per feature subset and target")
    _add_common(p)
    p.add_argument("--train", dest="n_train", type=int, default=S, help="training simulations")
    p.add_argument("--test", dest="n_test", type=int, default=S, help="test simulations")
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--out", help="ablation CSV path")

    p = sub.add_parser("fusion", help="joint posterior as observations of one hidden ball accumulate")
    _add_common(p)
    _add_model_source(p)
    p.add_argument("--ball", default=S, help="ball preset providing the hidden theta")
    p.add_argument("--repeats", dest="fusion_repeats", type=int, default=S)
    p.add_argument("--train", dest="n_train", type=int, default=S, help="training simulations")
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--out", help="fusion CSV path")

    p = sub.add_parser("localize", help="bounce events from a 3-channel recording")
    _add_common(p)
    p.add_argument("--wav", required=True, help="3-channel WAV")
    p.add_argument("--mode", choices=["offline", "online"], default="offline")
    p.add_argument("--array", help="microphone array JSON; table-corner default if absent")
    p.add_argument("--out", help="bounce CSV path")

    p = sub.add_parser("synth-audio", help="render a simulated drop as 3-channel audio")
    _add_common(p)
    p.add_argument("--ball", default=S, help="ball preset")
    p.add_argument("--snr-db", dest="snr_db", type=float, default=S)
    p.add_argument("--x", type=float, default=None, help="drop x on the table (m)")
    p.add_argument("--y", type=float, default=None, help="drop y on the table (m)")
    p.add_argument("--bounces", dest="n_bounces", type=int, default=S)
    p.add_argument("--array", help="microphone array JSON; table-corner default if absent")
    p.add_argument("--out", help="WAV path")

    p = sub.add_parser("track", help="paired tracking benchmark of the controllers")
    _add_common(p)
    _add_posterior_source(p)
    p.add_argument("--controller", dest="controllers", action="append", default=S, choices=["det", "stoch"])
    p.add_argument("--trials", type=int, default=S, help="trials per batch")
    p.add_argument("--batches", type=int, default=S)
    p.add_argument("--transition", help="transition model checkpoint; trained from the posterior if absent")
    p.add_argument("--out", help="per-trial results CSV path")

    p = sub.add_parser("cupmap", help="ball-in-cup success counts over a drop grid")
    _add_common(p)
    _add_posterior_source(p)
    p.add_argument("--grid", help="x0:x1:nx,y0:y1:ny drop grid on the incline")
    p.add_argument("--n", dest="n_per_cell", type=int, default=S, help="drops per cell")
    p.add_argument("--out", help="cup map CSV path")

    p = sub.add_parser("train-transition", help="fit the bounce transition model under a theta posterior")
    _add_common(p)
    _add_posterior_source(p)
    p.add_argument("--sims", dest="transition_sims", type=int, default=S)
    p.add_argument("--epochs", type=int, default=S)
    p.add_argument("--out", help="transition checkpoint path")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("--manifest", required=True, help="manifest.json written by an earlier run")
    p.add_argument("--out-dir", dest="out_dir", help="write the replay elsewhere")
    p.add_argument("--log-level", dest="log_level", default="INFO")
    return parser


def parse_grid(text: str) -> Tuple[Tuple[float, float, int], Tuple[float, float, int]]:
    try:
        axes = []
        for part in text.split(","):
            start, stop, count = part.split(":")
            axes.append((float(start), float(stop), int(count)))
        (gx, gy) = axes
    except ValueError:
        raise ConfigError("grid", f"expected x0:x1:nx,y0:y1:ny, got {text!r}")
    return gx, gy


def resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = parse_overrides(args.overrides)
    flags = {k: v for k, v in vars(args).items() if k in RunConfig.model_fields}
    if "controllers" in flags:
        flags["controllers"] = tuple(flags["controllers"])
    if getattr(args, "grid", None):
        flags["grid_x"], flags["grid_y"] = parse_grid(args.grid)
    if getattr(args, "x", None) is not None or getattr(args, "y", None) is not None:
        base = load_run_config(args.config, overrides).source_xy
        flags["source_xy"] = (
            args.x if args.x is not None else base[0],
            args.y if args.y is not None else base[1],
        )
    return load_run_config(args.config, {**overrides, **flags})


def _require_file(path: Optional[str], field: str) -> Optional[Path]:
    if path is None:
        return None
    if not Path(path).is_file():
        raise ConfigError(field, f"file {path} does not exist")
    return Path(path)


def _output(args: argparse.Namespace, cfg: RunConfig, default_name: str) -> Path:
    return Path(args.out) if getattr(args, "out", None) else Path(cfg.out_dir) / default_name


def _streams(cfg: RunConfig, n: int) -> List[np.random.SeedSequence]:
    return np.random.SeedSequence(cfg.seed).spawn(n)


def _calibration_model(args: argparse.Namespace, cfg: RunConfig, seed: np.random.SeedSequence, outputs: Outputs) -> MdnModel:
    if getattr(args, "model", None):
        return load_checkpoint(_require_file(args.model, "model"))
    dataset_path = _require_file(getattr(args, "dataset", None), "dataset")
    if dataset_path is not None:
        dataset = CalibrationDataset.read_csv(dataset_path)
    else:
        dataset = generate_dataset(cfg.prior(), cfg.n_train, cfg.sim_config(), seed, cfg.workers, cfg.progress)
        outputs["dataset"] = dataset.write_csv(Path(cfg.out_dir) / "dataset.csv")
    model = train_calibration_model(dataset, cfg.features, THETA_NAMES, cfg.mdn_config())
    outputs["model"] = save_checkpoint(model, Path(cfg.out_dir) / "model.json", {"epoch": cfg.epochs})
    outputs["training_curve"] = write_training_curve(model.curve, Path(cfg.out_dir) / "training_curve.csv")
    return model


def _theta_posterior(args: argparse.Namespace, cfg: RunConfig) -> GaussianD:
    path = _require_file(getattr(args, "posterior", None), "posterior")
    if path is not None:
        return read_gaussian_posterior(path)
    preset = load_preset(cfg.ball)
    lower, upper = cfg.prior().lower, cfg.prior().upper
    logger.info(f"No posterior given; using a Gaussian around the {preset.name} preset")
    return GaussianD(
        np.array([preset.e, preset.log10_kappa]), np.square(cfg.preset_theta_std), lower, upper
    )


def cmd_simulate(args: argparse.Namespace, cfg: RunConfig) -> Outputs:
    params = SimParams(e=cfg.e, log10_kappa=cfg.log10_kappa, gravity=cfg.gravity, collision_mode=cfg.collision_mode)
    trials = []
    for child in _streams(cfg, cfg.drops):
        rng = np.random.default_rng(child)
        events = simulate_drop(params, cfg.drop_height, cfg.init_velocity_noise_sigma, cfg.n_bounces, rng)
        trials.append(add_localization_noise(events, cfg.localization_sigma, rng))
    logger.info(f"First drop features: {extract_features(trials[0])}")
    return {"bounces": write_bounces_csv(trials, _output(args, cfg, "bounces.csv"))}


def cmd_calibrate(args: argparse.Namespace, cfg: RunConfig) -> Outputs:
    outputs: Outputs = {}
    data_seed, obs_seed = _streams(cfg, 2)
    obs_path = _require_file(args.obs, "obs")
    model = _calibration_model(args, cfg, data_seed, outputs)
    prior = cfg.prior()
    if obs_path is not None:
        observations = [extract_features(trial) for trial in read_bounces_csv(obs_path)]
    else:
        preset = load_preset(cfg.ball)
        observations = observe_hidden_ball(
            preset.sim_params(cfg.gravity, cfg.collision_mode),
            cfg.n_observations,
            obs_seed,
            cfg.sim_config(),
            cfg.obs_localization_sigma,
        )
    if not observations:
        raise RejectedInputError("no observations to calibrate from")

    if len(observations) == 1:
        posterior = posterior_from_observation(model, observations[0], prior)
    else:
        posterior = joint_posterior(model, observations, prior)
        logger.info(f"Joint posterior over {len(observations)} observations: mode {np.round(posterior.mode(), 4).tolist()}")
    outputs["posterior"] = write_posterior_json(posterior, _output(args, cfg, "posterior.json"), model.target_names)
    return outputs


def cmd_ablation(args: argparse.Namespace, cfg: RunConfig) -> Outputs:
    train_seed, test_seed = _streams(cfg, 2)
    prior, sim = cfg.prior(), cfg.sim_config()
    train_set = generate_dataset(prior, cfg.n_train, sim, train_seed, cfg.workers, cfg.progress)
    test_set = generate_dataset(prior, cfg.n_test, sim, test_seed, cfg.workers, cfg.progress)
    table = run_ablation(train_set, test_set, prior, cfg.mdn_config())
    path = _output(args, cfg, "ablation.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False, float_format="%.17g")
    return {"ablation": path}


def cmd_fusion(args: argparse.Namespace, cfg: RunConfig) -> Outputs:
    outputs: Outputs = {}
    data_seed, obs_seed = _streams(cfg, 2)
    model = _calibration_model(args, cfg, data_seed, outputs)
    preset = load_preset(cfg.ball)
    frame = run_fusion(
        model,
        preset.sim_params(cfg.gravity, cfg.collision_mode),
        cfg.prior(),
        cfg.fusion_counts,
        cfg.fusion_repeats,
        obs_seed,
        cfg.sim_config(),
    )
    path = _output(args, cfg, "fusion.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    outputs["fusion"] = path
    return outputs


def cmd_localize(args: argparse.Namespace, cfg: RunConfig) -> Outputs:
    audio = MultiChannelAudio.read_wav(_require_file(args.wav, "wav"))
    array_path = _require_file(args.array, "array")
    array = MicArray.from_json(array_path) if array_path else MicArray.default()
    acoustic = cfg.acoustic_config().model_copy(update={"sample_rate": audio.sample_rate})
    events = detect_bounce_events(audio, args.mode, array, acoustic)
    return {"bounces": write_bounces_csv([events], _output(args, cfg, "events.csv"))}


def cmd_synth_audio(args: argparse.Namespace, cfg: RunConfig) -> Outputs:
    preset = load_preset(cfg.ball)
    array_path = _require_file(args.array, "array")
    array = MicArray.default() if array_path is None else MicArray.from_json(array_path)
    ball_seed, audio_seed = _streams(cfg, 2)
    events = simulate_drop(
        preset.sim_params(cfg.gravity, cfg.collision_mode),
        cfg.drop_height,
        cfg.init_velocity_noise_sigma,
        cfg.n_bounces,
        np.random.default_rng(ball_seed),
        start_xy=cfg.source_xy,
    )
    impacts = [(np.array([*event.position, 0.0]), event.time) for event in events]
    audio = synthesize_events(impacts, array, cfg.acoustic_config(), np.random.default_rng(audio_seed))
    wav = audio.write_wav(_output(args, cfg, "audio.wav"))
    logger.info(f"Rendered {len(events)} impacts into {audio.duration:.3f}s of audio")
    return {
        "audio": wav,
        "truth": write_bounces_csv([events], Path(cfg.out_dir) / "truth.csv"),
        "array": array.to_json(Path(cfg.out_dir) / "array.json"),
    }


def _transition_model(
    args: argparse.Namespace,
    cfg: RunConfig,
    preset: BallPreset,
    posterior: GaussianD,
    seed: np.random.SeedSequence,
    outputs: Outputs,
) -> TransitionModel:
    path = _require_file(getattr(args, "transition", None), "transition")
    if path is not None:
        return TransitionModel.load(path)
    transition = train_transition_model(
        posterior,
        cfg.transition_sims,
        TossConfig.noiseless(**preset.toss_overrides()),
        cfg.mdn_config(),
        cfg.transition_bounces,
        seed,
    )
    outputs["transition"] = transition.save(Path(cfg.out_dir) / "transition.json")
    outputs["transition_curve"] = write_training_curve(
        transition.model.curve, Path(cfg.out_dir) / "transition_curve.csv"
    )
    return transition


def cmd_track(args: argparse.Namespace, cfg: RunConfig) -> Outputs:
    outputs: Outputs = {}
    preset = load_preset(cfg.ball)
    posterior = _theta_posterior(args, cfg)
    transition_seed, trial_seed = _streams(cfg, 2)
    transition = None
    if "stoch" in cfg.controllers:
        transition = _transition_model(args, cfg, preset, posterior, transition_seed, outputs)
    e_estimate = float(posterior.mode()[0])
    logger.info(f"Tracking {preset.name} with e estimate {e_estimate:.4f}, controllers {list(cfg.controllers)}")
    balls = {preset.name: BallSetup(preset.sim_params(cfg.gravity, cfg.collision_mode), e_estimate, transition, preset.k)}
    results = run_benchmark(
        balls,
        cfg.controllers,
        cfg.toss_config(preset),
        cfg.robot_plane(preset),
        cfg.batches,
        cfg.trials,
        int(trial_seed.generate_state(1)[0]),
        cfg.gain,
        cfg.rollout_samples,
        cfg.progress,
    )
    path = _output(args, cfg, "tracking.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    results.to_csv(path, index=False, float_format="%.17g")
    summary = summarize_benchmark(results)
    summary_path = path.with_name(f"{path.stem}_summary.csv")
    summary.to_csv(summary_path, index=False, float_format="%.17g")
    for row in summary.itertuples():
        logger.info(f"{row.ball}/{row.controller}: success {row.success_rate:.2f}, energy {row.energy_mean:.4f}")
    outputs.update({"tracking": path, "summary": summary_path})
    return outputs


def cmd_cupmap(args: argparse.Namespace, cfg: RunConfig) -> Outputs:
    posterior = _theta_posterior(args, cfg)
    frame = run_cup_experiment(
        posterior,
        cfg.grid_x,
        cfg.grid_y,
        cfg.n_per_cell,
        np.random.SeedSequence(cfg.seed),
        cfg.cup_config(),
        cfg.gravity,
        cfg.progress,
    )
    path = _output(args, cfg, "cupmap.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g")
    return {"cupmap": path}


def cmd_train_transition(args: argparse.Namespace, cfg: RunConfig) -> Outputs:
    posterior = _theta_posterior(args, cfg)
    transition = train_transition_model(
        posterior,
        cfg.transition_sims,
        TossConfig.noiseless(**load_preset(cfg.ball).toss_overrides()),
        cfg.mdn_config(),
        cfg.transition_bounces,
        np.random.SeedSequence(cfg.seed),
    )
    path = transition.save(_output(args, cfg, "transition.json"))
    curve = write_training_curve(transition.model.curve, path.with_name(f"{path.stem}_curve.csv"))
    return {"transition": path, "transition_curve": curve}


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], Outputs]] = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "ablation": cmd_ablation,
    "fusion": cmd_fusion,
    "localize": cmd_localize,
    "synth-audio": cmd_synth_audio,
    "track": cmd_track,
    "cupmap": cmd_cupmap,
    "train-transition": cmd_train_transition,
}


def file_sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def package_versions() -> Dict[str, str]:
    versions = {"soundbounce": __version__}
    for name in VERSIONED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "unknown"
    return versions


def write_manifest(argv: Sequence[str], cfg: RunConfig, outputs: Outputs) -> Path:
    path = Path(cfg.out_dir) / MANIFEST_NAME
    payload = {
        "argv": list(argv),
        "config": cfg.model_dump(mode="json"),
        "config_sha256": config_sha256(cfg),
        "seed": cfg.seed,
        "versions": package_versions(),
        "outputs": {name: {"path": str(p), "sha256": file_sha256(p)} for name, p in sorted(outputs.items())},
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return path


def replay(args: argparse.Namespace) -> int:
    """Re-run a manifest's argv and compare every output hash with the recorded one."""
    manifest_path = _require_file(args.manifest, "manifest")
    manifest = json.loads(manifest_path.read_text())
    argv = list(manifest["argv"])
    if args.out_dir:
        argv += ["--out-dir", args.out_dir]
    status = dispatch(argv)
    if status != 0:
        return status
    fresh = json.loads((Path(args.out_dir or manifest["config"]["out_dir"]) / MANIFEST_NAME).read_text())
    mismatched = [
        name
        for name, entry in manifest["outputs"].items()
        if fresh["outputs"].get(name, {}).get("sha256") != entry["sha256"]
    ]
    if mismatched:
        logger.error(f"Replay outputs differ from the manifest: {mismatched}")
        return 1
    logger.info(f"Replay reproduced {len(manifest['outputs'])} outputs byte-identically")
    return 0


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand; returns the process exit status.

    0 on success, 2 for usage or configuration errors, 1 for runtime failures.
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    setup_logging(getattr(args, "log_level", None) or "INFO")
    if args.subcommand == "replay":
        try:
            return replay(args)
        except SoundBounceError as e:
            logger.error(f"replay failed: {e}")
            return 2 if isinstance(e, ValueError) else 1

    try:
        cfg = resolve_config(args)
    except ConfigError as e:
        logger.error(f"invalid configuration: {e}")
        return 2
    setup_logging(cfg.log_level)
    logger.info(f"Running {args.subcommand} (seed {cfg.seed}, config {config_sha256(cfg)[:12]})")

    try:
        outputs = COMMANDS[args.subcommand](args, cfg)
    except (ConfigError, RejectedInputError) as e:
        logger.error(f"{args.subcommand}: {e}")
        return 2
    except ValidationError as e:
        logger.error(f"{args.subcommand}: invalid parameters: {e.errors()[0]['msg']}")
        return 2
    except SoundBounceError as e:
        logger.error(f"{args.subcommand} failed: {e}")
        return 1

    manifest = write_manifest(argv, cfg, outputs)
    logger.info(f"Wrote {len(outputs)} outputs and {manifest}")
    return 0


def main() -> None:
    sys.exit(dispatch())
