"""Command-line pipeline: ``oupm synth | fit | predict | evaluate``.

Every command reads a YAML run config (``--config``); ``--seed`` and
``--out`` override the corresponding config entries. Outputs are
plot-ready CSV/JSON files; diagnostics go to standard error. Exit codes:
0 success, 2 invalid config or data, 3 training diverged.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import __version__
from ._backend import BACKEND
from .core import Model, ObservationSeries, fit_preprocess
from .io import DataError, RunConfig, SynthSection, dump_config, load_config, load_model, \
    read_dataset, save_model, write_csv, write_dataset, write_ensemble
from .metrics import evaluate, pit_histogram
from .sampler import sample_paths
from .synthetic import DEFAULT_SCHEDULE, SynthSpec, generate
from .trainer import FitDivergedError, TrainConfig, build_transitions, fit, split_validation

log = logging.getLogger("oupm")

EXIT_INVALID = 2
EXIT_DIVERGED = 3


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2) + "\n")


def _model_path(cfg: RunConfig, override: str | None) -> Path:
    if override:
        return Path(override)
    return Path(cfg.model_file) if cfg.model_file else Path(cfg.out_dir) / "model.oupm"


# --- commands -----------------------------------------------------------------


def cmd_synth(cfg: RunConfig, args) -> int:
    sec = cfg.synth or SynthSection()
    schedule = tuple((float(s), lv) for s, lv in sec.schedule) if sec.schedule else DEFAULT_SCHEDULE
    true_a = tuple(sec.true_a) if isinstance(sec.true_a, list) else sec.true_a
    spec = SynthSpec(true_lambda=sec.true_lambda, true_a=true_a, true_b=sec.true_b,
                     true_sigma=sec.true_sigma, dt=sec.dt, n=sec.n, schedule=schedule, seed=cfg.seed,
                     train_points=sec.train_points, target_scale=sec.target_scale)
    inputs, obs = generate(spec)
    out = _out_dir(cfg)
    split = np.where(np.arange(spec.n) < spec.train_points, "train", "test")
    write_dataset(out / "synth_data.csv", inputs, obs.y_raw, "pm", {"split": split})
    _write_json(out / "truth.json", {
        "lambda": spec.true_lambda, "a": list(np.atleast_1d(spec.true_a).astype(float)),
        "b": spec.true_b, "sigma": spec.true_sigma, "dt": spec.dt, "seed": spec.seed,
        "train_points": spec.train_points, "target_scale": spec.target_scale,
        "channels": list(spec.channel_names),
    })
    run = RunConfig(
        channels=list(spec.channel_names), target="pm", dt=spec.dt, train_file="synth_data.csv",
        train_rows=spec.train_points, target_scale=spec.target_scale,
        validation={"use_train": True}, train=cfg.train, predict_file="synth_data.csv",
        eval_file="synth_data.csv", n_paths=cfg.n_paths, quantiles=cfg.quantiles, seed=cfg.seed,
        workers=cfg.workers, out_dir=".",
    )
    (out / "config.yaml").write_text(dump_config(run))
    _say(args, f"wrote {spec.n} rows ({spec.train_points} training) to {out / 'synth_data.csv'}")
    return 0


def cmd_fit(cfg: RunConfig, args) -> int:
    if not cfg.train_file:
        raise DataError("config has no train_file")
    inputs, y_raw, _ = read_dataset(cfg.train_file, cfg.channels, cfg.target, cfg.dt,
                                    require_target=True, rows=cfg.train_rows)
    stats = fit_preprocess(y_raw, inputs.u, target_scale=cfg.target_scale, zero_floor=cfg.zero_floor)
    obs = ObservationSeries.from_raw(inputs.t0, inputs.dt, y_raw, stats)
    transitions = build_transitions(inputs, obs, stats)

    v = cfg.validation
    if v.use_train:
        train, val = transitions, transitions
    elif v.file:
        v_in, v_raw, _ = read_dataset(v.file, cfg.channels, cfg.target, inputs.dt, require_target=True)
        v_obs = ObservationSeries.from_raw(v_in.t0, v_in.dt, v_raw, stats)
        train, val = transitions, build_transitions(v_in, v_obs, stats)
    else:
        train, val = split_validation(transitions, v.fraction, v.indices)

    seed = cfg.train.seed if cfg.train.seed is not None else cfg.seed
    tc = TrainConfig(epochs=cfg.train.epochs, batch_size=cfg.train.batch_size,
                     learning_rate=cfg.train.learning_rate, seed=seed,
                     validation_fraction=v.fraction, early_stopping=cfg.train.early_stopping)
    report = fit(train, val, tc)

    model = Model(report.best_params, stats, inputs.channel_names, inputs.dt, cfg.target, {
        "best_epoch": report.best_epoch, "epochs": tc.epochs, "seed": seed,
        "n_train": len(train), "n_validation": len(val),
    })
    out = _out_dir(cfg)
    path = _model_path(cfg, getattr(args, "model", None))
    path.parent.mkdir(parents=True, exist_ok=True)
    save_model(path, model)
    write_csv(out / "loss_curves.csv", report.curves_table())
    _write_json(out / "fit_report.json", {
        "best_epoch": report.best_epoch,
        "best_val_loss": float(report.val_loss_curve[report.best_epoch]),
        "initial_val_loss": report.initial_val_loss,
        "lambda": report.best_params.lam,
        "params": report.best_params.to_dict(),
    })
    _say(args, f"best epoch {report.best_epoch} of {tc.epochs}; wall time {report.wall_time:.2f} s "
               f"[{BACKEND} kernels]; model written to {path}")
    return 0


def _predict(cfg: RunConfig, model: Model, data_path: str, keep_paths: bool, require_target: bool):
    inputs, y_raw, _ = read_dataset(data_path, model.channel_names, model.target_name, None,
                                    require_target=require_target)
    if abs(inputs.dt - model.dt) > 1e-6 * model.dt:
        raise DataError(f"{data_path}: sampling step {inputs.dt} differs from the model's {model.dt}")
    ens = sample_paths(model.params, model.stats, inputs, M=cfg.n_paths, seed=cfg.seed,
                       quantiles=cfg.quantiles, keep_paths=keep_paths, workers=cfg.workers)
    return inputs, y_raw, ens


def cmd_predict(cfg: RunConfig, args) -> int:
    model = load_model(_model_path(cfg, args.model))
    data = args.inputs or cfg.predict_file
    if not data:
        raise DataError("no input file: pass --inputs or set predict_file")
    _, _, ens = _predict(cfg, model, data, args.paths, require_target=False)
    written = write_ensemble(_out_dir(cfg), ens, prefix="predict_")
    _say(args, f"{ens.M} paths x {ens.n} steps; wrote {', '.join(str(p) for p in written)}")
    return 0


def cmd_evaluate(cfg: RunConfig, args) -> int:
    model = load_model(_model_path(cfg, args.model))
    data = args.inputs or cfg.eval_file
    if not data:
        raise DataError("no evaluation file: pass --inputs or set eval_file")
    inputs, y_raw, ens = _predict(cfg, model, data, args.paths, require_target=True)
    obs = ObservationSeries.from_raw(inputs.t0, inputs.dt, y_raw, model.stats)
    report = evaluate(ens, obs)

    out = _out_dir(cfg)
    write_ensemble(out, ens, prefix="eval_", measured_raw=y_raw)
    write_csv(out / "eval_observed.csv", {
        "time_s": inputs.times, "y": obs.y, "y_raw": obs.y_raw,
        "standardized_error": report.standardized_errors,
    })
    write_csv(out / "pit.csv", {"time_s": inputs.times[inputs.n - report.pit.size:], "pit": report.pit})
    write_csv(out / "qq.csv", {"theoretical": report.qq_points[:, 0], "empirical": report.qq_points[:, 1]})
    density, edges = pit_histogram(report.pit)
    write_csv(out / "pit_hist.csv", {"bin_left": edges[:-1], "bin_right": edges[1:], "density": density})
    _write_json(out / "eval_report.json", report.to_dict())
    _say(args, f"KS {report.ks:.4f}  NRMSE {report.nrmse:.4f}  95% coverage {report.coverage_95:.3f}  "
               f"cumulative inside 3sd {report.cumulative_inside_3sigma:.3f}")
    return 0


COMMANDS = {"synth": cmd_synth, "fit": cmd_fit, "predict": cmd_predict, "evaluate": cmd_evaluate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oupm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML run config (optional for synth)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="output directory (overrides out_dir)")
        p.add_argument("--workers", type=int, help="sampling threads (results do not depend on it)")
        p.add_argument("--quiet", action="store_true", help="no summary on standard output")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("fit", "predict", "evaluate"):
            p.add_argument("--model", help="model file path (default: <out>/model.oupm)")
        if name in ("predict", "evaluate"):
            p.add_argument("--inputs", help="dataset CSV (overrides predict_file / eval_file)")
            p.add_argument("--paths", action="store_true", help="also dump every sampled path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.command == "synth":
            cfg = RunConfig()
        else:
            raise DataError(f"{args.command} needs --config")
        updates = {}
        if args.seed is not None:
            updates["seed"] = args.seed
        if args.out:
            updates["out_dir"] = str(Path(args.out).resolve())
        if args.workers:
            updates["workers"] = args.workers
        cfg = cfg.model_copy(update=updates)
        started = time.perf_counter()
        code = COMMANDS[args.command](cfg, args)
        log.debug("%s finished in %.2f s", args.command, time.perf_counter() - started)
        return code
    except ValidationError as exc:
        print(f"oupm {args.command}: invalid configuration\n{exc}", file=sys.stderr)
        return EXIT_INVALID
    except FitDivergedError as exc:
        print(f"oupm {args.command}: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (DataError, ValueError) as exc:
        print(f"oupm {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
