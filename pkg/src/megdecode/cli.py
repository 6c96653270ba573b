"""Command-line pipeline: synth | train | eval | rtsim | interpret.

Exit codes: 0 success, 2 usage/config error, 3 runtime/training failure.
A config file of flat key=value lines (keys matching flag names) can seed
any subcommand's defaults; explicit flags override the file.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from . import dataio, evalharness, interpret, synthgen
from .errors import FormatError, MegdecodeError, ParameterError, TrainingError
from .model import ModelConfig, load_model, save_model
from .optim import TrainConfig, Trainer, evaluate
from .tensor import make_rng

EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _read_config_file(path: str) -> dict[str, str]:
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, val = line.split("=", 1)
            values[key.strip().replace("-", "_")] = val.strip()
    return values


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> list[str]:
    """Pull --config out of argv and install its values as parser defaults."""
    if "--config" not in argv:
        return argv
    i = argv.index("--config")
    if i + 1 >= len(argv):
        parser.error("--config requires a path")
    values = _read_config_file(argv[i + 1])
    known = {a.dest for a in parser._actions}
    for key, val in values.items():
        if key not in known:
            parser.error(f"unknown config key {key!r}")
        action = next(a for a in parser._actions if a.dest == key)
        if action.type is not None:
            val = action.type(val)
        parser.set_defaults(**{key: val})
    return argv[:i] + argv[i + 2:]


def _load_scaled(path: str, baseline_samples: int | None) -> synthgen.EpochSet:
    """Read an epoch file and apply baseline scaling, dropping the prefix."""
    data = dataio.read_epochs(path)
    if baseline_samples is None:
        baseline_samples = int(round(0.3 * data.sample_rate_hz))
    if baseline_samples > 0:
        data = dataio.baseline_scale_set(data, baseline_samples)
    return data


def _gen_config(args) -> synthgen.GenConfig:
    if args.task == "evoked":
        return synthgen.evoked_class_config(
            n_channels=args.n_channels, n_latent=args.n_latent,
            n_times=args.n_times, n_classes=args.n_classes,
            n_subjects=args.n_subjects,
            trials_per_class_per_subject=args.trials,
            snr=args.snr, subject_mixing_jitter=args.jitter, seed=args.seed)
    return synthgen.induced_class_config(
        n_channels=args.n_channels, n_latent=args.n_latent,
        n_times=args.n_times, n_subjects=args.n_subjects,
        trials_per_class_per_subject=args.trials,
        subject_mixing_jitter=args.jitter, seed=args.seed)


def cmd_synth(args) -> int:
    config = _gen_config(args)
    data = synthgen.generate(config)
    dataio.write_epochs(args.out, data)
    evoked_power = float(np.mean([np.mean(s.evoked_waveform ** 2)
                                  for s in config.sources
                                  if s.evoked_waveform is not None] or [0.0]))
    snr = (evoked_power / config.n_channels / config.noise_std ** 2
           if config.noise_std > 0 else float("inf"))
    print(f"wrote {args.out}: {len(data)} trials, {config.n_channels} channels, "
          f"{config.total_times} samples @ {config.sample_rate_hz:g} Hz, "
          f"{config.n_classes} classes, {config.n_subjects} subjects, "
          f"channel SNR estimate {snr:.3f}")
    return 0


def _model_config(args, data) -> ModelConfig:
    return ModelConfig(variant=args.variant, n_channels=data.epochs.shape[1],
                       n_times=data.epochs.shape[2], n_classes=data.n_classes,
                       n_latent=args.k, filter_len=args.filter_len,
                       dropout_rate=args.dropout, l1_lambda=args.l1)


def _train_config(args) -> TrainConfig:
    return TrainConfig(learning_rate=args.lr, batch_size=args.batch_size,
                       eval_every=args.eval_every, stop_delta=args.stop_delta,
                       max_iterations=args.max_iter, seed=args.seed)


def cmd_train(args) -> int:
    data = _load_scaled(args.data, args.baseline_samples)
    if args.held_out is not None:
        data = data.select(data.subjects != args.held_out)
    rng = make_rng(args.seed)
    # validation split across pooled subjects: reuse the LOSO splitter with a
    # dummy held-out id that is not present
    subjects = data.subjects.copy()
    cfg = _model_config(args, data)
    tcfg = _train_config(args)
    n_val = int(round(args.val_fraction * len(data)))
    order = rng.permutation(len(data))
    val_idx, train_idx = order[:n_val], order[n_val:]
    trainer = Trainer(cfg, tcfg)
    report = trainer.train(data.select(train_idx), data.select(val_idx))
    save_model(args.out, cfg, trainer.params)
    if args.report:
        report.write_csv(args.report)
    print(f"trained {args.variant} for {report.iterations_run} iterations "
          f"({report.stop_reason}); train acc {report.final_train_accuracy:.3f}, "
          f"val acc {report.final_val_accuracy:.3f}; model -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    data = _load_scaled(args.data, args.baseline_samples)
    cfg = _model_config(args, data)
    tcfg = _train_config(args)
    rt_tcfg = None
    if args.with_rtsim:
        rt_tcfg = TrainConfig(learning_rate=args.rt_lr, batch_size=1,
                              eval_every=tcfg.eval_every, seed=args.seed)
    report = evalharness.loso_evaluate(
        data, cfg, tcfg, validation_fraction=args.val_fraction,
        with_realtime=args.with_rtsim, realtime_tcfg=rt_tcfg,
        presentation_seed=args.seed)
    if args.report:
        report.write_csv(args.report)
    print(report.format_table(args.variant))
    return 0


def cmd_rtsim(args) -> int:
    data = _load_scaled(args.data, args.baseline_samples)
    cfg, params = load_model(args.model)
    test = data.select(data.subjects == args.held_out)
    if len(test) == 0:
        raise ParameterError(f"subject {args.held_out} not present in {args.data}")
    tcfg = TrainConfig(learning_rate=args.lr, batch_size=1, seed=args.seed)
    trainer = Trainer(cfg, tcfg, params=params)
    initial_ce, initial_acc = evaluate(cfg, trainer.params, test)
    trace = evalharness.pseudo_realtime(trainer, test, batch=args.batch,
                                        policy=args.update_policy,
                                        presentation_seed=args.seed)
    if args.report:
        trace.write_csv(args.report)
    print(f"initial test accuracy {initial_acc:.3f}; "
          f"pseudo-real-time accuracy {trace.overall_accuracy:.3f} "
          f"(policy {args.update_policy}, lr {args.lr:g})")
    return 0


def cmd_interpret(args) -> int:
    data = _load_scaled(args.data, args.baseline_samples)
    cfg, params = load_model(args.model)
    if args.held_out is not None:
        data = data.select(data.subjects == args.held_out)
    report = interpret.interpret_model(cfg, params, data, mode=args.mode,
                                       use_precision=args.use_precision)
    report.write_csv(args.report_dir)
    for att in report.attributions:
        lat = "" if att.latency_seconds is None else f" at {att.latency_seconds:.3f} s"
        print(f"class {att.class_idx}: component {att.component_idx}{lat}")
    print(f"reports -> {args.report_dir}")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1,
                   help="reserved; all built-in kernels are single-threaded")


def _add_data_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, help="input MEGB epoch file")
    p.add_argument("--baseline-samples", type=int, default=None,
                   help="baseline prefix length (default: 0.3 s at the file's rate)")


def _add_model_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--variant", choices=["lf", "var"], default="lf")
    p.add_argument("--k", type=int, default=32, help="number of latent components")
    p.add_argument("--filter-len", type=int, default=7)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--l1", type=float, default=3e-4)


def _add_train_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--eval-every", type=int, default=1000)
    p.add_argument("--stop-delta", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=20000)
    p.add_argument("--val-fraction", type=float, default=0.1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="megdecode",
                                     description="Spatiotemporal epoch decoding pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic epoch dataset")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=["evoked", "induced"], default="evoked")
    p.add_argument("--n-channels", type=int, default=64)
    p.add_argument("--n-latent", type=int, default=8)
    p.add_argument("--n-times", type=int, default=125)
    p.add_argument("--n-classes", type=int, default=5)
    p.add_argument("--n-subjects", type=int, default=7)
    p.add_argument("--trials", type=int, default=60,
                   help="trials per class per subject")
    p.add_argument("--snr", type=float, default=1.0)
    p.add_argument("--jitter", type=float, default=0.25)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train one model on pooled subjects")
    _add_common(p)
    _add_data_opts(p)
    _add_model_opts(p)
    _add_train_opts(p)
    p.add_argument("--out", required=True, help="output MEGW model file")
    p.add_argument("--report", help="training history CSV")
    p.add_argument("--held-out", type=int, default=None,
                   help="exclude this subject from training")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="leave-one-subject-out evaluation")
    _add_common(p)
    _add_data_opts(p)
    _add_model_opts(p)
    _add_train_opts(p)
    p.add_argument("--report", help="per-fold CSV output")
    p.add_argument("--with-rtsim", action="store_true",
                   help="also run the pseudo-real-time session per fold")
    p.add_argument("--rt-lr", type=float, default=3e-4,
                   help="learning rate for pseudo-real-time updates")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("rtsim", help="pseudo-real-time session on one subject")
    _add_common(p)
    _add_data_opts(p)
    p.add_argument("--model", required=True, help="trained MEGW model file")
    p.add_argument("--held-out", type=int, required=True)
    p.add_argument("--lr", type=float, default=3e-4,
                   help="update learning rate; 0 reproduces initial test accuracy")
    p.add_argument("--batch", type=int, default=20)
    p.add_argument("--update-policy",
                   choices=[evalharness.UPDATE_ALL, evalharness.UPDATE_CORRECT_ONLY],
                   default=evalharness.UPDATE_ALL)
    p.add_argument("--report", help="per-batch accuracy CSV")
    p.set_defaults(func=cmd_rtsim)

    p = sub.add_parser("interpret", help="inspect a trained LF model")
    _add_common(p)
    _add_data_opts(p)
    p.add_argument("--model", required=True)
    p.add_argument("--mode", choices=["evoked", "induced"], default="evoked")
    p.add_argument("--use-precision", action="store_true",
                   help="apply the latent precision matrix to the patterns")
    p.add_argument("--held-out", type=int, default=None,
                   help="restrict pattern covariance to this subject's trials")
    p.add_argument("--report-dir", required=True)
    p.set_defaults(func=cmd_interpret)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    # --config applies to the subcommand parser; find it after the subcommand
    try:
        if len(argv) >= 1 and argv[0] in {"synth", "train", "eval", "rtsim", "interpret"}:
            subparser = parser._subparsers._group_actions[0].choices[argv[0]]
            argv = [argv[0]] + _apply_config_file(subparser, argv[1:])
        args = parser.parse_args(argv)
        return args.func(args)
    except (ParameterError, FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrainingError, MegdecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
