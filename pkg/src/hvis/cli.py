"""Command-line entry point: ``hvis {train,eval,predict,ablate,synth}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .data.metrics import mpjpe
from .data.motion import MotionSequence, downsample, load_csv, root_align, save_csv, windows_from_corpus
from .data.skeleton import SkeletonSpec, default_skeleton, load_skeleton, save_skeleton
from .data.synth import synth_corpus
from .errors import (
    ConfigError, ContractError, DegenerateInputError, DimensionError, FormatError,
    ParameterError, TrainingError,
)
from .pipeline import (
    VARIANTS, HvisSystem, prepare_data, run_ablation, train_system, evaluate_system, write_loss_curves,
    write_report,
)

log = logging.getLogger("hvis")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


# -- config plumbing -------------------------------------------------------
def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _optional_int(text: str):
    return None if text.lower() in ("none", "null") else int(text)


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("configuration overrides")
    group.add_argument("--config", type=Path, help="YAML file with TrainConfig fields")
    defaults = TrainConfig()
    for f in dataclasses.fields(TrainConfig):
        value = getattr(defaults, f.name)
        kw: dict = {"dest": f.name, "default": None}
        if isinstance(value, list):
            kw.update(nargs="+", type=type(value[0]) if value else float)
        elif f.name == "m":
            kw["type"] = _optional_int
        elif isinstance(value, (int, float)):
            kw["type"] = type(value)
        else:
            kw["type"] = str
        group.add_argument(_flag(f.name), help=f"(default: {value!r})", **kw)


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    data = TrainConfig.from_file(args.config).to_dict() if args.config else {}
    for f in dataclasses.fields(TrainConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            data[f.name] = value
    env_seed = os.environ.get("HVIS_SEED")
    if env_seed is not None:
        try:
            data["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError("seed", f"HVIS_SEED must be an integer, got {env_seed!r}") from None
    return TrainConfig.from_dict(data)


# -- corpus loading --------------------------------------------------------
def resolve_skeleton(config: TrainConfig, corpus_dir: Path | None = None) -> SkeletonSpec:
    if config.skeleton:
        return load_skeleton(config.skeleton)
    if corpus_dir is not None and (corpus_dir / "skeleton.txt").exists():
        return load_skeleton(corpus_dir / "skeleton.txt")
    return default_skeleton()


def load_corpus_dir(directory: Path, skeleton: SkeletonSpec, fps: float) -> list[MotionSequence]:
    files = sorted(directory.glob("*.csv"))
    if not files:
        raise FormatError(f"{directory}: no .csv files found")
    corpus = []
    for path in files:
        seq = load_csv(path, skeleton)
        if seq.fps > fps:
            seq = downsample(seq, fps)
        elif seq.fps != fps:
            raise ContractError(f"{path}: recorded at {seq.fps:g} fps, below the configured {fps:g} fps")
        corpus.append(seq)
    return corpus


def resolve_corpus(config: TrainConfig) -> tuple[list[MotionSequence], SkeletonSpec]:
    if config.corpus:
        directory = Path(config.corpus)
        if not directory.is_dir():
            raise FormatError(f"corpus directory {directory} does not exist")
        skeleton = resolve_skeleton(config, directory)
        return load_corpus_dir(directory, skeleton, config.fps), skeleton
    skeleton = resolve_skeleton(config)
    corpus = synth_corpus(skeleton, config.synth_sequences, config.synth_frames, seed=config.seed,
                          fps=config.fps, O=config.O, F=config.F)
    return corpus, skeleton


# -- subcommands -----------------------------------------------------------
def cmd_train(args) -> int:
    config = resolve_config(args)
    corpus, skeleton = resolve_corpus(config)
    reports = Path(config.reports)
    try:
        system, splits = train_system(config, corpus, skeleton)
    except TrainingError as exc:
        path = write_diagnostics(reports, exc, config)
        print(f"error: training failed: {exc} (diagnostics in {path})", file=sys.stderr)
        return EXIT_DIVERGED
    Path(config.checkpoint).parent.mkdir(parents=True, exist_ok=True)
    system.save(config.checkpoint)
    write_loss_curves(system, reports)
    config.dump(reports / "config.yaml")
    rows = evaluate_system(system, splits.val_windows)
    _, txt = write_report(rows, reports, "validation", title="validation MPJPE (mm)")
    print(txt.read_text(), end="")
    print(f"checkpoint written to {config.checkpoint}")
    return EXIT_OK


def write_diagnostics(directory: Path, exc: TrainingError, config: TrainConfig) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / "divergence.txt"
    lines = [f"error: {exc}", f"parameter: {exc.parameter}", f"seed: {config.seed}", f"learning_rate: {config.learning_rate}",
             f"lambda_j: {config.lambda_j}", "loss history (per epoch):"]
    lines += [f"  {i}: {v!r}" for i, v in enumerate(getattr(exc, "history", None) or [], 1)]
    lines += ["", traceback.format_exc()]
    path.write_text("\n".join(lines))
    return path


def cmd_eval(args) -> int:
    system = HvisSystem.load(args.checkpoint)
    config = system.config
    if args.horizons_ms:
        config = config.replace(horizons_ms=list(args.horizons_ms))
        system.config = config
    if args.corpus:
        directory = Path(args.corpus)
        if not directory.is_dir():
            raise FormatError(f"corpus directory {directory} does not exist")
        corpus = load_corpus_dir(directory, system.skeleton, config.fps)
        windows = windows_from_corpus(corpus, config.O, config.F, config.eval_stride, system.skeleton.root)
        if not windows:
            raise ContractError(f"corpus yields no windows of {config.O}+{config.F} frames")
    else:
        corpus, _ = resolve_corpus(config)
        windows = prepare_data(config, corpus, system.skeleton).test_windows
    rows = evaluate_system(system, windows)
    reports = Path(args.reports or config.reports)
    csv_path, txt = write_report(rows, reports, "eval", title=f"test MPJPE (mm), {len(windows)} windows")
    print(txt.read_text(), end="")
    print(f"report written to {csv_path}")
    return EXIT_OK


def predict_sequence(system: HvisSystem, seq: MotionSequence, use_dln: bool = True) -> MotionSequence:
    """Append ``F`` predicted frames to ``seq`` using its last ``O`` frames."""
    O = system.config.O
    if seq.n_joints != system.skeleton.n_joints:
        raise ContractError(f"input has {seq.n_joints} joints, checkpoint skeleton has "
                            f"{system.skeleton.n_joints}")
    if seq.n_frames < O:
        raise ContractError(f"prediction needs at least O={O} observed frames, got {seq.n_frames}")
    observed, offset = root_align(seq.positions[-O:], system.skeleton.root, O - 1)
    predict = system.predict_full if use_dln else system.predict_sln
    future = predict(observed[None])[0] + offset
    return MotionSequence(np.concatenate([seq.positions, future]), seq.fps, seq.label)


def cmd_predict(args) -> int:
    system = HvisSystem.load(args.checkpoint)
    seq = load_csv(args.input, system.skeleton, fps=args.fps)
    out = predict_sequence(system, seq, use_dln=not args.sln_only)
    flags = [0] * seq.n_frames + [1] * (out.n_frames - seq.n_frames)
    save_csv(out, args.output, system.skeleton, predicted=flags)
    if args.truth:
        truth = load_csv(args.truth, system.skeleton, fps=args.fps)
        F = out.n_frames - seq.n_frames
        if truth.n_frames < F:
            raise ContractError(f"truth has {truth.n_frames} frames, need {F}")
        print(f"MPJPE vs truth: {mpjpe(out.positions[seq.n_frames:], truth.positions[:F]):.3f} mm")
    print(f"wrote {out.n_frames - seq.n_frames} predicted frames to {args.output}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    config = resolve_config(args)
    corpus, skeleton = resolve_corpus(config)
    result = run_ablation(config, corpus, skeleton, args.variants)
    csv_path, txt = write_report(result.rows, config.reports, "ablation", row_key="variant",
                                 title="ablation MPJPE (mm) on the test split")
    print(txt.read_text(), end="")
    print(f"split hash {next(iter(result.split_hashes.values()))}; report written to {csv_path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    config = resolve_config(args)
    skeleton = resolve_skeleton(config)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    corpus = synth_corpus(skeleton, config.synth_sequences, config.synth_frames, seed=config.seed,
                          fps=config.fps, O=config.O, F=config.F)
    save_skeleton(skeleton, out / "skeleton.txt")
    for seq in corpus:
        save_csv(seq, out / f"{seq.label}.csv", skeleton)
    print(f"wrote {len(corpus)} sequences to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hvis", description="Skeleton motion prediction: train, "
                                     "evaluate, predict, ablate and generate synthetic corpora.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run both training stages and write a checkpoint")
    add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="MPJPE table for baseline, SLN-only and SLN+DLN")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--corpus", type=Path, help="directory of CSV sequences (default: the test split)")
    p.add_argument("--horizons-ms", type=int, nargs="+", dest="horizons_ms")
    p.add_argument("--reports", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="append predicted frames to an observed CSV")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("input", type=Path)
    p.add_argument("output", type=Path)
    p.add_argument("--fps", type=float, help="override the file's fps comment")
    p.add_argument("--truth", type=Path, help="held-out future CSV; prints the MPJPE against it")
    p.add_argument("--sln-only", action="store_true", help="skip the deliberate network")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="compare the full model with ablated variants")
    p.add_argument("--variants", nargs="*", default=[], metavar="VARIANT",
                   help=f"any of {', '.join(VARIANTS)}")
    add_config_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="write the synthetic corpus as CSV files")
    p.add_argument("output", type=Path)
    add_config_flags(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FormatError, ContractError, DimensionError, DegenerateInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
