"""Two-stage training, evaluation tables, ablations and checkpoint bundles."""
from __future__ import annotations

import csv
import io
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from . import checkpoint
from .config import TrainConfig
from .data.metrics import mpjpe, zero_velocity_baseline
from .data.motion import (
    MotionSequence, WindowPair, corpus_fingerprint, fingerprint, split_corpus, stack_windows,
    windows_from_corpus,
)
from .data.skeleton import SkeletonSpec, parse_skeleton, skeleton_text
from .dln import DTC, DeliberateMap, default_m, disabled_map, dln_train, fuse_predictions, memorize_errors, rank_joints
from .encoder import Encoder
from .errors import CheckpointError, ContractError, ParameterError
from .sln import Critic, Generator, SLNHistory, evaluate_predictor, sln_train

log = logging.getLogger(__name__)

VARIANTS = ("no-hvm", "no-trn", "no-dln")
PREDICTORS = ("zero-velocity", "sln", "sln+dln")


@dataclass
class DataSplits:
    train: list
    val: list
    test: list
    train_windows: list
    val_windows: list
    test_windows: list

    @property
    def split_hash(self) -> str:
        return fingerprint([np.stack([w.observed for w in ws]) for ws in
                            (self.train_windows, self.val_windows, self.test_windows)])


def prepare_data(config: TrainConfig, corpus: Sequence[MotionSequence], skeleton: SkeletonSpec) -> DataSplits:
    for seq in corpus:
        if seq.n_joints != skeleton.n_joints:
            raise ContractError(f"sequence {seq.label!r} has {seq.n_joints} joints, skeleton has "
                                f"{skeleton.n_joints}")
    train, val, test = split_corpus(list(corpus), tuple(config.split), seed=config.seed)
    root = skeleton.root
    tw = windows_from_corpus(train, config.O, config.F, config.window_stride, root)
    vw = windows_from_corpus(val, config.O, config.F, config.eval_stride, root)
    sw = windows_from_corpus(test, config.O, config.F, config.eval_stride, root)
    for name, ws in (("training", tw), ("validation", vw), ("test", sw)):
        if not ws:
            raise ContractError(f"{name} split yields no windows of {config.O}+{config.F} frames")
    return DataSplits(train, val, test, tw, vw, sw)


def _rngs(seed: int) -> tuple[np.random.Generator, ...]:
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))


def build_generator(config: TrainConfig, skeleton: SkeletonSpec, rng: np.random.Generator,
                    variant: str = "full") -> Generator:
    layout = "G" * len(config.encoder_layout) if variant == "no-hvm" else config.encoder_layout
    encoder = Encoder(skeleton, config.O, rng, channels=config.encoder_channels, layout=layout)
    return Generator(encoder, config.F, rng, recurrent=(variant == "no-trn"),
                     tiu_channels=config.tiu_channels, tiu_blocks=config.tiu_blocks,
                     tiu_kernel=config.tiu_kernel, tiu_dilations=config.tiu_dilations,
                     tiu_dropout=config.tiu_dropout, hidden=config.hidden)


def build_critic(config: TrainConfig, skeleton: SkeletonSpec, rng: np.random.Generator) -> Critic:
    return Critic(3 * skeleton.n_joints * (config.O + config.F), rng, hidden=config.critic_units,
                  n_layers=config.critic_layers)


def build_dtc(config: TrainConfig, m: int, rng: np.random.Generator) -> DTC:
    return DTC(m, config.O, config.F, rng, channels=config.dln_channels, n_blocks=config.dln_blocks,
               n_layers=config.dln_layers, kernel=config.dln_kernel, dropout=config.dln_dropout)


@dataclass
class HvisSystem:
    config: TrainConfig
    skeleton: SkeletonSpec
    generator: Generator
    critic: Critic
    dmap: DeliberateMap | None = None
    dtc: DTC | None = None
    variant: str = "full"
    corpus_hash: str = ""
    sln_history: SLNHistory = field(default_factory=SLNHistory)
    dln_history: list = field(default_factory=list)

    def predict_sln(self, observed: np.ndarray) -> np.ndarray:
        return self.generator.predict(observed)

    def predict_full(self, observed: np.ndarray) -> np.ndarray:
        sln = self.predict_sln(observed)
        if self.dmap is None or self.dmap.m == 0 or self.dtc is None:
            return sln
        return fuse_predictions(sln, self.dtc.predict(np.asarray(observed)[:, :, self.dmap.selected]), self.dmap)

    # -- checkpoint -------------------------------------------------------
    def segments(self) -> "OrderedDict[str, np.ndarray | str]":
        seg: OrderedDict = OrderedDict()
        seg["config"] = yaml.safe_dump(self.config.to_dict(), sort_keys=True)
        seg["skeleton"] = skeleton_text(self.skeleton)
        seg["variant"] = self.variant
        seg["corpus_fingerprint"] = self.corpus_hash
        for prefix, module in (("generator", self.generator), ("critic", self.critic)):
            for name, arr in module.state_dict().items():
                seg[f"{prefix}.{name}"] = arr
        if self.dmap is not None:
            seg["deliberate_map"] = self.dmap.to_text()
        if self.dtc is not None:
            for name, arr in self.dtc.state_dict().items():
                seg[f"dtc.{name}"] = arr
        return seg

    def save(self, path) -> None:
        checkpoint.save(path, self.segments())

    @classmethod
    def from_segments(cls, seg) -> "HvisSystem":
        try:
            config = TrainConfig.from_dict(yaml.safe_load(seg["config"]))
            skeleton = parse_skeleton(seg["skeleton"], source="checkpoint")
            variant = seg["variant"]
        except KeyError as exc:
            raise CheckpointError(f"checkpoint lacks segment {exc}") from None
        rng = np.random.default_rng(0)
        generator = build_generator(config, skeleton, rng, variant)
        critic = build_critic(config, skeleton, rng)
        generator.load_state_dict(_strip(seg, "generator."))
        critic.load_state_dict(_strip(seg, "critic."))
        dmap = DeliberateMap.from_text(seg["deliberate_map"]) if "deliberate_map" in seg else None
        dtc = None
        if dmap is not None and dmap.m > 0 and any(k.startswith("dtc.") for k in seg):
            dtc = build_dtc(config, dmap.m, rng)
            dtc.load_state_dict(_strip(seg, "dtc."))
        return cls(config, skeleton, generator, critic, dmap, dtc, variant, seg.get("corpus_fingerprint", ""))

    @classmethod
    def load(cls, path) -> "HvisSystem":
        return cls.from_segments(checkpoint.load(path))


def _strip(seg, prefix: str) -> dict:
    return {k[len(prefix):]: v for k, v in seg.items() if k.startswith(prefix)}


def train_system(config: TrainConfig, corpus: Sequence[MotionSequence], skeleton: SkeletonSpec,
                 variant: str = "full", splits: DataSplits | None = None) -> tuple[HvisSystem, DataSplits]:
    """Stage 1 adversarial SLN training, then memorise / rank / deliberate retraining."""
    if variant not in ("full",) + VARIANTS:
        raise ParameterError(f"unknown variant {variant!r}")
    splits = splits or prepare_data(config, corpus, skeleton)
    init_rng, sln_rng, dln_rng = _rngs(config.seed)
    generator = build_generator(config, skeleton, init_rng, variant)
    critic = build_critic(config, skeleton, init_rng)
    system = HvisSystem(config, skeleton, generator, critic, variant=variant,
                        corpus_hash=corpus_fingerprint(corpus))
    system.sln_history = sln_train(
        generator, critic, splits.train_windows, splits.val_windows, config.epochs_sln, sln_rng,
        batch_size=config.batch_size, n_critic=config.n_critic, lr=config.learning_rate,
        clip_c=config.clip_c, lambda_j=config.lambda_j)
    errors = memorize_errors(generator.predict, splits.val_windows)
    m = default_m(skeleton.n_joints) if config.m is None else config.m
    if variant == "no-dln" or m == 0:
        system.dmap = disabled_map(errors)
        return system, splits
    if m > skeleton.n_joints:
        raise ParameterError(f"m={m} exceeds the joint count {skeleton.n_joints}")
    system.dmap = rank_joints(errors, m)
    system.dtc = build_dtc(config, m, dln_rng)
    system.dln_history = dln_train(system.dtc, system.dmap, splits.train_windows, config.epochs_dln,
                                   dln_rng, batch_size=config.batch_size, lr=config.learning_rate)
    return system, splits


# -- evaluation ------------------------------------------------------------
def prediction_table(system: HvisSystem, windows: Sequence[WindowPair]) -> dict[str, np.ndarray]:
    obs, _ = stack_windows(windows)
    return {
        "zero-velocity": zero_velocity_baseline(obs, system.config.F),
        "sln": evaluate_predictor(system.predict_sln, windows),
        "sln+dln": evaluate_predictor(system.predict_full, windows),
    }


def horizon_rows(predictions: dict[str, np.ndarray], truth: np.ndarray, config: TrainConfig) -> list[dict]:
    rows = []
    for name, pred in predictions.items():
        for ms, frame in zip(config.horizons_ms, config.horizon_frames):
            rows.append({"predictor": name, "horizon_ms": ms, "frame": frame,
                         "mpjpe_mm": mpjpe(pred, truth, [frame])})
    return rows


def evaluate_system(system: HvisSystem, windows: Sequence[WindowPair]) -> list[dict]:
    if not windows:
        raise ContractError("evaluation needs at least one window")
    _, fut = stack_windows(windows)
    return horizon_rows(prediction_table(system, windows), fut, system.config)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def pivot_text(rows: list[dict], row_key: str, title: str = "") -> str:
    """Aligned text table: one line per ``row_key`` value, one column per horizon."""
    horizons = sorted({r["horizon_ms"] for r in rows})
    names = list(dict.fromkeys(r[row_key] for r in rows))
    width = max(len(n) for n in names + [row_key]) + 2
    head = row_key.ljust(width) + "".join(f"{h:>10}" for h in horizons)
    lines = [title] if title else []
    lines += [head, "-" * len(head)]
    for n in names:
        vals = {r["horizon_ms"]: r["mpjpe_mm"] for r in rows if r[row_key] == n}
        lines.append(n.ljust(width) + "".join(f"{vals[h]:>10.2f}" for h in horizons))
    return "\n".join(lines) + "\n"


def write_report(rows: list[dict], directory, stem: str, row_key: str = "predictor", title: str = "") -> tuple[Path, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = directory / f"{stem}.csv"
    txt_path = directory / f"{stem}.txt"
    csv_path.write_text(rows_to_csv(rows))
    txt_path.write_text(pivot_text(rows, row_key, title))
    return csv_path, txt_path


def write_loss_curves(system: HvisSystem, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    sln_path = directory / "sln_loss.csv"
    lines = ["epoch,generator_loss,critic_objective,val_mpjpe"]
    lines += [f"{e},{g!r},{c!r},{v!r}" for e, g, c, v in system.sln_history.rows()]
    sln_path.write_text("\n".join(lines) + "\n")
    dln_path = directory / "dln_loss.csv"
    dln_path.write_text("epoch,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(system.dln_history, 1)))
    return [sln_path, dln_path]


# -- ablation --------------------------------------------------------------
ABLATION_FLAGS = {
    "no-hvm": (False, True, True),
    "no-trn": (True, False, True),
    "no-dln": (True, True, False),
    "full": (True, True, True),
}


@dataclass
class AblationResult:
    rows: list
    split_hashes: dict
    systems: dict
    selected_joint_error: dict  # variant -> mean test error (mm) on the full model's selected joints


def run_ablation(config: TrainConfig, corpus: Sequence[MotionSequence], skeleton: SkeletonSpec,
                 variants: Sequence[str] = (), full: HvisSystem | None = None) -> AblationResult:
    """Train the full model and each requested variant under one seed and one data split.

    Pass ``full`` to reuse an already trained full system. ``no-dln`` shares the full model's stage-1 network: both runs are the same
    seeded computation, so its predictions are the full system's SLN output.
    """
    for v in variants:
        if v not in VARIANTS:
            raise ParameterError(f"unknown ablation variant {v!r}; choose from {', '.join(VARIANTS)}")
    splits = prepare_data(config, corpus, skeleton)
    _, fut = stack_windows(splits.test_windows)
    if full is None:
        full, _ = train_system(config, corpus, skeleton, "full", splits)
    systems = {"full": full}
    preds = {"full": evaluate_predictor(full.predict_full, splits.test_windows)}
    hashes = {"full": splits.split_hash}
    for v in variants:
        if v == "no-dln":
            preds[v] = evaluate_predictor(full.predict_sln, splits.test_windows)
            systems[v] = full
        else:
            systems[v], _ = train_system(config, corpus, skeleton, v, splits)
            preds[v] = evaluate_predictor(systems[v].predict_full, splits.test_windows)
        hashes[v] = splits.split_hash
    order = [v for v in ("no-hvm", "no-trn", "no-dln") if v in preds] + ["full"]
    rows = []
    for v in order:
        hvm, trn, dln = ABLATION_FLAGS[v]
        for ms, frame in zip(config.horizons_ms, config.horizon_frames):
            rows.append({"variant": v, "hvm": int(hvm), "trn": int(trn), "dln": int(dln),
                         "horizon_ms": ms, "frame": frame, "mpjpe_mm": mpjpe(preds[v], fut, [frame])})
    sel_err = {}
    if full.dmap is not None and full.dmap.m > 0:
        sel = full.dmap.selected
        for v in order:
            sel_err[v] = mpjpe(preds[v][:, :, sel], fut[:, :, sel])
    return AblationResult(rows, hashes, systems, sel_err)
