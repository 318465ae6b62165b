"""Deliberate learning: find the joints the trained generator predicts worst,
retrain a dedicated temporal network on them and splice its output back in."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Adam, Module, Tensor, functional as Fn, no_grad, zeros
from .data.metrics import per_joint_mpjpe
from .data.motion import WindowPair, stack_windows
from .errors import ContractError, DimensionError, DivergenceError, ParameterError
from .sln import DIVERGENCE_LIMIT, TCN, _batches, evaluate_predictor, joint_loss

log = logging.getLogger(__name__)


@dataclass
class DeliberateMap:
    per_joint_error: np.ndarray  # [N] mm
    ranking: np.ndarray  # joint indices by descending error
    selected: np.ndarray  # first m entries of ranking
    m: int

    def to_text(self) -> str:
        lines = ["joint,error_mm,selected"]
        chosen = set(self.selected.tolist())
        for j, e in enumerate(self.per_joint_error):
            lines.append(f"{j},{float(e)!r},{int(j in chosen)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "DeliberateMap":
        rows = [ln.split(",") for ln in text.strip().splitlines()[1:]]
        errors = np.array([float(r[1]) for r in rows])
        flags = [int(r[2]) for r in rows]
        m = int(sum(flags))
        dmap = rank_joints(errors, m) if m > 0 else disabled_map(errors)
        if sorted(dmap.selected.tolist()) != [j for j, f in enumerate(flags) if f]:
            raise ContractError("stored selection does not match the ranking of the stored errors")
        return dmap


def default_m(n_joints: int) -> int:
    return math.ceil(n_joints / 4)


def rank_joints(per_joint_error, m: int) -> DeliberateMap:
    """Sort joints by descending error (ties: lower index first) and keep the top ``m``."""
    err = np.asarray(per_joint_error, dtype=np.float64)
    n = err.size
    if not 1 <= m <= n:
        raise ParameterError(f"m must lie in [1, {n}], got {m}")
    ranking = np.lexsort((np.arange(n), -err))
    return DeliberateMap(err.copy(), ranking, ranking[:m].copy(), m)


def disabled_map(per_joint_error) -> DeliberateMap:
    err = np.asarray(per_joint_error, dtype=np.float64)
    ranking = np.lexsort((np.arange(err.size), -err))
    return DeliberateMap(err.copy(), ranking, np.zeros(0, dtype=int), 0)


def memorize_errors(predict: Callable[[np.ndarray], np.ndarray],
                    windows: Sequence[WindowPair]) -> np.ndarray:
    """Per-joint mean Euclidean error (mm) of ``predict`` across frames and windows."""
    if not windows:
        raise ContractError("memorising errors needs a non-empty validation set")
    _, fut = stack_windows(windows)
    return per_joint_mpjpe(evaluate_predictor(predict, windows), fut)


class DTC(Module):
    """Causal TCN over the selected joints' observed positions.

    The last step's features are projected to a displacement from the last
    observed position for every selected joint and future frame. The
    projection starts at zero, i.e. at the zero-velocity baseline.
    """

    def __init__(self, m: int, O: int, F: int, rng: np.random.Generator, channels: int = 64,
                 n_blocks: int = 3, n_layers: int = 4, kernel: int = 3, dropout: float = 0.2):
        if m < 1:
            raise ParameterError(f"DTC needs at least one selected joint, got m={m}")
        dilations = tuple(2 ** i for i in range(n_layers))
        self.tcn = TCN(3 * m, channels, n_blocks, kernel, dilations, dropout, rng)
        self.out_w = zeros((channels, F * m * 3))
        self.out_b = zeros(F * m * 3)
        self.m, self.O, self.F = m, O, F
        self.dropout = dropout

    def forward(self, observed) -> Tensor:
        """Selected-joint observations [B, O, m, 3] -> predictions [B, F, m, 3]."""
        obs = observed if isinstance(observed, Tensor) else Tensor(observed)
        if obs.ndim != 4 or obs.shape[2:] != (self.m, 3):
            raise DimensionError(f"DTC expects [B, O, {self.m}, 3], got {obs.shape}")
        B, O = obs.shape[:2]
        h = self.tcn(Fn.reshape(obs, (B, O, 3 * self.m)))
        disp = Fn.reshape(Fn.linear(h[:, -1, :], self.out_w, self.out_b), (B, self.F, self.m, 3))
        return Fn.add(disp, obs[:, -1:, :, :])

    def predict(self, observed: np.ndarray) -> np.ndarray:
        was = self.training
        self.eval()
        with no_grad():
            out = self.forward(np.asarray(observed)).data
        self.train(was)
        return out


def dtc_forward(dtc: DTC, observed_selected) -> Tensor:
    return dtc(observed_selected)


def dln_train(dtc: DTC, dmap: DeliberateMap, train: Sequence[WindowPair], epochs: int,
              rng: np.random.Generator, batch_size: int = 32, lr: float = 0.001) -> list[float]:
    """Fit the DTC to the selected joints' futures with squared position error only."""
    if dmap.m != dtc.m:
        raise ContractError(f"map selects {dmap.m} joints but the DTC was built for {dtc.m}")
    if not train:
        raise ContractError("deliberate training needs a non-empty training set")
    obs_all, fut_all = stack_windows(train)
    sel = dmap.selected
    obs_all = obs_all[:, :, sel]
    fut_all = fut_all[:, :, sel]
    opt = Adam(dtc.named_parameters(), lr=lr)
    history = []
    dtc.train()
    for epoch in range(1, epochs + 1):
        losses = []
        for idx in _batches(len(obs_all), batch_size, rng):
            loss = joint_loss(dtc(obs_all[idx]), fut_all[idx])
            value = loss.item()
            if not np.isfinite(value) or value > DIVERGENCE_LIMIT:
                raise DivergenceError(f"deliberate loss {value:.4g} exceeded {DIVERGENCE_LIMIT:g} "
                                      f"at epoch {epoch}", history=history)
            opt.zero_grad()
            loss.backward()
            opt.step()
            losses.append(value)
        history.append(float(np.mean(losses)))
        log.info("dln epoch %d: loss %.6f", epoch, history[-1])
    return history


def fuse_predictions(sln_pred: np.ndarray, dtc_pred: np.ndarray | None, dmap: DeliberateMap) -> np.ndarray:
    """Replace the selected joints of ``sln_pred`` [.., F, N, 3] with ``dtc_pred`` [.., F, m, 3]."""
    sln_pred = np.asarray(sln_pred)
    if dmap.m == 0:
        return sln_pred.copy()
    if dtc_pred is None:
        raise ContractError("map selects joints but no deliberate prediction was given")
    dtc_pred = np.asarray(dtc_pred)
    if sln_pred.shape[-2] != dmap.per_joint_error.size:
        raise ContractError(f"prediction has {sln_pred.shape[-2]} joints, map covers "
                            f"{dmap.per_joint_error.size}")
    expected = sln_pred.shape[:-2] + (dmap.m, 3)
    if dtc_pred.shape != expected:
        raise ContractError(f"deliberate prediction shape {dtc_pred.shape}, expected {expected}")
    out = sln_pred.copy()
    out[..., dmap.selected, :] = dtc_pred
    return out
