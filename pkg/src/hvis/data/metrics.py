"""Position-error metrics and the zero-velocity baseline."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from ..errors import DimensionError, ParameterError


def ms_to_frames(ms: float, fps: float) -> int:
    """Horizon in frames, ``round(ms * fps / 1000)``; 400 ms at 25 fps is frame 10."""
    frames = int(np.floor(ms * fps / 1000.0 + 0.5))
    if frames < 1:
        raise ParameterError(f"horizon {ms} ms is shorter than one frame at {fps} fps")
    return frames


def _frame_index(horizon_frames: Iterable[int] | None, n_frames: int):
    if horizon_frames is None:
        return slice(None)
    idx = [int(h) - 1 for h in horizon_frames]
    for h in idx:
        if not 0 <= h < n_frames:
            raise ParameterError(f"horizon frame {h + 1} outside [1, {n_frames}]")
    return idx


def joint_errors(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Euclidean distance per joint, in meters; shape of the inputs minus the last axis."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise DimensionError(f"mpjpe: prediction {pred.shape} and truth {truth.shape} differ")
    if pred.shape[-1] != 3:
        raise DimensionError(f"mpjpe: last axis must hold 3 coordinates, got {pred.shape}")
    return np.sqrt(np.sum((pred - truth) ** 2, axis=-1))


def mpjpe(pred, truth, horizon_frames: Iterable[int] | None = None) -> float:
    """Mean per-joint position error in millimeters.

    ``pred`` and ``truth`` are [F, N, 3] (optionally with leading window
    axes). ``horizon_frames`` are 1-based future frame numbers to average
    over; ``None`` uses every frame.
    """
    err = joint_errors(pred, truth)
    idx = _frame_index(horizon_frames, err.shape[-2])
    return float(np.mean(err[..., idx, :]) * 1000.0)


def per_joint_mpjpe(pred, truth, horizon_frames: Iterable[int] | None = None) -> np.ndarray:
    """Per-joint MPJPE in millimeters averaged over windows and frames."""
    err = joint_errors(pred, truth)
    idx = _frame_index(horizon_frames, err.shape[-2])
    err = err[..., idx, :]
    return err.reshape(-1, err.shape[-1]).mean(axis=0) * 1000.0


def zero_velocity_baseline(observed: np.ndarray, F: int) -> np.ndarray:
    """Repeat the last observed frame ``F`` times; works on [O, N, 3] or [W, O, N, 3]."""
    observed = np.asarray(observed, dtype=np.float64)
    if observed.shape[-3] < 1:
        raise ParameterError("zero-velocity baseline needs at least one observed frame")
    last = observed[..., -1:, :, :]
    reps = [1] * observed.ndim
    reps[-3] = F
    return np.tile(last, reps)
