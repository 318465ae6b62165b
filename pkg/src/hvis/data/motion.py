"""Motion sequences: CSV ingestion, resampling, windowing and root alignment."""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..errors import FormatError, ParameterError, ParseError
from .skeleton import SkeletonSpec

_FPS_RE = re.compile(r"#\s*fps\s*=\s*([^\s,]+)")


@dataclass
class MotionSequence:
    positions: np.ndarray  # [frames, N, 3], meters
    fps: float
    label: str | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise ParameterError(f"positions must be [frames, joints, 3], got {self.positions.shape}")
        if self.positions.shape[0] < 1:
            raise ParameterError("a motion sequence needs at least one frame")
        if not np.all(np.isfinite(self.positions)):
            raise ParameterError("positions contain non-finite values")
        if not self.fps > 0:
            raise ParameterError(f"fps must be positive, got {self.fps}")

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def n_joints(self) -> int:
        return self.positions.shape[1]


@dataclass
class WindowPair:
    observed: np.ndarray  # [O, N, 3]
    future: np.ndarray  # [F, N, 3]
    start: int = 0
    sequence: int = 0
    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))


def csv_header(skeleton: SkeletonSpec) -> list[str]:
    cols = ["frame"]
    for name in skeleton.names:
        cols += [f"{name}_x", f"{name}_y", f"{name}_z"]
    return cols


def load_csv(path, skeleton: SkeletonSpec, fps: float | None = None, label: str | None = None
             ) -> MotionSequence:
    """Parse ``frame,<joint>_x,<joint>_y,<joint>_z,...`` rows in file order.

    The frame rate comes from ``fps`` when given, otherwise from a
    ``# fps=<float>`` comment line. Extra trailing columns named in the header
    (such as ``predicted``) are ignored.
    """
    path = Path(path)
    file_fps = None
    header: list[str] | None = None
    rows: list[list[float]] = []
    expected = 1 + 3 * skeleton.n_joints
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            m = _FPS_RE.match(line)
            if m:
                try:
                    file_fps = float(m.group(1))
                except ValueError:
                    raise ParseError(f"{path}:{lineno}: bad fps value {m.group(1)!r}", row=lineno) from None
            continue
        cells = [c.strip() for c in line.split(",")]
        if header is None:
            header = cells
            n_coord = len([c for c in header[1:] if c[-2:] in ("_x", "_y", "_z")])
            if n_coord + 1 != expected:
                raise FormatError(
                    f"{path}: expected {expected} columns (frame + 3x{skeleton.n_joints} coordinates), "
                    f"found {n_coord + 1}")
            continue
        if len(cells) < expected:
            raise FormatError(f"{path}:{lineno}: expected {expected} columns, found {len(cells)}")
        values = []
        for col, cell in enumerate(cells[1:expected], start=1):
            try:
                values.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric value {cell!r} at row {lineno}, column {col + 1}",
                    row=lineno, column=col + 1) from None
        rows.append(values)
    if header is None:
        raise FormatError(f"{path}: missing header row")
    if not rows:
        raise FormatError(f"{path}: no data rows")
    rate = fps if fps is not None else file_fps
    if rate is None:
        raise FormatError(f"{path}: no '# fps=' line and no fps override given")
    positions = np.asarray(rows).reshape(len(rows), skeleton.n_joints, 3)
    return MotionSequence(positions, float(rate), label=label or path.stem)


def save_csv(seq: MotionSequence, path, skeleton: SkeletonSpec,
             predicted: Sequence[int] | None = None) -> None:
    """Write ``seq`` in the CSV schema; ``predicted`` adds a 0/1 column per frame."""
    if seq.n_joints != skeleton.n_joints:
        raise ParameterError(f"sequence has {seq.n_joints} joints, skeleton has {skeleton.n_joints}")
    header = csv_header(skeleton)
    if predicted is not None:
        header.append("predicted")
    lines = [f"# fps={seq.fps:g}", ",".join(header)]
    flat = seq.positions.reshape(seq.n_frames, -1)
    for t in range(seq.n_frames):
        cells = [str(t)] + [repr(float(v)) for v in flat[t]]
        if predicted is not None:
            cells.append(str(int(predicted[t])))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def downsample(seq: MotionSequence, target_fps: float) -> MotionSequence:
    if target_fps <= 0:
        raise ParameterError(f"target fps must be positive, got {target_fps}")
    if target_fps > seq.fps:
        raise ParameterError(f"cannot downsample {seq.fps} fps to a higher rate {target_fps}")
    stride = max(1, _round_half_up(seq.fps / target_fps))
    return MotionSequence(seq.positions[::stride].copy(), float(target_fps), seq.label)


def root_align(positions: np.ndarray, root: int, ref_frame: int) -> tuple[np.ndarray, np.ndarray]:
    """Translate so that the root joint of ``ref_frame`` sits at the origin."""
    offset = positions[ref_frame, root].copy()
    return positions - offset, offset


def make_windows(seq: MotionSequence, O: int = 25, F: int = 25, stride: int = 1,
                 root: int = 0, sequence_index: int = 0) -> list[WindowPair]:
    """Slide an (O + F)-frame window over ``seq``.

    Each pair is translated by the root position of its last observed frame.
    Sequences shorter than O + F yield no windows.
    """
    if O < 1 or F < 1 or stride < 1:
        raise ParameterError(f"O, F and stride must be positive, got {O}, {F}, {stride}")
    out = []
    for start in range(0, seq.n_frames - (O + F) + 1, stride):
        chunk = seq.positions[start:start + O + F]
        aligned, offset = root_align(chunk, root, O - 1)
        out.append(WindowPair(aligned[:O].copy(), aligned[O:].copy(), start, sequence_index, offset))
    return out


def windows_from_corpus(corpus: Sequence[MotionSequence], O: int, F: int, stride: int,
                        root: int = 0) -> list[WindowPair]:
    windows = []
    for i, seq in enumerate(corpus):
        windows.extend(make_windows(seq, O, F, stride, root=root, sequence_index=i))
    return windows


def stack_windows(windows: Sequence[WindowPair]) -> tuple[np.ndarray, np.ndarray]:
    """Stack into observed [W, O, N, 3] and future [W, F, N, 3] arrays."""
    obs = np.stack([w.observed for w in windows])
    fut = np.stack([w.future for w in windows])
    return obs, fut


def split_corpus(corpus: Sequence[MotionSequence], fractions=(0.7, 0.15, 0.15), seed: int = 0):
    """Seeded split by whole sequence into train / validation / test lists."""
    n = len(corpus)
    if n < 3:
        raise ParameterError(f"need at least 3 sequences to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    n_val = max(1, int(round(fractions[1] * n)))
    n_test = max(1, int(round(fractions[2] * n)))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise ParameterError("split leaves no training sequences")
    idx = (order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:])
    return tuple([corpus[i] for i in sorted(part)] for part in idx)


def fingerprint(arrays) -> str:
    """Hex SHA-256 over a sequence of arrays (values and shapes)."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a, dtype="<f8")
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    return h.hexdigest()


def corpus_fingerprint(corpus: Sequence[MotionSequence]) -> str:
    return fingerprint([s.positions for s in corpus] + [np.array([s.fps for s in corpus])])
