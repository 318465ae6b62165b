"""Seeded synthetic motion corpus with easy and hard joints by construction.

Trunk joints stay still. Most limb joints swing sinusoidally along a fixed
direction. A designated hard subset swings with an irregularly modulated
frequency on top of a small mean-reverting noise walk, so their futures are
much less predictable than the plain swings.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from ..errors import ParameterError
from .motion import MotionSequence
from .skeleton import SkeletonSpec

EASY_AMPLITUDE = (0.04, 0.10)
EASY_FREQ_HZ = (0.4, 0.9)
HARD_AMPLITUDE = (0.18, 0.28)
HARD_FREQ_HZ = (0.6, 1.2)
HARD_MOD_DEPTH = 0.5
WALK_SIGMA = 0.003
WALK_DECAY = 0.97

_DEFAULT_REST = {
    "pelvis": (0.0, 0.95, 0.0), "spine": (0.0, 1.20, 0.0), "neck": (0.0, 1.50, 0.0),
    "head": (0.0, 1.70, 0.0), "l_elbow": (0.30, 1.25, 0.0), "l_wrist": (0.35, 1.00, 0.05),
    "r_elbow": (-0.30, 1.25, 0.0), "r_wrist": (-0.35, 1.00, 0.05), "l_knee": (0.12, 0.50, 0.0),
    "l_ankle": (0.12, 0.08, 0.0), "r_knee": (-0.12, 0.50, 0.0), "r_ankle": (-0.12, 0.08, 0.0),
}


def default_hard_joints(skeleton: SkeletonSpec) -> list[int]:
    """ceil(N/4) limb joints, preferring leaves (wrists, ankles) in index order."""
    m = math.ceil(skeleton.n_joints / 4)
    has_child = {p for p in skeleton.parents if p != -1}
    limb = [i for i in range(skeleton.n_joints) if skeleton.part_of[i] != 0]
    leaves = [i for i in limb if i not in has_child]
    others = [i for i in limb if i in has_child]
    return sorted((leaves + others)[:m])


def rest_pose(skeleton: SkeletonSpec) -> np.ndarray:
    if all(n in _DEFAULT_REST for n in skeleton.names):
        return np.array([_DEFAULT_REST[n] for n in skeleton.names])
    # generic skeleton: fixed-length bones fanned out by joint index
    pos = np.zeros((skeleton.n_joints, 3))
    order = sorted(range(skeleton.n_joints), key=lambda i: _depth(skeleton, i))
    for i in order:
        p = skeleton.parents[i]
        if p == -1:
            continue
        ang = 2.0 * math.pi * i / skeleton.n_joints
        pos[i] = pos[p] + 0.25 * np.array([math.cos(ang), math.sin(ang), 0.1])
    return pos


def _depth(skeleton: SkeletonSpec, i: int) -> int:
    d = 0
    while skeleton.parents[i] != -1:
        i = skeleton.parents[i]
        d += 1
    return d


def _unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def _sequence(skeleton: SkeletonSpec, frames: int, fps: float, hard: set[int],
              rng: np.random.Generator) -> np.ndarray:
    t = np.arange(frames) / fps
    pos = np.repeat(rest_pose(skeleton)[None], frames, axis=0)
    for j in range(skeleton.n_joints):
        if skeleton.part_of[j] == 0:
            continue
        direction = _unit(rng)
        phase0 = rng.uniform(0.0, 2.0 * math.pi)
        if j in hard:
            amp = rng.uniform(*HARD_AMPLITUDE)
            f0 = rng.uniform(*HARD_FREQ_HZ)
            mod = np.zeros(frames)
            for _ in range(3):
                mod += np.sin(2.0 * math.pi * rng.uniform(0.1, 0.5) * t + rng.uniform(0, 2 * math.pi))
            freq = f0 * (1.0 + HARD_MOD_DEPTH * mod / 3.0)
            phase = phase0 + 2.0 * math.pi * np.cumsum(freq) / fps
            walk = np.zeros((frames, 3))
            noise = rng.normal(scale=WALK_SIGMA, size=(frames, 3))
            for k in range(1, frames):
                walk[k] = WALK_DECAY * walk[k - 1] + noise[k]
            pos[:, j] += amp * np.sin(phase)[:, None] * direction + walk
        else:
            amp = rng.uniform(*EASY_AMPLITUDE)
            freq = rng.uniform(*EASY_FREQ_HZ)
            pos[:, j] += amp * np.sin(2.0 * math.pi * freq * t + phase0)[:, None] * direction
    return pos


def synth_corpus(skeleton: SkeletonSpec, n_sequences: int = 200, frames: int = 100, seed: int = 0,
                 fps: float = 25.0, hard_joints: Sequence[int] | None = None,
                 O: int = 25, F: int = 25) -> list[MotionSequence]:
    if n_sequences < 1:
        raise ParameterError(f"n_sequences must be positive, got {n_sequences}")
    if frames < 2 * (O + F):
        raise ParameterError(f"frames must be at least 2*(O+F) = {2 * (O + F)}, got {frames}")
    if fps <= 0:
        raise ParameterError(f"fps must be positive, got {fps}")
    hard = set(default_hard_joints(skeleton) if hard_joints is None else hard_joints)
    for j in hard:
        if not 0 <= j < skeleton.n_joints or skeleton.part_of[j] == 0:
            raise ParameterError(f"hard joint {j} must be a limb joint index")
    seeds = np.random.SeedSequence(seed).spawn(n_sequences)
    return [MotionSequence(_sequence(skeleton, frames, fps, hard, np.random.default_rng(s)), fps,
                           label=f"synth_{i:04d}")
            for i, s in enumerate(seeds)]
