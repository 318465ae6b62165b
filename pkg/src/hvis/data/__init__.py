from .metrics import joint_errors, mpjpe, ms_to_frames, per_joint_mpjpe, zero_velocity_baseline
from .motion import (
    MotionSequence, WindowPair, corpus_fingerprint, downsample, fingerprint, load_csv, make_windows,
    root_align, save_csv, split_corpus, stack_windows, windows_from_corpus,
)
from .skeleton import (
    N_PARTS, SkeletonSpec, default_skeleton, load_skeleton, parse_skeleton, save_skeleton, skeleton_text,
)
from .synth import default_hard_joints, synth_corpus

__all__ = [
    "MotionSequence", "N_PARTS", "SkeletonSpec", "WindowPair", "corpus_fingerprint",
    "default_hard_joints", "default_skeleton", "downsample", "fingerprint", "joint_errors",
    "load_csv", "load_skeleton", "make_windows", "mpjpe", "ms_to_frames", "per_joint_mpjpe",
    "root_align", "save_csv", "parse_skeleton", "save_skeleton", "skeleton_text", "split_corpus", "stack_windows", "synth_corpus",
    "windows_from_corpus", "zero_velocity_baseline",
]
