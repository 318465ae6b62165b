"""Static skeleton description: joints, parent links and kinematic chains."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import FormatError, ParameterError, ParseError

N_PARTS = 5
PART_NAMES = ("trunk", "left_arm", "right_arm", "left_leg", "right_leg")


@dataclass(frozen=True)
class SkeletonSpec:
    names: tuple[str, ...]
    parents: tuple[int, ...]
    part_of: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        object.__setattr__(self, "part_of", tuple(int(p) for p in self.part_of))
        n = len(self.names)
        if n == 0:
            raise ParameterError("skeleton needs at least one joint")
        if len(self.parents) != n or len(self.part_of) != n:
            raise ParameterError(
                f"skeleton lists disagree: {n} names, {len(self.parents)} parents, "
                f"{len(self.part_of)} part ids")
        if len(set(self.names)) != n:
            raise ParameterError("joint names must be unique")
        roots = [i for i, p in enumerate(self.parents) if p == -1]
        if len(roots) != 1:
            raise ParameterError(f"skeleton needs exactly one root, found {len(roots)}")
        for i, p in enumerate(self.parents):
            if p != -1 and not 0 <= p < n:
                raise ParameterError(f"joint {self.names[i]!r} has parent index {p} outside [0, {n})")
        for i in range(n):
            seen, j = set(), i
            while j != -1:
                if j in seen:
                    raise ParameterError(f"parent links form a cycle through joint {self.names[i]!r}")
                seen.add(j)
                j = self.parents[j]
        for i, part in enumerate(self.part_of):
            if not 0 <= part < N_PARTS:
                raise ParameterError(f"joint {self.names[i]!r} has part id {part} outside [0, {N_PARTS - 1}]")
        unused = set(range(N_PARTS)) - set(self.part_of)
        if unused:
            raise ParameterError(f"part ids {sorted(unused)} are not used by any joint")

    @property
    def n_joints(self) -> int:
        return len(self.names)

    @property
    def root(self) -> int:
        return self.parents.index(-1)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(i, p) for i, p in enumerate(self.parents) if p != -1]

    def index(self, name: str) -> int:
        return self.names.index(name)

    def adjacency(self) -> np.ndarray:
        """Symmetric 0/1 bone adjacency without self-loops."""
        a = np.zeros((self.n_joints, self.n_joints))
        for i, p in self.edges:
            a[i, p] = a[p, i] = 1.0
        return a

    def permuted(self, perm) -> "SkeletonSpec":
        """Relabel joints so that new joint ``k`` is old joint ``perm[k]``."""
        perm = list(perm)
        inv = {old: new for new, old in enumerate(perm)}
        return SkeletonSpec(
            names=[self.names[o] for o in perm],
            parents=[-1 if self.parents[o] == -1 else inv[self.parents[o]] for o in perm],
            part_of=[self.part_of[o] for o in perm],
        )


def default_skeleton() -> SkeletonSpec:
    """12-joint body: four trunk joints and two joints per limb."""
    return SkeletonSpec(
        names=("pelvis", "spine", "neck", "head",
               "l_elbow", "l_wrist", "r_elbow", "r_wrist",
               "l_knee", "l_ankle", "r_knee", "r_ankle"),
        parents=(-1, 0, 1, 2, 2, 4, 2, 6, 0, 8, 0, 10),
        part_of=(0, 0, 0, 0, 1, 1, 2, 2, 3, 3, 4, 4),
    )


def load_skeleton(path) -> SkeletonSpec:
    """Read ``name=<str> parent=<int> part=<int>`` records, one joint per line."""
    return parse_skeleton(Path(path).read_text(), source=str(path))


def parse_skeleton(text: str, source: str = "<skeleton>") -> SkeletonSpec:
    path = source
    names, parents, parts = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = {}
        for token in line.split():
            if "=" not in token:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {token!r}")
            k, v = token.split("=", 1)
            fields[k.strip()] = v.strip()
        missing = {"name", "parent", "part"} - set(fields)
        if missing:
            raise FormatError(f"{path}:{lineno}: missing keys {sorted(missing)}")
        try:
            parents.append(int(fields["parent"]))
            parts.append(int(fields["part"]))
        except ValueError:
            raise ParseError(f"{path}:{lineno}: parent and part must be integers", row=lineno) from None
        names.append(fields["name"])
    return SkeletonSpec(names, parents, parts)


def skeleton_text(skeleton: SkeletonSpec) -> str:
    lines = ["# one joint per line: name, parent index (-1 for root), part id"]
    for name, parent, part in zip(skeleton.names, skeleton.parents, skeleton.part_of):
        lines.append(f"name={name} parent={parent} part={part}")
    return "\n".join(lines) + "\n"


def save_skeleton(skeleton: SkeletonSpec, path) -> None:
    Path(path).write_text(skeleton_text(skeleton))
