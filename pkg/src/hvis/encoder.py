"""Graph encoder over the spatio-temporal pose graph.

Node features are stored node-major, ``[..., J, C]`` with ``J = O * N`` and
node ``t * N + i`` holding joint ``i`` at observed frame ``t``. Written in
channel-major form each layer maps ``C_L x J`` to ``C_{L+1} x J``; the node-major
layout is simply its transpose and keeps every propagation a left matmul.

Two layer types are provided. :class:`RALayer` propagates through a fixed,
symmetrically normalised static adjacency times a learnable dynamic
adjacency. :class:`VALayer` propagates at joint, body-part and whole-body
scale and sums the three results back at joint resolution.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .autodiff import Module, Tensor, functional as Fn, xavier_uniform
from .data.skeleton import N_PARTS, SkeletonSpec
from .errors import DegenerateInputError, DimensionError, ParameterError

N_SCALES = 3
ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {"tanh": Fn.tanh, "identity": Fn.identity}


def build_static_adjacency(skeleton: SkeletonSpec, O: int) -> np.ndarray:
    """Unnormalised [J, J] graph: bones within a frame, same joint across adjacent frames, self-loops."""
    n = skeleton.n_joints
    spatial = skeleton.adjacency()
    temporal = _chain(O)
    return np.kron(np.eye(O), spatial) + np.kron(temporal, np.eye(n)) + np.eye(n * O)


def _chain(length: int) -> np.ndarray:
    """Path graph over ``length`` frames, no self-loops."""
    a = np.zeros((length, length))
    idx = np.arange(length - 1)
    a[idx, idx + 1] = a[idx + 1, idx] = 1.0
    return a


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    """D^{-1/2} A D^{-1/2} with D the row-sum degree matrix."""
    a = np.asarray(a, dtype=np.float64)
    if np.any(a < 0):
        raise ParameterError("adjacency entries must be non-negative")
    deg = a.sum(axis=1)
    zero = np.flatnonzero(deg <= 0)
    if zero.size:
        raise DegenerateInputError(f"node {int(zero[0])} has zero degree")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * a * inv_sqrt[None, :]


@dataclass
class ScaleMaps:
    joint_to_part: np.ndarray  # [5, N], rows average the joints of each part
    part_to_body: np.ndarray  # [1, 5]
    joint_to_body: np.ndarray  # [1, N]
    membership: np.ndarray  # [N, 5] 0/1, used for unpooling

    @classmethod
    def from_skeleton(cls, skeleton: SkeletonSpec) -> "ScaleMaps":
        n = skeleton.n_joints
        member = np.zeros((n, N_PARTS))
        member[np.arange(n), skeleton.part_of] = 1.0
        j2p = member.T / member.sum(axis=0)[:, None]
        return cls(j2p, np.full((1, N_PARTS), 1.0 / N_PARTS), np.full((1, n), 1.0 / n), member)

    def nodes(self, m: int) -> int:
        return (self.membership.shape[0], N_PARTS, 1)[m]

    def pool_matrix(self, m: int, O: int) -> np.ndarray:
        """[O*n_m, O*N] per-frame averaging into scale ``m``."""
        if m == 0:
            return np.eye(O * self.membership.shape[0])
        if m == 1:
            return np.kron(np.eye(O), self.joint_to_part)
        if m == 2:
            # whole-body node averages every joint, not the part means
            return np.kron(np.eye(O), self.joint_to_body)
        raise ParameterError(f"scale index must be 0, 1 or 2, got {m}")

    def unpool_matrix(self, m: int, O: int) -> np.ndarray:
        """[O*N, O*n_m] broadcast of each scale node back to its member joints."""
        if m == 0:
            return np.eye(O * self.membership.shape[0])
        if m == 1:
            return np.kron(np.eye(O), self.membership)
        if m == 2:
            return np.kron(np.eye(O), np.ones((self.membership.shape[0], 1)))
        raise ParameterError(f"scale index must be 0, 1 or 2, got {m}")


def scale_spatial_graph(skeleton: SkeletonSpec, m: int) -> np.ndarray:
    """Within-frame graph at scale ``m``, including self-loops."""
    if m == 0:
        return skeleton.adjacency() + np.eye(skeleton.n_joints)
    if m == 1:
        star = np.eye(N_PARTS)
        star[0, 1:] = star[1:, 0] = 1.0
        return star
    if m == 2:
        return np.eye(1)
    raise ParameterError(f"scale index must be 0, 1 or 2, got {m}")


@dataclass
class AdjacencyPack:
    a_static: np.ndarray  # raw [J, J]
    a_static_norm: np.ndarray
    a_s: list  # per-scale normalised spatial [J_m, J_m]
    a_t: list  # per-scale normalised temporal [J_m, J_m]
    pool: list
    unpool: list
    n_joints: int
    O: int

    @classmethod
    def build(cls, skeleton: SkeletonSpec, O: int) -> "AdjacencyPack":
        maps = ScaleMaps.from_skeleton(skeleton)
        a_static = build_static_adjacency(skeleton, O)
        a_s, a_t, pool, unpool = [], [], [], []
        for m in range(N_SCALES):
            n_m = maps.nodes(m)
            a_s.append(normalize_adjacency(np.kron(np.eye(O), scale_spatial_graph(skeleton, m))))
            a_t.append(normalize_adjacency(np.kron(_chain(O) + np.eye(O), np.eye(n_m))))
            pool.append(maps.pool_matrix(m, O))
            unpool.append(maps.unpool_matrix(m, O))
        return cls(a_static, normalize_adjacency(a_static), a_s, a_t, pool, unpool,
                   skeleton.n_joints, O)

    @property
    def J(self) -> int:
        return self.a_static.shape[0]


def pool_to_scale(x: Tensor, pack: AdjacencyPack, m: int) -> Tensor:
    """Average node features [..., J, C] into scale ``m`` nodes [..., J_m, C]."""
    if m not in (0, 1, 2):
        raise ParameterError(f"scale index must be 0, 1 or 2, got {m}")
    if m == 0:
        return x
    return Fn.matmul(Tensor(pack.pool[m]), x)


def unpool_from_scale(x: Tensor, pack: AdjacencyPack, m: int) -> Tensor:
    if m not in (0, 1, 2):
        raise ParameterError(f"scale index must be 0, 1 or 2, got {m}")
    if m == 0:
        return x
    return Fn.matmul(Tensor(pack.unpool[m]), x)


def ra_layer(x: Tensor, a_static_norm, a_dynamic: Tensor, weight: Tensor,
             activation: str = "tanh") -> Tensor:
    """activation(Â_s · A_d · X · W) for node-major X of shape [..., J, C_in]."""
    J = a_dynamic.shape[0]
    if x.shape[-2] != J or weight.shape[0] != x.shape[-1]:
        raise DimensionError(
            f"ra_layer: input {x.shape} incompatible with adjacency {a_dynamic.shape} "
            f"and weight {weight.shape}")
    op = Fn.matmul(Tensor(a_static_norm) if not isinstance(a_static_norm, Tensor) else a_static_norm,
                   a_dynamic)
    return ACTIVATIONS[activation](Fn.matmul(op, Fn.matmul(x, weight)))


def va_layer(x: Tensor, pack: AdjacencyPack, weights: Sequence[Tensor], activation: str = "tanh",
             active_scales: Sequence[int] = (0, 1, 2)) -> Tensor:
    """activation(sum over scales of unpool(A_s[m] · A_t[m] · pool_m(X) · W[m]))."""
    if x.shape[-2] != pack.J:
        raise DimensionError(f"va_layer: input has {x.shape[-2]} nodes, graph has {pack.J}")
    if len(weights) != N_SCALES:
        raise DimensionError(f"va_layer: expected {N_SCALES} weight matrices, got {len(weights)}")
    total = None
    for m in active_scales:
        if weights[m].shape[0] != x.shape[-1]:
            raise DimensionError(f"va_layer: weight {m} {weights[m].shape} does not match input {x.shape}")
        t = pool_to_scale(x, pack, m)
        t = Fn.matmul(t, weights[m])
        t = Fn.matmul(Tensor(pack.a_t[m]), t)
        t = Fn.matmul(Tensor(pack.a_s[m]), t)
        t = unpool_from_scale(t, pack, m)
        total = t if total is None else Fn.add(total, t)
    return ACTIVATIONS[activation](total)


class RALayer(Module):
    def __init__(self, pack: AdjacencyPack, c_in: int, c_out: int, rng: np.random.Generator,
                 activation: str = "tanh"):
        self.pack = pack
        self.activation = activation
        self.weight = xavier_uniform(rng, (c_in, c_out))
        J = pack.J
        self.a_dynamic = Tensor(np.eye(J) + rng.uniform(-0.01, 0.01, size=(J, J)), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ra_layer(x, self.pack.a_static_norm, self.a_dynamic, self.weight, self.activation)


class VALayer(Module):
    def __init__(self, pack: AdjacencyPack, c_in: int, c_out: int, rng: np.random.Generator,
                 activation: str = "tanh"):
        self.pack = pack
        self.activation = activation
        self.weights = [xavier_uniform(rng, (c_in, c_out)) for _ in range(N_SCALES)]

    def forward(self, x: Tensor) -> Tensor:
        return va_layer(x, self.pack, self.weights, self.activation)


class GCNLayer(Module):
    """Plain normalised-adjacency graph convolution, used by the no-HVM ablation."""

    def __init__(self, pack: AdjacencyPack, c_in: int, c_out: int, rng: np.random.Generator,
                 activation: str = "tanh"):
        self.pack = pack
        self.activation = activation
        self.weight = xavier_uniform(rng, (c_in, c_out))

    def forward(self, x: Tensor) -> Tensor:
        h = Fn.matmul(Tensor(self.pack.a_static_norm), Fn.matmul(x, self.weight))
        return ACTIVATIONS[self.activation](h)


class Encoder(Module):
    """Stack of graph layers mapping observed poses to per-joint feature sequences.

    ``layout`` is a string over {"R", "V", "G"} (RA, VA, plain GCN); the
    default "RVR" with widths 3 -> 64 -> 64 -> 64.
    """

    def __init__(self, skeleton: SkeletonSpec, O: int, rng: np.random.Generator,
                 channels: Sequence[int] = (64, 64, 64), layout: str = "RVR",
                 activation: str = "tanh", in_channels: int = 3):
        if len(layout) != len(channels):
            raise ParameterError(f"layout {layout!r} needs {len(layout)} channel widths, got {len(channels)}")
        self.skeleton = skeleton
        self.O = O
        self.pack = AdjacencyPack.build(skeleton, O)
        kinds = {"R": RALayer, "V": VALayer, "G": GCNLayer}
        self.layers = []
        c = in_channels
        for kind, width in zip(layout, channels):
            if kind not in kinds:
                raise ParameterError(f"unknown layer kind {kind!r}")
            self.layers.append(kinds[kind](self.pack, c, width, rng, activation))
            c = width
        self.out_channels = c
        self.layout = layout

    def forward(self, observed) -> Tensor:
        """[B, O, N, 3] observed poses -> [B, N, C_out, O] per-joint sequences."""
        x = observed if isinstance(observed, Tensor) else Tensor(observed)
        B, O, N, C = x.shape
        if O != self.O or N != self.skeleton.n_joints:
            raise DimensionError(
                f"encoder built for O={self.O}, N={self.skeleton.n_joints}; got input {x.shape}")
        h = Fn.reshape(x, (B, O * N, C))
        for layer in self.layers:
            h = layer(h)
        h = Fn.reshape(h, (B, O, N, self.out_channels))
        return Fn.transpose(h, (0, 2, 3, 1))
