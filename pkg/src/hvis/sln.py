"""Spontaneous learning network: per-joint generator, critic and adversarial training."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import Adam, Module, Tensor, clip_weights_, functional as Fn, no_grad, xavier_uniform, zeros
from .data.metrics import mpjpe
from .data.motion import WindowPair, stack_windows
from .encoder import Encoder
from .errors import ContractError, DimensionError, DivergenceError, TrainingError

log = logging.getLogger(__name__)

DIVERGENCE_LIMIT = 1e8
MM_PER_M = 1000.0


class CausalConv(Module):
    def __init__(self, c_in: int, c_out: int, kernel: int, dilation: int, rng: np.random.Generator,
                 bias: bool = True):
        self.weight = xavier_uniform(rng, (c_out, c_in, kernel))
        self.bias = zeros(c_out) if bias else None
        self.dilation = dilation

    def forward(self, x: Tensor) -> Tensor:
        # [..., time, channels] throughout the TCN stack
        return Fn.conv1d_causal(x, self.weight, self.dilation, self.bias, channels_last=True)


class TemporalBlock(Module):
    """Causal dilated conv stack with ReLU, dropout and a residual connection.

    The skip path is a 1x1 projection when the channel count changes and the
    identity otherwise. No activation follows the residual sum.
    """

    def __init__(self, c_in: int, channels: int, kernel: int, dilations: Sequence[int],
                 dropout: float, rng: np.random.Generator):
        self.convs = []
        c = c_in
        for d in dilations:
            self.convs.append(CausalConv(c, channels, kernel, d, rng))
            c = channels
        self.skip = CausalConv(c_in, channels, 1, 1, rng, bias=False) if c_in != channels else None
        self.dropout = dropout
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        h = x
        for conv in self.convs:
            h = Fn.relu(conv(h))
        h = Fn.dropout(h, self.dropout, self.training, self.rng)
        res = x if self.skip is None else self.skip(x)
        return Fn.add(h, res)


class TCN(Module):
    def __init__(self, c_in: int, channels: int = 64, n_blocks: int = 3, kernel: int = 3,
                 dilations: Sequence[int] = (1, 2, 4), dropout: float = 0.1,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.blocks = []
        c = c_in
        for _ in range(n_blocks):
            self.blocks.append(TemporalBlock(c, channels, kernel, dilations, dropout, rng))
            c = channels
        self.kernel = kernel
        self.dilations = tuple(dilations)
        self.out_channels = channels

    @property
    def receptive_field(self) -> int:
        return 1 + len(self.blocks) * sum((self.kernel - 1) * d for d in self.dilations)

    def forward(self, x: Tensor) -> Tensor:
        """Time-major [B, T, C_in] -> [B, T, channels]."""
        for block in self.blocks:
            x = block(x)
        return x


class TIU(Module):
    """Temporal information unit: TCN over a joint sequence, last step -> latent."""

    def __init__(self, c_in: int, rng: np.random.Generator, channels: int = 64, n_blocks: int = 3,
                 kernel: int = 3, dilations: Sequence[int] = (1, 2, 4), dropout: float = 0.1,
                 latent: int = 256):
        self.tcn = TCN(c_in, channels, n_blocks, kernel, dilations, dropout, rng)
        self.proj_w = xavier_uniform(rng, (channels, latent))
        self.proj_b = zeros(latent)
        self.c_in = c_in

    def forward(self, s: Tensor) -> Tensor:
        """[B, C_in, O] (or [C_in, O]) -> [B, latent]."""
        if s.shape[-2] != self.c_in:
            raise DimensionError(f"TIU expects {self.c_in} input channels, got shape {s.shape}")
        h = self.tcn(Fn.transpose(s, (0, 2, 1)) if s.ndim == 3 else Fn.transpose(s))
        return Fn.linear(h[..., -1, :], self.proj_w, self.proj_b)


class RecurrentTIU(Module):
    """GRU over the input sequence in place of the TCN (no-TRN ablation)."""

    def __init__(self, c_in: int, rng: np.random.Generator, hidden: int = 256, latent: int = 256):
        self.gru = gru_params(c_in, hidden, rng)
        self.proj_w = xavier_uniform(rng, (hidden, latent))
        self.proj_b = zeros(latent)
        self.hidden = hidden
        self.c_in = c_in

    def forward(self, s: Tensor) -> Tensor:
        if s.shape[-2] != self.c_in:
            raise DimensionError(f"RecurrentTIU expects {self.c_in} input channels, got shape {s.shape}")
        h = Tensor(np.zeros(s.shape[:-2] + (self.hidden,)))
        for t in range(s.shape[-1]):
            h = Fn.gru_cell(s[..., t], h, self.gru)
        return Fn.linear(h, self.proj_w, self.proj_b)


def gru_params(n_in: int, hidden: int, rng: np.random.Generator) -> dict[str, Tensor]:
    return {
        "w_x": xavier_uniform(rng, (n_in, 3 * hidden), n_in, hidden),
        "w_h": xavier_uniform(rng, (hidden, 3 * hidden), hidden, hidden),
        "b_x": zeros(3 * hidden),
        "b_h": zeros(3 * hidden),
    }


class LTF(Module):
    """Autoregressive GRU decoder emitting per-step velocities.

    The hidden state starts at tanh(latent); each step consumes the previous
    position and adds the projected velocity to it. The velocity head starts
    at zero.
    """

    def __init__(self, rng: np.random.Generator, hidden: int = 256, dim: int = 3):
        self.gru = gru_params(dim, hidden, rng)
        # zero velocity head: an untrained decoder reproduces the zero-velocity baseline
        self.out_w = zeros((hidden, dim))
        self.out_b = zeros(dim)
        self.hidden = hidden

    def forward(self, latent: Tensor, last_obs, F: int) -> Tensor:
        """latent [B, H], last_obs [B, 3] -> positions [B, F, 3]."""
        if F < 1:
            raise ContractError(f"prediction length must be >= 1, got {F}")
        if latent.shape[-1] != self.hidden:
            raise DimensionError(f"LTF latent size {latent.shape[-1]} != hidden {self.hidden}")
        h = Fn.tanh(latent)
        pos = last_obs if isinstance(last_obs, Tensor) else Tensor(last_obs)
        outputs = []
        for _ in range(F):
            h = Fn.gru_cell(pos, h, self.gru)
            pos = Fn.add(pos, Fn.linear(h, self.out_w, self.out_b))
            outputs.append(pos)
        return Fn.stack(outputs, axis=-2)


class Generator(Module):
    """Encoder plus a single TRN shared across joints.

    Each joint's feature sequence is tagged with a one-hot joint id along the
    channel axis before entering the TRN.
    """

    def __init__(self, encoder: Encoder, F: int, rng: np.random.Generator, recurrent: bool = False,
                 tiu_channels: int = 64, tiu_blocks: int = 3, tiu_kernel: int = 3,
                 tiu_dilations: Sequence[int] = (1, 2, 4), tiu_dropout: float = 0.1,
                 hidden: int = 256):
        self.encoder = encoder
        self.n_joints = encoder.skeleton.n_joints
        self.F = F
        c_in = encoder.out_channels + self.n_joints
        if recurrent:
            self.tiu = RecurrentTIU(c_in, rng, hidden=hidden, latent=hidden)
        else:
            self.tiu = TIU(c_in, rng, tiu_channels, tiu_blocks, tiu_kernel, tiu_dilations,
                           tiu_dropout, latent=hidden)
        self.ltf = LTF(rng, hidden=hidden)

    def forward(self, observed, F: int | None = None) -> Tensor:
        """[B, O, N, 3] -> [B, F, N, 3]."""
        F = self.F if F is None else F
        obs = observed if isinstance(observed, Tensor) else Tensor(observed)
        B, O, N, _ = obs.shape
        feats = self.encoder(obs)  # [B, N, C, O]
        onehot = np.broadcast_to(np.eye(N)[None, :, :, None], (B, N, N, O))
        s = Fn.concat([feats, Tensor(onehot)], axis=2)
        s = Fn.reshape(s, (B * N, s.shape[2], O))
        last = Fn.reshape(obs[:, -1], (B * N, 3))
        latent = self.tiu(s)
        pred = self.ltf(latent, last, F)  # [B*N, F, 3]
        return Fn.transpose(Fn.reshape(pred, (B, N, F, 3)), (0, 2, 1, 3))

    def predict(self, observed: np.ndarray, F: int | None = None) -> np.ndarray:
        was = self.training
        self.eval()
        with no_grad():
            out = self.forward(np.asarray(observed), F).data
        self.train(was)
        return out


class Critic(Module):
    """Fully connected scorer on the flattened (observed, future) pose pair."""

    def __init__(self, in_dim: int, rng: np.random.Generator, hidden: int = 256, n_layers: int = 3,
                 slope: float = 0.2):
        self.layers = []
        d = in_dim
        for _ in range(n_layers):
            self.layers.append([xavier_uniform(rng, (d, hidden)), zeros(hidden)])
            d = hidden
        self.head_w = xavier_uniform(rng, (hidden, 1))
        self.head_b = zeros(1)
        self.in_dim = in_dim
        self.slope = slope

    def named_parameters(self, prefix: str = ""):
        for i, (w, b) in enumerate(self.layers):
            yield f"{prefix}layers.{i}.weight", w
            yield f"{prefix}layers.{i}.bias", b
        yield f"{prefix}head_w", self.head_w
        yield f"{prefix}head_b", self.head_b

    def forward(self, observed, future) -> Tensor:
        """Scores [B] for observed [B, O, N, 3] and future [B, F, N, 3]."""
        obs = observed if isinstance(observed, Tensor) else Tensor(observed)
        fut = future if isinstance(future, Tensor) else Tensor(future)
        if obs.ndim != fut.ndim or (obs.ndim == 4 and obs.shape[0] != fut.shape[0]):
            raise DimensionError(f"critic: observed {obs.shape} and future {fut.shape} disagree")
        B = obs.shape[0] if obs.ndim == 4 else 1
        x = Fn.concat([Fn.reshape(obs, (B, -1)), Fn.reshape(fut, (B, -1))], axis=1)
        if x.shape[1] != self.in_dim:
            raise DimensionError(f"critic expects {self.in_dim} input values, got {x.shape[1]}")
        for w, b in self.layers:
            x = Fn.leaky_relu(Fn.linear(x, w, b), self.slope)
        return Fn.reshape(Fn.linear(x, self.head_w, self.head_b), (B,))

    def clip(self, c: float) -> None:
        clip_weights_(self.parameters(), c)


def critic_score(critic: Critic, observed, future) -> Tensor:
    return critic(observed, future)


def joint_loss(generated: Tensor, truth) -> Tensor:
    """Squared Euclidean joint error in mm^2, averaged over windows, frames and joints.

    Positions are stored in metres; measuring the error in millimetres keeps
    it on the scale of the reported MPJPE so that ``lambda_j = 1`` is not
    swamped by the critic term.
    """
    scale = MM_PER_M * MM_PER_M
    return Fn.mul(Fn.mse_per_point(generated, truth, axis=-1), scale)


def generator_loss(critic: Critic, observed, generated: Tensor, truth, lambda_j: float = 1.0) -> Tensor:
    adv = Fn.neg(Fn.mean(critic(observed, generated)))
    return Fn.add(adv, Fn.mul(joint_loss(generated, truth), lambda_j))


def critic_objective(critic: Critic, observed, real, fake) -> Tensor:
    """E D(real) - E D(fake); the critic ascends this."""
    return Fn.sub(Fn.mean(critic(observed, real)), Fn.mean(critic(observed, fake)))


def critic_train_step(critic: Critic, optimizer: Adam, observed, real, fake, clip_c: float = 0.01) -> float:
    """One descent step on the negated objective followed by weight clipping."""
    fake = fake.detach() if isinstance(fake, Tensor) else Tensor(fake)
    critic.zero_grad()
    objective = critic_objective(critic, observed, real, fake)
    if not np.isfinite(objective.item()):
        raise TrainingError("critic objective is not finite")
    Fn.neg(objective).backward()
    optimizer.step()
    critic.clip(clip_c)
    return objective.item()


@dataclass
class SLNHistory:
    epochs: list = field(default_factory=list)
    generator_loss: list = field(default_factory=list)
    critic_objective: list = field(default_factory=list)
    val_mpjpe: list = field(default_factory=list)

    def rows(self):
        return list(zip(self.epochs, self.generator_loss, self.critic_objective, self.val_mpjpe))


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i:i + batch_size]


def evaluate_predictor(predict, windows: Sequence[WindowPair], batch_size: int = 64) -> np.ndarray:
    """Stack predictions [W, F, N, 3] of ``predict(obs_batch)`` over ``windows``."""
    obs, _ = stack_windows(windows)
    return np.concatenate([predict(obs[i:i + batch_size]) for i in range(0, len(obs), batch_size)])


def sln_train(generator: Generator, critic: Critic, train: Sequence[WindowPair],
              val: Sequence[WindowPair] | None, epochs: int, rng: np.random.Generator,
              batch_size: int = 32, n_critic: int = 5, lr: float = 0.001, clip_c: float = 0.01,
              lambda_j: float = 1.0, adversarial: bool = True,
              on_epoch: Callable[[int, SLNHistory], None] | None = None) -> SLNHistory:
    """Alternate ``n_critic`` critic steps with one generator step per batch.

    The critic steps reuse the batch's detached generations, then the
    generator is updated against the freshly stepped critic. ``on_epoch`` is
    called after each epoch's bookkeeping.
    """
    if not train:
        raise ContractError("SLN training needs a non-empty training set")
    obs_all, fut_all = stack_windows(train)
    g_opt = Adam(generator.named_parameters(), lr=lr)
    c_opt = Adam(critic.named_parameters(), lr=lr)
    hist = SLNHistory()
    for epoch in range(1, epochs + 1):
        generator.train()
        g_losses, c_objs = [], []
        for idx in _batches(len(obs_all), batch_size, rng):
            obs, fut = obs_all[idx], fut_all[idx]
            gen = generator(obs)
            if adversarial:
                for _ in range(n_critic):
                    c_objs.append(critic_train_step(critic, c_opt, obs, fut, gen.data, clip_c))
                loss = generator_loss(critic, obs, gen, fut, lambda_j)
            else:
                loss = Fn.mul(joint_loss(gen, fut), lambda_j)
            value = loss.item()
            if not np.isfinite(value) or value > DIVERGENCE_LIMIT:
                raise DivergenceError(
                    f"generator loss {value:.4g} exceeded {DIVERGENCE_LIMIT:g} at epoch {epoch}",
                    history=hist.rows())
            g_opt.zero_grad()
            loss.backward()
            g_opt.step()
            critic.zero_grad()
            g_losses.append(value)
        val_err = float("nan")
        if val:
            _, vfut = stack_windows(val)
            val_err = mpjpe(evaluate_predictor(generator.predict, val), vfut)
        hist.epochs.append(epoch)
        hist.generator_loss.append(float(np.mean(g_losses)))
        hist.critic_objective.append(float(np.mean(c_objs)) if c_objs else 0.0)
        hist.val_mpjpe.append(val_err)
        log.info("sln epoch %d: generator %.5f critic %.5f val %.2f mm", epoch,
                 hist.generator_loss[-1], hist.critic_objective[-1], val_err)
        if on_epoch is not None:
            on_epoch(epoch, hist)
    return hist
