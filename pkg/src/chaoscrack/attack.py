"""Learned decryption: convolutional encoder + deconvolutional generator.

The encoder squeezes an N x N cipher image down to a 1x1 latent column
through stride-2 4x4 convolutions (batchnorm + relu) and a final valid
4x4 convolution with a sigmoid; the generator mirrors it with
deconvolutions, ending in a linear layer that emits the reconstructed
image.  Channel counts double per encoder group from ``base_channels``
and halve back down to one output map.  Two scales are supported: the
full configuration (side 128, base 32, 6+6 groups) and a desk-scale
configuration (side 32, base 8, 4+4 groups) that trains in minutes on a
CPU while keeping the same reduce-to-1x1 structure.
"""

from dataclasses import dataclass

import numpy as np

from . import checkpoint
from .cipher import GrayImage
from .dataset import from_unit, to_unit
from .errors import CheckpointError, DivergenceError
from .nn import (BatchNorm2d, Conv2d, Deconv2d, Tensor, adam_step,
                 clear_grads, no_grad, ops)

CHECKPOINT_KIND = "decryption"

FULL_SIDE = 128
FULL_BASE_CHANNELS = 32
DESK_SIDE = 32
DESK_BASE_CHANNELS = 8


@dataclass(frozen=True)
class ModelConfig:
    """Shape/seed/precision settings for one encoder+generator pair."""

    side: int
    base_channels: int
    seed: int = 0
    dtype: str = "float32"

    def __post_init__(self):
        side, halvings = self.side, 0
        while side > 4 and side % 2 == 0:
            side //= 2
            halvings += 1
        if side != 4 or halvings < 1:
            raise ValueError(
                f"side must be 4 * 2^k for k >= 1 (e.g. 32 or 128), "
                f"got {self.side}")
        if self.base_channels < 1:
            raise ValueError("base_channels must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, "
                             f"got {self.dtype!r}")

    @property
    def groups(self):
        # stride-2 groups halve side down to 4, plus one valid 4x4 group:
        # side = 4 * 2^k  ->  k + 1 groups
        return self.side.bit_length() - 2

    @property
    def latent_channels(self):
        return self.base_channels * 2 ** (self.groups - 1)

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def to_dict(self):
        return {"side": self.side, "base_channels": self.base_channels,
                "seed": self.seed, "dtype": self.dtype}

    @classmethod
    def from_dict(cls, d):
        return cls(side=int(d["side"]), base_channels=int(d["base_channels"]),
                   seed=int(d["seed"]), dtype=str(d["dtype"]))


def full_config(seed=0):
    return ModelConfig(side=FULL_SIDE, base_channels=FULL_BASE_CHANNELS,
                       seed=seed)


def desk_config(seed=0, dtype="float32"):
    return ModelConfig(side=DESK_SIDE, base_channels=DESK_BASE_CHANNELS,
                       seed=seed, dtype=dtype)


class DecryptionModel:
    """Encoder + generator with explicit train/eval batchnorm switching."""

    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(config.seed)
        dtype = config.np_dtype
        G = config.groups

        # Encoder: groups 1..G-1 stride-2 conv + bn + relu; group G is a
        # valid 4x4 conv + sigmoid with no batchnorm.
        self.enc_convs, self.enc_bns = [], []
        in_ch = 1
        for g in range(1, G + 1):
            out_ch = config.base_channels * 2 ** (g - 1)
            last = g == G
            conv = Conv2d(in_ch, out_ch, kernel=4,
                          stride=1 if last else 2,
                          padding=0 if last else 1,
                          rng=rng, dtype=dtype, name=f"enc{g}.conv",
                          gain=1.0 if last else 2.0)
            self.enc_convs.append(conv)
            self.enc_bns.append(None if last else BatchNorm2d(
                out_ch, dtype=dtype, name=f"enc{g}.bn"))
            in_ch = out_ch

        # Generator: group 1 is a valid 4x4 deconv + bn + relu; groups
        # 2..G are stride-2 deconvs + bn + relu, except group G which is
        # linear (no batchnorm, no relu).
        self.gen_deconvs, self.gen_bns = [], []
        in_ch = config.latent_channels
        for g in range(1, G + 1):
            last = g == G
            out_ch = 1 if last else config.latent_channels // 2 ** g
            deconv = Deconv2d(in_ch, out_ch, kernel=4,
                              stride=1 if g == 1 else 2,
                              padding=0 if g == 1 else 1,
                              rng=rng, dtype=dtype, name=f"gen{g}.deconv",
                              gain=1.0 if last else 2.0)
            self.gen_deconvs.append(deconv)
            self.gen_bns.append(None if last else BatchNorm2d(
                out_ch, dtype=dtype, name=f"gen{g}.bn"))
            in_ch = out_ch

    def encode(self, x, train):
        for conv, bn in zip(self.enc_convs, self.enc_bns):
            x = conv(x)
            if bn is None:
                x = ops.sigmoid(x)
            else:
                x = ops.relu(bn(x, train))
        return x

    def generate(self, y, train):
        for deconv, bn in zip(self.gen_deconvs, self.gen_bns):
            y = deconv(y)
            if bn is not None:
                y = ops.relu(bn(y, train))
        return y

    def forward(self, x, train):
        return self.generate(self.encode(x, train), train)

    def parameters(self):
        out = []
        for conv, bn in zip(self.enc_convs, self.enc_bns):
            out.extend(conv.params())
            if bn is not None:
                out.extend(bn.params())
        for deconv, bn in zip(self.gen_deconvs, self.gen_bns):
            out.extend(deconv.params())
            if bn is not None:
                out.extend(bn.params())
        return out

    def buffers(self):
        out = []
        for bn in self.enc_bns + self.gen_bns:
            if bn is not None:
                out.extend(bn.buffers())
        return out


@dataclass
class TrainReport:
    """Loss bookkeeping from one training run.

    ``*_losses`` track the optimized objective (MSE + L2 penalty);
    ``*_mse`` track the reconstruction term alone, which is the number
    bounded by the [0,1] pixel range.
    """

    epoch_losses: list
    step_losses: list
    epoch_mse: list
    step_mse: list
    epochs: int
    batch_size: int
    lr: float


def iter_batches(count, batch_size, rng):
    """Yield shuffled index batches, dropping any remainder of size 1."""
    perm = rng.permutation(count)
    for start in range(0, count, batch_size):
        batch = perm[start:start + batch_size]
        if len(batch) >= 2:  # train-mode batchnorm needs a real batch
            yield batch


def train_model(model, cipher, plain, epochs, batch_size=64, lr=1e-3,
                l2_alpha=0.01, shuffle_seed=None, log=None):
    """Fit the model on paired uint8 (M, N, N) cipher/plain stacks.

    Loss per batch is mean-squared reconstruction error plus an L2 weight
    penalty; optimization is Adam.  Deterministic given the model seed and
    ``shuffle_seed``.  Raises DivergenceError with a loss trace if the
    loss leaves the finite range.
    """
    side = model.config.side
    if cipher.shape != plain.shape or cipher.shape[1:] != (side, side):
        raise ValueError(
            f"expected matching (M, {side}, {side}) stacks, got cipher "
            f"{cipher.shape} and plain {plain.shape}")
    if shuffle_seed is None:
        shuffle_seed = model.config.seed
    rng = np.random.default_rng((shuffle_seed, 1))

    dtype = model.config.np_dtype
    x_all = to_unit(cipher)[:, None].astype(dtype)
    t_all = to_unit(plain)[:, None].astype(dtype)
    params = model.parameters()

    epoch_losses, step_losses = [], []
    epoch_mse, step_mse = [], []
    for epoch in range(epochs):
        batch_vals, batch_mse = [], []
        for batch_idx, batch in enumerate(
                iter_batches(len(x_all), batch_size, rng)):
            out = model.forward(Tensor(x_all[batch]), train=True)
            mse = ops.mse_loss(out, t_all[batch])
            loss = mse + ops.l2_penalty(params, l2_alpha)
            value = float(loss.data)
            if not np.isfinite(value):
                clear_grads(params)
                raise DivergenceError(
                    f"non-finite loss {value} at epoch {epoch} batch "
                    f"{batch_idx}; recent losses: "
                    f"{[round(v, 6) for v in step_losses[-10:]]}")
            loss.backward()
            adam_step(params, lr=lr)
            step_losses.append(value)
            batch_vals.append(value)
            step_mse.append(float(mse.data))
            batch_mse.append(step_mse[-1])
        epoch_losses.append(float(np.mean(batch_vals)))
        epoch_mse.append(float(np.mean(batch_mse)))
        if log is not None:
            log(epoch, epoch_losses[-1])
    return TrainReport(epoch_losses, step_losses, epoch_mse, step_mse,
                       epochs, batch_size, lr)


def decrypt_batch(model, ciphers):
    """Eval-mode inference on a uint8 (M, N, N) stack -> uint8 stack."""
    side = model.config.side
    if ciphers.ndim != 3 or ciphers.shape[1:] != (side, side):
        raise ValueError(
            f"expected (M, {side}, {side}) cipher stack, got "
            f"{ciphers.shape}")
    x = to_unit(ciphers)[:, None].astype(model.config.np_dtype)
    with no_grad():
        out = model.forward(Tensor(x), train=False)
    return from_unit(out.data[:, 0])


def decrypt_learned(model, cipher):
    """Run one cipher GrayImage through the trained model."""
    if cipher.side != model.config.side:
        raise ValueError(
            f"cipher side {cipher.side} does not match model side "
            f"{model.config.side}")
    return GrayImage(decrypt_batch(model, cipher.pixels[None])[0])


def reconstruction_mse(model, ciphers, plains):
    """Mean per-pixel squared error on [0,1] across a uint8 pair stack."""
    recovered = to_unit(decrypt_batch(model, ciphers))
    return float(np.mean((recovered - to_unit(plains)) ** 2))


def save_checkpoint(model, path, meta=None):
    checkpoint.save_state(
        path, CHECKPOINT_KIND, model.config.to_dict(),
        [(p.name, p.data) for p in model.parameters()],
        model.buffers(), meta)


def load_checkpoint(path, config=None):
    """Rebuild a model from a checkpoint; returns (model, metadata).

    Passing ``config`` asserts the checkpoint was written for that exact
    configuration.
    """
    state = checkpoint.load_state(path, expect_kind=CHECKPOINT_KIND)
    stored = ModelConfig.from_dict(state.config)
    if config is not None and stored != config:
        raise CheckpointError(
            f"{path}: checkpoint config {stored} does not match requested "
            f"{config}")
    model = DecryptionModel(stored)
    checkpoint.restore_arrays(
        state,
        [(p.name, p.data) for p in model.parameters()] + model.buffers(),
        path_label=str(path))
    return model, state.meta
