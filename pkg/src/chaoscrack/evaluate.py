"""Decryption-quality scoring with a small convolutional digit classifier.

The classifier is a classic two-conv/two-pool, three-fully-connected
digit network (feature widths 6/16, hidden 120/84, 10-way output, relu
activations, max pooling) trained on plain digit images.  Decryption
quality is then the fraction of decrypted images the classifier still
labels correctly, alongside pixel-level MSE/PSNR against the paired
plain images.  Images at a side other than the classifier's native side
are resized (nearest-neighbor) before classification; pixel metrics are
always computed at the images' own resolution.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .dataset import to_unit
from .errors import DivergenceError
from .nn import (Conv2d, Linear, Tensor, adam_step, clear_grads, no_grad,
                 ops)

CHECKPOINT_KIND = "classifier"

PSNR_SENTINEL = float("inf")  # identical images


@dataclass(frozen=True)
class ClassifierConfig:
    """Architecture and training settings for the digit classifier."""

    side: int = 28
    conv_channels: tuple = (6, 16)
    fc_widths: tuple = (120, 84)
    classes: int = 10
    seed: int = 0
    epochs: int = 3
    batch_size: int = 64
    lr: float = 1e-3

    def __post_init__(self):
        if self.classes != 10:
            raise ValueError("classifier is a 10-way digit model")
        pooled = self.pooled_side
        if pooled < 1:
            raise ValueError(f"side {self.side} is too small for two "
                             f"conv+pool blocks")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")

    @property
    def pooled_side(self):
        # conv 5x5 pad 2 keeps side; pool halves; conv 5x5 valid drops 4;
        # pool halves again
        after_first = self.side // 2
        if self.side % 2 or (after_first - 4) % 2:
            return -1
        return (after_first - 4) // 2

    @property
    def flat_features(self):
        return self.conv_channels[1] * self.pooled_side ** 2

    def to_dict(self):
        return {"side": self.side, "conv_channels": list(self.conv_channels),
                "fc_widths": list(self.fc_widths), "classes": self.classes,
                "seed": self.seed, "epochs": self.epochs,
                "batch_size": self.batch_size, "lr": self.lr}

    @classmethod
    def from_dict(cls, d):
        return cls(side=int(d["side"]),
                   conv_channels=tuple(d["conv_channels"]),
                   fc_widths=tuple(d["fc_widths"]),
                   classes=int(d["classes"]), seed=int(d["seed"]),
                   epochs=int(d["epochs"]), batch_size=int(d["batch_size"]),
                   lr=float(d["lr"]))


class DigitClassifier:
    def __init__(self, config):
        self.config = config
        rng = np.random.default_rng(config.seed)
        c1, c2 = config.conv_channels
        f1, f2 = config.fc_widths
        self.conv1 = Conv2d(1, c1, kernel=5, stride=1, padding=2, rng=rng,
                            name="conv1")
        self.conv2 = Conv2d(c1, c2, kernel=5, stride=1, padding=0, rng=rng,
                            name="conv2")
        self.fc1 = Linear(config.flat_features, f1, rng=rng, name="fc1")
        self.fc2 = Linear(f1, f2, rng=rng, name="fc2")
        self.fc3 = Linear(f2, config.classes, rng=rng, name="fc3",
                          gain=1.0)

    def forward(self, x):
        x = ops.maxpool2d(ops.relu(self.conv1(x)))
        x = ops.maxpool2d(ops.relu(self.conv2(x)))
        x = ops.reshape(x, (x.shape[0], self.config.flat_features))
        x = ops.relu(self.fc1(x))
        x = ops.relu(self.fc2(x))
        return self.fc3(x)

    def parameters(self):
        return (self.conv1.params() + self.conv2.params()
                + self.fc1.params() + self.fc2.params() + self.fc3.params())


def _resize_batch(images, side):
    src = images.shape[1]
    if src == side:
        return images
    idx = (np.arange(side) * src) // side
    return images[:, idx[:, None], idx[None, :]]


def train_classifier(config, images, labels, log=None):
    """Train on uint8 (M, S, S) images + integer labels; returns
    (classifier, per-epoch mean loss history)."""
    if len(images) != len(labels):
        raise ValueError(f"image/label count mismatch: {len(images)} vs "
                         f"{len(labels)}")
    clf = DigitClassifier(config)
    x_all = to_unit(_resize_batch(images, config.side))[:, None]
    y_all = np.asarray(labels, dtype=np.int64)
    params = clf.parameters()
    rng = np.random.default_rng((config.seed, 2))

    history = []
    for epoch in range(config.epochs):
        perm = rng.permutation(len(x_all))
        batch_vals = []
        for start in range(0, len(perm), config.batch_size):
            batch = perm[start:start + config.batch_size]
            logits = clf.forward(Tensor(x_all[batch]))
            loss = ops.softmax_cross_entropy(logits, y_all[batch])
            value = float(loss.data)
            if not np.isfinite(value):
                clear_grads(params)
                raise DivergenceError(
                    f"non-finite classifier loss {value} at epoch {epoch} "
                    f"batch {start // config.batch_size}")
            loss.backward()
            adam_step(params, lr=config.lr)
            batch_vals.append(value)
        history.append(float(np.mean(batch_vals)))
        if log is not None:
            log(epoch, history[-1])
    return clf, history


def predict(clf, images, chunk=256):
    """Argmax class labels for a uint8 (M, S, S) stack."""
    x_all = to_unit(_resize_batch(images, clf.config.side))[:, None]
    out = np.empty(len(x_all), dtype=np.int64)
    with no_grad():
        for start in range(0, len(x_all), chunk):
            logits = clf.forward(Tensor(x_all[start:start + chunk]))
            out[start:start + chunk] = np.argmax(logits.data, axis=1)
    return out


def accuracy(clf, images, labels):
    return float(np.mean(predict(clf, images) == np.asarray(labels)))


@dataclass
class EvalReport:
    """Quality summary for one scored corpus."""

    corpus: str
    samples: int
    accuracy: float
    mse: float
    psnr: float
    corpus_digest: str = ""
    checkpoint_digest: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples <= 0:
            raise ValueError("samples must be > 0")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError("accuracy must be in [0, 1]")

    def to_text(self):
        psnr = "inf (identical)" if np.isinf(self.psnr) else \
            f"{self.psnr:.2f} dB"
        lines = [
            f"corpus:            {self.corpus}",
            f"samples:           {self.samples}",
            f"accuracy:          {self.accuracy:.4f}",
            f"pixel MSE [0,1]:   {self.mse:.6f}",
            f"PSNR (MAX=1):      {psnr}",
        ]
        if self.corpus_digest:
            lines.append(f"corpus digest:     {self.corpus_digest}")
        if self.checkpoint_digest:
            lines.append(f"checkpoint digest: {self.checkpoint_digest}")
        for key, value in self.extra.items():
            lines.append(f"{key + ':':<19}{value}")
        return "\n".join(lines)

    def to_json_line(self):
        record = {
            "corpus": self.corpus, "samples": self.samples,
            "accuracy": self.accuracy, "mse": self.mse,
            "psnr": None if np.isinf(self.psnr) else self.psnr,
            "corpus_digest": self.corpus_digest,
            "checkpoint_digest": self.checkpoint_digest,
        }
        record.update(self.extra)
        return json.dumps(record, sort_keys=True)


def pixel_metrics(images, reference):
    """Mean squared error on [0,1] plus PSNR (MAX=1) for uint8 stacks."""
    if images.shape != reference.shape:
        raise ValueError(f"shape mismatch: {images.shape} vs "
                         f"{reference.shape}")
    mse = float(np.mean((to_unit(images) - to_unit(reference)) ** 2))
    psnr = PSNR_SENTINEL if mse == 0.0 else float(-10.0 * np.log10(mse))
    return mse, psnr


def score(clf, images, labels, reference, corpus="plain", corpus_digest="",
          checkpoint_digest=""):
    """Score a corpus of images against labels and reference plains.

    ``images`` are classified (after resizing to the classifier's side);
    pixel metrics compare ``images`` with ``reference`` at native size.
    Pure function of its inputs — repeated calls give identical reports.
    """
    labels = np.asarray(labels)
    if len(images) != len(labels):
        raise ValueError(f"image/label count mismatch: {len(images)} vs "
                         f"{len(labels)}")
    acc = float(np.mean(predict(clf, images) == labels))
    mse, psnr = pixel_metrics(images, reference)
    return EvalReport(corpus=corpus, samples=len(images), accuracy=acc,
                      mse=mse, psnr=psnr, corpus_digest=corpus_digest,
                      checkpoint_digest=checkpoint_digest)


def save_classifier(clf, path, meta=None):
    checkpoint.save_state(
        path, CHECKPOINT_KIND, clf.config.to_dict(),
        [(p.name, p.data) for p in clf.parameters()], [], meta)


def load_classifier(path):
    state = checkpoint.load_state(path, expect_kind=CHECKPOINT_KIND)
    clf = DigitClassifier(ClassifierConfig.from_dict(state.config))
    checkpoint.restore_arrays(
        state, [(p.name, p.data) for p in clf.parameters()],
        path_label=str(path))
    return clf, state.meta
