"""Differentiable operations on Tensors.

Convolutions use the im2col layout so the heavy lifting is a single BLAS
matmul per layer; the transposed convolution is its exact adjoint (built
from the same column scatter), which the inner-product test in the suite
relies on.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, accumulate

__all__ = [
    "conv2d", "deconv2d", "batchnorm", "relu", "sigmoid", "maxpool2d",
    "linear", "reshape", "mse_loss", "l2_penalty", "softmax_cross_entropy",
]


def _im2col(xp: np.ndarray, kernel: int, stride: int):
    """(B, C, Hp, Wp) -> (B*Ho*Wo, C*K*K) patch matrix."""
    win = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo,
                                                   c * kernel * kernel)
    return cols, ho, wo


def _col_scatter(cols6, out, kernel, stride):
    """Add (B, H, W, C, K, K) patch gradients into (B, C, Hp, Wp)."""
    h, w = cols6.shape[1:3]
    for i in range(kernel):
        for j in range(kernel):
            out[:, :, i:i + stride * h:stride, j:j + stride * w:stride] += \
                cols6[:, :, :, :, i, j].transpose(0, 3, 1, 2)


def _col_gather(gp, h, w, kernel, stride):
    """Inverse of _col_scatter: read (B, C, Hp, Wp) into (B, H, W, C, K, K)."""
    b, c = gp.shape[:2]
    cols6 = np.empty((b, h, w, c, kernel, kernel), dtype=gp.dtype)
    for i in range(kernel):
        for j in range(kernel):
            cols6[:, :, :, :, i, j] = \
                gp[:, :, i:i + stride * h:stride,
                   j:j + stride * w:stride].transpose(0, 2, 3, 1)
    return cols6


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0) -> Tensor:
    """Strided cross-correlation; output side (H + 2*pad - K)//stride + 1."""
    b, c, h, w = x.data.shape
    co, ci, k, k2 = weight.data.shape
    if ci != c or k != k2:
        raise ValueError(
            f"weight shape {weight.data.shape} incompatible with input "
            f"channels {c}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding),
                         (padding, padding))) if padding else x.data
    cols, ho, wo = _im2col(xp, k, stride)
    wr = weight.data.reshape(co, -1)
    out = cols @ wr.T
    if bias is not None:
        out += bias.data
    out = np.ascontiguousarray(
        out.reshape(b, ho, wo, co).transpose(0, 3, 1, 2))

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, co)
        accumulate(weight, (g2.T @ cols).reshape(weight.data.shape))
        if bias is not None:
            accumulate(bias, g.sum(axis=(0, 2, 3)))
        dcols = (g2 @ wr).reshape(b, ho, wo, c, k, k)
        dxp = np.zeros_like(xp)
        _col_scatter(dcols, dxp, k, stride)
        if padding:
            dxp = np.ascontiguousarray(
                dxp[:, :, padding:padding + h, padding:padding + w])
        accumulate(x, dxp)

    return Tensor(out, parents, backward)


def deconv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
             stride: int = 1, padding: int = 0) -> Tensor:
    """Transposed convolution; output side (H - 1)*stride - 2*pad + K.

    weight has shape (in_channels, out_channels, K, K); passing a conv2d
    weight of shape (co, ci, K, K) makes this the exact adjoint of that
    convolution.
    """
    b, c, h, w = x.data.shape
    ci, co, k, k2 = weight.data.shape
    if ci != c or k != k2:
        raise ValueError(
            f"weight shape {weight.data.shape} incompatible with input "
            f"channels {c}")
    hp = (h - 1) * stride + k
    wp = (w - 1) * stride + k
    ho = hp - 2 * padding
    wo = wp - 2 * padding
    if ho < 1 or wo < 1:
        raise ValueError(
            f"padding {padding} too large for output size {hp}x{wp}")
    x2 = np.ascontiguousarray(x.data.transpose(0, 2, 3, 1)).reshape(-1, c)
    wr = weight.data.reshape(c, -1)
    cols6 = (x2 @ wr).reshape(b, h, w, co, k, k)
    outp = np.zeros((b, co, hp, wp), dtype=x.data.dtype)
    _col_scatter(cols6, outp, k, stride)
    out = np.ascontiguousarray(
        outp[:, :, padding:padding + ho, padding:padding + wo])
    if bias is not None:
        out += bias.data.reshape(1, -1, 1, 1)

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding),
                        (padding, padding))) if padding else g
        dcols = _col_gather(gp, h, w, k, stride).reshape(b * h * w, -1)
        accumulate(x, np.ascontiguousarray(
            (dcols @ wr.T).reshape(b, h, w, c).transpose(0, 3, 1, 2)))
        accumulate(weight, (x2.T @ dcols).reshape(weight.data.shape))
        if bias is not None:
            accumulate(bias, g.sum(axis=(0, 2, 3)))

    return Tensor(out, parents, backward)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor,
              running_mean: np.ndarray, running_var: np.ndarray,
              train: bool, momentum: float = 0.1,
              eps: float = 1e-5) -> Tensor:
    """Per-channel normalization over (batch, H, W).

    Train mode uses batch statistics and folds them into the running
    averages in place; eval mode reads the running averages.
    """
    if x.data.ndim != 4:
        raise ValueError(f"batchnorm expects 4-D input, got {x.data.shape}")
    if train and x.data.shape[0] < 2:
        raise ValueError("batchnorm in train mode needs batch size >= 2")
    if train:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean.astype(x.data.dtype)
        var = running_var.astype(x.data.dtype)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[None, :, None, None]) * inv[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat \
        + beta.data[None, :, None, None]

    def backward(g):
        accumulate(gamma, (g * xhat).sum(axis=(0, 2, 3)))
        accumulate(beta, g.sum(axis=(0, 2, 3)))
        dxhat = g * gamma.data[None, :, None, None]
        if train:
            m = g.shape[0] * g.shape[2] * g.shape[3]
            s1 = dxhat.sum(axis=(0, 2, 3), keepdims=True)
            s2 = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
            dx = (inv[None, :, None, None] / m) * (m * dxhat - s1
                                                  - xhat * s2)
        else:
            dx = dxhat * inv[None, :, None, None]
        accumulate(x, np.ascontiguousarray(dx))

    return Tensor(out, (x, gamma, beta), backward)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def backward(g):
        accumulate(x, g * (x.data > 0))

    return Tensor(out, (x,), backward)


def sigmoid(x: Tensor) -> Tensor:
    d = x.data
    out = np.empty_like(d)
    pos = d >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-d[pos]))
    ex = np.exp(d[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backward(g):
        accumulate(x, g * out * (1.0 - out))

    return Tensor(out, (x,), backward)


def maxpool2d(x: Tensor, kernel: int = 2) -> Tensor:
    """Non-overlapping max pooling; spatial dims must divide by kernel.

    Ties route the gradient to the first maximal element.
    """
    b, c, h, w = x.data.shape
    if h % kernel or w % kernel:
        raise ValueError(
            f"spatial size {h}x{w} not divisible by pool kernel {kernel}")
    ho, wo = h // kernel, w // kernel
    xr = x.data.reshape(b, c, ho, kernel, wo, kernel)
    xr = np.ascontiguousarray(xr.transpose(0, 1, 2, 4, 3, 5)).reshape(
        b, c, ho, wo, kernel * kernel)
    idx = xr.argmax(axis=-1)
    out = np.take_along_axis(xr, idx[..., None], axis=-1)[..., 0]

    def backward(g):
        dxr = np.zeros((b, c, ho, wo, kernel * kernel), dtype=g.dtype)
        np.put_along_axis(dxr, idx[..., None], g[..., None], axis=-1)
        dx = dxr.reshape(b, c, ho, wo, kernel, kernel).transpose(
            0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
        accumulate(x, np.ascontiguousarray(dx))

    return Tensor(out, (x,), backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x (B, F) times weight (O, F) transposed, plus bias (O,)."""
    if x.data.shape[1] != weight.data.shape[1]:
        raise ValueError(
            f"linear features {x.data.shape[1]} != weight in-features "
            f"{weight.data.shape[1]}")
    out = x.data @ weight.data.T
    if bias is not None:
        out += bias.data

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        accumulate(x, g @ weight.data)
        accumulate(weight, g.T @ x.data)
        if bias is not None:
            accumulate(bias, g.sum(axis=0))

    return Tensor(out, parents, backward)


def reshape(x: Tensor, shape) -> Tensor:
    out = x.data.reshape(shape)

    def backward(g):
        accumulate(x, g.reshape(x.data.shape).copy())

    return Tensor(out, (x,), backward)


def mse_loss(output: Tensor, target) -> Tensor:
    """Mean of squared differences over all elements."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target)
    if output.data.shape != t.shape:
        raise ValueError(
            f"shape mismatch: output {output.data.shape} vs target {t.shape}")
    diff = output.data - t
    out = np.asarray((diff * diff).mean(dtype=np.float64),
                     dtype=output.data.dtype)

    def backward(g):
        accumulate(output, (2.0 / diff.size) * g * diff)

    return Tensor(out, (output,), backward)


def l2_penalty(params, alpha: float = 0.01) -> Tensor:
    """alpha times the summed squared elements of the decay parameters.

    Contributes 2*alpha*w to each participating weight gradient.
    """
    decayed = [p for p in params if getattr(p, "decay", False)]
    total = 0.0
    for p in decayed:
        total += float(np.sum(p.data.astype(np.float64) ** 2))
    dtype = decayed[0].data.dtype if decayed else np.float32
    out = np.asarray(alpha * total, dtype=dtype)

    def backward(g):
        for p in decayed:
            accumulate(p, (2.0 * alpha) * g * p.data)

    return Tensor(out, tuple(decayed), backward)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax."""
    labels = np.asarray(labels)
    b = logits.data.shape[0]
    if labels.shape != (b,):
        raise ValueError(
            f"labels shape {labels.shape} does not match batch {b}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    out = np.asarray(-logp[np.arange(b), labels].mean(dtype=np.float64),
                     dtype=logits.data.dtype)

    def backward(g):
        d = np.exp(logp)
        d[np.arange(b), labels] -= 1.0
        accumulate(logits, (g / b) * d)

    return Tensor(out, (logits,), backward)
