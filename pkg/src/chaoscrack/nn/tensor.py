"""Dense-tensor autodiff core.

A Tensor wraps one numpy array plus the bookkeeping reverse-mode
differentiation needs: the nodes it was computed from and a closure that
routes an upstream gradient to them.  Ops live in ops.py and build these
nodes; calling backward() on a scalar result walks the graph once in
reverse topological order.

The numeric width is whatever dtype the caller puts in: float32 for
training, float64 for gradient-check suites.  Backward closures must hand
accumulate() freshly-allocated arrays so that gradients can be summed
without aliasing.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

_grad_enabled = True


def grad_enabled() -> bool:
    return _grad_enabled


@contextmanager
def no_grad():
    """Disable graph construction; forward passes run inference-only."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data)
        self.grad = None
        if _grad_enabled:
            self._parents = tuple(parents)
            self._backward = backward
        else:
            self._parents = ()
            self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def backward(self, seed=None):
        """Populate .grad on every reachable node.

        The root must be scalar unless an explicit seed array is given.
        """
        if seed is None:
            if self.data.size != 1:
                raise ValueError(
                    f"backward from non-scalar of shape {self.data.shape} "
                    "needs an explicit seed")
            seed = np.ones_like(self.data)
        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = seed
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __add__(self, other):
        if not isinstance(other, Tensor):
            other = Tensor(np.asarray(other, dtype=self.data.dtype))
        if self.data.shape != other.data.shape:
            raise ValueError(
                f"shape mismatch in add: {self.data.shape} vs "
                f"{other.data.shape}")
        out_data = self.data + other.data

        def backward(g):
            accumulate(self, g.copy())
            accumulate(other, g.copy())

        return Tensor(out_data, (self, other), backward)

    __radd__ = __add__

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


class Parameter(Tensor):
    """Trainable tensor carrying optimizer state.

    decay marks participation in the L2 weight penalty (convolution and
    deconvolution weights only; biases and batchnorm affine terms stay
    out).
    """

    __slots__ = ("name", "decay", "adam_m", "adam_v", "steps")

    def __init__(self, data, name: str = "", decay: bool = False):
        super().__init__(np.ascontiguousarray(data))
        self.name = name
        self.decay = decay
        self.adam_m = np.zeros_like(self.data)
        self.adam_v = np.zeros_like(self.data)
        self.steps = 0

    def __repr__(self):
        return (f"Parameter({self.name!r}, shape={self.data.shape}, "
                f"decay={self.decay})")


def accumulate(t: Tensor, g: np.ndarray):
    """Add an upstream gradient contribution to a node.

    g must be freshly allocated by the caller; it is adopted on first use.
    """
    if t.grad is None:
        t.grad = g
    else:
        t.grad += g
