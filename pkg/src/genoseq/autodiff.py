"""Minimal reverse-mode gradient engine over numpy arrays.

Only the operations the encoder classifier needs are implemented. Every op
preserves the dtype of its inputs, so a model built in float64 is
differentiated in float64 (the precision the gradient checks run at) while
training can run in float32 for speed.

Graphs are built eagerly: each op returns a ``Tensor`` holding the result,
its parents, and a closure that routes the output gradient to the parents.
When no input requires a gradient the op returns a detached constant, so
evaluation-mode forwards never retain a graph.
"""

from __future__ import annotations

import numpy as np

_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_A = 0.044715


class Tensor:
    """An array plus the bookkeeping needed for reverse-mode differentiation."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data: np.ndarray, requires_grad: bool = False):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor; ``grad`` defaults to 1 for scalars.

        Gradients accumulate on every reachable tensor with
        ``requires_grad=True``; interior gradients are released as soon as
        they have been consumed to bound peak memory.
        """
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = grad if self.grad is None else self.grad + grad
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents:
                # interior node: grad fully propagated, free it
                node.grad = None
                node._backward = None
                node._parents = ()


def _as_tensor(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype))


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    # Accumulation is never in-place, so aliasing an upstream buffer is safe.
    if not t.requires_grad:
        return
    t.grad = grad if t.grad is None else t.grad + grad


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    if not any(p.requires_grad for p in parents):
        return Tensor(data)
    out = Tensor(data, requires_grad=True)
    out._parents = parents
    out._backward = backward
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to ``shape`` to undo numpy broadcasting."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a: Tensor, b) -> Tensor:
    a_t = a if isinstance(a, Tensor) else _as_tensor(a, b)
    b_t = _as_tensor(b, a_t)
    data = a_t.data + b_t.data

    def backward(g):
        _accumulate(a_t, _unbroadcast(g, a_t.data.shape))
        _accumulate(b_t, _unbroadcast(g, b_t.data.shape))

    return _result(data, (a_t, b_t), backward)


def mul(a: Tensor, b) -> Tensor:
    a_t = a if isinstance(a, Tensor) else _as_tensor(a, b)
    b_t = _as_tensor(b, a_t)
    data = a_t.data * b_t.data

    def backward(g):
        if a_t.requires_grad:
            _accumulate(a_t, _unbroadcast(g * b_t.data, a_t.data.shape))
        if b_t.requires_grad:
            _accumulate(b_t, _unbroadcast(g * a_t.data, b_t.data.shape))

    return _result(data, (a_t, b_t), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product with broadcasting over leading dimensions."""
    data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ b.data.swapaxes(-1, -2)
            _accumulate(a, _unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = a.data.swapaxes(-1, -2) @ g
            _accumulate(b, _unbroadcast(gb, b.data.shape))

    return _result(data, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map ``x @ w + b`` over the last axis of ``x``."""
    data = x.data @ w.data
    if b is not None:
        data = data + b.data

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g @ w.data.T)
        if w.requires_grad:
            x2 = x.data.reshape(-1, x.data.shape[-1])
            g2 = g.reshape(-1, g.shape[-1])
            _accumulate(w, x2.T @ g2)
        if b is not None and b.requires_grad:
            _accumulate(b, g.reshape(-1, g.shape[-1]).sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _result(data, parents, backward)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]``; the backward pass scatter-adds."""
    ids = np.asarray(ids)
    data = table.data[ids]

    def backward(g):
        if table.requires_grad:
            gt = np.zeros_like(table.data)
            np.add.at(gt, ids.reshape(-1), g.reshape(-1, g.shape[-1]))
            _accumulate(table, gt)

    return _result(data, (table,), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    mean = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=x.dtype))
    x_hat = centered * inv_std
    data = x_hat * gain.data + bias.data

    def backward(g):
        if gain.requires_grad:
            _accumulate(gain, (g * x_hat).reshape(-1, g.shape[-1]).sum(axis=0))
        if bias.requires_grad:
            _accumulate(bias, g.reshape(-1, g.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gy = g * gain.data
            m1 = gy.mean(axis=-1, keepdims=True)
            m2 = (gy * x_hat).mean(axis=-1, keepdims=True)
            _accumulate(x, inv_std * (gy - m1 - x_hat * m2))

    return _result(data, (x, gain, bias), backward)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis. -inf entries get exactly zero probability."""
    probs = x.data - x.data.max(axis=-1, keepdims=True)
    np.exp(probs, out=probs)
    probs /= probs.sum(axis=-1, keepdims=True)

    def backward(g):
        if x.requires_grad:
            inner = (g * probs).sum(axis=-1, keepdims=True)
            _accumulate(x, probs * (g - inner))

    return _result(probs, (x,), backward)


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU (smooth, so finite-difference checks are stable)."""
    c = np.asarray(_GELU_C, dtype=x.dtype)
    a = np.asarray(_GELU_A, dtype=x.dtype)
    sq = x.data * x.data
    t = np.tanh(c * (x.data + a * (sq * x.data)))
    data = 0.5 * x.data * (1.0 + t)

    def backward(g):
        if x.requires_grad:
            du = c * (1.0 + 3.0 * a * sq)
            local = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * du
            _accumulate(x, g * local)

    return _result(data, (x,), backward)


def rope_apply(x: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotate adjacent dimension pairs of ``x`` (..., T, d) by per-position angles.

    ``cos``/``sin`` have shape (T, d/2) and broadcast over leading axes. The
    backward pass is the inverse rotation (by -theta) of the gradient.
    """
    cos = np.asarray(cos, dtype=x.dtype)
    sin = np.asarray(sin, dtype=x.dtype)
    x0 = x.data[..., 0::2]
    x1 = x.data[..., 1::2]
    data = np.empty_like(x.data)
    data[..., 0::2] = x0 * cos - x1 * sin
    data[..., 1::2] = x0 * sin + x1 * cos

    def backward(g):
        if x.requires_grad:
            g0 = g[..., 0::2]
            g1 = g[..., 1::2]
            gx = np.empty_like(g)
            gx[..., 0::2] = g0 * cos + g1 * sin
            gx[..., 1::2] = -g0 * sin + g1 * cos
            _accumulate(x, gx)

    return _result(data, (x,), backward)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = x.data.reshape(shape)
    old_shape = x.data.shape

    def backward(g):
        _accumulate(x, g.reshape(old_shape))

    return _result(data, (x,), backward)


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    data = np.ascontiguousarray(x.data.swapaxes(a, b))

    def backward(g):
        _accumulate(x, g.swapaxes(a, b))

    return _result(data, (x,), backward)


def token_at(x: Tensor, index: int) -> Tensor:
    """Select one sequence position from a (batch, seq, dim) tensor."""
    data = x.data[:, index, :]

    def backward(g):
        if x.requires_grad:
            gx = np.zeros_like(x.data)
            gx[:, index, :] = g
            _accumulate(x, gx)

    return _result(data, (x,), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean softmax cross-entropy of (batch, classes) logits against int labels."""
    labels = np.asarray(labels)
    n = logits.data.shape[0]
    if n == 0:
        raise ValueError("cross_entropy over an empty batch")
    shifted = logits.data - logits.data.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_z
    picked = log_probs[np.arange(n), labels]
    data = np.asarray(-picked.mean(), dtype=logits.dtype)

    def backward(g):
        if logits.requires_grad:
            grad = np.exp(log_probs)
            grad[np.arange(n), labels] -= 1.0
            _accumulate(logits, grad * (g / n))

    return _result(data, (logits,), backward)
