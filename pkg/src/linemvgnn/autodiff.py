"""Dense reverse-mode automatic differentiation over 2-D float64 tensors.

Deliberately tiny: only the operators the message-passing model composes —
matmul, add (with single-row bias broadcast), sub, column concatenation,
relu, scalar scale, row gather/scatter, and weighted softmax cross-entropy.
The tape is rebuilt on every forward pass; ``backward`` walks it once in
reverse topological order. No silent broadcasting: every shape rule is
checked at construction time.

Gradient buffers are allocated lazily (``grad`` is None until something
accumulates into it), and ``backward`` releases each intermediate's buffer
and tape links as soon as they have been consumed, so peak memory is the
forward activations plus a shrinking gradient frontier — not two copies of
the whole tape. Forward passes that will never be differentiated (metric
evaluation, inference) should run under ``with no_grad():`` so they record
no tape at all.
"""

import math

import numpy as np

from . import kernels


class Tensor:
    """A 2-D float64 array plus a lazily allocated gradient accumulator.

    ``grad`` is None until ``backward`` (or manual accumulation) fills it;
    a None gradient means zero everywhere.
    """

    def __init__(self, data, _parents=()):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError(f"tensors are 2-D, got shape {data.shape}")
        self.data = data
        self.grad = None
        self._parents = _parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = None

    def item(self):
        if self.data.size != 1:
            raise ValueError("item() needs a single-element tensor")
        return float(self.data[0, 0])

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() starts from a scalar loss")
        order = []
        seen = set()
        stack = [(self, iter(self._parents))]
        seen.add(id(self))
        while stack:
            node, parents = stack[-1]
            nxt = next(parents, None)
            if nxt is None:
                stack.pop()
                order.append(node)
            elif id(nxt) not in seen:
                seen.add(id(nxt))
                stack.append((nxt, iter(nxt._parents)))
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward()
            if node._parents:
                # Interior node: its consumers have all run and its own
                # contribution is pushed, so drop the buffer and the tape
                # links. Leaves (parameters, inputs) keep their gradients.
                node.grad = None
                node._parents = ()
                node._backward = None

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Parameter(Tensor):
    """Learnable tensor carrying Adam moment estimates."""

    def __init__(self, data):
        super().__init__(data)
        self.m = np.zeros_like(self.data)
        self.v = np.zeros_like(self.data)
        self.step = 0


def glorot(rng, fan_in, fan_out):
    """Uniform init on ±sqrt(6/(fan_in+fan_out))."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


_grad_enabled = True


class no_grad:
    """Context manager: ops built inside record no tape (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._saved = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._saved
        return False


def _tape(out, bw):
    """Attach the backward closure, or detach ``out`` entirely under no_grad."""
    if _grad_enabled:
        out._backward = bw
    else:
        out._parents = ()


def _accum(t, g, fresh):
    """Add ``g`` into ``t.grad``, allocating on first touch.

    ``fresh`` promises ``g`` is a newly built array nothing else aliases,
    so it can be adopted outright instead of copied.
    """
    if t.grad is None:
        t.grad = g if fresh else g.copy()
    else:
        t.grad += g


# ------------------------------------------------------------------ operators

def matmul(a, b):
    if a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shapes {a.data.shape} x {b.data.shape}")
    out = Tensor(a.data @ b.data, (a, b))

    def _bw():
        _accum(a, out.grad @ b.data.T, fresh=True)
        _accum(b, a.data.T @ out.grad, fresh=True)

    _tape(out, _bw)
    return out


def add(a, b):
    """Elementwise sum; ``b`` may be a single row broadcast over ``a``'s rows."""
    if a.data.shape == b.data.shape:
        out = Tensor(a.data + b.data, (a, b))

        def _bw():
            _accum(a, out.grad, fresh=False)
            _accum(b, out.grad, fresh=False)

    elif b.data.shape == (1, a.data.shape[1]):
        out = Tensor(a.data + b.data, (a, b))

        def _bw():
            _accum(a, out.grad, fresh=False)
            _accum(b, out.grad.sum(axis=0, keepdims=True), fresh=True)

    else:
        raise ValueError(f"add shapes {a.data.shape} + {b.data.shape}")
    _tape(out, _bw)
    return out


def sub(a, b):
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shapes {a.data.shape} - {b.data.shape}")
    out = Tensor(a.data - b.data, (a, b))

    def _bw():
        _accum(a, out.grad, fresh=False)
        if b.grad is None:
            b.grad = -out.grad
        else:
            b.grad -= out.grad

    _tape(out, _bw)
    return out


def concat_cols(a, b):
    if a.data.shape[0] != b.data.shape[0]:
        raise ValueError(f"concat_cols rows {a.data.shape} | {b.data.shape}")
    split = a.data.shape[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1), (a, b))

    def _bw():
        _accum(a, out.grad[:, :split], fresh=False)
        _accum(b, out.grad[:, split:], fresh=False)

    _tape(out, _bw)
    return out


def relu(a):
    mask = a.data > 0.0  # gradient at exactly 0 is 0
    out = Tensor(np.where(mask, a.data, 0.0), (a,))

    def _bw():
        _accum(a, out.grad * mask, fresh=True)

    _tape(out, _bw)
    return out


def scale(a, s):
    """Multiply every entry of ``a`` by the (1, 1) tensor ``s``."""
    if s.data.shape != (1, 1):
        raise ValueError(f"scale factor must be (1, 1), got {s.data.shape}")
    out = Tensor(a.data * s.data[0, 0], (a, s))

    def _bw():
        _accum(a, out.grad * s.data[0, 0], fresh=True)
        _accum(s, np.array([[(out.grad * a.data).sum()]]), fresh=True)

    _tape(out, _bw)
    return out


def row_gather(a, index_map):
    """out[i] = a[index_map[i]]; rows may repeat."""
    index_map = _checked_index(index_map, a.data.shape[0], "row_gather")
    out = Tensor(a.data[index_map], (a,))

    def _bw():
        _accum(a, kernels.scatter_add_rows(out.grad, index_map,
                                           a.data.shape[0]), fresh=True)

    _tape(out, _bw)
    return out


def row_scatter_add(a, index_map, out_rows):
    """out[index_map[i]] += a[i]; rows mapping to the same target sum."""
    index_map = _checked_index(index_map, out_rows, "row_scatter_add")
    if index_map.shape[0] != a.data.shape[0]:
        raise ValueError("row_scatter_add needs one index per source row")
    out = Tensor(kernels.scatter_add_rows(a.data, index_map, out_rows), (a,))

    def _bw():
        _accum(a, out.grad[index_map], fresh=True)

    _tape(out, _bw)
    return out


def softmax_cross_entropy(logits, labels, class_weights=None):
    """Weighted mean negative log-likelihood as a (1, 1) tensor.

    Per-sample losses are weighted by ``class_weights[labels[i]]`` and
    normalized by the total weight, so uniform weights give the plain mean.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n, num_classes = logits.data.shape
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} for {n} rows")
    if n == 0:
        raise ValueError("softmax_cross_entropy needs at least one row")
    if labels.min() < 0 or labels.max() >= num_classes:
        raise ValueError("label outside [0, num_classes)")
    if class_weights is None:
        class_weights = np.ones(num_classes)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    if class_weights.shape != (num_classes,) or (class_weights <= 0).any():
        raise ValueError("class_weights must be positive, one per class")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    sample_w = class_weights[labels]
    total_w = sample_w.sum()
    nll = -log_p[np.arange(n), labels]
    out = Tensor([[float((sample_w * nll).sum() / total_w)]], (logits,))

    def _bw():
        probs = np.exp(log_p)
        probs[np.arange(n), labels] -= 1.0
        probs *= out.grad[0, 0] * (sample_w / total_w)[:, None]
        _accum(logits, probs, fresh=True)

    _tape(out, _bw)
    return out


def _checked_index(index_map, limit, op):
    index_map = np.asarray(index_map, dtype=np.int64)
    if index_map.ndim != 1:
        raise ValueError(f"{op} index map must be 1-D")
    if index_map.size and (index_map.min() < 0 or index_map.max() >= limit):
        raise ValueError(f"{op} index out of range [0, {limit})")
    return index_map


# ------------------------------------------------------------------ training

def adam_step(params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update per parameter; gradients are cleared."""
    for p in params:
        p.step += 1
        g = p.grad if p.grad is not None else 0.0
        p.m = beta1 * p.m + (1.0 - beta1) * g
        p.v = beta2 * p.v + (1.0 - beta2) * g * g
        m_hat = p.m / (1.0 - beta1 ** p.step)
        v_hat = p.v / (1.0 - beta2 ** p.step)
        p.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
        p.zero_grad()


def cosine_warm_restart_lr(epoch, base_lr):
    """Half-cosine decay restarting at epochs 10, 20, 40, 80, ...

    The first two cycles are 10 epochs each; every later cycle doubles.
    A cycle starts at ``base_lr`` and decays toward 0.
    """
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    if epoch < 10:
        start, length = 0, 10
    else:
        start, length = 10, 10
        while epoch >= start + length:
            start += length
            length *= 2
    t = (epoch - start) / length
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * t))


# ---------------------------------------------------------------- validation

def gradient_check(build, tensors, h=1e-5, min_magnitude=1e-6):
    """Max relative error between backward and central finite differences.

    ``build`` must rebuild the scalar loss from the live ``tensors`` (the
    tape is dynamic, so calling it again after nudging an entry reprices
    the whole expression). Entries whose analytic gradient magnitude is at
    most ``min_magnitude`` are skipped.
    """
    for t in tensors:
        t.zero_grad()
    build().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy()
                for t in tensors]
    worst = 0.0
    for t, grad in zip(tensors, analytic):
        flat = t.data.reshape(-1)
        flat_grad = grad.reshape(-1)
        for k in range(flat.size):
            a = flat_grad[k]
            if abs(a) <= min_magnitude:
                continue
            orig = flat[k]
            flat[k] = orig + h
            f_plus = build().item()
            flat[k] = orig - h
            f_minus = build().item()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            worst = max(worst, abs(numeric - a) / abs(a))
    return worst
