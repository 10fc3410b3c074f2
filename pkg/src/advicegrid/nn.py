"""Reverse-mode autodiff layer library on float64 numpy arrays.

Small tape-based graph: ops build Tensors that remember their parents and a
backward closure. Everything is 64-bit for gradient-check headroom; every
op output is checked finite. Includes dense, 2D convolution, a GRU cell,
channel-gated attention fusion, Huber loss, Adam, and a flat binary
checkpoint container.
"""

from __future__ import annotations

import json
import struct

import numpy as np


class ShapeMismatch(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


class NonFiniteGradient(FloatingPointError):
    pass


_GRAD_ENABLED = True


class no_grad:
    """Context manager: ops inside build no graph (inference fast path)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


class Tensor:
    __slots__ = ("data", "grad", "requires", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None, requires=False):
        self.data = np.asarray(data, dtype=np.float64)
        # a finite sum certifies every entry finite (nan/inf propagate through it)
        if not np.isfinite(self.data.sum()):
            raise NonFiniteValue("non-finite entries in tensor")
        self.grad = None
        if _GRAD_ENABLED and (requires or any(p.requires for p in parents)):
            self.requires = True
            self._parents = parents
            self._backward = backward
        else:
            self.requires = False
            self._parents = ()
            self._backward = None

    @property
    def shape(self):
        return self.data.shape

    def accumulate(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        """Accumulate gradients of this (scalar) value into every parent."""
        topo, seen, stack = [], set(), [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise and linear ops ---------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data, parents=(a, b))

    def backward():
        if a.requires:
            a.accumulate(_unbroadcast(out.grad, a.shape))
        if b.requires:
            b.accumulate(_unbroadcast(out.grad, b.shape))

    out._backward = backward if out.requires else None
    return out


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data, parents=(a, b))

    def backward():
        if a.requires:
            a.accumulate(_unbroadcast(out.grad * b.data, a.shape))
        if b.requires:
            b.accumulate(_unbroadcast(out.grad * a.data, b.shape))

    out._backward = backward if out.requires else None
    return out


def scale(a, s: float):
    a = as_tensor(a)
    out = Tensor(a.data * s, parents=(a,))

    def backward():
        a.accumulate(out.grad * s)

    out._backward = backward if out.requires else None
    return out


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data, parents=(a, b))

    def backward():
        if a.requires:
            a.accumulate(out.grad @ b.data.T)
        if b.requires:
            b.accumulate(a.data.T @ out.grad)

    out._backward = backward if out.requires else None
    return out


def dense(x, W, b=None):
    """x (B, in) @ W (in, out), optionally plus a broadcast bias (out,)."""
    x, W = as_tensor(x), as_tensor(W)
    if x.data.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeMismatch(f"dense {x.shape} @ {W.shape}")
    y = x.data @ W.data
    if b is None:
        parents = (x, W)
    else:
        b = as_tensor(b)
        y = y + b.data
        parents = (x, W, b)
    out = Tensor(y, parents=parents)

    def backward():
        if x.requires:
            x.accumulate(out.grad @ W.data.T)
        if W.requires:
            W.accumulate(x.data.T @ out.grad)
        if b is not None and b.requires:
            b.accumulate(out.grad.sum(axis=0))

    out._backward = backward if out.requires else None
    return out


def dense2(x, Wx, h, Wh, b):
    """Fused x @ Wx + h @ Wh + b (the recurrent-gate preactivation)."""
    x, Wx, h, Wh, b = as_tensor(x), as_tensor(Wx), as_tensor(h), as_tensor(Wh), as_tensor(b)
    out = Tensor(x.data @ Wx.data + h.data @ Wh.data + b.data,
                 parents=(x, Wx, h, Wh, b))

    def backward():
        if x.requires:
            x.accumulate(out.grad @ Wx.data.T)
        if Wx.requires:
            Wx.accumulate(x.data.T @ out.grad)
        if h.requires:
            h.accumulate(out.grad @ Wh.data.T)
        if Wh.requires:
            Wh.accumulate(h.data.T @ out.grad)
        if b.requires:
            b.accumulate(out.grad.sum(axis=0))

    out._backward = backward if out.requires else None
    return out


def lerp(z, a, b):
    """Elementwise z * a + (1 - z) * b, fused."""
    z, a, b = as_tensor(z), as_tensor(a), as_tensor(b)
    out = Tensor(z.data * a.data + (1.0 - z.data) * b.data, parents=(z, a, b))

    def backward():
        if z.requires:
            z.accumulate(out.grad * (a.data - b.data))
        if a.requires:
            a.accumulate(out.grad * z.data)
        if b.requires:
            b.accumulate(out.grad * (1.0 - z.data))

    out._backward = backward if out.requires else None
    return out


def relu(x):
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0), parents=(x,))

    def backward():
        x.accumulate(out.grad * (x.data > 0.0))

    out._backward = backward if out.requires else None
    return out


def sigmoid(x):
    x = as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.data))
    out = Tensor(y, parents=(x,))

    def backward():
        x.accumulate(out.grad * y * (1.0 - y))

    out._backward = backward if out.requires else None
    return out


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    out = Tensor(y, parents=(x,))

    def backward():
        x.accumulate(out.grad * (1.0 - y * y))

    out._backward = backward if out.requires else None
    return out


def reshape(x, shape):
    x = as_tensor(x)
    out = Tensor(x.data.reshape(shape), parents=(x,))

    def backward():
        x.accumulate(out.grad.reshape(x.shape))

    out._backward = backward if out.requires else None
    return out


def flatten(x):
    return reshape(x, (x.shape[0], -1))


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), parents=tuple(tensors))
    sizes = [t.shape[axis] for t in tensors]

    def backward():
        start = 0
        for t, n in zip(tensors, sizes):
            if t.requires:
                idx = [slice(None)] * out.grad.ndim
                idx[axis] = slice(start, start + n)
                t.accumulate(out.grad[tuple(idx)])
            start += n

    out._backward = backward if out.requires else None
    return out


def stack_rows(tensors):
    """Stack 1-D tensors into a (B, D) matrix."""
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors]), parents=tuple(tensors))

    def backward():
        for i, t in enumerate(tensors):
            if t.requires:
                t.accumulate(out.grad[i])

    out._backward = backward if out.requires else None
    return out


def index_rows(x, indices):
    """Pick rows of a matrix by integer index (rows may repeat)."""
    x = as_tensor(x)
    indices = np.asarray(indices, dtype=np.intp)
    out = Tensor(x.data[indices], parents=(x,))

    def backward():
        g = np.zeros_like(x.data)
        np.add.at(g, indices, out.grad)
        x.accumulate(g)

    out._backward = backward if out.requires else None
    return out


def gather_actions(q, actions):
    """Per-row pick q[i, actions[i]] from a (B, A) matrix."""
    q = as_tensor(q)
    actions = np.asarray(actions, dtype=np.intp)
    rows = np.arange(q.shape[0])
    out = Tensor(q.data[rows, actions], parents=(q,))

    def backward():
        g = np.zeros_like(q.data)
        g[rows, actions] = out.grad
        q.accumulate(g)

    out._backward = backward if out.requires else None
    return out


# -- convolution -------------------------------------------------------------


def _im2col(x, kh, kw, stride, padding):
    if padding:
        b0, c0, h0, w0 = x.shape
        padded = np.zeros((b0, c0, h0 + 2 * padding, w0 + 2 * padding))
        padded[:, :, padding : padding + h0, padding : padding + w0] = x
        x = padded
    b, c, h, w = x.shape
    oh = (h - kh) // stride + 1
    ow = (w - kw) // stride + 1
    # one strided copy per kernel offset; the final reshape is then a view
    cols = np.empty((b, c, kh, kw, oh, ow))
    for i in range(kh):
        hi = i + (oh - 1) * stride + 1
        for j in range(kw):
            wj = j + (ow - 1) * stride + 1
            cols[:, :, i, j] = x[:, :, i:hi:stride, j:wj:stride]
    return cols.reshape(b, c * kh * kw, oh * ow), oh, ow


def _conv_forward(x, kernels, stride, padding):
    b = x.shape[0]
    k, _, kh, kw = kernels.shape
    cols, oh, ow = _im2col(x, kh, kw, stride, padding)
    kmat = kernels.reshape(k, -1)
    y = np.matmul(kmat, cols).reshape(b, k, oh, ow)
    return y, cols


def conv2d(x, kernels, stride=1, padding=0, bias=None):
    """2D correlation of (B, C, H, W) input with (K, C, kh, kw) kernels."""
    x, kernels = as_tensor(x), as_tensor(kernels)
    if x.data.ndim != 4 or kernels.data.ndim != 4 or x.shape[1] != kernels.shape[1]:
        raise ShapeMismatch(f"conv2d {x.shape} with kernels {kernels.shape}")
    k, c, kh, kw = kernels.shape
    if padding > kh - 1 or padding > kw - 1:
        raise ShapeMismatch("padding larger than kernel-1 is unsupported")
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise ShapeMismatch("input smaller than kernel")
    y, cols = _conv_forward(x.data, kernels.data, stride, padding)
    parents = (x, kernels)
    out = Tensor(y, parents=parents)

    def backward():
        b, _, oh, ow = out.grad.shape
        dy = out.grad.reshape(b, k, oh * ow)
        if kernels.requires:
            dk = np.matmul(dy, cols.transpose(0, 2, 1)).sum(axis=0)
            kernels.accumulate(dk.reshape(kernels.shape))
        if x.requires:
            h, w = x.shape[2], x.shape[3]
            dyg = out.grad
            if stride > 1:
                dil = np.zeros((b, k, (oh - 1) * stride + 1, (ow - 1) * stride + 1))
                dil[:, :, ::stride, ::stride] = dyg
                dyg = dil
            rh = (h + 2 * padding - kh) % stride
            rw = (w + 2 * padding - kw) % stride
            ph, pw = kh - 1 - padding, kw - 1 - padding
            bb, kk, hh, ww = dyg.shape
            padded = np.zeros((bb, kk, hh + 2 * ph + rh, ww + 2 * pw + rw))
            padded[:, :, ph : ph + hh, pw : pw + ww] = dyg
            dyg = padded
            wrot = kernels.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            dx, _ = _conv_forward(dyg, np.ascontiguousarray(wrot), 1, 0)
            x.accumulate(dx)

    out._backward = backward if out.requires else None
    if bias is None:
        return out
    return add(out, reshape(as_tensor(bias), (1, k, 1, 1)))


# -- fusion, recurrence, loss -------------------------------------------------


def channel_scale(feature_maps, gate):
    """Multiply (B, C, H, W) feature maps channel-wise by a (B, C) gate."""
    feature_maps, gate = as_tensor(feature_maps), as_tensor(gate)
    if feature_maps.shape[:2] != gate.shape:
        raise ShapeMismatch(f"{feature_maps.shape} gated by {gate.shape}")
    g4 = gate.data[:, :, None, None]
    out = Tensor(feature_maps.data * g4, parents=(feature_maps, gate))

    def backward():
        if feature_maps.requires:
            feature_maps.accumulate(out.grad * g4)
        if gate.requires:
            gate.accumulate((out.grad * feature_maps.data).sum(axis=(2, 3)))

    out._backward = backward if out.requires else None
    return out


def gated_attention(feature_maps, goal_emb, W, b):
    """Fuse goal information into feature maps by channel-wise gating.

    The gate is sigmoid(goal_emb @ W + b), one value per channel; it depends
    only on the goal side, never on the feature maps.
    """
    gate = sigmoid(dense(goal_emb, W, b))
    return channel_scale(feature_maps, gate)


def gru_cell(x, h, p, prefix="gru"):
    """One GRU step: reset/update gates with sigmoid, tanh candidate.

    ``p`` maps names to parameter tensors: {prefix}_{Wr,Ur,br,Wz,Uz,bz,Wc,Uc,bc}.
    """

    def w(n):
        return p[f"{prefix}_{n}"]

    r = sigmoid(dense2(x, w("Wr"), h, w("Ur"), w("br")))
    z = sigmoid(dense2(x, w("Wz"), h, w("Uz"), w("bz")))
    cand = tanh(dense2(x, w("Wc"), mul(r, h), w("Uc"), w("bc")))
    return lerp(z, h, cand)


def huber_loss(pred, target, delta=1.0, weights=None):
    """Huber loss and its gradient w.r.t. ``pred`` (plain arrays).

    Without weights this is the mean over the batch; with weights it is
    ``sum_i w_i * huber(e_i)`` (used to average worker batches exactly).
    """
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"huber {pred.shape} vs {target.shape}")
    e = pred - target
    a = np.abs(e)
    small = a <= delta
    elems = np.where(small, 0.5 * e * e, delta * (a - 0.5 * delta))
    dpred = np.where(small, e, delta * np.sign(e))
    if weights is None:
        return float(elems.mean()), dpred / e.size
    return float(elems @ weights), dpred * weights


def huber(pred, target, delta=1.0, weights=None):
    """Autodiff wrapper around ``huber_loss`` producing a scalar tensor."""
    pred = as_tensor(pred)
    loss, dpred = huber_loss(pred.data, target, delta, weights)
    out = Tensor(loss, parents=(pred,))

    def backward():
        pred.accumulate(out.grad * dpred)

    out._backward = backward if out.requires else None
    return out


# -- parameters and optimizer -------------------------------------------------


class ParamStore:
    """Named learnable parameters with their gradients and Adam moments."""

    def __init__(self):
        self._params = {}
        self._m = {}
        self._v = {}
        self.step = 0
        self.version = 0  # bumped on any value change; invalidates caches

    def add(self, name, value) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires=True)
        t.grad = np.zeros_like(t.data)
        self._params[name] = t
        self._m[name] = np.zeros_like(t.data)
        self._v[name] = np.zeros_like(t.data)
        self.version += 1
        return t

    def __contains__(self, name):
        return name in self._params

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def n_parameters(self):
        return sum(t.data.size for t in self._params.values())

    def zero_grads(self):
        for t in self._params.values():
            t.grad[...] = 0.0

    def scale_grads(self, factor):
        for t in self._params.values():
            t.grad *= factor

    def copy_values_from(self, other: "ParamStore"):
        """Deep-copy values from ``other``; missing names are created."""
        for name, t in other.items():
            if name in self._params:
                np.copyto(self._params[name].data, t.data)
            else:
                self.add(name, t.data.copy())
        self.version += 1

    def clone(self) -> "ParamStore":
        out = ParamStore()
        for name, t in self.items():
            out.add(name, t.data.copy())
        return out

    def moment_arrays(self):
        return self._m, self._v


def adam_step(store: ParamStore, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """Bias-corrected Adam update over every parameter; zeroes gradients."""
    store.step += 1
    store.version += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, tensor in store.items():
        g = tensor.grad
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(name)
        m = store._m[name]
        v = store._v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        tensor.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
        g[...] = 0.0


# -- checkpoint container ------------------------------------------------------

_MAGIC = b"AGPARAM1"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, arrays: dict, meta: dict):
    """Write named float64 arrays plus a JSON manifest into one binary file."""
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        arr = np.asarray(arr, dtype=np.float64)
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        blobs.append(arr.tobytes())  # tobytes always emits C-order
    header = json.dumps(
        {"format_version": CHECKPOINT_VERSION, "meta": meta, "entries": entries}
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    """Read back (arrays, meta) written by ``save_checkpoint``."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"not a parameter container: {path}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        if header["format_version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported container version {header['format_version']}")
        data = np.frombuffer(fh.read(), dtype=np.float64)
    arrays = {}
    for e in header["entries"]:
        size = int(np.prod(e["shape"])) if e["shape"] else 1
        arrays[e["name"]] = (
            data[e["offset"] : e["offset"] + size].reshape(e["shape"]).copy()
        )
    return arrays, header["meta"]
