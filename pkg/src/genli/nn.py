"""Reverse-mode automatic differentiation over numpy arrays, plus the small
set of layers the models here are built from.

The design is a classic dynamic tape: every operation records its parents and
a closure that maps the output gradient to parent gradients, and
``Tensor.backward`` walks the graph in reverse topological order.  Training
always runs in float64.  Inside a ``no_grad()`` block no graph is recorded and
input dtypes are preserved, which is what the latency benchmarks use to mimic
production precision with float32.

Parameters are plain 2D row-major float64 arrays held in a
:class:`ParameterStore`, which also owns the Adam state and the checkpoint
format.  Activations flowing through the graph may be batched 3D/4D arrays.
"""

from __future__ import annotations

import contextlib
import math
import struct
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DataError, NumericalError

__all__ = [
    "Tensor",
    "no_grad",
    "grad_enabled",
    "concat",
    "dense",
    "softmax",
    "Dense",
    "MultiHeadAttention",
    "ParameterStore",
    "save_checkpoint",
    "load_checkpoint",
    "first_nonfinite",
]

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / benchmarks)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    # Sum away leading axes that were added by broadcasting.
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    # Sum axes that were broadcast from size 1.
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: tuple["Tensor", ...] = (),
        backward: Callable[[np.ndarray], None] | None = None,
        op: str = "",
    ):
        if isinstance(data, np.ndarray):
            self.data = data
        else:
            self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad and _GRAD_ENABLED
        self.op = op
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, op={self.op!r})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g.astype(np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self, seed: np.ndarray | None = None) -> None:
        """Backpropagate from this tensor through the recorded graph.

        Without an explicit ``seed`` the tensor must be a single scalar
        (the usual loss case).
        """
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without seed needs a scalar tensor")
            seed = np.ones_like(self.data)
        # Iterative topological sort; graphs can be a few thousand nodes deep.
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(seed)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- elementwise arithmetic ------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = _as_tensor(other)
        out_data = self.data + other.data
        req = self.requires_grad or other.requires_grad

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return Tensor(out_data, req, (self, other), bw, "add")

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def bw(g):
            self._accumulate(-g)

        return Tensor(-self.data, self.requires_grad, (self,), bw, "neg")

    def __sub__(self, other) -> "Tensor":
        return self + (-_as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return _as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, (int, float)):
            c = float(other)

            def bw_scalar(g):
                self._accumulate(g * c)

            return Tensor(self.data * c, self.requires_grad, (self,), bw_scalar, "scale")
        other = _as_tensor(other)
        out_data = self.data * other.data
        req = self.requires_grad or other.requires_grad

        def bw(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return Tensor(out_data, req, (self, other), bw, "mul")

    __rmul__ = __mul__

    def __matmul__(self, other) -> "Tensor":
        other = _as_tensor(other)
        out_data = np.matmul(self.data, other.data)
        req = self.requires_grad or other.requires_grad

        def bw(g):
            if self.requires_grad:
                ga = np.matmul(g, np.swapaxes(other.data, -1, -2))
                self._accumulate(_unbroadcast(ga, self.data.shape))
            if other.requires_grad:
                gb = np.matmul(np.swapaxes(self.data, -1, -2), g)
                other._accumulate(_unbroadcast(gb, other.data.shape))

        return Tensor(out_data, req, (self, other), bw, "matmul")

    # -- shape manipulation ----------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        old = self.data.shape

        def bw(g):
            self._accumulate(g.reshape(old))

        return Tensor(self.data.reshape(*shape), self.requires_grad, (self,), bw, "reshape")

    def swapaxes(self, a: int, b: int) -> "Tensor":
        def bw(g):
            self._accumulate(g.swapaxes(a, b))

        return Tensor(self.data.swapaxes(a, b), self.requires_grad, (self,), bw, "swapaxes")

    def slice_axis(self, axis: int, start: int, length: int) -> "Tensor":
        index = [slice(None)] * self.data.ndim
        index[axis] = slice(start, start + length)
        index = tuple(index)

        def bw(g):
            full = np.zeros_like(self.data)
            full[index] = g
            self._accumulate(full)

        return Tensor(self.data[index], self.requires_grad, (self,), bw, "slice")

    def broadcast_to(self, shape: tuple[int, ...]) -> "Tensor":
        old = self.data.shape

        def bw(g):
            self._accumulate(_unbroadcast(g, old))

        return Tensor(
            np.broadcast_to(self.data, shape), self.requires_grad, (self,), bw, "broadcast"
        )

    # -- reductions -------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.data.shape

        def bw(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, shape).copy())

        return Tensor(
            self.data.sum(axis=axis, keepdims=keepdims), self.requires_grad, (self,), bw, "sum"
        )

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.data.size
        else:
            n = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- nonlinearities ---------------------------------------------------

    def sigmoid(self) -> "Tensor":
        x = self.data
        out_data = np.empty_like(x)
        pos = x >= 0
        out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out_data[~pos] = ex / (1.0 + ex)

        def bw(g):
            self._accumulate(g * out_data * (1.0 - out_data))

        return Tensor(out_data, self.requires_grad, (self,), bw, "sigmoid")

    def log(self, floor: float = 1e-12) -> "Tensor":
        """Natural log with a small floor so float32 inference cannot hit -inf.

        Below the floor the function is constant, hence zero gradient there.
        """
        clipped = np.maximum(self.data, floor)

        def bw(g):
            self._accumulate(np.where(self.data > floor, g / clipped, 0.0))

        return Tensor(np.log(clipped), self.requires_grad, (self,), bw, "log")

    def prelu(self, slope: "Tensor") -> "Tensor":
        """PReLU with a single learnable slope shared across the tensor."""
        a = float(slope.data.reshape(-1)[0])
        neg = self.data < 0
        out_data = np.where(neg, a * self.data, self.data)

        def bw(g):
            if self.requires_grad:
                self._accumulate(np.where(neg, a * g, g))
            if slope.requires_grad:
                slope._accumulate(
                    np.full(slope.data.shape, np.sum(g * self.data * neg))
                )

        return Tensor(out_data, self.requires_grad or slope.requires_grad, (self, slope), bw, "prelu")

    # -- gathers ----------------------------------------------------------

    def take_rows(self, indices: np.ndarray) -> "Tensor":
        """Row gather: (V, d) indexed by an int array of any shape.

        Output has shape ``indices.shape + (d,)``.  The backward pass
        scatter-adds, so repeated indices accumulate as expected.
        """
        idx = np.asarray(indices)
        out_data = self.data[idx]

        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, idx.reshape(-1), g.reshape(-1, self.data.shape[-1]))
            self._accumulate(full)

        return Tensor(out_data, self.requires_grad, (self,), bw, "take_rows")

    def pick_per_row(self, col_indices: np.ndarray) -> "Tensor":
        """From a (B, N) tensor pick one column per row; returns (B, 1)."""
        idx = np.asarray(col_indices).reshape(-1)
        rows = np.arange(self.data.shape[0])
        out_data = self.data[rows, idx][:, None]

        def bw(g):
            full = np.zeros_like(self.data)
            np.add.at(full, (rows, idx), g[:, 0])
            self._accumulate(full)

        return Tensor(out_data, self.requires_grad, (self,), bw, "pick_per_row")


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Concatenate tensors along ``axis``; backward splits the gradient."""
    datas = [t.data for t in tensors]
    out_data = np.concatenate(datas, axis=axis)
    req = any(t.requires_grad for t in tensors)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                t._accumulate(g[tuple(index)])

    return Tensor(out_data, req, tuple(tensors), bw, "concat")


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row softmax along the last axis with an optional validity mask.

    ``mask`` is a boolean array broadcastable to ``x`` where True marks a
    valid entry.  Masked entries get probability exactly 0 and receive no
    gradient.  Every row must contain at least one valid entry.
    """
    data = x.data
    if mask is None:
        shifted = data - data.max(axis=-1, keepdims=True)
        e = np.exp(shifted)
    else:
        m = np.broadcast_to(mask, data.shape)
        if not m.any(axis=-1).all():
            raise DataError("softmax: a row has no valid entries")
        neg = np.where(m, data, -np.inf)
        shifted = neg - neg.max(axis=-1, keepdims=True)
        with np.errstate(invalid="ignore"):
            e = np.where(m, np.exp(shifted), 0.0)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        inner = (g * out_data).sum(axis=-1, keepdims=True)
        x._accumulate(out_data * (g - inner))

    return Tensor(out_data, x.requires_grad, (x,), bw, "softmax")


def dense(x: Tensor, weights: Tensor, bias: Tensor, activation: str | None = None,
          slope: Tensor | None = None) -> Tensor:
    """One fully connected layer: ``act(x @ W + b)``.

    ``activation`` is one of None, "prelu", "sigmoid".  PReLU needs the layer's
    learnable ``slope`` tensor.
    """
    out = x @ weights + bias
    if activation is None:
        return out
    if activation == "prelu":
        if slope is None:
            raise ValueError("prelu activation needs a slope tensor")
        return out.prelu(slope)
    if activation == "sigmoid":
        return out.sigmoid()
    raise ValueError(f"unknown activation {activation!r}")


class ParameterStore:
    """Named 2D float64 parameters plus Adam optimizer state.

    Rows listed in ``frozen_rows`` (used for embedding padding rows) have
    their gradient cleared before every step, so they never move.  Updates
    are lazy: a parameter, or an individual row of a row-sparse parameter,
    is skipped entirely when its gradient is zero.  That keeps embedding
    updates proportional to the rows actually touched by a batch.
    """

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params: dict[str, Tensor] = {}
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}
        self._frozen_rows: dict[str, tuple[int, ...]] = {}
        self._row_sparse: set[str] = set()

    def add(self, name: str, value: np.ndarray, frozen_rows: tuple[int, ...] = (),
            row_sparse: bool = False) -> Tensor:
        if name in self.params:
            raise ValueError(f"duplicate parameter name {name!r}")
        arr = np.array(value, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"parameter {name!r} must be 2D, got shape {arr.shape}")
        t = Tensor(arr, requires_grad=True, op=f"param:{name}")
        self.params[name] = t
        self._m[name] = np.zeros_like(arr)
        self._v[name] = np.zeros_like(arr)
        if frozen_rows:
            self._frozen_rows[name] = frozen_rows
        if row_sparse:
            self._row_sparse.add(name)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.grad = None

    def adam_step(self, lr: float) -> None:
        """One bias-corrected Adam step over all parameters with gradients."""
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            for row in self._frozen_rows.get(name, ()):
                g[row, :] = 0.0
            if name in self._row_sparse:
                rows = np.flatnonzero(np.any(g != 0.0, axis=1))
                if rows.size == 0:
                    continue
                m = self._m[name]
                v = self._v[name]
                gr = g[rows]
                m[rows] = self.beta1 * m[rows] + (1 - self.beta1) * gr
                v[rows] = self.beta2 * v[rows] + (1 - self.beta2) * gr * gr
                p.data[rows] -= lr * (m[rows] / bc1) / (np.sqrt(v[rows] / bc2) + self.eps)
            else:
                if not g.any():
                    continue
                m = self._m[name]
                v = self._v[name]
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * g * g
                p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    # -- persistence ------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All arrays needed to resume training exactly: params + moments."""
        out: dict[str, np.ndarray] = {}
        for name, p in self.params.items():
            out[name] = p.data
            out["adam_m/" + name] = self._m[name]
            out["adam_v/" + name] = self._v[name]
        out["adam_t"] = np.array([[float(self.step_count)]])
        return out

    def load_state(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in arrays:
                raise DataError(f"checkpoint is missing parameter {name!r}")
            if arrays[name].shape != p.data.shape:
                raise DataError(
                    f"checkpoint shape mismatch for {name!r}: "
                    f"{arrays[name].shape} vs {p.data.shape}"
                )
            p.data[...] = arrays[name]
            if "adam_m/" + name in arrays:
                self._m[name][...] = arrays["adam_m/" + name]
                self._v[name][...] = arrays["adam_v/" + name]
        if "adam_t" in arrays:
            self.step_count = int(arrays["adam_t"][0, 0])


class Dense:
    """A fully connected layer whose parameters live in a ParameterStore."""

    def __init__(self, store: ParameterStore, name: str, in_dim: int, out_dim: int,
                 activation: str | None, rng: np.random.Generator):
        limit = math.sqrt(6.0 / (in_dim + out_dim))
        self.weights = store.add(name + "/W", rng.uniform(-limit, limit, (in_dim, out_dim)))
        self.bias = store.add(name + "/b", np.zeros((1, out_dim)))
        self.activation = activation
        self.slope: Tensor | None = None
        if activation == "prelu":
            self.slope = store.add(name + "/slope", np.full((1, 1), 0.25))

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.weights, self.bias, self.activation, self.slope)


class MLP:
    """Stack of Dense layers; hidden layers use PReLU, the last is linear."""

    def __init__(self, store: ParameterStore, name: str, dims: Sequence[int],
                 rng: np.random.Generator, final_activation: str | None = None):
        self.layers = []
        for i, (a, b) in enumerate(zip(dims[:-1], dims[1:])):
            last = i == len(dims) - 2
            act = final_activation if last else "prelu"
            self.layers.append(Dense(store, f"{name}/layer{i}", a, b, act, rng))

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers:
            x = layer(x)
        return x


class MultiHeadAttention:
    """Multi-head attention returning one ``head_dim``-wide row per query.

    Heads are stored as column blocks of combined projection matrices; the
    output projection maps the concatenated heads (``heads * head_dim``) back
    down to ``head_dim``.  Queries and keys/values may have different input
    widths.  ``mask`` marks valid key positions per batch row.

    After a call, ``last_weights`` holds the attention weights as a plain
    (batch, heads, n_query, n_key) array for inspection and tests.
    """

    def __init__(self, store: ParameterStore, name: str, query_dim: int, key_dim: int,
                 heads: int, head_dim: int, rng: np.random.Generator):
        self.heads = heads
        self.head_dim = head_dim
        wide = heads * head_dim
        lim_q = math.sqrt(6.0 / (query_dim + wide))
        lim_k = math.sqrt(6.0 / (key_dim + wide))
        lim_o = math.sqrt(6.0 / (wide + head_dim))
        self.w_query = store.add(name + "/Wq", rng.uniform(-lim_q, lim_q, (query_dim, wide)))
        self.w_key = store.add(name + "/Wk", rng.uniform(-lim_k, lim_k, (key_dim, wide)))
        self.w_value = store.add(name + "/Wv", rng.uniform(-lim_k, lim_k, (key_dim, wide)))
        self.w_out = store.add(name + "/Wo", rng.uniform(-lim_o, lim_o, (wide, head_dim)))
        self.last_weights: np.ndarray | None = None

    def __call__(self, query: Tensor, keys: Tensor, values: Tensor,
                 mask: np.ndarray | None = None) -> Tensor:
        """query: (B, q, dq); keys/values: (B, L, dk); mask: (B, L) or None."""
        b, n_q, _ = query.shape
        n_k = keys.shape[1]
        h, d_h = self.heads, self.head_dim

        def split_heads(x: Tensor, n: int) -> Tensor:
            # (B, n, h*d_h) -> (B, h, n, d_h)
            return x.reshape(x.shape[0], n, h, d_h).swapaxes(1, 2)

        q = split_heads(query @ self.w_query, n_q)
        k = split_heads(keys @ self.w_key, n_k)
        v = split_heads(values @ self.w_value, n_k)
        scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(d_h))
        key_mask = None if mask is None else np.asarray(mask, bool)[:, None, None, :]
        weights = softmax(scores, key_mask)
        self.last_weights = weights.data
        mixed = weights @ v                              # (B, h, q, d_h)
        merged = mixed.swapaxes(1, 2).reshape(b, n_q, h * d_h)
        return merged @ self.w_out                       # (B, q, d_h)


# -- checkpoint container -------------------------------------------------

_MAGIC = b"GLCK"
_VERSION = 1


def save_checkpoint(path, arrays: dict[str, np.ndarray]) -> None:
    """Write named 2D float64 arrays to a self-describing binary container.

    Layout: magic, format version, entry count, then per entry the utf-8
    name, row and column counts, and the row-major float64 payload.  Entries
    are sorted by name so files are byte-stable for identical states.
    """
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, len(arrays)))
        for name in sorted(arrays):
            arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError(f"checkpoint entries must be 2D, got {arr.shape} for {name!r}")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<HQQ", len(encoded), arr.shape[0], arr.shape[1]))
            fh.write(encoded)
            fh.write(arr.tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise DataError(f"{path}: not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != _VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    offset = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len, rows, cols = struct.unpack_from("<HQQ", blob, offset)
        offset += 18
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        n_bytes = rows * cols * 8
        arr = np.frombuffer(blob[offset:offset + n_bytes], dtype="<f8").reshape(rows, cols)
        offset += n_bytes
        out[name] = arr.copy()
    return out


def first_nonfinite(root: Tensor) -> str | None:
    """Name of the first tensor (forward order) with a non-finite value.

    Used to build the diagnostic when a training step produces a NaN loss.
    Returns None when everything reachable from ``root`` is finite.
    """
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    for node in order:  # forward topological order: first culprit wins
        if not np.isfinite(node.data).all():
            return f"{node.op or 'tensor'} shape={node.data.shape}"
    return None
