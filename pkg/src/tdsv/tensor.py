"""Dense tensors with reverse-mode automatic differentiation.

Everything is a flat float array (float64 unless configured otherwise)
plus an optional gradient buffer.  Operations record backward closures on
the output node; ``backward`` replays them in exact reverse execution
order, so gradients accumulate (+=) into every tracked input.

NaN or +inf in any op output raises :class:`NumericError`.  -inf is a
legal value: log-domain recursions use it for "impossible".
"""

import itertools

import numpy as np


class ShapeError(ValueError):
    """Operand shapes incompatible with the requested operation."""


class NumericError(ArithmeticError):
    """NaN or +inf appeared in an operation's output."""


_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True
_SEQ = itertools.count()


def set_default_dtype(dtype) -> None:
    """Set the dtype newly created tensors use (float64 or float32)."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float64, np.float32):
        raise ValueError(f"unsupported dtype {dtype}; use float64 or float32")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


class no_grad:
    """Context manager disabling backward-graph recording."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _check_values(arr) -> None:
    if not np.isfinite(arr).all():
        bad = arr[~np.isfinite(arr)]
        if np.isnan(bad).any():
            raise NumericError("NaN in operation output")
        if (bad == np.inf).any():
            raise NumericError("+inf in operation output")


class Tensor:
    """N-dimensional value node.  ``requires_grad`` marks trainable leaves."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bw", "_seq")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=_DEFAULT_DTYPE)
        _check_values(arr)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._bw = None
        self._seq = next(_SEQ)

    @classmethod
    def _wrap(cls, arr):
        t = cls.__new__(cls)
        t.data = arr
        t.grad = None
        t.requires_grad = False
        t._parents = ()
        t._bw = None
        t._seq = next(_SEQ)
        return t

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor._wrap(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(out_data, parents, bw):
    """Wrap an op output, recording the backward closure when tracked."""
    _check_values(out_data)
    t = Tensor._wrap(out_data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        t.requires_grad = True
        t._parents = tuple(parents)
        t._bw = bw
    return t


def backward(loss: Tensor) -> None:
    """Run reverse-mode accumulation from a scalar loss.

    Visits recorded ops in exact reverse execution order (creation
    sequence), which is a valid topological order since every op's
    inputs are created before its output.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar, got shape {loss.data.shape}")
    # collect the reachable recorded subgraph without recursion
    seen = {id(loss)}
    nodes = [loss]
    stack = [loss]
    while stack:
        node = stack.pop()
        for p in node._parents:
            if id(p) not in seen:
                seen.add(id(p))
                nodes.append(p)
                stack.append(p)
    nodes.sort(key=lambda n: n._seq, reverse=True)
    loss.grad = np.ones_like(loss.data)
    for node in nodes:
        if node._bw is not None and node.grad is not None:
            node._bw(node.grad)


# ---------------------------------------------------------------------------
# arithmetic


def _binary_broadcast(a: Tensor, b, forward, da_fn, db_fn):
    """Elementwise binary op; shapes equal, row-vector broadcast, or scalar."""
    if not isinstance(b, Tensor):
        bval = float(b)
        out = forward(a.data, bval)

        def bw(g):
            if a.requires_grad:
                a.accumulate_grad(da_fn(g, a.data, bval, out))

        return _result(out, (a,), bw)

    ash, bsh = a.data.shape, b.data.shape
    if ash == bsh:
        reduce_a = reduce_b = None
    elif a.data.ndim == 2 and b.data.ndim == 1 and ash[1] == bsh[0]:
        reduce_b = 0
        reduce_a = None
    elif a.data.ndim == 1 and b.data.ndim == 2 and bsh[1] == ash[0]:
        reduce_a = 0
        reduce_b = None
    else:
        raise ShapeError(f"incompatible shapes {ash} and {bsh}")
    out = forward(a.data, b.data)

    def bw(g):
        if a.requires_grad:
            ga = da_fn(g, a.data, b.data, out)
            if reduce_a is not None:
                ga = ga.sum(axis=reduce_a)
            a.accumulate_grad(ga)
        if b.requires_grad:
            gb = db_fn(g, a.data, b.data, out)
            if reduce_b is not None:
                gb = gb.sum(axis=reduce_b)
            b.accumulate_grad(gb)

    return _result(out, (a, b), bw)


def add(a: Tensor, b) -> Tensor:
    return _binary_broadcast(
        a, b, lambda x, y: x + y,
        lambda g, x, y, o: g,
        lambda g, x, y, o: g,
    )


def sub(a: Tensor, b) -> Tensor:
    return _binary_broadcast(
        a, b, lambda x, y: x - y,
        lambda g, x, y, o: g,
        lambda g, x, y, o: -g,
    )


def mul(a: Tensor, b) -> Tensor:
    return _binary_broadcast(
        a, b, lambda x, y: x * y,
        lambda g, x, y, o: g * y,
        lambda g, x, y, o: g * x,
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; accepts 2-D @ 2-D or 1-D @ 2-D."""
    a, b = _as_tensor(a), _as_tensor(b)
    if b.data.ndim != 2:
        raise ShapeError(f"matmul rhs must be 2-D, got {b.data.shape}")
    if a.data.ndim == 2:
        if a.data.shape[1] != b.data.shape[0]:
            raise ShapeError(f"matmul shapes {a.data.shape} and {b.data.shape}")
        out = a.data @ b.data

        def bw(g):
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(a.data.T @ g)

        return _result(out, (a, b), bw)
    if a.data.ndim == 1:
        if a.data.shape[0] != b.data.shape[0]:
            raise ShapeError(f"matmul shapes {a.data.shape} and {b.data.shape}")
        out = a.data @ b.data

        def bw(g):
            if a.requires_grad:
                a.accumulate_grad(g @ b.data.T)
            if b.requires_grad:
                b.accumulate_grad(np.outer(a.data, g))

        return _result(out, (a, b), bw)
    raise ShapeError(f"matmul lhs must be 1-D or 2-D, got {a.data.shape}")


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs 2-D, got {a.data.shape}")
    out = a.data.T.copy()

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g.T)

    return _result(out, (a,), bw)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t.accumulate_grad(g[tuple(idx)])

    return _result(out, tuple(tensors), bw)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    if not (0 <= start and start + length <= a.data.shape[axis]):
        raise ShapeError(
            f"narrow [{start}:{start + length}) out of range for axis {axis} "
            f"of shape {a.data.shape}"
        )
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = a.data[idx].copy()

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[idx] = g
            a.accumulate_grad(full)

    return _result(out, (a,), bw)


def row(a: Tensor, i: int) -> Tensor:
    """Row i of a 2-D tensor as a 1-D tensor."""
    if a.data.ndim != 2:
        raise ShapeError(f"row needs 2-D, got {a.data.shape}")
    out = a.data[i].copy()

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[i] = g
            a.accumulate_grad(full)

    return _result(out, (a,), bw)


def take_rows(a: Tensor, indices) -> Tensor:
    """Gather rows by integer index (duplicates allowed)."""
    idx = np.asarray(indices, dtype=np.intp)
    out = a.data[idx].copy()

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a.accumulate_grad(full)

    return _result(out, (a,), bw)


def take_cols(a: Tensor, indices) -> Tensor:
    """Gather columns of a 2-D tensor by integer index (duplicates allowed)."""
    if a.data.ndim != 2:
        raise ShapeError(f"take_cols needs 2-D, got {a.data.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    out = a.data[:, idx].copy()

    def bw(g):
        if a.requires_grad:
            full = np.zeros_like(a.data)
            np.add.at(full, (slice(None), idx), g)
            a.accumulate_grad(full)

    return _result(out, (a,), bw)


def flip(a: Tensor, axis: int = 0) -> Tensor:
    out = np.flip(a.data, axis=axis).copy()

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(np.flip(g, axis=axis))

    return _result(out, (a,), bw)


def masked_fill(a: Tensor, mask, value: float) -> Tensor:
    """Replace entries where mask is true; gradient is zero there."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.data.shape:
        raise ShapeError(f"mask shape {mask.shape} != data shape {a.data.shape}")
    out = np.where(mask, value, a.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(np.where(mask, 0.0, g))

    return _result(out, (a,), bw)


def tsum(a: Tensor, axis=None) -> Tensor:
    out = np.asarray(a.data.sum(axis=axis))

    def bw(g):
        if a.requires_grad:
            if axis is None:
                a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())
            else:
                a.accumulate_grad(np.broadcast_to(np.expand_dims(g, axis), a.data.shape).copy())

    return _result(out, (a,), bw)


def tmean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else a.data.shape[axis]
    out = np.asarray(a.data.mean(axis=axis))

    def bw(g):
        if a.requires_grad:
            if axis is None:
                a.accumulate_grad(np.broadcast_to(g / n, a.data.shape).copy())
            else:
                a.accumulate_grad(np.broadcast_to(np.expand_dims(g, axis) / n, a.data.shape).copy())

    return _result(out, (a,), bw)


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * 0.5 / out)

    return _result(out, (a,), bw)


def clamp_min(a: Tensor, floor: float) -> Tensor:
    """Elementwise max with a constant; gradient passes only where a > floor."""
    out = np.maximum(a.data, floor)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(np.where(a.data > floor, g, 0.0))

    return _result(out, (a,), bw)


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * out * (1.0 - out))

    return _result(out, (a,), bw)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * (1.0 - out * out))

    return _result(out, (a,), bw)


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0.0)

    def bw(g):
        # subgradient at 0 pinned to 0
        if a.requires_grad:
            a.accumulate_grad(g * (a.data > 0.0))

    return _result(out, (a,), bw)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        if a.requires_grad:
            inner = (g * out).sum(axis=axis, keepdims=True)
            a.accumulate_grad(out * (g - inner))

    return _result(out, (a,), bw)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    out = shifted - lse

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return _result(out, (a,), bw)


def logaddexp(a: Tensor, b: Tensor) -> Tensor:
    """Stable log(exp(a) + exp(b)); -inf operands behave as probability 0."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.shape != b.data.shape:
        raise ShapeError(f"logaddexp shapes {a.data.shape} and {b.data.shape}")
    out = np.logaddexp(a.data, b.data)

    def bw(g):
        # where out = -inf both inputs were -inf: weight is 0, not NaN
        live = out != -np.inf
        if a.requires_grad:
            wa = np.zeros_like(out)
            wa[live] = np.exp(a.data[live] - out[live])
            a.accumulate_grad(g * wa)
        if b.requires_grad:
            wb = np.zeros_like(out)
            wb[live] = np.exp(b.data[live] - out[live])
            b.accumulate_grad(g * wb)

    return _result(out, (a, b), bw)


# ---------------------------------------------------------------------------
# losses


def l1_loss(prediction: Tensor, target: Tensor) -> Tensor:
    """Sum of absolute differences; subgradient at ties is 0."""
    prediction, target = _as_tensor(prediction), _as_tensor(target)
    if prediction.data.shape != target.data.shape:
        raise ShapeError(
            f"l1_loss shapes {prediction.data.shape} and {target.data.shape}"
        )
    diff = prediction.data - target.data
    out = np.asarray(np.abs(diff).sum())

    def bw(g):
        s = np.sign(diff)
        if prediction.requires_grad:
            prediction.accumulate_grad(g * s)
        if target.requires_grad:
            target.accumulate_grad(-g * s)

    return _result(out, (prediction, target), bw)


def cross_entropy(logits: Tensor, label: int) -> Tensor:
    """Negative log softmax probability of the labelled class (1-D logits)."""
    if logits.data.ndim != 1:
        raise ShapeError(f"cross_entropy needs 1-D logits, got {logits.data.shape}")
    k = logits.data.shape[0]
    if not (0 <= label < k):
        raise IndexError(f"label {label} out of range for {k} classes")
    shifted = logits.data - logits.data.max()
    lse = np.log(np.exp(shifted).sum())
    logp = shifted - lse
    out = np.asarray(-logp[label])

    def bw(g):
        if logits.requires_grad:
            grad = np.exp(logp)
            grad[label] -= 1.0
            logits.accumulate_grad(g * grad)

    return _result(out, (logits,), bw)


# ---------------------------------------------------------------------------
# initialization and regularization


def xavier_uniform_init(shape, rng: np.random.Generator) -> Tensor:
    """Uniform on [-a, a] with a = sqrt(6 / (fan_in + fan_out)); 2-D only."""
    if len(shape) != 2:
        raise ShapeError(f"xavier init needs a 2-D shape, got {tuple(shape)}")
    fan_in, fan_out = shape
    a = np.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-a, a, size=shape)
    return Tensor(data, requires_grad=True)


def dropout(a: Tensor, p: float, mode: str, rng: np.random.Generator | None = None) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or p == 0.0:
        return a
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    keep = rng.random(a.data.shape) >= p
    scale = 1.0 / (1.0 - p)
    out = a.data * keep * scale

    def bw(g):
        if a.requires_grad:
            a.accumulate_grad(g * keep * scale)

    return _result(out, (a,), bw)
