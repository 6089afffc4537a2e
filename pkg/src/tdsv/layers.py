"""Sequence-model building blocks: linear maps, LSTMs, pooling.

The LSTM recurrence is a single differentiable operation with a
hand-derived backward pass (gate order i, f, g, o), which keeps the
per-utterance graph small.  Everything here is checked against finite
differences in the test suite.
"""

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Linear:
    """Affine map y = x @ W + b with Xavier-uniform W and zero b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.W = T.xavier_uniform_init((in_dim, out_dim), rng)
        self.b = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.add(T.matmul(x, self.W), self.b)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W": self.W, f"{prefix}.b": self.b}


class LstmLayer:
    """Unidirectional LSTM over a (T, input) sequence.

    Gates are packed [i, f, g, o] along the last axis of the weight
    matrices.  The forget-gate bias starts at 1.0.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.W_ih = T.xavier_uniform_init((input_size, 4 * hidden_size), rng)
        self.W_hh = T.xavier_uniform_init((hidden_size, 4 * hidden_size), rng)
        b = np.zeros(4 * hidden_size)
        b[hidden_size:2 * hidden_size] = 1.0
        self.b = Tensor(b, requires_grad=True)

    def __call__(self, x: Tensor, h0: np.ndarray | None = None,
                 c0: np.ndarray | None = None) -> Tensor:
        return lstm_forward(self, x, h0, c0)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.W_ih": self.W_ih, f"{prefix}.W_hh": self.W_hh,
                f"{prefix}.b": self.b}


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_forward(layer: LstmLayer, x: Tensor, h0: np.ndarray | None = None,
                 c0: np.ndarray | None = None) -> Tensor:
    """Run the recurrence; returns hidden states of shape (T, hidden)."""
    if x.data.ndim != 2 or x.data.shape[1] != layer.input_size:
        raise T.ShapeError(
            f"lstm expects (T, {layer.input_size}) input, got {x.data.shape}"
        )
    steps = x.data.shape[0]
    if steps == 0:
        raise T.ShapeError("empty input sequence")
    H = layer.hidden_size
    W_ih, W_hh, b = layer.W_ih, layer.W_hh, layer.b

    x_proj = x.data @ W_ih.data + b.data
    dt = x_proj.dtype
    h_prev = np.zeros(H, dtype=dt) if h0 is None else np.asarray(h0, dtype=dt)
    c_prev = np.zeros(H, dtype=dt) if c0 is None else np.asarray(c0, dtype=dt)
    gates = np.empty((steps, 4 * H), dtype=dt)   # post-activation i, f, g, o
    cells = np.empty((steps, H), dtype=dt)
    tanh_c = np.empty((steps, H), dtype=dt)
    hidden = np.empty((steps, H), dtype=dt)
    h_in = np.empty((steps, H), dtype=dt)        # h_{t-1} fed to each step

    for t in range(steps):
        h_in[t] = h_prev
        a = x_proj[t] + h_prev @ W_hh.data
        i = _sigmoid(a[:H])
        f = _sigmoid(a[H:2 * H])
        g = np.tanh(a[2 * H:3 * H])
        o = _sigmoid(a[3 * H:])
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        gates[t, :H], gates[t, H:2 * H] = i, f
        gates[t, 2 * H:3 * H], gates[t, 3 * H:] = g, o
        cells[t] = c
        tanh_c[t] = tc
        hidden[t] = h
        h_prev, c_prev = h, c

    c_in_first = np.zeros(H, dtype=dt) if c0 is None else np.asarray(c0, dtype=dt)

    def bw(grad_h):
        da = np.empty((steps, 4 * H), dtype=dt)
        dh_carry = np.zeros(H, dtype=dt)
        dc_carry = np.zeros(H, dtype=dt)
        for t in range(steps - 1, -1, -1):
            i = gates[t, :H]
            f = gates[t, H:2 * H]
            g = gates[t, 2 * H:3 * H]
            o = gates[t, 3 * H:]
            c_before = cells[t - 1] if t > 0 else c_in_first
            dh = grad_h[t] + dh_carry
            dc = dh * o * (1.0 - tanh_c[t] ** 2) + dc_carry
            da[t, 3 * H:] = dh * tanh_c[t] * o * (1.0 - o)
            da[t, :H] = dc * g * i * (1.0 - i)
            da[t, 2 * H:3 * H] = dc * i * (1.0 - g * g)
            da[t, H:2 * H] = dc * c_before * f * (1.0 - f)
            dc_carry = dc * f
            dh_carry = da[t] @ W_hh.data.T
        if W_ih.requires_grad:
            W_ih.accumulate_grad(x.data.T @ da)
        if W_hh.requires_grad:
            W_hh.accumulate_grad(h_in.T @ da)
        if b.requires_grad:
            b.accumulate_grad(da.sum(axis=0))
        if x.requires_grad:
            x.accumulate_grad(da @ W_ih.data.T)

    return T._result(hidden, (x, W_ih, W_hh, b), bw)


class BlstmLayer:
    """Independent forward and time-reversed LSTMs, outputs concatenated."""

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.hidden_size = hidden_size
        self.fw = LstmLayer(input_size, hidden_size, rng)
        self.bw = LstmLayer(input_size, hidden_size, rng)

    def __call__(self, x: Tensor) -> Tensor:
        forward_out = self.fw(x)
        backward_out = T.flip(self.bw(T.flip(x, axis=0)), axis=0)
        return T.concat([forward_out, backward_out], axis=1)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {**self.fw.parameters(f"{prefix}.fw"),
                **self.bw.parameters(f"{prefix}.bw")}


class PreNet:
    """Two linear layers with ReLU and dropout after each."""

    def __init__(self, in_dim: int, hidden_dim: int, dropout_p: float,
                 rng: np.random.Generator):
        self.fc1 = Linear(in_dim, hidden_dim, rng)
        self.fc2 = Linear(hidden_dim, hidden_dim, rng)
        self.dropout_p = dropout_p

    def __call__(self, x: Tensor, mode: str = "eval",
                 rng: np.random.Generator | None = None) -> Tensor:
        h = T.dropout(T.relu(self.fc1(x)), self.dropout_p, mode, rng)
        return T.dropout(T.relu(self.fc2(h)), self.dropout_p, mode, rng)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {**self.fc1.parameters(f"{prefix}.fc1"),
                **self.fc2.parameters(f"{prefix}.fc2")}


def residual_stack_forward(layers: list[LstmLayer], x: Tensor) -> list[Tensor]:
    """Stacked LSTMs with identity skips; returns each layer's hidden states.

    Layer k+1 consumes h_k + input_k, so every layer (and the pre-net
    feeding layer 1) must share the hidden size.
    """
    states = []
    current = x
    for layer in layers:
        h = layer(current)
        states.append(h)
        current = T.add(h, current)
    return states


VARIANCE_FLOOR = 1e-10


def stat_pool(x: Tensor) -> Tensor:
    """Concatenated per-dimension mean and population std over time."""
    if x.data.ndim != 2 or x.data.shape[0] < 1:
        raise T.ShapeError(f"stat_pool needs a non-empty (T, D) input, got {x.data.shape}")
    mean = T.tmean(x, axis=0)
    centered = T.sub(x, mean)
    var = T.tmean(T.mul(centered, centered), axis=0)
    std = T.sqrt(T.clamp_min(var, VARIANCE_FLOOR))
    return T.concat([mean, std], axis=0)


def masked_stat_pool(x: Tensor, mask: np.ndarray) -> Tensor:
    """stat_pool over the frames a boolean mask selects."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (x.data.shape[0],):
        raise T.ShapeError(
            f"mask length {mask.shape} does not match {x.data.shape[0]} frames"
        )
    if not mask.any():
        raise ValueError("no speech frames: mask selects nothing")
    return stat_pool(T.take_rows(x, np.nonzero(mask)[0]))
