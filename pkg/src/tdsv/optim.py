"""First-order optimizers and the decoder learning-rate schedule."""

import numpy as np

from .tensor import ShapeError, Tensor


def lr_schedule(epoch: int, base_lr: float, anneal_after: int = 3, factor: float = 0.5) -> float:
    """Base rate through epoch ``anneal_after``, one-time anneal afterwards."""
    if epoch < 1:
        raise ValueError(f"epoch must be >= 1, got {epoch}")
    return base_lr if epoch <= anneal_after else base_lr * factor


class Adam:
    """Bias-corrected adaptive-moment optimizer over named parameters."""

    def __init__(self, params: dict[str, Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = dict(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.data.shape}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class Sgd:
    """Plain gradient descent, available for ablation."""

    def __init__(self, params: dict[str, Tensor], lr: float):
        self.params = dict(params)
        self.lr = lr
        self.step_count = 0

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        self.step_count += 1
        for p in self.params.values():
            if p.grad is not None:
                p.data -= self.lr * p.grad
