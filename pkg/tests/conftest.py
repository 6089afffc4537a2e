"""Shared test helpers: an independent central-finite-difference oracle."""

import numpy as np

from tdsv.tensor import Tensor, backward


def numeric_grad(make_loss, param: Tensor, h: float = 1e-5,
                 max_entries: int | None = None,
                 rng: np.random.Generator | None = None) -> dict[int, float]:
    """Central finite differences of make_loss() w.r.t. flat entries of param.

    make_loss must rebuild the computation from current parameter values
    and return a python float.  Returns {flat_index: derivative} for all
    entries, or a random sample of max_entries of them.
    """
    flat = param.data.reshape(-1)
    n = flat.size
    if max_entries is not None and n > max_entries:
        assert rng is not None
        idxs = rng.choice(n, size=max_entries, replace=False)
    else:
        idxs = np.arange(n)
    grads = {}
    for i in idxs:
        orig = flat[i]
        flat[i] = orig + h
        up = make_loss()
        flat[i] = orig - h
        down = make_loss()
        flat[i] = orig
        grads[int(i)] = (up - down) / (2.0 * h)
    return grads


def assert_grads_match(make_loss_tensor, params: dict[str, Tensor],
                       rel_tol: float = 1e-4, h: float = 1e-5,
                       max_entries: int = 24, seed: int = 0) -> None:
    """Backward through make_loss_tensor() and compare against the oracle."""
    for p in params.values():
        p.zero_grad()
    loss = make_loss_tensor()
    backward(loss)
    rng = np.random.default_rng(seed)

    def scalar_loss():
        return float(make_loss_tensor().data)

    for name, p in params.items():
        assert p.grad is not None, f"no gradient reached {name}"
        analytic = p.grad.reshape(-1)
        for i, num in numeric_grad(scalar_loss, p, h=h,
                                   max_entries=max_entries, rng=rng).items():
            denom = max(abs(analytic[i]), abs(num), 1e-8)
            rel = abs(analytic[i] - num) / denom
            assert rel < rel_tol, (
                f"{name}[{i}]: analytic {analytic[i]:.8g} vs numeric {num:.8g} "
                f"(rel err {rel:.3g})"
            )
