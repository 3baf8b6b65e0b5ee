"""Central-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError
from .tensor import Tensor, backward


def finite_diff_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-6,
    grad_hook: Callable[[list[np.ndarray]], list[np.ndarray]] | None = None,
) -> float:
    """Worst relative discrepancy between analytic and central-difference gradients.

    ``f`` is re-evaluated after each in-place perturbation of a parameter
    coordinate, so it must read the current ``params`` on every call. Parameters
    must be 64-bit. The discrepancy per coordinate is
    ``|a - n| / max(1, |a|, |n|)``.

    ``grad_hook`` may rewrite the analytic gradients before comparison; it exists
    so tests can confirm that a corrupted gradient is detected.
    """
    if not h > 0:
        raise ContractError(f"step size h must be positive, got {h}")
    for p in params:
        if p.dtype != np.float64:
            raise ContractError("finite-difference checks require float64 parameters")
        p.requires_grad = True
        p.grad = None

    loss = f()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    if grad_hook is not None:
        analytic = grad_hook(analytic)

    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            num = (fp - fm) / (2.0 * h)
            err = abs(a_flat[i] - num) / max(1.0, abs(a_flat[i]), abs(num))
            worst = max(worst, err)
    return worst
