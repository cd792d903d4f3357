"""Input gradients and central finite-difference checks."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .functional import gather_logits
from .tensor import Tensor


def input_gradient(logit_fn: Callable[[Tensor], Tensor], x: np.ndarray, target_logit_index) -> np.ndarray:
    """Gradient of the selected logit(s) with respect to the input.

    ``logit_fn`` maps a [..., C, L] tensor to logits [..., M]; the target
    index broadcasts over the leading logit axes and the selected logits are
    summed. The caller is responsible for freezing model parameters (see
    ``nn.frozen``) so that their gradients are left untouched.
    """
    xt = Tensor(np.array(x), requires_grad=True)
    logits = logit_fn(xt)
    gather_logits(logits, target_logit_index).backward()
    if xt.grad is None:
        return np.zeros_like(xt.data)
    return xt.grad


def numeric_gradient(f: Callable[[], float], arr: np.ndarray, h: float) -> np.ndarray:
    """Central differences of scalar ``f()`` with respect to ``arr`` (perturbed in place)."""
    grad = np.zeros(arr.shape, dtype=np.float64)
    flat = arr.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``, zero when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    scale = max(np.linalg.norm(a), np.linalg.norm(n))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / scale)
