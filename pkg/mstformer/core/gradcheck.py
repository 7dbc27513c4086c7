"""Central finite differences as an oracle for the analytic gradients."""
from typing import Callable, Iterable, Optional, Union

import numpy as np

from mstformer.core.tensor import DTYPE, Tensor
from mstformer.exceptions import ContractError

ScalarFn = Callable[[Tensor], Union[Tensor, float]]

# Elements whose gradient magnitude is below this are compared absolutely.
RELATIVE_FLOOR = 1e-2


def _scalar(value: Union[Tensor, float]) -> float:
    return value.item() if isinstance(value, Tensor) else float(value)


def finite_diff_grad(
    f: ScalarFn,
    x: Tensor,
    eps: float = 1e-3,
    indices: Optional[Iterable[int]] = None,
) -> Tensor:
    """(f(x + eps·e_i) − f(x − eps·e_i)) / 2eps for each flat index i.

    When ``indices`` is given only those entries are evaluated; the rest stay 0.
    """
    if eps <= 0:
        raise ContractError(f"eps must be positive, got {eps}")
    base = x.data.reshape(-1)
    grad = np.zeros(base.size, dtype=DTYPE)
    positions = range(base.size) if indices is None else indices
    for i in positions:
        bumped = base.copy()
        bumped[i] = base[i] + eps
        upper = _scalar(f(Tensor(bumped.reshape(x.shape))))
        bumped[i] = base[i] - eps
        lower = _scalar(f(Tensor(bumped.reshape(x.shape))))
        grad[i] = (upper - lower) / (2.0 * eps)
    return Tensor(grad.reshape(x.shape))


def relative_error(
    analytic: np.ndarray,
    numeric: np.ndarray,
    floor: float = RELATIVE_FLOOR,
) -> float:
    """max_i |a_i − n_i| / max(|a_i|, |n_i|, floor)."""
    analytic = np.asarray(analytic, dtype=DTYPE)
    numeric = np.asarray(numeric, dtype=DTYPE)
    if analytic.shape != numeric.shape:
        raise ContractError(f"gradient shapes differ: {analytic.shape} vs {numeric.shape}")
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def analytic_grad(f: ScalarFn, x: Tensor) -> np.ndarray:
    """Gradient of ``f`` at ``x`` by reverse mode, on a fresh leaf."""
    leaf = Tensor(x.data, requires_grad=True)
    out = f(leaf)
    if not isinstance(out, Tensor):
        raise ContractError("analytic_grad needs f to return a Tensor")
    out.backward()
    return np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad


def check_gradient(
    f: ScalarFn,
    x: Tensor,
    eps: float = 1e-3,
    indices: Optional[Iterable[int]] = None,
) -> float:
    """Max relative error between reverse-mode and finite-difference gradients."""
    analytic = analytic_grad(f, x).reshape(-1)
    if indices is not None:
        indices = list(indices)
    numeric = finite_diff_grad(f, x, eps, indices).data.reshape(-1)
    if indices is not None:
        analytic, numeric = analytic[indices], numeric[indices]
    return relative_error(analytic, numeric)
