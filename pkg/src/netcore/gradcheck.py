from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Tuple

import numpy as np

from .tensor import RngState, Tensor

LossFn = Callable[[], Tuple[float, Mapping[str, Tensor]]]


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: Optional[str] = None
    worst_index: Optional[Tuple[int, ...]] = None
    analytic: float = 0.0
    numeric: float = 0.0
    n_checked: int = 0

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def relative_error(analytic: float, numeric: float, atol: float = 0.0) -> float:
    difference = abs(analytic - numeric)
    if difference <= atol:
        return 0.0
    return difference / max(abs(analytic), abs(numeric), 1e-12)


def finite_diff_check(loss_fn: LossFn, params: Mapping[str, Tensor], epsilon: float = 1e-6,
                      max_coords: Optional[int] = None, rng: Optional[RngState] = None,
                      atol: float = 0.0) -> GradCheckResult:
    """
    Compare analytic gradients against central differences.

    Args:
        loss_fn: Deterministic callable returning (loss, analytic grads by name)
            evaluated at the current contents of ``params``
        params: Arrays perturbed in place (and restored) during the check
        epsilon: Central-difference step, within [1e-8, 1e-4]
        max_coords: Coordinates sampled per parameter; None checks all of them
        rng: Stream used for sampling coordinates
        atol: Absolute discrepancy treated as exact agreement

    Returns:
        The worst coordinate found, with relative error
        |a - n| / max(|a|, |n|, 1e-12)
    """
    if not 1e-8 <= epsilon <= 1e-4:
        raise ValueError(f"epsilon must lie in [1e-8, 1e-4], got {epsilon}")
    rng = rng or RngState(0)

    _, analytic_grads = loss_fn()
    analytic_grads = {name: np.array(grad, dtype=np.float64, copy=True)
                      for name, grad in analytic_grads.items()}
    result = GradCheckResult(max_rel_error=0.0)

    for name in sorted(params):
        if name not in analytic_grads:
            continue
        param = params[name]
        flat_indices = np.arange(param.size)
        if max_coords is not None and param.size > max_coords:
            flat_indices = np.sort(rng.generator.choice(param.size, max_coords, replace=False))
        for flat in flat_indices:
            index = np.unravel_index(flat, param.shape)
            original = param[index]
            param[index] = original + epsilon
            loss_plus, _ = loss_fn()
            param[index] = original - epsilon
            loss_minus, _ = loss_fn()
            param[index] = original

            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            analytic = float(analytic_grads[name][index])
            error = relative_error(analytic, numeric, atol)
            result.n_checked += 1
            if result.worst_param is None or error > result.max_rel_error:
                result.max_rel_error = error
                result.worst_param = name
                result.worst_index = tuple(int(i) for i in index)
                result.analytic = analytic
                result.numeric = numeric
    return result
