"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

import dataclasses
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .tensor import Tensor, backward, no_grad


@dataclasses.dataclass
class GradCheckReport:
    max_rel_error: float
    mean_rel_error: float
    checked: int
    tolerance: float
    nonfinite: bool = False
    worst: str = ""

    @property
    def passed(self) -> bool:
        return not self.nonfinite and self.max_rel_error < self.tolerance

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = " (non-finite gradient)" if self.nonfinite else ""
        return (
            f"{status}: max rel err {self.max_rel_error:.3e}, mean {self.mean_rel_error:.3e} "
            f"over {self.checked} entries (tol {self.tolerance:g}){extra}"
        )


def grad_check(
    f: Callable[..., Tensor],
    inputs: Union[Tensor, Sequence[Tensor]],
    step: float = 1e-5,
    tolerance: float = 1e-6,
    max_entries: Optional[int] = None,
    seed: int = 0,
    floor: float = 1e-6,
    names: Optional[Sequence[str]] = None,
) -> GradCheckReport:
    """Compare autodiff gradients of scalar `f(*inputs)` with central differences.

    Relative error per entry is |analytic - numeric| / max(|analytic|, |numeric|, floor).
    With `max_entries`, each input contributes at most that many randomly
    chosen entries (always at least one).
    """
    if isinstance(inputs, Tensor):
        inputs = [inputs]
    inputs = list(inputs)
    names = list(names) if names is not None else [f"input{i}" for i in range(len(inputs))]
    for t in inputs:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None

    loss = f(*inputs)
    backward(loss, inputs)
    analytic = [t.grad.copy() for t in inputs]

    rng = np.random.default_rng(seed)
    errors: list[float] = []
    worst, worst_err = "", -1.0
    nonfinite = False
    for name, t, grad in zip(names, inputs, analytic):
        flat = t.data.reshape(-1)
        if max_entries is None or flat.size <= max_entries:
            picks = np.arange(flat.size)
        else:
            picks = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        gflat = grad.reshape(-1)
        for i in picks:
            orig = flat[i]
            with no_grad():
                flat[i] = orig + step
                up = float(f(*inputs).data)
                flat[i] = orig - step
                down = float(f(*inputs).data)
            flat[i] = orig
            numeric = (up - down) / (2.0 * step)
            a = float(gflat[i])
            if not (np.isfinite(a) and np.isfinite(numeric)):
                nonfinite = True
                continue
            err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
            errors.append(err)
            if err > worst_err:
                worst, worst_err = f"{name}[{int(i)}]", err

    return GradCheckReport(
        max_rel_error=float(max(errors)) if errors else float("inf"),
        mean_rel_error=float(np.mean(errors)) if errors else float("inf"),
        checked=len(errors),
        tolerance=tolerance,
        nonfinite=nonfinite,
        worst=worst,
    )
