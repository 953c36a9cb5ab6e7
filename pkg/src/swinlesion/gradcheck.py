"""Central finite-difference oracle for the autodiff engine."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class CheckReport:
    name: str
    max_rel_err: float
    tol: float
    n_checked: int
    worst_index: Optional[tuple] = None
    analytic: Optional[float] = None
    numeric: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{status} {self.name}: max rel err {self.max_rel_err:.3e} "
            f"(tol {self.tol:.0e}, {self.n_checked} coords)"
        )


def rel_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps near-zero gradients from dominating."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def _coords(shape, max_coords, rng) -> list[tuple]:
    size = int(np.prod(shape))
    if max_coords is None or size <= max_coords:
        flat = range(size)
    else:
        flat = sorted(rng.choice(size, size=max_coords, replace=False))
    return [np.unravel_index(i, shape) for i in flat]


def numeric_partial(f: Callable[[], Tensor], x: Tensor, index: tuple, h: float) -> float:
    """(f(x + h e_i) - f(x - h e_i)) / 2h, restoring x afterwards."""
    orig = x.data[index]
    try:
        with no_grad():
            x.data[index] = orig + h
            fp = f().item()
            x.data[index] = orig - h
            fm = f().item()
    finally:
        x.data[index] = orig
    if not (np.isfinite(fp) and np.isfinite(fm)):
        raise FloatingPointError(f"non-finite function value at index {index}")
    return (fp - fm) / (2.0 * h)


def check_tensors(
    f: Callable[[], Tensor],
    tensors: Iterable[tuple[str, Tensor]],
    h: float = 1e-5,
    tol: float = 1e-4,
    max_coords: Optional[int] = None,
    seed: int = 0,
    floor: float = 1e-6,
) -> list[CheckReport]:
    """Compare autodiff gradients of the scalar ``f()`` against central differences.

    ``f`` takes no arguments and reads the tensors by closure; they are
    perturbed in place. One report per named tensor.
    """
    named = list(tensors)
    for _, t in named:
        t.grad = None
        t.requires_grad = True
    out = f()
    if out.size != 1:
        raise ValueError("f must return a scalar tensor")
    if not np.isfinite(out.data).all():
        raise FloatingPointError("non-finite function value")
    out.backward()
    rng = np.random.default_rng(seed)
    reports = []
    for name, t in named:
        grad = t.grad.copy()
        if not np.isfinite(grad).all():
            raise FloatingPointError(f"non-finite gradient for {name}")
        worst = CheckReport(name, 0.0, tol, 0)
        for idx in _coords(t.shape, max_coords, rng):
            num = numeric_partial(f, t, idx, h)
            err = rel_error(grad[idx], num, floor)
            worst.n_checked += 1
            if err > worst.max_rel_err or worst.worst_index is None:
                worst.max_rel_err = err
                worst.worst_index = tuple(int(i) for i in idx)
                worst.analytic, worst.numeric = float(grad[idx]), num
        reports.append(worst)
    return reports


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    tol: float = 1e-4,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> CheckReport:
    """Single-input convenience wrapper around :func:`check_tensors`."""
    return check_tensors(lambda: f(x), [("x", x)], h=h, tol=tol, max_coords=max_coords, seed=seed)[0]
