"""Central-difference certification of backward rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .engine import ContractError, Var, backward, no_grad

__all__ = ["OracleInvalidError", "GradCheckEntry", "GradCheckReport", "grad_check", "numeric_grad", "rel_error"]


class OracleInvalidError(RuntimeError):
    """The finite-difference oracle cannot be trusted (e.g. ``f`` is not deterministic)."""


def rel_error(analytic, numeric) -> np.ndarray:
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))


@dataclass
class GradCheckEntry:
    name: str
    max_rel_err: float
    passed: bool

    def line(self) -> str:
        return f"{self.name}\t{self.max_rel_err:.3e}\t{'PASS' if self.passed else 'FAIL'}"


@dataclass
class GradCheckReport:
    tol: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def lines(self, prefix: str = "") -> list[str]:
        return [prefix + e.line() for e in self.entries]

    def __str__(self):
        return "\n".join(self.lines())


def _scalar(f: Callable[[], Var]) -> float:
    out = f()
    val = out.value if isinstance(out, Var) else np.asarray(out)
    if val.size != 1:
        raise ContractError(f"grad_check needs a scalar function, got shape {val.shape}")
    return float(val.reshape(()))


def numeric_grad(f: Callable[[], Var], p: Var, step: float = 1e-5) -> np.ndarray:
    """Central differences ``(f(p+h) - f(p-h)) / 2h`` for every element of ``p``."""
    flat = p.value.reshape(-1)
    if not np.shares_memory(flat, p.value):
        raise ContractError("parameter storage must be contiguous for in-place perturbation")
    out = np.zeros(flat.shape, dtype=np.float64)
    with no_grad():
        for idx in range(flat.size):
            orig = flat[idx]
            flat[idx] = orig + step
            fp = _scalar(f)
            flat[idx] = orig - step
            fm = _scalar(f)
            flat[idx] = orig
            out[idx] = (fp - fm) / (2.0 * step)
    return out.reshape(p.shape)


def grad_check(
    f: Callable[[], Var],
    params: Mapping[str, Var] | Sequence[Var],
    step: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``f`` against central differences.

    ``f`` is called with no arguments and must rebuild its graph from the
    current parameter values on every call.
    """
    if not isinstance(params, Mapping):
        params = {(p.name or f"param{i}"): p for i, p in enumerate(params)}
    for name, p in params.items():
        if p.value.dtype != np.float64:
            raise ContractError(f"grad_check needs float64 parameters; {name} is {p.value.dtype}")

    with no_grad():
        first, second = _scalar(f), _scalar(f)
    if first != second and not (np.isnan(first) and np.isnan(second)):
        raise OracleInvalidError(f"f is not deterministic: {first!r} != {second!r}")

    for p in params.values():
        p.requires_grad = True
        p.zero_grad()
    backward(f())

    report = GradCheckReport(tol=tol)
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.value)
        numeric = numeric_grad(f, p, step)
        err = float(rel_error(analytic, numeric).max()) if p.value.size else 0.0
        report.entries.append(GradCheckEntry(name, err, err < tol))
        p.zero_grad()
    return report
