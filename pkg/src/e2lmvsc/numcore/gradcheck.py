"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import no_grad

FD_STEP = 1e-5
REL_FLOOR = 1e-8


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    argmax: tuple
    n_checked: int


@dataclass
class GradReport:
    tol: float
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.max_rel_error <= self.tol for c in self.checks)

    @property
    def max_rel_error(self) -> float:
        return max((c.max_rel_error for c in self.checks), default=0.0)

    def worst(self):
        return max(self.checks, key=lambda c: c.max_rel_error, default=None)

    def __str__(self):
        lines = [f"grad_check tol={self.tol:g} pass={self.passed}"]
        for c in self.checks:
            lines.append(f"  {c.name:<28} max_rel={c.max_rel_error:.3e} at {c.argmax} ({c.n_checked} coords)")
        return "\n".join(lines)


def relative_error(a, b):
    return abs(a - b) / max(REL_FLOOR, abs(a), abs(b))


def _named(params):
    if hasattr(params, "named_params"):
        return list(params.named_params())
    if isinstance(params, dict):
        return list(params.items())
    return [(p.name or f"p{i}", p) for i, p in enumerate(params)]


def grad_check(loss, params, rng, tol=1e-4, n_coords=25, h=FD_STEP) -> GradReport:
    """Compare reverse-mode gradients of ``loss()`` with central differences.

    ``loss`` is a zero-argument callable returning a scalar Tensor built from
    the current values of ``params`` (a dict, a sequence of Param, or an
    object exposing ``named_params()``). It must be deterministic: any noise
    has to be frozen by the caller. Up to ``n_coords`` coordinates per
    tensor are sampled without replacement (all of them for small tensors).
    """
    named = _named(params)
    for _, p in named:
        p.zero_grad()
    loss().backward()
    analytic = {name: p.grad.copy() for name, p in named}
    for _, p in named:
        p.zero_grad()

    report = GradReport(tol=tol)
    for name, p in named:
        size = p.value.size
        k = min(size, n_coords)
        flat_idx = rng.generator.choice(size, size=k, replace=False) if k < size else np.arange(size)
        worst, where = 0.0, ()
        for fi in np.sort(flat_idx):
            idx = np.unravel_index(int(fi), p.value.shape)
            orig = p.value[idx]
            with no_grad():
                p.value[idx] = orig + h
                f_plus = float(loss())
                p.value[idx] = orig - h
                f_minus = float(loss())
            p.value[idx] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            err = relative_error(analytic[name][idx], numeric)
            if err > worst or not where:
                worst, where = err, tuple(int(i) for i in idx)
        report.checks.append(ParamCheck(name, worst, where, k))
    return report
