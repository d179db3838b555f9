"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckEntry:
    param: str
    index: tuple[int, ...]
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    tolerance: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        return max((e.rel_error for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def worst(self) -> GradCheckEntry | None:
        return max(self.entries, key=lambda e: e.rel_error, default=None)

    def summary(self) -> str:
        state = "pass" if self.passed else "FAIL"
        w = self.worst()
        where = f" worst={w.param}{list(w.index)}" if w else ""
        return (
            f"gradcheck {state}: max_rel_error={self.max_rel_error:.3e} "
            f"tolerance={self.tolerance:.1e} checked={len(self.entries)}{where}"
        )


def grad_check(
    function: Callable[[Mapping[str, Tensor]], Tensor],
    params: Mapping[str, Tensor],
    step: float = 1e-5,
    tolerance: float = 1e-4,
    samples_per_param: int | None = None,
    rng: np.random.Generator | None = None,
    analytic: Mapping[str, np.ndarray] | None = None,
) -> GradCheckReport:
    """Compare analytic gradients of a scalar function against central differences.

    `function` maps the parameter dict to a scalar Tensor and is re-run for
    every probe, so keep inputs small.  When `samples_per_param` is set only
    that many entries of each parameter are probed (all entries otherwise).
    `analytic` overrides the gradients computed by backward() — useful as a
    negative control.

    Entries where both gradients are below 1e-8 in magnitude count as exact
    agreement: central differences carry no signal there.
    """
    if step <= 0:
        raise ValueError(f"grad_check: step must be positive, got {step}")
    if analytic is None:
        root = function(params)
        root.backward()
        analytic = {name: p.grad.copy() for name, p in params.items()}

    report = GradCheckReport(tolerance=tolerance)
    for name, p in params.items():
        flat = p.values.reshape(-1)
        n = flat.size
        if samples_per_param is not None and samples_per_param < n:
            if rng is None:
                rng = np.random.default_rng(0)
            picks = rng.choice(n, size=samples_per_param, replace=False)
        else:
            picks = np.arange(n)
        for k in picks:
            k = int(k)
            orig = flat[k]
            flat[k] = orig + step
            f_plus = function(params).item()
            flat[k] = orig - step
            f_minus = function(params).item()
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * step)
            a = float(analytic[name].reshape(-1)[k])
            denom = max(abs(a), abs(numeric))
            if denom < 1e-8:
                rel = 0.0
            else:
                rel = abs(a - numeric) / denom
            idx = np.unravel_index(k, p.shape) if p.shape else ()
            report.entries.append(
                GradCheckEntry(name, tuple(int(i) for i in idx), a, numeric, rel)
            )
    return report
