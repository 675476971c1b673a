"""Central finite-difference verification of analytic gradients.

Meaningful only in float64: at float32 the difference quotient noise
swamps the quantity being checked.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

# relative error denominator floor; differences below tol * this floor are
# treated as zero so finite-difference noise on dead coordinates cannot fail
REL_FLOOR = 1e-3


@dataclass
class ParamCheck:
    name: str
    max_rel_error: float
    checked_coords: int
    worst_coord: tuple
    analytic: float
    numeric: float


@dataclass
class GradCheckReport:
    tolerance: float
    step: float
    max_rel_error: float = 0.0
    passed: bool = True
    params: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "step": self.step,
            "max_rel_error": self.max_rel_error,
            "passed": self.passed,
            "params": [
                {
                    "name": p.name,
                    "max_rel_error": p.max_rel_error,
                    "checked_coords": p.checked_coords,
                    "worst_coord": [int(i) for i in p.worst_coord],
                    "analytic": p.analytic,
                    "numeric": p.numeric,
                }
                for p in self.params
            ],
        }


def _rel_error(a: float, n: float) -> float:
    # plain float so report fields stay JSON-serializable
    return float(abs(a - n) / max(abs(a), abs(n), REL_FLOOR))


def gradient_check(fn, params, step=1e-5, tolerance=1e-4, max_coords=None, rng=None) -> GradCheckReport:
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` is a no-argument closure over ``params`` (a list of
    (name, Tensor) pairs) returning a scalar Tensor. Every coordinate is
    checked unless ``max_coords`` caps the sample per parameter, in which
    case coordinates are drawn without replacement from ``rng``.
    Failures are reported, never raised.
    """
    params = list(params)
    for name, p in params:
        if p.dtype != np.float64:
            raise TypeError(f"gradient_check requires float64 parameters; {name!r} is {p.dtype}")
        p.zero_grad()

    out = fn()
    out.backward()
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params}

    report = GradCheckReport(tolerance=tolerance, step=step)
    for name, p in params:
        flat = p.data.reshape(-1)
        n_coords = flat.size
        if max_coords is not None and n_coords > max_coords:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n_coords, size=max_coords, replace=False)
        else:
            coords = np.arange(n_coords)

        worst = ParamCheck(name, 0.0, len(coords), (), 0.0, 0.0)
        a_flat = analytic[name].reshape(-1)
        for c in coords:
            keep = flat[c]
            flat[c] = keep + step
            f_plus = fn().item()
            flat[c] = keep - step
            f_minus = fn().item()
            flat[c] = keep
            numeric = (f_plus - f_minus) / (2.0 * step)
            err = _rel_error(a_flat[c], numeric)
            if err >= worst.max_rel_error:
                worst.max_rel_error = err
                worst.worst_coord = np.unravel_index(int(c), p.shape)
                worst.analytic = float(a_flat[c])
                worst.numeric = float(numeric)
        report.params.append(worst)
        report.max_rel_error = max(report.max_rel_error, worst.max_rel_error)

    report.passed = report.max_rel_error < tolerance
    return report
