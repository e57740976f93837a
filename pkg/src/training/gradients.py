"""
Gradient computation and the finite-difference gradient contract.

gradient() is reverse-mode differentiation through torch.autograd with a
finiteness check on every result. finite_difference_check() compares
those gradients with central differences on a random sample of
coordinates and reports the fraction that agree.
"""

import logging
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import torch

from src.utils.errors import NonFiniteGradientError

logger = logging.getLogger(__name__)

ParamsLike = Union[Mapping[str, torch.Tensor], Sequence[torch.Tensor]]


def _named(params: ParamsLike) -> Dict[str, torch.Tensor]:
    if isinstance(params, Mapping):
        return dict(params)
    return {f"param_{i}": p for i, p in enumerate(params)}


def _evaluate(fn: Callable, batch: Any) -> torch.Tensor:
    out = fn() if batch is None else fn(batch)
    if not isinstance(out, torch.Tensor) or out.numel() != 1:
        raise ValueError("the differentiated function must return a scalar tensor")
    return out.reshape(())


def gradient(
    fn: Callable,
    params: ParamsLike,
    batch: Any = None,
    detect_anomaly: bool = False,
) -> Dict[str, torch.Tensor]:
    """
    Gradients of a scalar function with respect to each parameter.

    Args:
        fn: fn() or fn(batch) returning a scalar tensor
        params: Tensors requiring grad, as a name mapping or a sequence
        batch: Optional argument passed to fn
        detect_anomaly: Run under torch.autograd.detect_anomaly so the
            failing backward operation is named in the error

    Returns:
        name -> gradient (zeros for parameters fn does not depend on)

    Raises:
        NonFiniteGradientError: a gradient (or the value) is NaN or Inf
    """
    named = _named(params)
    tensors = list(named.values())
    try:
        with torch.autograd.detect_anomaly(check_nan=True) if detect_anomaly else nullcontext():
            value = _evaluate(fn, batch)
            if not bool(torch.isfinite(value)):
                raise NonFiniteGradientError(f"function value is {float(value)}", name="forward")
            if value.requires_grad:
                grads = torch.autograd.grad(value, tensors, allow_unused=True)
            else:
                grads = (None,) * len(tensors)
    except RuntimeError as e:
        if "nan" in str(e).lower():
            raise NonFiniteGradientError(str(e), name="backward") from e
        raise

    result: Dict[str, torch.Tensor] = {}
    for (name, p), g in zip(named.items(), grads):
        g = torch.zeros_like(p) if g is None else g
        if not bool(torch.isfinite(g).all()):
            raise NonFiniteGradientError(f"non-finite gradient for '{name}'", name=name)
        result[name] = g
    return result


# ============================================================================
# Finite Differences
# ============================================================================

@dataclass
class GradientCheckResult:
    """Outcome of a sampled central-difference check."""
    checked: int
    passed: int
    skipped: int
    max_relative_error: float
    fraction_required: float
    failures: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def fraction_passed(self) -> float:
        return self.passed / self.checked if self.checked else 1.0

    @property
    def ok(self) -> bool:
        return self.fraction_passed >= self.fraction_required

    def to_dict(self) -> Dict[str, Any]:
        return {
            "checked": self.checked,
            "passed": self.passed,
            "skipped": self.skipped,
            "fraction_passed": self.fraction_passed,
            "max_relative_error": self.max_relative_error,
            "ok": self.ok,
        }


def finite_difference_check(
    fn: Callable,
    params: ParamsLike,
    batch: Any = None,
    h: float = 1e-5,
    rtol: float = 1e-4,
    fraction: float = 0.95,
    min_magnitude: float = 1e-8,
    samples: int = 64,
    rng: Optional[np.random.Generator] = None,
) -> GradientCheckResult:
    """
    Compare analytic gradients with central differences.

    A sampled coordinate passes when
    |analytic - numeric| <= rtol * max(|analytic|, |numeric|).
    Coordinates with |analytic| < min_magnitude are skipped.

    Args:
        fn: Scalar function of the parameters (evaluated deterministically)
        params: Parameters to perturb in place (restored afterwards)
        h: Central-difference step
        rtol: Relative tolerance per coordinate
        fraction: Fraction of checked coordinates that must pass
        samples: Coordinates sampled (all coordinates if fewer exist)
        rng: Sampling generator
    """
    rng = rng or np.random.default_rng(0)
    named = _named(params)
    analytic = gradient(fn, named, batch)

    coordinates = [(name, i) for name, p in named.items() for i in range(p.numel())]
    if len(coordinates) > samples:
        picks = rng.choice(len(coordinates), size=samples, replace=False)
        coordinates = [coordinates[int(k)] for k in np.sort(picks)]

    checked = passed = skipped = 0
    worst = 0.0
    failures: List[Dict[str, Any]] = []
    with torch.no_grad():
        for name, index in coordinates:
            a = float(analytic[name].reshape(-1)[index])
            if abs(a) < min_magnitude:
                skipped += 1
                continue
            flat = named[name].view(-1)
            original = float(flat[index])
            flat[index] = original + h
            plus = float(_evaluate(fn, batch))
            flat[index] = original - h
            minus = float(_evaluate(fn, batch))
            flat[index] = original
            numeric = (plus - minus) / (2.0 * h)

            rel = abs(a - numeric) / max(abs(a), abs(numeric))
            worst = max(worst, rel)
            checked += 1
            if rel <= rtol:
                passed += 1
            else:
                failures.append({"param": name, "index": index, "analytic": a, "numeric": numeric, "rel": rel})

    result = GradientCheckResult(checked, passed, skipped, worst, fraction, failures)
    logger.debug("Finite-difference check: %s", result.to_dict())
    return result
