"""
Numeric policy shared by every geometric primitive.

One frozen record holds every tolerance and guard epsilon. Library code
reads it through get_policy() at call time, so tests and the CLI can swap
it with numeric_policy(...) without threading it through signatures.
"""

from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Dict, Iterator

import torch


@dataclass(frozen=True)
class NumericPolicy:
    """Tolerances and guards for manifold computations (all float64)."""
    manifold_tol: float = 1e-6        # |<x,x> - beta| relative to max(1, |beta|)
    sphere_tol: float = 1e-9          # | ||sphere|| - sqrt|beta| |
    idempotence_tol: float = 1e-12    # project_to_q(project_to_q(x)) vs project_to_q(x)
    cut_locus_eps: float = 1e-9       # reject <b,p>/r^2 < -1 + eps
    norm_eps: float = 1e-12           # floor for norms before division
    time_guard: float = 1e-12         # smallest usable time-block norm
    log_eps: float = 1e-12            # floor for coupling coefficients before log
    dtype: torch.dtype = field(default=torch.float64)

    def to_dict(self) -> Dict[str, Any]:
        """Plain-type dictionary (dtype as its short name)."""
        data = asdict(self)
        data["dtype"] = str(self.dtype).replace("torch.", "")
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "NumericPolicy":
        data = dict(data)
        if "dtype" in data and isinstance(data["dtype"], str):
            data["dtype"] = getattr(torch, data["dtype"])
        return cls(**data)


_POLICY = NumericPolicy()


def get_policy() -> NumericPolicy:
    """Current numeric policy."""
    return _POLICY


def set_policy(policy: NumericPolicy) -> NumericPolicy:
    """Install a new numeric policy; returns the previous one."""
    global _POLICY
    previous = _POLICY
    _POLICY = policy
    return previous


@contextmanager
def numeric_policy(**overrides: Any) -> Iterator[NumericPolicy]:
    """
    Temporarily override fields of the numeric policy.

    Example:
        with numeric_policy(manifold_tol=1e-8):
            assert on_manifold(x).all()
    """
    previous = set_policy(replace(_POLICY, **overrides))
    try:
        yield _POLICY
    finally:
        set_policy(previous)
