"""
Named random streams derived from one run seed.

Each consumer of randomness (encoder init, routing params, dropout,
shuffling, data splits) draws from its own stream, so changing one
component of an ablation leaves the draws of every other component alone.
"""

import hashlib
from typing import Tuple

import numpy as np
import torch

STREAMS: Tuple[str, ...] = ("encoder", "routing", "classifier", "dropout", "shuffle", "data")


def derive_seed(seed: int, stream: str) -> int:
    """
    Derive a 63-bit seed for a named stream.

    Uses a digest of "seed:stream" so the mapping is stable across
    processes and Python versions (unlike hash()).
    """
    if stream not in STREAMS:
        raise ValueError(f"Unknown random stream '{stream}'; expected one of {STREAMS}")
    digest = hashlib.sha256(f"{int(seed)}:{stream}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & ((1 << 63) - 1)


def torch_generator(seed: int, stream: str) -> torch.Generator:
    """CPU torch generator seeded for a named stream."""
    generator = torch.Generator(device="cpu")
    generator.manual_seed(derive_seed(seed, stream))
    return generator


def numpy_rng(seed: int, stream: str) -> np.random.Generator:
    """numpy Generator seeded for a named stream."""
    return np.random.default_rng(derive_seed(seed, stream))
