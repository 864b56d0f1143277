"""
Seeded random streams.

Every stochastic routine takes an integer seed and derives independent
Philox streams keyed by a tuple of integers (for example
(trajectory_index,) or (step, realization)). The same seed and key always
give the same stream regardless of thread count or batching.
"""

# pylint: disable=C0103
import numpy as np


def stream(seed: int, *keys: int) -> np.random.Generator:
    """
    Return the counter-based generator for seed and key path.

    Args:
        seed:   Non-negative experiment seed.
        keys:   Non-negative integers identifying the stream.
    Returns:
        A numpy Generator backed by Philox.
    Raises:
        ValueError:  If the seed or a key is negative.
    """
    if seed is None or int(seed) < 0:
        raise ValueError(f"Seed must be a non-negative integer, got {seed}.")
    if any(int(k) < 0 for k in keys):
        raise ValueError(f"Stream keys must be non-negative, got {keys}.")
    sequence = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(sequence))


def child_seed(seed: int, *keys: int) -> int:
    """Derive a new integer seed for the key path (used to hand seeds to sub-jobs)."""
    return int(stream(seed, *keys).integers(0, 2**62))
