"""Reproducible random streams built on counter-based Philox keys.

Every stochastic component derives its generator from (seed, domain, index),
so sample i of a dataset, or step t of a training run, depends only on those
integers and never on call order.  Philox4x64 is counter-based and its output
stream is stable across numpy versions and platforms.
"""

import numpy as np

# Domain tags keep independent uses of the same user seed from colliding.
DOMAIN_SAMPLE = 1  # dataset sample i
DOMAIN_INIT_POS = 2  # positioning-net weight init
DOMAIN_INIT_BF = 3  # beamforming-net weight init
DOMAIN_BATCH = 4  # training batch selection at step t
DOMAIN_ROLLOUT = 5  # action sampling at step t
DOMAIN_MISC = 6  # harness-level draws (random positioning etc.)

_INDEX_BITS = 48


def derived_rng(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Generator keyed by (seed, domain, index); independent across keys."""
    if not 0 <= index < (1 << _INDEX_BITS):
        raise ValueError(f"rng index {index} out of range")
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64((domain << _INDEX_BITS) + index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
