"""Deterministic seed derivation.

Every source of randomness in the package flows through an explicit integer
seed; children are derived by hashing the parent seed together with a string
or integer tag, so results never depend on call order or worker scheduling.
"""

import hashlib

import numpy as np

_UINT32_MAX = 2**32


def derive_seed(*parts) -> int:
    """Hash a tuple of ints/strings into a seed in [0, 2**32).

    Stable across platforms and processes (sha256, not ``hash()``).
    """
    text = "\x1f".join(repr(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") % _UINT32_MAX


def rng_from(*parts) -> np.random.Generator:
    """A fresh Generator seeded from the derived seed of ``parts``."""
    return np.random.default_rng(derive_seed(*parts))
