"""Named, derivable random streams.

Every stochastic step in the package draws from a generator obtained via
``derive_rng(seed, *labels)``.  The same (seed, labels) pair always yields
the same stream, and distinct labels yield independent streams, so
experiment stages can be rerun or parallelized without replaying each
other's draws.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_entropy(label: object) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label) & (2**63 - 1)
    digest = hashlib.sha256(str(label).encode("utf-8")).hexdigest()
    return int(digest[:16], 16)


def derive_rng(seed: int, *labels: object) -> np.random.Generator:
    """Generator for the stream named by ``labels`` under a global seed."""
    entropy = [int(seed) & (2**63 - 1)] + [_label_entropy(x) for x in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))
