"""Deterministic random-stream derivation for reproducible parallel runs.

Every random stream in the package is opened as ``stream(seed, *path)``, where
``path`` identifies the unit of work (a permutation replicate, a simulation
repetition, ...). Streams depend only on ``(seed, path)``, never on which
worker opens them or in what order, which is what makes thread counts
irrelevant to numeric output.
"""

import numpy as np

# Pinned generator, echoed by the CLI --version flag. Philox is counter-based,
# so derived streams are statistically independent without sequential jumps.
RNG_KIND = "philox4x64+seedseq"


def stream(seed: int, *path: int) -> np.random.Generator:
    """Open the random stream identified by ``(seed, path)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path: int) -> int:
    """Collapse ``(seed, path)`` into a fresh 63-bit integer seed."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in path))
    return int(ss.generate_state(1, np.uint64)[0] >> 1)
