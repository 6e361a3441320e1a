"""Named derivation of child seeds from one master seed."""

import hashlib

import numpy as np


def derive_seed(master: int, stage: str, index: int = 0) -> int:
    """Derive a reproducible 63-bit seed from a master seed.

    The stage name and realization index are hashed together with the master
    seed, so every stage of a pipeline draws from its own stream no matter in
    which order (or on which worker) the stages run.

    Args:
        master: The master seed of the run.
        stage: Name of the consuming stage (e.g. "synth", "ssa").
        index: Realization or candidate index.

    Returns:
        A non-negative integer seed.
    """
    digest = hashlib.blake2b(
        f"{master}:{stage}:{index}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big") >> 1


def make_rng(master: int, stage: str, index: int = 0) -> np.random.Generator:
    """Return a numpy Generator seeded by :func:`derive_seed`."""
    return np.random.default_rng(derive_seed(master, stage, index))
