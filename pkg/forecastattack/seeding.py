"""Deterministic sub-seed derivation from one master seed."""
import zlib

import numpy as np


def _label_key(label):
    return zlib.crc32(str(label).encode("utf-8"))


def derive_seed(master, *labels):
    """Derive a 32-bit seed for the component named by ``labels``.

    The derivation depends only on the master seed and the labels, so adding a
    new component never changes the seeds handed to existing ones.
    """
    sequence = np.random.SeedSequence(int(master), spawn_key=tuple(_label_key(l) for l in labels))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def derive_rng(master, *labels):
    return np.random.default_rng(derive_seed(master, *labels))
