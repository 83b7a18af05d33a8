"""
Deterministic, platform-independent random streams

Every stochastic decision is keyed by (seed, *parts) so results never depend
on call order or on the process that produced them.
"""
import hashlib
from typing import Union

import numpy as np

KeyPart = Union[str, int]


def stable_hash(*parts: KeyPart) -> int:
    """64-bit blake2b digest of the parts, independent of PYTHONHASHSEED"""
    digest = hashlib.blake2b(digest_size=8)
    for part in parts:
        token = f"{type(part).__name__}:{part}".encode('utf-8')
        digest.update(len(token).to_bytes(4, 'little'))
        digest.update(token)
    return int.from_bytes(digest.digest(), 'little')


def keyed_rng(seed: int, *parts: KeyPart) -> np.random.Generator:
    """Philox generator keyed by the seed and a stream label"""
    key = np.array([stable_hash('seed', int(seed)), stable_hash(*parts)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
