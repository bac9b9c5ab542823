"""Small shared helpers: seeding, hashing, float formatting."""

import hashlib

import numpy as np


def stable_seed(*parts) -> int:
    """Derive a 63-bit seed from arbitrary string-able parts.

    Uses sha256 so the derivation is stable across processes and Python
    versions (the builtin hash() is salted per process).
    """
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def rng_from(*parts) -> np.random.Generator:
    return np.random.default_rng(stable_seed(*parts))


def fmt_real(x: float) -> str:
    """Deterministic 17-significant-digit formatting: round-trips float64."""
    return f"{float(x):.17g}"


def sha256_file(path, chunk=1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        while True:
            block = f.read(chunk)
            if not block:
                break
            h.update(block)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
