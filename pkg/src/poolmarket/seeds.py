"""Deterministic derivation of per-purpose random seeds.

Every random stream in a run is keyed off the master seed plus a label,
so adding a new stream never shifts the draws of an existing one and
reruns are byte identical.
"""

from __future__ import annotations

import hashlib


def derive_seed(master: int, *labels) -> int:
    """Return a stable 63-bit child seed for (master, labels).

    Hash based, platform independent (never uses Python's salted hash()).
    """
    text = ":".join([str(int(master))] + [str(part) for part in labels])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
