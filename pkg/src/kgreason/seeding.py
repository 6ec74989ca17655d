"""Deterministic seed derivation.

Every randomized stage draws from a seed derived from the single run seed
plus a stage label, so per-stage behaviour is stable even when other stages
are added, removed, or re-run.
"""

from __future__ import annotations

import hashlib


def derive_seed(root: int, *labels: str) -> int:
    """Derive a 64-bit child seed from ``root`` and a label path.

    The derivation is sha256 over ``"<root>|label|label|..."`` truncated to
    8 bytes, which keeps unrelated labels statistically independent.
    """
    key = "|".join([str(int(root)), *labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
