"""Exact float <-> string helpers for the JSON model format."""

from __future__ import annotations

import numpy as np


def enc(a):
    """Encode a float or nested float array as shortest round-trip strings."""
    if np.ndim(a) == 0:
        return repr(float(a))
    return [enc(x) for x in a]


def _parse(a):
    return float(a) if isinstance(a, str) else [_parse(x) for x in a]


def dec(a) -> np.ndarray:
    return np.asarray(_parse(a), dtype=np.float64)
