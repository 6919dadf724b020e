"""Small shared helpers: timestamps and named random streams."""

import hashlib
from datetime import datetime, timezone

import numpy as np

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)
MICROS = 1_000_000


def to_micros(ts):
    """ISO-8601 string or datetime -> integer microseconds since the Unix epoch (UTC).

    Naive timestamps are taken to be UTC.
    """
    if isinstance(ts, (int, np.integer)):
        return int(ts)
    if isinstance(ts, str):
        ts = datetime.fromisoformat(ts.strip())
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    delta = ts - _EPOCH
    return (delta.days * 86400 + delta.seconds) * MICROS + delta.microseconds


def to_iso(micros):
    """Inverse of :func:`to_micros`; always emits microsecond precision, no offset."""
    secs, us = divmod(int(micros), MICROS)
    dt = datetime.fromtimestamp(secs, tz=timezone.utc).replace(microsecond=us, tzinfo=None)
    return dt.isoformat(timespec="microseconds")


def stable_int(*parts):
    # process-independent (unlike hash()); 64-bit
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def substream(seed, *names):
    """Generator for a named sub-stream of a root seed.

    Streams depend only on ``(seed, names)``, never on call order, so work may
    be split across threads without changing results.
    """
    return np.random.default_rng([int(seed) % 2**64, stable_int(*names)])
