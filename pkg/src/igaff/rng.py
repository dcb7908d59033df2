"""Deterministic random streams with labelled, independent substreams.

Every randomized operation in the engine is a pure function of its inputs
and an :class:`RngStream`.  A stream is identified by a key: the base seed
followed by the labels used to derive it.  Substreams derived with
:meth:`RngStream.derive` depend only on the key, never on how much of the
parent stream has been consumed, so the same event can be replayed from a
recorded key regardless of surrounding draws.
"""

from __future__ import annotations

import hashlib

import numpy as np

_U64 = 1 << 64


def _encode_label(label: int | str) -> int:
    """Map a label to a stable non-negative integer."""
    if isinstance(label, bool):
        raise TypeError("bool labels are ambiguous; use int or str")
    if isinstance(label, int):
        if label < 0:
            raise ValueError(f"labels must be non-negative, got {label}")
        return label
    if isinstance(label, str):
        digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
        return int.from_bytes(digest, "little")
    raise TypeError(f"labels must be int or str, got {type(label).__name__}")


class RngStream:
    """A seeded random stream keyed by (seed, *labels).

    Identical keys yield identical draw sequences.  The underlying generator
    is numpy's PCG64 seeded through SeedSequence on the full key, which makes
    sibling substreams statistically independent.
    """

    def __init__(self, seed: int):
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise TypeError("seed must be an int")
        if not 0 <= seed < _U64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self._key: tuple[int, ...] = (seed,)
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self._key)))

    @classmethod
    def from_key(cls, key: tuple[int, ...] | list[int]) -> "RngStream":
        """Rebuild a stream from a previously recorded key."""
        if len(key) == 0:
            raise ValueError("key must contain at least the base seed")
        stream = cls.__new__(cls)
        stream._key = tuple(int(k) for k in key)
        stream._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(stream._key)))
        return stream

    @property
    def key(self) -> tuple[int, ...]:
        return self._key

    @property
    def seed(self) -> int:
        return self._key[0]

    def derive(self, *labels: int | str) -> "RngStream":
        """Child stream keyed by this stream's key extended with `labels`.

        Derivation reads only the key, never the stream state, so children
        are reproducible no matter how many draws the parent has made.
        """
        if not labels:
            raise ValueError("derive() requires at least one label")
        extended = self._key + tuple(_encode_label(lab) for lab in labels)
        return RngStream.from_key(extended)

    def uniform(self, low: float, high: float) -> float:
        """One scalar draw from U(low, high)."""
        return float(self._gen.uniform(low, high))

    def uniform_array(self, low: float, high: float, shape) -> np.ndarray:
        """Array of independent U(low, high) draws (float64)."""
        return self._gen.uniform(low, high, size=shape)

    def integer(self, low: int, high: int) -> int:
        """One draw from the integers {low, ..., high - 1}."""
        return int(self._gen.integers(low, high))

    def __repr__(self) -> str:
        return f"RngStream(key={self._key!r})"
