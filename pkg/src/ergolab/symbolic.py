"""Finite words and position-addressed symbol streams over {0, ..., k-1}."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ErgolabError

BLOCK = 4096


@dataclass(frozen=True)
class Word:
    symbols: tuple
    alphabet_size: int

    def __post_init__(self):
        syms = tuple(int(s) for s in self.symbols)
        if self.alphabet_size < 1:
            raise ErgolabError("bad-parameter", "alphabet size must be >= 1")
        if any(s < 0 or s >= self.alphabet_size for s in syms):
            raise ErgolabError("bad-symbol", f"symbols must lie in [0, {self.alphabet_size})")
        object.__setattr__(self, "symbols", syms)

    def __len__(self):
        return len(self.symbols)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Word(self.symbols[i], self.alphabet_size)
        return self.symbols[i]

    def __iter__(self):
        return iter(self.symbols)

    def array(self):
        return np.array(self.symbols, dtype=np.int64)

    def to_json(self):
        return list(self.symbols)

    def one_based(self):
        """Symbols printed 1-based, as used in reports."""
        return [s + 1 for s in self.symbols]


@dataclass(frozen=True)
class SymbolStream:
    """Immutable descriptor of an infinite word; symbol i is a pure function of the parameters.

    kind is ``"periodic"`` (params: the period word), ``"iid"`` (uniform symbols from
    ``seed``) or ``"itinerary"`` (params: family and start point; symbols are
    the regions visited). ``offset`` implements the shift.
    """

    kind: str
    alphabet_size: int
    period: tuple = ()
    seed: int = 0
    family: object = field(default=None, compare=False, repr=False)
    start: tuple = ()
    offset: int = 0

    def __post_init__(self):
        if self.kind not in ("periodic", "iid", "itinerary"):
            raise ErgolabError("bad-parameter", f"unknown stream kind {self.kind!r}")
        if self.kind == "periodic":
            if not self.period:
                raise ErgolabError("bad-parameter", "periodic stream needs a nonempty word")
            Word(self.period, self.alphabet_size)

    def symbols(self, start: int, n: int) -> np.ndarray:
        """Symbols at positions start..start+n-1 of this stream."""
        if n < 0 or start < 0:
            raise ErgolabError("bad-parameter", "negative position or count")
        lo = start + self.offset
        if n == 0:
            return np.zeros(0, dtype=np.int64)
        if self.kind == "periodic":
            per = np.array(self.period, dtype=np.int64)
            return per[np.arange(lo, lo + n) % len(per)]
        if self.kind == "iid":
            b0, b1 = lo // BLOCK, (lo + n - 1) // BLOCK
            blocks = [_iid_block(self.seed, b, self.alphabet_size) for b in range(b0, b1 + 1)]
            flat = np.concatenate(blocks)
            return flat[lo - b0 * BLOCK: lo - b0 * BLOCK + n]
        from .expansion import itinerary
        return itinerary(self.family, None, self.start, lo + n).array()[lo:]

    def shift(self, n: int = 1) -> "SymbolStream":
        return replace(self, offset=self.offset + n)

    def to_json(self):
        d = {"kind": self.kind, "alphabet_size": self.alphabet_size, "offset": self.offset}
        if self.kind == "periodic":
            d["params"] = list(self.period)
        elif self.kind == "iid":
            d["seed"] = self.seed
        else:
            d["params"] = {"start": [float(v) for v in self.start], "family": self.family.name}
        return d


def _iid_block(seed, block, k):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(block)]))
    return rng.integers(0, k, size=BLOCK, dtype=np.int64)


def periodic(word, k) -> SymbolStream:
    return SymbolStream("periodic", k, period=tuple(int(s) for s in word))


def iid_uniform(k, seed) -> SymbolStream:
    return SymbolStream("iid", k, seed=int(seed))


def itinerary_stream(family, start) -> SymbolStream:
    return SymbolStream("itinerary", family.k, family=family,
                        start=tuple(np.atleast_1d(np.asarray(start, dtype=object)).tolist()))


def shift(stream: SymbolStream, n: int = 1) -> SymbolStream:
    return stream.shift(n)


def prefix(stream: SymbolStream, n: int) -> Word:
    if n < 0:
        raise ErgolabError("bad-parameter", "n must be >= 0")
    return Word(tuple(stream.symbols(0, n).tolist()), stream.alphabet_size)
