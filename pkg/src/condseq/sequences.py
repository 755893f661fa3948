"""Observation sequences and their enumeration.

Sequences are tuples of integer symbols from the alphabet ``{1, ..., n_symbols}``.
The empty tuple is the empty history/future.  Lexicographic order of sequences
coincides with the mixed-radix index order used throughout the package, so
``index_to_seq(i)`` enumerates ``all_seqs`` in order.
"""

from __future__ import annotations

import itertools
from typing import Iterator, Sequence

Seq = tuple[int, ...]

EMPTY: Seq = ()


def all_seqs(n_symbols: int, length: int) -> Iterator[Seq]:
    """Yield every length-``length`` sequence in lexicographic order."""
    return itertools.product(range(1, n_symbols + 1), repeat=length)


def seq_count(n_symbols: int, length: int) -> int:
    return n_symbols**length


def seq_to_index(seq: Sequence[int], n_symbols: int) -> int:
    """Mixed-radix rank of ``seq`` among sequences of its length.

    The first symbol is the most significant digit, so ranks follow
    lexicographic order.
    """
    idx = 0
    for o in seq:
        if not 1 <= o <= n_symbols:
            raise ValueError(f"symbol {o} outside alphabet 1..{n_symbols}")
        idx = idx * n_symbols + (o - 1)
    return idx


def index_to_seq(idx: int, n_symbols: int, length: int) -> Seq:
    """Inverse of :func:`seq_to_index` for a given length."""
    if not 0 <= idx < n_symbols**length:
        raise ValueError(f"index {idx} out of range for length {length}")
    out = []
    for _ in range(length):
        idx, digit = divmod(idx, n_symbols)
        out.append(digit + 1)
    return tuple(reversed(out))


def parse_seq(text: str) -> Seq:
    """Parse a comma-separated symbol list; empty or '-' is the empty sequence."""
    text = text.strip()
    if text in ("", "-"):
        return ()
    return tuple(int(part) for part in text.split(","))


def format_seq(seq: Sequence[int]) -> str:
    """Inverse of :func:`parse_seq`."""
    if not seq:
        return "-"
    return ",".join(str(o) for o in seq)
