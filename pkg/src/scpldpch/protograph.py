"""Protomatrices, edge-spreading splits, spatial coupling and code rates.

A protomatrix row is a Hadamard check node (H-CN) and a column is a
protograph variable node (P-VN); entry ``b(i, j)`` counts the parallel edges
between them.  An edge-spreading split is an ordered family ``B_0 .. B_W``
that sums to the base matrix.  Coupling ``L`` copies of a split gives the
terminated (TDC), tail-biting (TBC) or semi-infinite convolutional (CC)
layouts.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

MAX_ENTRY = 255

TERMINATED = "terminated"
TAILBITING = "tail-biting"
CONVOLUTIONAL = "convolutional-window"


class ProtographError(ValueError):
    """Invalid protomatrix, split, or coupling request."""


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.int64, copy=True)
    if arr.ndim != 2:
        raise ProtographError(f"protomatrix must be 2-D, got shape {arr.shape}")
    if (arr < 0).any():
        raise ProtographError("protomatrix entries must be nonnegative")
    if (arr > MAX_ENTRY).any():
        raise ProtographError(f"protomatrix entries above {MAX_ENTRY} are not supported")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Protomatrix:
    """Immutable ``m x n`` matrix of edge multiplicities."""

    entries: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "entries", _frozen(self.entries))

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def row_weights(self) -> np.ndarray:
        return self.entries.sum(axis=1)

    def col_weights(self) -> np.ndarray:
        return self.entries.sum(axis=0)

    def hadamard_order(self) -> int:
        """Order ``r = d - 2`` implied by a constant row weight ``d``."""
        w = np.unique(self.row_weights())
        if len(w) != 1:
            raise ProtographError(f"row weights are not constant: {sorted(w.tolist())}")
        return int(w[0]) - 2

    def __eq__(self, other):
        if not isinstance(other, Protomatrix):
            return NotImplemented
        return self.shape == other.shape and bool((self.entries == other.entries).all())

    def __hash__(self):
        return hash((self.shape, self.entries.tobytes()))

    def __getitem__(self, key):
        return self.entries[key]

    def tolist(self) -> list[list[int]]:
        return self.entries.tolist()

    def __repr__(self):
        return f"Protomatrix({self.tolist()})"


def zeros_like(b: Protomatrix) -> Protomatrix:
    return Protomatrix(np.zeros(b.shape, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class SplitSet:
    """Edge-spreading split ``B_0 .. B_W`` of a base protomatrix.

    Construction only checks that all parts share the base's dimensions; use
    :func:`validate_split` for the sum constraint (the genetic search builds
    and repairs candidates, so a split may be transiently invalid).
    """

    base: Protomatrix
    parts: tuple[Protomatrix, ...]

    def __post_init__(self):
        parts = tuple(p if isinstance(p, Protomatrix) else Protomatrix(p) for p in self.parts)
        base = self.base if isinstance(self.base, Protomatrix) else Protomatrix(self.base)
        if not parts:
            raise ProtographError("a split needs at least one part")
        for k, p in enumerate(parts):
            if p.shape != base.shape:
                raise ProtographError(
                    f"part {k} has shape {p.shape}, base has {base.shape}"
                )
        object.__setattr__(self, "parts", parts)
        object.__setattr__(self, "base", base)

    @classmethod
    def from_parts(cls, parts: Sequence) -> "SplitSet":
        parts = [p if isinstance(p, Protomatrix) else Protomatrix(p) for p in parts]
        shapes = {p.shape for p in parts}
        if len(shapes) != 1:
            raise ProtographError(f"parts have mismatched shapes: {sorted(shapes)}")
        base = Protomatrix(sum(p.entries for p in parts))
        return cls(base, tuple(parts))

    @property
    def W(self) -> int:
        return len(self.parts) - 1

    @property
    def m(self) -> int:
        return self.base.m

    @property
    def n(self) -> int:
        return self.base.n

    def stack(self) -> np.ndarray:
        """Parts as a ``(W+1, m, n)`` integer array (a fresh copy)."""
        return np.stack([p.entries for p in self.parts]).copy()

    def key(self) -> bytes:
        return self.stack().tobytes() + bytes(str(self.stack().shape), "ascii")

    def __eq__(self, other):
        if not isinstance(other, SplitSet):
            return NotImplemented
        return self.base == other.base and len(self.parts) == len(other.parts) and all(
            a == b for a, b in zip(self.parts, other.parts)
        )

    def __hash__(self):
        return hash(self.key())


def validate_split(split: SplitSet) -> tuple[int, int] | None:
    """Check ``sum(parts) == base`` entrywise.

    Returns ``None`` when the split is valid, otherwise the first offending
    ``(i, j)`` in row-major order.
    """
    shapes = {p.shape for p in split.parts}
    if len(shapes) != 1 or split.base.shape not in shapes:
        raise ProtographError(f"dimension mismatch among parts: {sorted(shapes)}")
    total = sum(p.entries for p in split.parts)
    bad = np.argwhere(total != split.base.entries)
    if len(bad):
        return int(bad[0][0]), int(bad[0][1])
    return None


@dataclass(frozen=True)
class CoupledProtomatrix:
    layout: str
    L: int
    W: int
    matrix: Protomatrix
    row_weights: np.ndarray
    m: int
    n: int

    def block(self, t: int, s: int) -> np.ndarray:
        """Block row ``t``, block column ``s`` (zero-based)."""
        m, n = self.m, self.n
        return self.matrix.entries[t * m:(t + 1) * m, s * n:(s + 1) * n]


def couple_terminated(split: SplitSet, L: int) -> CoupledProtomatrix:
    """Banded ``m(L+W) x nL`` terminated coupling."""
    if L < 1:
        raise ProtographError("coupling length L must be >= 1")
    m, n, W = split.m, split.n, split.W
    out = np.zeros((m * (L + W), n * L), dtype=np.int64)
    for s in range(L):
        for k, part in enumerate(split.parts):
            t = s + k
            out[t * m:(t + 1) * m, s * n:(s + 1) * n] = part.entries
    mat = Protomatrix(out)
    return CoupledProtomatrix(TERMINATED, L, W, mat, mat.row_weights(), m, n)


def couple_tailbiting(split: SplitSet, L: int) -> CoupledProtomatrix:
    """``mL x nL`` coupling with end-to-end (wrap-around) connections."""
    if L <= split.W:
        raise ProtographError(f"tail-biting needs L > W (L={L}, W={split.W})")
    m, n = split.m, split.n
    out = np.zeros((m * L, n * L), dtype=np.int64)
    for s in range(L):
        for k, part in enumerate(split.parts):
            t = (s + k) % L
            out[t * m:(t + 1) * m, s * n:(s + 1) * n] = part.entries
    mat = Protomatrix(out)
    return CoupledProtomatrix(TAILBITING, L, split.W, mat, mat.row_weights(), m, n)


@dataclass(frozen=True)
class ConvolutionalProtograph:
    """Lazy view of the semi-infinite coupled matrix.

    Block ``(t, s)`` (time indices from 1) is ``B_{t-s}`` when
    ``0 <= t - s <= W`` and zero otherwise; only finite windows are built.
    """

    split: SplitSet

    def block(self, t: int, s: int) -> np.ndarray:
        k = t - s
        if s >= 1 and 0 <= k <= self.split.W:
            return self.split.parts[k].entries
        return np.zeros(self.split.base.shape, dtype=np.int64)

    def window(self, t0: int, t1: int) -> CoupledProtomatrix:
        """Block rows ``t0..t1`` restricted to the columns they touch."""
        if t0 < 1 or t1 < t0:
            raise ProtographError("window needs 1 <= t0 <= t1")
        W, m, n = self.split.W, self.split.m, self.split.n
        s0 = max(1, t0 - W)
        cols = range(s0, t1 + 1)
        out = np.zeros((m * (t1 - t0 + 1), n * len(cols)), dtype=np.int64)
        for a, t in enumerate(range(t0, t1 + 1)):
            for b, s in enumerate(cols):
                out[a * m:(a + 1) * m, b * n:(b + 1) * n] = self.block(t, s)
        mat = Protomatrix(out)
        return CoupledProtomatrix(CONVOLUTIONAL, t1 - t0 + 1, W, mat, mat.row_weights(), m, n)


# -- rates -----------------------------------------------------------------

def _check_hadamard_rows(B: Protomatrix, r: int) -> int:
    d = r + 2
    bad = np.flatnonzero(B.row_weights() != d)
    if len(bad):
        raise ProtographError(
            f"row {int(bad[0])} has weight {int(B.row_weights()[bad[0]])}, expected d = r + 2 = {d}"
        )
    return d


def _parity_per_check(r: int) -> int:
    # D1H-VNs per H-CN: 2^r - r - 2 (systematic, even r) or 2^r - 2 (odd r)
    return 2**r - r - 2 if r % 2 == 0 else 2**r - 2


def rate_block(B: Protomatrix, r: int) -> Fraction:
    """Exact rate of the PLDPC-Hadamard block code built on ``B``."""
    _check_hadamard_rows(B, r)
    n, m = B.n, B.m
    rate = Fraction(n - m, n + m * _parity_per_check(r))
    if rate <= 0:
        raise ProtographError("non-positive rate: n <= m")
    return rate


def rate_terminated(B: Protomatrix, r: int, W: int, L: int) -> Fraction:
    """Exact rate of the terminated coupled code with ``L`` sections."""
    _check_hadamard_rows(B, r)
    if L < 1 or W < 0:
        raise ProtographError("need L >= 1 and W >= 0")
    n, m = B.n, B.m
    num = n * L - m * (L + W)
    if num <= 0:
        raise ProtographError(f"non-positive rate: nL = {n * L} <= m(L+W) = {m * (L + W)}")
    return Fraction(num, n * L + m * (L + W) * _parity_per_check(r))


def rate_decimal(rate: Fraction, places: int = 4) -> Decimal:
    """Round an exact rate half-to-even, the way the tables print it."""
    q = Decimal(1).scaleb(-places)
    return (Decimal(rate.numerator) / Decimal(rate.denominator)).quantize(q, rounding=ROUND_HALF_EVEN)


# -- text interchange --------------------------------------------------------

def format_split(split: SplitSet, r: int | None = None) -> str:
    """Serialise as ``m n W r`` then ``W+1`` blocks of ``m`` rows."""
    if r is None:
        try:
            r = split.base.hadamard_order()
        except ProtographError:
            r = -1
    lines = [f"{split.m} {split.n} {split.W} {r}"]
    for part in split.parts:
        lines.extend(" ".join(str(int(x)) for x in row) for row in part.entries)
    return "\n".join(lines) + "\n"


def parse_split(text: str) -> tuple[SplitSet, int]:
    """Inverse of :func:`format_split`; returns the split and its order r."""
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 4:
        raise ProtographError("header must be 'm n W r'")
    try:
        m, n, W, r = (int(x) for x in rows[0])
        body = [[int(x) for x in row] for row in rows[1:]]
    except ValueError as exc:
        raise ProtographError(f"non-integer token: {exc}") from None
    if m < 1 or n < 1 or W < 0:
        raise ProtographError(f"bad header values m={m} n={n} W={W}")
    if len(body) != m * (W + 1):
        raise ProtographError(f"expected {m * (W + 1)} matrix rows, found {len(body)}")
    if any(len(row) != n for row in body):
        raise ProtographError(f"every matrix row must hold {n} integers")
    arr = np.array(body, dtype=np.int64).reshape(W + 1, m, n)
    return SplitSet.from_parts(list(arr)), r


def load_split(path) -> tuple[SplitSet, int]:
    return parse_split(Path(path).read_text())


def save_split(path, split: SplitSet, r: int | None = None) -> None:
    Path(path).write_text(format_split(split, r))


def as_split(parts: Iterable) -> SplitSet:
    return SplitSet.from_parts(list(parts))
