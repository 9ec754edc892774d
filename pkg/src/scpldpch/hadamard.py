"""Order-r Hadamard codes: generation, systematic encoding, symbol-MAP decoding.

Bits map to signs as 0 -> +1 and 1 -> -1.  Codeword ``(s, j)`` is column ``j``
of ``(-1)^s * H_q``; its bit at position ``i`` is ``s ^ parity(i & j)``.

LLRs follow ``L = ln(Pr(bit=0) / Pr(bit=1))``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numba as nb
import numpy as np
from scipy.special import logsumexp

LLR_CLIP = 100.0
MAX_MATRIX_ORDER = 14
MAX_CODEWORD_ORDER = 10
# log of the smallest positive double; bounds the fast path's output magnitude
_LOG_TINY = -745.0


def _popcount_parity(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.int64).copy()
    p = np.zeros_like(x)
    while x.any():
        p ^= x & 1
        x >>= 1
    return p


def hadamard_matrix(r: int) -> np.ndarray:
    """Sylvester ``2^r x 2^r`` matrix over {+1, -1}."""
    if r < 0:
        raise ValueError("order r must be >= 0")
    if r > MAX_MATRIX_ORDER:
        raise ValueError(f"order {r} too large to materialise (limit {MAX_MATRIX_ORDER})")
    return _hadamard_cached(r).copy()


@lru_cache(maxsize=None)
def _hadamard_cached(r: int) -> np.ndarray:
    h = np.ones((1, 1), dtype=np.int8)
    for _ in range(r):
        h = np.block([[h, h], [h, -h]])
    h.setflags(write=False)
    return h


def codeword_set(r: int) -> np.ndarray:
    """All ``2^(r+1)`` codewords as rows of a 0/1 array.

    Row ``s * q + j`` is codeword ``(s, j)``.
    """
    if r < 0 or r > MAX_CODEWORD_ORDER:
        raise ValueError(f"exhaustive codeword listing supports 0 <= r <= {MAX_CODEWORD_ORDER}")
    q = 1 << r
    idx = np.arange(q)
    base = _popcount_parity(idx[None, :] & idx[:, None]).T.astype(np.uint8)  # [j, i]
    return np.concatenate([base, base ^ 1]).astype(np.uint8)


def info_positions(r: int) -> tuple[int, ...]:
    return (0,) + tuple(1 << k for k in range(r)) + ((1 << r) - 1,)


@dataclass(frozen=True)
class HadamardCode:
    """Systematic even-order Hadamard code used at every H-CN."""

    r: int

    def __post_init__(self):
        if self.r < 2 or self.r % 2:
            raise ValueError(
                f"only even Hadamard orders r >= 2 are supported (got r={self.r}); "
                "odd orders need the non-systematic encoder"
            )
        if self.r > MAX_MATRIX_ORDER:
            raise ValueError(f"order {self.r} exceeds the supported limit {MAX_MATRIX_ORDER}")

    @property
    def q(self) -> int:
        return 1 << self.r

    @property
    def d(self) -> int:
        return self.r + 2

    @property
    def info_positions(self) -> tuple[int, ...]:
        return info_positions(self.r)

    @property
    def parity_positions(self) -> tuple[int, ...]:
        info = set(self.info_positions)
        return tuple(i for i in range(self.q) if i not in info)

    @property
    def n_parity(self) -> int:
        return self.q - self.d


class SpcViolation(ValueError):
    """Systematic input bits do not XOR to zero."""


def encode_systematic(code: HadamardCode, info) -> np.ndarray:
    """Map ``d`` SPC-satisfying bits to the unique codeword carrying them.

    ``info`` may be a single ``(d,)`` vector or a ``(k, d)`` batch; the output
    has shape ``(q,)`` or ``(k, q)`` accordingly.
    """
    info = np.asarray(info, dtype=np.int64)
    single = info.ndim == 1
    info = np.atleast_2d(info)
    if info.shape[1] != code.d:
        raise ValueError(f"expected {code.d} info bits per block, got {info.shape[1]}")
    if ((info != 0) & (info != 1)).any():
        raise ValueError("info bits must be 0/1")
    bad = np.flatnonzero(info.sum(axis=1) & 1)
    if len(bad):
        raise SpcViolation(f"block {int(bad[0])}: info bits fail the single-parity check")
    s = info[:, 0]
    j = np.zeros(len(info), dtype=np.int64)
    for k in range(code.r):
        j |= (info[:, 1 + k] ^ s) << k
    pos = np.arange(code.q)
    cw = (s[:, None] ^ _popcount_parity(pos[None, :] & j[:, None])).astype(np.uint8)
    return cw[0] if single else cw


def codeword_index(code: HadamardCode, cw) -> np.ndarray:
    """Index ``s * q + j`` of each codeword, or -1 for non-codewords."""
    cw = np.atleast_2d(np.asarray(cw, dtype=np.int64))
    s = cw[:, 0]
    j = np.zeros(len(cw), dtype=np.int64)
    for k in range(code.r):
        j |= (cw[:, 1 << k] ^ s) << k
    pos = np.arange(code.q)
    expect = s[:, None] ^ _popcount_parity(pos[None, :] & j[:, None])
    ok = (expect == cw).all(axis=1)
    return np.where(ok, s * code.q + j, -1)


# -- MAP decoding -------------------------------------------------------------

def _check_llr(code: HadamardCode, llr) -> tuple[np.ndarray, bool]:
    llr = np.asarray(llr, dtype=np.float64)
    single = llr.ndim == 1
    llr = np.atleast_2d(llr)
    if llr.shape[1] != code.q:
        raise ValueError(f"expected {code.q} LLRs per block, got {llr.shape[1]}")
    if not np.isfinite(llr).all():
        raise ValueError("LLR input contains non-finite values")
    return np.clip(llr, -LLR_CLIP, LLR_CLIP), single


def decode_map_exact(code: HadamardCode, llr) -> np.ndarray:
    """A-posteriori LLRs by enumerating every codeword (reference path)."""
    lam, single = _check_llr(code, llr)
    if code.r > MAX_CODEWORD_ORDER:
        raise ValueError("exact enumeration limited to r <= 10")
    cws = codeword_set(code.r)
    signs = 1.0 - 2.0 * cws  # (2q, q)
    metrics = 0.5 * lam @ signs.T  # (k, 2q)
    zero = cws.T == 0  # (q, 2q)
    app = np.empty_like(lam)
    for k in range(code.q):
        app[:, k] = logsumexp(metrics[:, zero[k]], axis=1) - logsumexp(metrics[:, ~zero[k]], axis=1)
    return app[0] if single else app


@nb.njit(cache=True, inline="always")
def _map_block(lam, q, t, e, o, app):
    # correlations with every column of H
    for i in range(q):
        t[i] = lam[i]
    h = 1
    while h < q:
        for base in range(0, q, 2 * h):
            for x in range(base, base + h):
                a = t[x]
                b = t[x + h]
                t[x] = a + b
                t[x + h] = a - b
        h *= 2
    mx = 0.0
    for j in range(q):
        v = abs(t[j])
        if v > mx:
            mx = v
    mx *= 0.5
    for j in range(q):
        e[j] = np.exp(0.5 * t[j] - mx)
        o[j] = np.exp(-0.5 * t[j] - mx)
    # parity-split butterfly: only sums of positive terms
    h = 1
    while h < q:
        for base in range(0, q, 2 * h):
            for x in range(base, base + h):
                y = x + h
                ex = e[x]
                ox = o[x]
                ey = e[y]
                oy = o[y]
                e[x] = ex + ey
                o[x] = ox + oy
                e[y] = ex + oy
                o[y] = ox + ey
        h *= 2
    for k in range(q):
        lp0 = np.log(e[k]) if e[k] > 0.0 else _LOG_TINY
        lp1 = np.log(o[k]) if o[k] > 0.0 else _LOG_TINY
        app[k] = lp0 - lp1


@nb.njit(cache=True)
def _map_batch(lam, out):
    n, q = lam.shape
    t = np.empty(q)
    e = np.empty(q)
    o = np.empty(q)
    for row in range(n):
        _map_block(lam[row], q, t, e, o, out[row])


def decode_map_fast(code: HadamardCode, llr) -> np.ndarray:
    """A-posteriori LLRs through a fast-transform butterfly, ``O(q log q)``."""
    lam, single = _check_llr(code, llr)
    out = np.empty_like(lam)
    _map_batch(np.ascontiguousarray(lam), out)
    return out[0] if single else out


def decode_map(code: HadamardCode, llr, method: str = "fast") -> tuple[np.ndarray, np.ndarray]:
    """Symbol-MAP decode one block (or a batch of blocks).

    Returns ``(app, ext_info)`` where ``app`` holds the a-posteriori LLR of
    all ``q`` code bits and ``ext_info = app - llr`` at the ``d`` info
    positions.  Inputs are clipped to +-100 before decoding.
    """
    if method == "fast":
        app = decode_map_fast(code, llr)
    elif method == "exact":
        app = decode_map_exact(code, llr)
    else:
        raise ValueError(f"unknown method {method!r}")
    lam, _ = _check_llr(code, llr)
    pos = list(code.info_positions)
    if app.ndim == 1:
        return app, app[pos] - lam[0, pos]
    return app, app[:, pos] - lam[:, pos]
