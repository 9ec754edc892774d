"""Dense linear algebra over GF(2) on uint8 0/1 arrays."""

from __future__ import annotations

import numpy as np


class SingularMatrix(ValueError):
    pass


def row_reduce(A, col_order=None) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form of ``A`` and its pivot columns.

    ``col_order`` sets the order in which columns are tried as pivots
    (default: left to right).
    """
    R = (np.asarray(A, dtype=np.uint8) & 1).copy()
    m, n = R.shape
    cols = range(n) if col_order is None else col_order
    pivots = []
    row = 0
    for c in cols:
        if row == m:
            break
        hits = np.flatnonzero(R[row:, c]) + row
        if not len(hits):
            continue
        p = hits[0]
        if p != row:
            R[[row, p]] = R[[p, row]]
        mask = R[:, c].astype(bool)
        mask[row] = False
        R[mask] ^= R[row]
        pivots.append(int(c))
        row += 1
    return R, pivots


def rank(A) -> int:
    return len(row_reduce(A)[1])


def inverse(A) -> np.ndarray:
    A = np.asarray(A, dtype=np.uint8) & 1
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("inverse needs a square matrix")
    R, piv = row_reduce(np.hstack([A, np.eye(n, dtype=np.uint8)]), col_order=range(n))
    if len(piv) < n:
        raise SingularMatrix(f"matrix has rank {len(piv)} < {n}")
    return R[:, n:].copy()


def matvec(A, x) -> np.ndarray:
    return ((np.asarray(A, dtype=np.int64) @ np.asarray(x, dtype=np.int64)) & 1).astype(np.uint8)
