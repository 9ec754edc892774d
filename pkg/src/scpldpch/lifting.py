"""Two-step lifting of protomatrices into quasi-cyclic binary parity-check matrices.

Stage 1 replaces an entry ``b`` by the sum of ``b`` distinct ``z1 x z1``
cyclic-shift permutations; stage 2 replaces every resulting one by a
``z2 x z2`` circulant permutation.

Index conventions for protograph cell ``(i, j)`` and one of its edges with
stage-1 offset ``o`` and stage-2 shifts ``s[a]``::

    row = (i * z1 + a) * z2 + c
    col = (j * z1 + (a + o) % z1) * z2 + (c + s[a]) % z2
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numba as nb
import numpy as np
import scipy.sparse as sp

from .protograph import CoupledProtomatrix, Protomatrix, SplitSet


class LiftError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class QcParityMatrix:
    """Sparse binary matrix obtained by two-step lifting.

    Attributes
    ----------
    proto : ndarray
        The lifted protomatrix, ``base_rows x base_cols``.
    z1, z2 : int
        Stage-1 and stage-2 lifting factors.
    edge_row, edge_col, offset : ndarray
        One entry per protograph edge (parallel edges listed separately),
        in row-major cell order.
    shifts : ndarray
        ``(n_edges, z1)`` circulant shift of every stage-1 one.
    """

    proto: np.ndarray
    z1: int
    z2: int
    edge_row: np.ndarray
    edge_col: np.ndarray
    offset: np.ndarray
    shifts: np.ndarray

    @property
    def base_rows(self) -> int:
        return self.proto.shape[0]

    @property
    def base_cols(self) -> int:
        return self.proto.shape[1]

    @property
    def Z(self) -> int:
        return self.z1 * self.z2

    @property
    def shape(self) -> tuple[int, int]:
        return self.base_rows * self.Z, self.base_cols * self.Z

    def coo(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Expanded ``(rows, cols, tag)`` with ``tag = edge * z1 + a``."""
        return _expand(self.edge_row, self.edge_col, self.offset, self.shifts, self.z1, self.z2)

    def csr(self) -> sp.csr_matrix:
        rows, cols, _ = self.coo()
        H = sp.csr_matrix((np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=self.shape)
        H.sort_indices()
        return H

    def row_lists(self) -> tuple[np.ndarray, np.ndarray]:
        """Row-major adjacency ``(indptr, indices)`` with sorted column lists."""
        H = self.csr()
        return H.indptr, H.indices

    def col_lists(self) -> tuple[np.ndarray, np.ndarray]:
        H = self.csr().tocsc()
        H.sort_indices()
        return H.indptr, H.indices

    def dense(self) -> np.ndarray:
        return self.csr().toarray()

    def syndrome(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.int64)
        return (self.csr().astype(np.int64) @ v) & 1

    def collapse(self) -> np.ndarray:
        """Sum every ``Z x Z`` block back to a protomatrix entry."""
        out = np.zeros_like(self.proto)
        np.add.at(out, (self.edge_row, self.edge_col), 1)
        return out

    def with_shifts(self, shifts) -> "QcParityMatrix":
        return QcParityMatrix(self.proto, self.z1, self.z2, self.edge_row, self.edge_col, self.offset,
                              np.asarray(shifts, dtype=np.int64))

    def __eq__(self, other):
        if not isinstance(other, QcParityMatrix):
            return NotImplemented
        return (self.z1, self.z2) == (other.z1, other.z2) and all(
            np.array_equal(a, b) for a, b in zip(
                (self.proto, self.edge_row, self.edge_col, self.offset, self.shifts),
                (other.proto, other.edge_row, other.edge_col, other.offset, other.shifts)))

    __hash__ = None


def _expand(er, ec, off, shifts, z1, z2):
    E = len(er)
    a = np.arange(z1)
    c = np.arange(z2)
    # broadcast to (E, z1, z2)
    r1 = er[:, None] * z1 + a[None, :]
    c1 = ec[:, None] * z1 + (a[None, :] + off[:, None]) % z1
    rows = r1[:, :, None] * z2 + c[None, None, :]
    cols = c1[:, :, None] * z2 + (c[None, None, :] + shifts[:, :, None]) % z2
    tag = np.broadcast_to((np.arange(E)[:, None] * z1 + a[None, :])[:, :, None], rows.shape)
    return rows.ravel(), cols.ravel(), tag.ravel().copy()


def _proto_entries(proto) -> np.ndarray:
    if isinstance(proto, CoupledProtomatrix):
        proto = proto.matrix
    if isinstance(proto, Protomatrix):
        return np.asarray(proto.entries, dtype=np.int64)
    arr = np.asarray(proto, dtype=np.int64)
    if arr.ndim != 2 or (arr < 0).any():
        raise LiftError("protomatrix must be a 2-D nonnegative integer array")
    return arr


def _draw(b: np.ndarray, z1: int, z2: int, rng: np.random.Generator):
    er, ec, off = [], [], []
    for i, j in zip(*np.nonzero(b)):
        k = int(b[i, j])
        offs = rng.choice(z1, size=k, replace=False)
        er.extend([i] * k)
        ec.extend([j] * k)
        off.extend(int(o) for o in offs)
    er = np.array(er, dtype=np.int64)
    shifts = rng.integers(0, z2, size=(len(er), z1))
    return er, np.array(ec, dtype=np.int64), np.array(off, dtype=np.int64), shifts


def four_cycles(H: sp.spmatrix) -> np.ndarray:
    """Pairs of rows sharing two or more columns, as an ``(k, 2)`` array (i < j)."""
    H = sp.csr_matrix(H, dtype=np.int32)
    G = sp.triu(H @ H.T, k=1).tocoo()
    hit = G.data >= 2
    return np.stack([G.row[hit], G.col[hit]], axis=1)


def lift(proto, z1: int, z2: int, seed: int = 0, min_girth: int | None = 6, retries: int = 100) -> QcParityMatrix:
    """Two-step lift of a protomatrix.

    Parameters
    ----------
    proto : Protomatrix, CoupledProtomatrix or array
    z1 : int
        Stage-1 factor; must be at least the largest entry.
    z2 : int
        Circulant size.
    seed : int
        Seed for offsets and shifts; the result is a pure function of it.
    min_girth : int or None
        ``6`` rejects 4-cycles by resampling the offending shifts; ``None``
        (or anything below 6) disables the gate.
    retries : int
        Repair budget for the girth gate.
    """
    b = _proto_entries(proto)
    if z2 < 1:
        raise LiftError("z2 must be >= 1")
    if b.size and z1 < int(b.max()):
        raise LiftError(f"z1={z1} is smaller than the largest multiplicity {int(b.max())}")
    rng = np.random.default_rng(seed)
    er, ec, off, shifts = _draw(b, z1, z2, rng)
    H = QcParityMatrix(b.copy(), z1, z2, er, ec, off, shifts)
    if min_girth is not None and min_girth >= 6 and len(er):
        H = _gate(H, lambda q: (*q.coo(), q.shape), rng, retries)
    return H


def _gate(H: QcParityMatrix, expand, rng, retries) -> QcParityMatrix:
    shifts = H.shifts.copy()
    z1, z2 = H.z1, H.z2
    for attempt in range(retries + 1):
        cur = H.with_shifts(shifts)
        rows, cols, tag, shape = expand(cur)
        A = sp.csr_matrix((np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=shape)
        pairs = four_cycles(A)
        if not len(pairs):
            return cur
        if attempt == retries:
            break
        T = sp.csr_matrix((tag + 1, (rows, cols)), shape=shape)
        bad = set()
        for r0, r1 in pairs:
            s0 = A.indices[A.indptr[r0]:A.indptr[r0 + 1]]
            s1 = A.indices[A.indptr[r1]:A.indptr[r1 + 1]]
            shared = np.intersect1d(s0, s1)
            c = int(rng.choice(shared))
            bad.add(int(T[r1, c]) - 1)
        bad = np.array(sorted(bad))
        e, a = np.divmod(bad, z1)
        shifts[e, a] = rng.integers(0, z2, size=len(bad))
    raise LiftError(f"could not remove all 4-cycles within {retries} resampling rounds")


# -- coupled lifts for the streaming codec ----------------------------------------

@dataclass(frozen=True, eq=False)
class LiftedSplit:
    """Lifted parts ``H_0 .. H_W`` of an edge-spreading split.

    All parts share one :class:`QcParityMatrix` over the stacked protomatrix
    ``[B_0; B_1; ...; B_W]``; part ``i`` is its ``i``-th block of rows.
    """

    split: SplitSet
    stacked: QcParityMatrix

    @property
    def W(self) -> int:
        return self.split.W

    @property
    def M(self) -> int:
        return self.split.m * self.stacked.Z

    @property
    def N(self) -> int:
        return self.split.n * self.stacked.Z

    def part(self, i: int) -> sp.csr_matrix:
        H = self.stacked.csr()
        return H[i * self.M:(i + 1) * self.M]

    def coupled_coo(self, L: int):
        """Expanded terminated coupling ``(rows, cols, tag, shape)``; tags index the stacked lift."""
        rows, cols, tag = self.stacked.coo()
        M, N, W = self.M, self.N, self.W
        part, r = np.divmod(rows, M)
        R, C, T = [], [], []
        for s in range(L):
            R.append((s + part) * M + r)
            C.append(s * N + cols)
            T.append(tag)
        shape = (M * (L + W), N * L)
        return np.concatenate(R), np.concatenate(C), np.concatenate(T), shape

    def coupled_csr(self, L: int) -> sp.csr_matrix:
        rows, cols, _, shape = self.coupled_coo(L)
        H = sp.csr_matrix((np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=shape)
        H.sort_indices()
        return H


def lift_split(split: SplitSet, z1: int, z2: int, seed: int = 0, min_girth: int | None = 6,
               retries: int = 100) -> LiftedSplit:
    """Lift every part of a split with one seed.

    The 4-cycle gate runs on the terminated coupling with ``L = 2W + 1``,
    which contains every cycle the convolutional code can have that spans
    at most ``2W + 1`` time sections.
    """
    stacked = np.vstack([p.entries for p in split.parts])
    H = lift(stacked, z1, z2, seed=seed, min_girth=None)
    out = LiftedSplit(split, H)
    if min_girth is not None and min_girth >= 6 and len(H.edge_row):
        L = 2 * split.W + 1
        rng = np.random.default_rng([seed, 1])
        H = _gate(H, lambda q: LiftedSplit(split, q).coupled_coo(L), rng, retries)
        out = LiftedSplit(split, H)
    return out


# -- girth ------------------------------------------------------------------------

@nb.njit(cache=True)
def _bfs_girth(src, r_ptr, r_idx, c_ptr, c_idx, M, max_cycle):
    # vertices: rows 0..M-1, columns M..M+N-1
    n_vert = M + len(c_ptr) - 1
    dist = np.full(n_vert, -1, dtype=np.int64)
    parent = np.full(n_vert, -1, dtype=np.int64)
    queue = np.empty(n_vert, dtype=np.int64)
    best = max_cycle + 1
    dist[src] = 0
    queue[0] = src
    head = 0
    tail = 1
    while head < tail:
        v = queue[head]
        head += 1
        if 2 * dist[v] + 1 >= best:
            break
        if v < M:
            lo = r_ptr[v]
            hi = r_ptr[v + 1]
        else:
            lo = c_ptr[v - M]
            hi = c_ptr[v - M + 1]
        for k in range(lo, hi):
            u = r_idx[k] + M if v < M else c_idx[k]
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                parent[u] = v
                queue[tail] = u
                tail += 1
            elif parent[v] != u:
                cyc = dist[u] + dist[v] + 1
                if cyc < best:
                    best = cyc
    return best


def girth_estimate(H, max_cycle: int = 12) -> int | None:
    """Length of the shortest cycle in the Tanner graph, if it is ``<= max_cycle``.

    Returns ``None`` when no cycle of length up to ``max_cycle`` exists.
    For a :class:`QcParityMatrix` the search starts only from one row per
    circulant block, which is exact because every block is circulant.
    """
    if max_cycle < 4 or max_cycle % 2:
        raise ValueError("max_cycle must be even and >= 4")
    if isinstance(H, QcParityMatrix):
        z2 = H.z2
        A = H.csr()
    else:
        z2 = 1
        A = sp.csr_matrix(H)
    A = sp.csr_matrix(A, dtype=np.int8)
    A.sort_indices()
    Ac = A.tocsc()
    Ac.sort_indices()
    M = A.shape[0]
    best = max_cycle + 1
    for src in range(0, M, z2):
        if A.indptr[src] == A.indptr[src + 1]:
            continue
        g = _bfs_girth(src, A.indptr.astype(np.int64), A.indices.astype(np.int64),
                       Ac.indptr.astype(np.int64), Ac.indices.astype(np.int64), M, best - 1 if best <= max_cycle else max_cycle)
        best = min(best, g)
        if best == 4:
            break
    return int(best) if best <= max_cycle else None


# -- text format ------------------------------------------------------------------

def format_lift(H: QcParityMatrix) -> str:
    """Header ``m n z1 z2``, then one line per edge: ``i j offset s_0 .. s_{z1-1}``."""
    buf = io.StringIO()
    buf.write(f"{H.base_rows} {H.base_cols} {H.z1} {H.z2}\n")
    for e in range(len(H.edge_row)):
        vals = [H.edge_row[e], H.edge_col[e], H.offset[e], *H.shifts[e]]
        buf.write(" ".join(str(int(v)) for v in vals) + "\n")
    return buf.getvalue()


def parse_lift(text: str) -> QcParityMatrix:
    lines = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise LiftError("empty lift file")
    try:
        m, n, z1, z2 = (int(x) for x in lines[0])
        body = np.array([[int(x) for x in ln] for ln in lines[1:]], dtype=np.int64).reshape(-1, 3 + z1)
    except ValueError as exc:
        raise LiftError(f"malformed lift file: {exc}") from None
    er, ec, off, shifts = body[:, 0], body[:, 1], body[:, 2], body[:, 3:]
    if ((er < 0) | (er >= m) | (ec < 0) | (ec >= n)).any():
        raise LiftError("edge outside the declared protomatrix")
    if ((off < 0) | (off >= z1)).any() or ((shifts < 0) | (shifts >= z2)).any():
        raise LiftError("offset or shift out of range")
    proto = np.zeros((m, n), dtype=np.int64)
    np.add.at(proto, (er, ec), 1)
    for i, j in zip(*np.nonzero(proto)):
        sel = (er == i) & (ec == j)
        if len(np.unique(off[sel])) != sel.sum():
            raise LiftError(f"cell ({i},{j}) repeats a stage-1 permutation")
    return QcParityMatrix(proto, z1, z2, er.copy(), ec.copy(), off.copy(), np.ascontiguousarray(shifts))


def save_lift(path, H: QcParityMatrix) -> None:
    with open(path, "w") as fh:
        fh.write(format_lift(H))


def load_lift(path) -> QcParityMatrix:
    with open(path) as fh:
        return parse_lift(fh.read())
