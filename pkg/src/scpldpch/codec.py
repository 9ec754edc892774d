"""Streaming encoder and pipeline decoder for spatially coupled LDPC-Hadamard codes.

At time ``t`` the encoder emits the P-VN block ``P(t)`` (``N`` bits) and the
D1H-VN block ``D(t)`` (``M * (q - d)`` bits).  Block row ``t`` of the
convolutional parity-check matrix is ``[H_W ... H_1 H_0]`` over the window
``[P(t-W) ... P(t)]``; each of its ``M`` rows is an H-CN whose ``d`` window
bits, taken in ascending window-column order, are the info bits of a
Hadamard codeword whose parity bits form that row's slice of ``D(t)``.

Blocks with ``t <= 0`` are all-zero and never transmitted.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import gf2
from .gf2 import SingularMatrix
from .hadamard import LLR_CLIP, HadamardCode, _map_block, codeword_index, encode_systematic
from .lifting import LiftedSplit, lift_split
from .protograph import SplitSet


class CodecError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CcCode:
    """Everything the encoder and decoder share about one lifted code.

    Attributes
    ----------
    lifted : LiftedSplit
    hcode : HadamardCode
    parity_cols, info_cols : ndarray
        Split of the ``N`` columns of ``H_0``; ``H_0`` restricted to
        ``parity_cols`` is invertible.
    solver : ndarray
        GF(2) inverse of that ``M x M`` sub-matrix.
    slot_part, slot_col : ndarray
        ``(M, d)``: for each H-CN of a block row, the part index ``i``
        (the bit lives in ``P(t - i)``) and column of each connected bit,
        in ascending window-column order.
    """

    lifted: LiftedSplit
    hcode: HadamardCode
    parity_cols: np.ndarray
    info_cols: np.ndarray
    solver: np.ndarray
    slot_part: np.ndarray
    slot_col: np.ndarray
    seed: int = 0
    parts: tuple = ()

    @property
    def W(self) -> int:
        return self.lifted.W

    @property
    def M(self) -> int:
        return self.lifted.M

    @property
    def N(self) -> int:
        return self.lifted.N

    @property
    def K(self) -> int:
        """Info bits per time step."""
        return self.N - self.M

    @property
    def n_dbits(self) -> int:
        return self.M * self.hcode.n_parity

    @property
    def frame_bits(self) -> int:
        return self.N + self.n_dbits


def build_code(split: SplitSet, r: int, z1: int, z2: int, seed: int = 0, retries: int = 20) -> CcCode:
    """Lift a split and prepare the encoder solver.

    Parity columns are chosen by GF(2) elimination on ``H_0`` scanning from
    the last column backwards, so the last ``M`` columns are used whenever
    they are independent.  A rank-deficient ``H_0`` triggers a new lift
    seed; the ``retries``-th failure raises :class:`CodecError`.
    """
    hcode = HadamardCode(r)
    if (split.base.row_weights() != hcode.d).any():
        raise CodecError(f"every base row must have weight d={hcode.d}")
    if (split.parts[0].row_weights() == 0).any():
        raise CodecError("B_0 has an all-zero row; the streaming encoder cannot solve for P(t)")
    last = None
    for k in range(retries):
        try:
            return code_from_lift(lift_split(split, z1, z2, seed=seed + k), r, seed + k)
        except SingularMatrix as exc:
            last = exc
    raise CodecError(f"H_0 stayed rank deficient over {retries} lift seeds ({last})")


def code_from_lift(lifted: LiftedSplit, r: int, seed: int | None = None) -> CcCode:
    """Encoder/decoder tables for an existing lift.

    Raises :class:`~scpldpch.gf2.SingularMatrix` when ``H_0`` lacks full row rank.
    """
    hcode = HadamardCode(r)
    split = lifted.split
    if (split.base.row_weights() != hcode.d).any():
        raise CodecError(f"every base row must have weight d={hcode.d}")
    if (split.parts[0].row_weights() == 0).any():
        raise CodecError("B_0 has an all-zero row; the streaming encoder cannot solve for P(t)")
    H0 = lifted.part(0).toarray()
    N = H0.shape[1]
    _, piv = gf2.row_reduce(H0, col_order=range(N - 1, -1, -1))
    if len(piv) < H0.shape[0]:
        raise SingularMatrix(f"H_0 has rank {len(piv)} < {H0.shape[0]}")
    piv = np.sort(np.array(piv))
    info = np.setdiff1d(np.arange(N), piv)
    solver = gf2.inverse(H0[:, piv])
    part, col = _slots(lifted, hcode.d)
    parts = tuple(lifted.part(i).astype(np.int64) for i in range(split.W + 1))
    return CcCode(lifted, hcode, piv, info, solver, part, col, seed, parts)


def _slots(lifted: LiftedSplit, d: int):
    W, M, N = lifted.W, lifted.M, lifted.N
    H = lifted.stacked.csr()
    part = np.empty((M, d), dtype=np.int64)
    col = np.empty((M, d), dtype=np.int64)
    for row in range(M):
        wc, pi = [], []
        for i in range(W + 1):
            r = i * M + row
            cols = H.indices[H.indptr[r]:H.indptr[r + 1]]
            # P(t - i) sits at window offset (W - i) * N
            wc.extend((W - i) * N + cols)
            pi.extend([i] * len(cols))
        if len(wc) != d:
            raise CodecError(f"H-CN {row} has {len(wc)} connections, expected {d}")
        order = np.argsort(wc)
        part[row] = np.array(pi)[order]
        col[row] = np.array(wc)[order] % N
    return part, col


# -- encoder --------------------------------------------------------------------------

@dataclass
class EncoderState:
    code: CcCode
    history: deque = field(default_factory=deque)  # P(t-1), P(t-2), ... newest first
    t: int = 0

    def __post_init__(self):
        W, N = self.code.W, self.code.N
        while len(self.history) < W:
            self.history.append(np.zeros(N, dtype=np.uint8))


def _window_bits(code: CcCode, blocks) -> np.ndarray:
    """``(M, d)`` H-CN info bits; ``blocks[i]`` is ``P(t - i)``."""
    stack = np.stack(blocks)
    return stack[code.slot_part, code.slot_col]


def encode_step(state: EncoderState, info) -> tuple[np.ndarray, np.ndarray]:
    """Encode one block of ``K = N - M`` info bits into ``(P(t), D(t))``."""
    code = state.code
    info = np.asarray(info, dtype=np.uint8)
    if info.shape != (code.K,):
        raise CodecError(f"expected {code.K} info bits, got shape {info.shape}")
    if (info > 1).any():
        raise CodecError("info bits must be 0/1")
    parts = code.parts
    syn = np.zeros(code.M, dtype=np.int64)
    for i in range(1, code.W + 1):
        syn += parts[i] @ state.history[i - 1]
    P = np.zeros(code.N, dtype=np.uint8)
    P[code.info_cols] = info
    syn += parts[0] @ P
    P[code.parity_cols] = gf2.matvec(code.solver, syn & 1)
    bits = _window_bits(code, [P, *state.history])
    cw = encode_systematic(code.hcode, bits)
    D = cw[:, list(code.hcode.parity_positions)].ravel()
    state.history.appendleft(P)
    if code.W:
        state.history.pop()
    else:
        state.history.clear()
    state.t += 1
    return P, D


def encode_stream(code: CcCode, infos) -> list[tuple[np.ndarray, np.ndarray]]:
    state = EncoderState(code)
    return [encode_step(state, u) for u in infos]


def verify_window(code: CcCode, frames, D) -> int | None:
    """Check every H-CN of one block row.

    ``frames`` holds the ``W + 1`` P blocks ``[P(t-W), ..., P(t)]`` (oldest
    first) and ``D`` is ``D(t)``.  Returns ``None`` when all H-CNs see a
    Hadamard codeword, else the index of the first failing H-CN.
    """
    if len(frames) != code.W + 1:
        raise CodecError(f"need {code.W + 1} P blocks")
    hc = code.hcode
    info = _window_bits(code, [np.asarray(f, dtype=np.uint8) for f in reversed(frames)])
    words = np.empty((code.M, hc.q), dtype=np.uint8)
    words[:, list(hc.info_positions)] = info
    words[:, list(hc.parity_positions)] = np.asarray(D, dtype=np.uint8).reshape(code.M, hc.n_parity)
    bad = np.flatnonzero(codeword_index(hc, words) < 0)
    return int(bad[0]) if len(bad) else None


# -- bitstream and LLR files -----------------------------------------------------------

def pack_frames(frames) -> bytes:
    """Per frame: P bits then D bits, MSB first, padded to a whole byte."""
    return b"".join(np.packbits(np.concatenate([P, D]).astype(np.uint8)).tobytes() for P, D in frames)


def unpack_frames(code: CcCode, data: bytes) -> list[tuple[np.ndarray, np.ndarray]]:
    nbits = code.frame_bits
    nbytes = (nbits + 7) // 8
    if len(data) % nbytes:
        raise CodecError(f"bitstream length {len(data)} is not a multiple of the {nbytes}-byte frame")
    out = []
    for k in range(len(data) // nbytes):
        bits = np.unpackbits(np.frombuffer(data[k * nbytes:(k + 1) * nbytes], dtype=np.uint8))[:nbits]
        out.append((bits[:code.N].copy(), bits[code.N:].copy()))
    return out


def write_llrs(path, frames) -> None:
    """Little-endian float32; per frame ``N`` P-LLRs then the D-LLRs."""
    with open(path, "wb") as fh:
        for p, d in frames:
            fh.write(np.concatenate([p, d]).astype("<f4").tobytes())


def read_llrs(code: CcCode, path) -> list[tuple[np.ndarray, np.ndarray]]:
    raw = np.fromfile(path, dtype="<f4").astype(np.float64)
    if raw.size % code.frame_bits:
        raise CodecError(f"LLR file size is not a multiple of the frame length {code.frame_bits}")
    raw = raw.reshape(-1, code.frame_bits)
    return [(row[:code.N].copy(), row[code.N:].copy()) for row in raw]


# -- layered decoding ---------------------------------------------------------------

@dataclass
class LlrFrame:
    """Working LLRs of one time step.

    ``ext`` stores, per H-CN of block row ``t`` and per connected edge, the
    last extrinsic LLR that H-CN produced.
    """

    t: int
    p_llr: np.ndarray
    d_llr: np.ndarray
    app: np.ndarray = None
    ext: np.ndarray = None
    d_app: np.ndarray = None

    @classmethod
    def new(cls, code: CcCode, t: int, p_llr, d_llr) -> "LlrFrame":
        p = np.asarray(p_llr, dtype=np.float64)
        d = np.asarray(d_llr, dtype=np.float64).reshape(code.M, code.hcode.n_parity)
        if p.shape != (code.N,):
            raise CodecError(f"expected {code.N} P-LLRs")
        return cls(t, p.copy(), d.copy(), p.copy(), np.zeros((code.M, code.hcode.d)), d.copy())


@nb.njit(cache=True)
def _layer_pass(apps, valid, ext, dllr, dapp, part, col, info_pos, par_pos, q):
    # apps[i] is the APP vector of P(t - i); invalid frames are known zeros
    M, d = part.shape
    npar = par_pos.shape[0]
    lam = np.empty(q)
    raw = np.empty(d)
    t = np.empty(q)
    e = np.empty(q)
    o = np.empty(q)
    out = np.empty(q)
    for row in range(M):
        for k in range(d):
            i = part[row, k]
            if valid[i]:
                v = apps[i, col[row, k]] - ext[row, k]
            else:
                v = LLR_CLIP
            raw[k] = v
            lam[info_pos[k]] = min(LLR_CLIP, max(-LLR_CLIP, v))
        for k in range(npar):
            lam[par_pos[k]] = min(LLR_CLIP, max(-LLR_CLIP, dllr[row, k]))
        _map_block(lam, q, t, e, o, out)
        for k in range(d):
            new = out[info_pos[k]] - lam[info_pos[k]]
            ext[row, k] = new
            i = part[row, k]
            if valid[i]:
                apps[i, col[row, k]] = raw[k] + new
        for k in range(npar):
            dapp[row, k] = out[par_pos[k]]


class _Kernel:
    def __init__(self, code: CcCode):
        hc = code.hcode
        self.code = code
        self.info_pos = np.array(hc.info_positions, dtype=np.int64)
        self.par_pos = np.array(hc.parity_positions, dtype=np.int64)

    def run(self, frames: list, ext, dllr, dapp):
        """One layered pass; ``frames[i]`` is the frame of ``P(t - i)`` or None."""
        code = self.code
        W = code.W
        apps = np.zeros((W + 1, code.N))
        valid = np.zeros(W + 1, dtype=np.bool_)
        for i, f in enumerate(frames):
            if f is not None:
                apps[i] = f.app
                valid[i] = True
        _layer_pass(apps, valid, ext, dllr, dapp, code.slot_part, code.slot_col,
                    self.info_pos, self.par_pos, code.hcode.q)
        for i, f in enumerate(frames):
            if f is not None:
                f.app[:] = apps[i]


def hard(llr) -> np.ndarray:
    return (np.asarray(llr) < 0).astype(np.uint8)


def decode_block_layered(code: CcCode, frames, max_iter: int = 10, early_stop: bool = True):
    """Layered decoding of the block row of the newest frame.

    ``frames`` lists the ``W + 1`` frames ``t-W .. t`` oldest first; entries
    may be ``None`` for ``t - i <= 0``.  Returns the hard decisions of the
    P blocks (same order) and the number of sweeps performed.
    """
    if len(frames) != code.W + 1:
        raise CodecError(f"need {code.W + 1} frames")
    kern = _Kernel(code)
    newest = frames[-1]
    rev = list(reversed(frames))
    it = 0
    for it in range(1, max_iter + 1):
        kern.run(rev, newest.ext, newest.d_llr, newest.d_app)
        if early_stop:
            ps = [hard(f.app) if f is not None else np.zeros(code.N, np.uint8) for f in frames]
            if verify_window(code, ps, hard(newest.d_app).ravel()) is None:
                break
    decided = [hard(f.app) if f is not None else np.zeros(code.N, np.uint8) for f in frames]
    return decided, it


class PipelineDecoder:
    """``I`` cascaded layered processors over a shift register of frames.

    When frame ``s`` arrives, processor ``p`` (1-based) makes one layered
    pass over block row ``s - (p-1)(W+1)``, i.e. frames
    ``s - (p-1)(W+1) - W .. s - (p-1)(W+1)``.  The processors' windows are
    disjoint, so every block row is processed exactly ``I`` times and a
    frame leaves after ``(W+1) I`` further arrivals.
    """

    def __init__(self, code: CcCode, I: int):
        if I < 1:
            raise CodecError("need at least one processor")
        self.code = code
        self.I = I
        self.latency = (code.W + 1) * I
        self.frames: dict[int, LlrFrame] = {}
        self.s = 0
        self._kern = _Kernel(code)

    def push(self, p_llr, d_llr):
        """Feed the next frame; returns ``(t, P_hat)`` of the frame that leaves, or None."""
        self.s += 1
        s, W = self.s, self.code.W
        self.frames[s] = LlrFrame.new(self.code, s, p_llr, d_llr)
        for p in range(self.I, 0, -1):
            t = s - (p - 1) * (W + 1)
            if t < 1:
                continue
            fr = [self.frames.get(t - i) for i in range(W + 1)]
            row = self.frames[t]
            self._kern.run(fr, row.ext, row.d_llr, row.d_app)
        out = self.frames.pop(s - self.latency, None)
        if out is None:
            return None
        return out.t, hard(out.app)

    def flush(self):
        """Push zero-information frames until every real frame has left."""
        code = self.code
        last = self.s
        res = []
        zp = np.zeros(code.N)
        zd = np.zeros(code.n_dbits)
        while any(t <= last for t in self.frames):
            o = self.push(zp, zd)
            if o is not None and o[0] <= last:
                res.append(o)
        return res


def pipeline_decode(code: CcCode, frames, I: int, flush: bool = True):
    """Generator over ``(t, P_hat)`` in arrival order.

    ``frames`` yields ``(p_llr, d_llr)`` pairs for ``t = 1, 2, ...``.
    """
    dec = PipelineDecoder(code, I)
    for p, d in frames:
        o = dec.push(p, d)
        if o is not None:
            yield o
    if flush:
        yield from dec.flush()
