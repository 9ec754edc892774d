"""Layered protograph EXIT analysis for terminated coupled LDPC-Hadamard codes.

The recursion tracks one Gaussian parameter ``sigma_app`` per P-VN column and
one a-priori mutual information ``I_av`` per protograph edge class.  Rows of
the coupled matrix are processed one at a time; each row is an order-r
Hadamard check node whose extrinsic MI is measured by Monte Carlo through
the exact symbol-MAP decoder.

LLRs with mutual information I are modelled as N(+-s^2/2, s^2) with
``s = J^-1(I)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numba as nb
import numpy as np

from .hadamard import LLR_CLIP, HadamardCode, codeword_set
from .protograph import SplitSet, couple_terminated, rate_terminated

# sigma whose consistent-Gaussian mean equals the LLR clip: MI = 1 maps here
SIGMA_SAT = math.sqrt(2.0 * LLR_CLIP)
CONVERGED_MI = 1.0 - 1e-6
DEFAULT_START_DB = {4: -0.30, 5: -0.40, 8: -0.80, 10: -0.85}

_GH_T, _GH_W = np.polynomial.hermite.hermgauss(64)
_GH_W = _GH_W / math.sqrt(math.pi)
_LN2 = math.log(2.0)


# -- J function ----------------------------------------------------------------

@nb.njit(cache=True)
def _softplus_neg(x):
    # log(1 + exp(-x)) without overflow
    if x > 0.0:
        return math.log1p(math.exp(-x))
    return -x + math.log1p(math.exp(x))


@nb.njit(cache=True)
def _j_complement(sigma, gh_t, gh_w):
    if sigma <= 0.0:
        return 1.0
    mu = 0.5 * sigma * sigma
    scale = math.sqrt(2.0) * sigma
    acc = 0.0
    for k in range(gh_t.shape[0]):
        acc += gh_w[k] * _softplus_neg(mu + scale * gh_t[k])
    return acc / _LN2


@nb.njit(cache=True)
def _j_scalar(sigma, gh_t, gh_w):
    v = 1.0 - _j_complement(sigma, gh_t, gh_w)
    if v < 0.0:
        return 0.0
    return v


@nb.njit(cache=True)
def _jinv_scalar(mi, gh_t, gh_w, sigma_max):
    if mi <= 0.0:
        return 0.0
    if mi >= 1.0:
        return sigma_max
    target = 1.0 - mi
    if _j_complement(sigma_max, gh_t, gh_w) >= target:
        return sigma_max
    lo = 0.0
    hi = sigma_max
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _j_complement(mid, gh_t, gh_w) > target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@nb.njit(cache=True)
def _j_array(sig, gh_t, gh_w, out):
    for i in range(sig.shape[0]):
        out[i] = _j_scalar(sig[i], gh_t, gh_w)


@nb.njit(cache=True)
def _jinv_array(mi, gh_t, gh_w, sigma_max, out):
    for i in range(mi.shape[0]):
        out[i] = _jinv_scalar(mi[i], gh_t, gh_w, sigma_max)


def j_of_sigma(sigma):
    """Mutual information of a consistent Gaussian LLR with parameter sigma."""
    arr = np.asarray(sigma, dtype=np.float64)
    if (arr < 0).any():
        raise ValueError("sigma must be nonnegative")
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    _j_array(flat, _GH_T, _GH_W, out)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def sigma_of_j(mi):
    """Inverse of :func:`j_of_sigma`; MI = 1 maps to the saturation sigma."""
    arr = np.asarray(mi, dtype=np.float64)
    if ((arr < 0) | (arr > 1)).any():
        raise ValueError("mutual information must lie in [0, 1]")
    flat = np.ascontiguousarray(arr.ravel())
    out = np.empty_like(flat)
    _jinv_array(flat, _GH_T, _GH_W, SIGMA_SAT, out)
    return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


SIGMA_CONVERGED = sigma_of_j(CONVERGED_MI)


def channel_sigma(rate: float, ebn0_db: float) -> float:
    """Std-dev of the channel LLR for BPSK/AWGN: sigma^2 = 8 R Eb/N0."""
    return math.sqrt(8.0 * float(rate) * 10.0 ** (ebn0_db / 10.0))


# -- Monte-Carlo Hadamard extrinsic MI ----------------------------------------

@dataclass(frozen=True)
class MiSampleConfig:
    """Sampling parameters for the Hadamard MI estimator.

    A single estimate draws from a fixed pool per ``(seed, sigma_ch)``.  With
    ``resample`` the layered recursion instead gives every check-node
    evaluation its own draw, seeded by ``(seed, sweep, row)``, so estimation
    errors average out over rows and sweeps rather than repeating; runs stay a
    deterministic function of the seed either way.
    """

    w: int = 100_000
    seed: int = 0
    saturation: float = LLR_CLIP
    chunk: int = 8192
    cache_limit: int = 1 << 23
    resample: bool = True

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("w must be >= 1")


@nb.njit(cache=True)
def _fht_rows(a):
    n, q = a.shape
    for row in range(n):
        h = 1
        while h < q:
            for base in range(0, q, 2 * h):
                for x in range(base, base + h):
                    u = a[row, x]
                    v = a[row, x + h]
                    a[row, x] = u + v
                    a[row, x + h] = u - v
            h *= 2


@nb.njit(cache=True)
def _channel_weights(t, out):
    # out[:, s*q + j] = exp((-1)^s t_j / 2 - max) per sample
    n, q = t.shape
    for row in range(n):
        mx = 0.0
        for j in range(q):
            v = abs(t[row, j])
            if v > mx:
                mx = v
        mx *= 0.5
        for j in range(q):
            out[row, j] = math.exp(0.5 * t[row, j] - mx)
            out[row, q + j] = math.exp(-0.5 * t[row, j] - mx)


@nb.njit(cache=True, fastmath={"contract", "nsz"})
def _accumulate_block(g, bits, u, z, nb_, sigma, sat, clip, r, p, w):
    # g: (ncw, >=nb_) channel weights; u, z: (d, >=nb_) info bits and noise; bits: (ncw, d)
    # returns per-slot sums of log(1 + e^-(signed extrinsic LLR)) over the block
    ncw = g.shape[0]
    d = bits.shape[1]
    out = np.zeros(d)
    for k in range(d):
        s = sigma[k]
        for i in range(nb_):
            sgn = 1.0 - 2.0 * u[k, i]
            if sat[k]:
                lam = sgn * clip
            else:
                lam = min(clip, max(-clip, sgn * 0.5 * s * s + s * z[k, i]))
            t = math.exp(-abs(lam))
            # r[b, k, i]: probability of bit b at slot k, normalised by the likelier bit
            r[0, k, i] = 1.0 if lam >= 0.0 else t
            r[1, k, i] = t if lam >= 0.0 else 1.0
            p[0, k, i] = 0.0
            p[1, k, i] = 0.0
    # sum codeword weights into per-slot bit-0 / bit-1 totals
    for c in range(ncw):
        for i in range(nb_):
            w[i] = g[c, i]
        for k in range(d):
            b = bits[c, k]
            for i in range(nb_):
                w[i] *= r[b, k, i]
        for k in range(d):
            b = bits[c, k]
            for i in range(nb_):
                p[b, k, i] += w[i]
    for k in range(d):
        a = 0.0
        # sum of log(1 + t) kept as a running product, flushed before overflow
        prod = 1.0
        for i in range(nb_):
            e0 = p[0, k, i] / r[0, k, i]
            e1 = p[1, k, i] / r[1, k, i]
            if u[k, i]:
                num = e0
                den = e1
            else:
                num = e1
                den = e0
            if den > 0.0 and num < 1e100 * den:
                prod *= 1.0 + num / den
                if prod > 1e200:
                    a += math.log(prod)
                    prod = 1.0
            else:
                ln_num = math.log(num) if num > 0.0 else -745.0
                ln_den = math.log(den) if den > 0.0 else -745.0
                a += _softplus_neg(ln_den - ln_num)
        out[k] = a + math.log(prod)
    return out


_BLOCK = 128


@nb.njit(cache=True)
def _mi_accumulate(gT, bits, u, z, sigma, sat, clip, acc):
    # gT: (ncw, n) precomputed channel weights of a fixed pool
    n = gT.shape[1]
    d = bits.shape[1]
    r = np.empty((2, d, _BLOCK))
    p = np.empty((2, d, _BLOCK))
    w = np.empty(_BLOCK)
    for s0 in range(0, n, _BLOCK):
        nb_ = min(_BLOCK, n - s0)
        acc += _accumulate_block(gT[:, s0:s0 + nb_], bits, u[:, s0:s0 + nb_], z[:, s0:s0 + nb_],
                                 nb_, sigma, sat, clip, r, p, w)


@nb.njit(cache=True, fastmath={"contract", "nsz"})
def _mi_fresh(cws, info, par, bits, cw, z, sigma_ch, sigma, sat, clip, acc):
    # like _mi_accumulate, but channel weights come from raw draws cw (n,) and z (n, q)
    ncw, q = cws.shape
    d = bits.shape[1]
    n = cw.shape[0]
    r = np.empty((2, d, _BLOCK))
    p = np.empty((2, d, _BLOCK))
    w = np.empty(_BLOCK)
    g = np.empty((ncw, _BLOCK))
    u = np.empty((d, _BLOCK), dtype=np.int64)
    zi = np.empty((d, _BLOCK))
    t = np.empty(q)
    half = 0.5 * sigma_ch * sigma_ch
    for s0 in range(0, n, _BLOCK):
        nb_ = min(_BLOCK, n - s0)
        for i in range(nb_):
            c = cw[s0 + i]
            t[:] = 0.0
            for j in par:
                v = (1.0 - 2.0 * cws[c, j]) * half + sigma_ch * z[s0 + i, j]
                t[j] = min(clip, max(-clip, v))
            for k in range(d):
                u[k, i] = cws[c, info[k]]
                zi[k, i] = z[s0 + i, info[k]]
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
                if abs(t[j]) > mx:
                    mx = abs(t[j])
            mx *= 0.5
            floor = math.exp(-2.0 * mx)
            for j in range(q):
                e = math.exp(0.5 * t[j] - mx)
                g[j, i] = e
                # the pair multiplies to exp(-2 mx); fall back when that underflows
                g[q + j, i] = floor / e if floor > 0.0 else math.exp(-0.5 * t[j] - mx)
        acc += _accumulate_block(g, bits, u, zi, nb_, sigma, sat, clip, r, p, w)


class HadamardMiEngine:
    """Extrinsic-MI estimator for one Hadamard order and channel sigma.

    Parity positions (the D1H-VNs) see the channel at ``sigma_ch``; their
    contribution to every codeword metric is precomputed once.  Each call
    then only samples the ``d`` info positions.
    """

    def __init__(self, r: int, sigma_ch: float, cfg: MiSampleConfig | None = None):
        self.code = HadamardCode(r)
        self.sigma_ch = float(sigma_ch)
        self.cfg = cfg or MiSampleConfig()
        code = self.code
        info = np.array(code.info_positions, dtype=np.int64)
        self._info = info
        self._par = np.array(code.parity_positions, dtype=np.int64)
        cws = codeword_set(r)
        self._cws = cws
        self._pattern = np.ascontiguousarray(cws[:, info].astype(np.int64))
        self._chunks = [(s, min(self.cfg.w, s + self.cfg.chunk)) for s in range(0, self.cfg.w, self.cfg.chunk)]
        self._cache = None
        self._memo: dict[bytes, np.ndarray] = {}
        self.calls = 0
        self.hits = 0
        if self.cfg.w * 2 * code.q <= self.cfg.cache_limit:
            self._cache = [self._build_chunk(k) for k in range(len(self._chunks))]

    def _draw(self, k):
        lo, hi = self._chunks[k]
        rng = np.random.default_rng([self.cfg.seed, k])
        q = self.code.q
        cw = rng.integers(0, 2 * q, size=hi - lo)
        z = rng.standard_normal((hi - lo, q))
        return cw, z

    def _build_chunk(self, k):
        cw, z = self._draw(k)
        bits = self._cws[cw]  # transmitted codewords
        s = self.sigma_ch
        lam = (1.0 - 2.0 * bits) * (0.5 * s * s) + s * z
        np.clip(lam, -self.cfg.saturation, self.cfg.saturation, out=lam)
        lam[:, self._info] = 0.0
        _fht_rows(lam)
        g = np.empty((len(cw), 2 * self.code.q))
        _channel_weights(lam, g)
        u = np.ascontiguousarray(bits[:, self._info].T)
        zi = np.ascontiguousarray(z[:, self._info].T)
        return np.ascontiguousarray(g.T), u, zi

    def samples(self, k):
        """Raw draws of chunk ``k``: codeword indices and the noise matrix."""
        return self._draw(k)

    def __call__(self, sigma_info, saturated=None, stream=None) -> np.ndarray:
        """Extrinsic MI at the ``d`` info positions.

        ``sigma_info`` gives the a-priori Gaussian parameter of each info slot;
        slots flagged in ``saturated`` are known exactly (MI = 1, LLR +-100).
        ``stream`` (a tuple of ints) requests an independent draw of ``w``
        samples seeded by ``(seed, *stream)`` instead of the fixed pool.
        """
        d = self.code.d
        sig = np.ascontiguousarray(np.minimum(np.asarray(sigma_info, dtype=np.float64), SIGMA_SAT))
        if sig.shape != (d,):
            raise ValueError(f"expected {d} info sigmas")
        sat = np.zeros(d, dtype=np.bool_) if saturated is None else np.asarray(saturated, dtype=np.bool_)
        self.calls += 1
        if stream is not None:
            rng = np.random.default_rng([self.cfg.seed, *stream])
            acc = np.zeros(d)
            for lo, hi in self._chunks:
                cw = rng.integers(0, 2 * self.code.q, size=hi - lo)
                z = rng.standard_normal((hi - lo, self.code.q), dtype=np.float32)
                _mi_fresh(self._cws, self._info, self._par, self._pattern, cw, z, self.sigma_ch, sig, sat,
                          self.cfg.saturation, acc)
            return np.clip(1.0 - acc / (_LN2 * self.cfg.w), 0.0, 1.0)
        key = sig.tobytes() + sat.tobytes()
        hit = self._memo.get(key)
        if hit is not None:
            self.hits += 1
            return hit.copy()
        acc = np.zeros(d)
        for k in range(len(self._chunks)):
            g, u, zi = self._cache[k] if self._cache is not None else self._build_chunk(k)
            _mi_accumulate(g, self._pattern, u, zi, sig, sat, self.cfg.saturation, acc)
        out = np.clip(1.0 - acc / (_LN2 * self.cfg.w), 0.0, 1.0)
        # the pool is fixed, so equal inputs give equal outputs
        if len(self._memo) < 100_000:
            self._memo[key] = out
        return out.copy()


@lru_cache(maxsize=8)
def _engine(r: int, sigma_ch: float, cfg: MiSampleConfig) -> HadamardMiEngine:
    return HadamardMiEngine(r, sigma_ch, cfg)


def hadamard_mi(sigma_ch: float, i_ah, cfg: MiSampleConfig | None = None) -> np.ndarray:
    """Extrinsic MI of each info bit of an order-r Hadamard check node.

    ``i_ah`` holds the ``d = r + 2`` a-priori MI values; entries equal to 1
    are treated as perfectly known.
    """
    i_ah = np.asarray(i_ah, dtype=np.float64)
    d = i_ah.shape[0]
    if d % 2 or d < 4:
        raise ValueError("need an even number d = r + 2 >= 4 of info slots")
    if ((i_ah < 0) | (i_ah > 1)).any():
        raise ValueError("MI values must lie in [0, 1]")
    eng = _engine(d - 2, float(sigma_ch), cfg or MiSampleConfig())
    return eng(sigma_of_j(i_ah), i_ah >= 1.0)


# -- layered PEXIT ---------------------------------------------------------------

@dataclass
class PexitResult:
    converged: bool
    n_it: int
    ebn0_db: float
    rate: float
    sigma_ch: float
    min_app_mi: list[float] = field(default_factory=list)

    def record(self) -> dict:
        return {
            "ebn0_db": round(self.ebn0_db, 6),
            "converged": self.converged,
            "n_it": self.n_it,
            "rate": self.rate,
        }


@dataclass
class RowAudit:
    """Per-row trace of one layered update, for inspection and tests."""

    row: int
    i_ev: np.ndarray
    i_ah: np.ndarray
    padded: np.ndarray
    i_eh: np.ndarray
    i_av: np.ndarray


class LayeredPexit:
    """Row-by-row PEXIT on the terminated coupling of a split.

    Parameters
    ----------
    split : SplitSet
        Edge-spreading split ``B_0 .. B_W``; its base fixes ``d``.
    L : int
        Coupling length of the terminated code.
    r : int, optional
        Hadamard order; defaults to ``d - 2`` of the base.
    cfg : MiSampleConfig, optional
        Monte-Carlo settings shared by every check-node evaluation.
    rate : float, optional
        Rate entering the channel sigma; defaults to the terminated rate
        (override for short illustrative couplings whose rate is not positive).
    """

    def __init__(self, split: SplitSet, L: int, r: int | None = None, cfg: MiSampleConfig | None = None,
                 rate: float | None = None):
        self.split = split
        self.L = L
        self.W = split.W
        self.r = split.base.hadamard_order() if r is None else r
        self.d = self.r + 2
        self.cfg = cfg or MiSampleConfig()
        self.coupled = couple_terminated(split, L)
        self.rate = float(rate_terminated(split.base, self.r, self.W, L)) if rate is None else float(rate)
        b = self.coupled.matrix.entries
        self.b = b
        R = b.shape[0]
        tail = L * split.m  # rows from here on miss newer sections
        self._rows = []
        for i in range(R):
            js = np.flatnonzero(b[i])
            if not len(js):
                continue
            bs = b[i, js].astype(np.float64)
            d1 = int(b[i, js].sum())
            npad = self.d - d1
            if npad < 0:
                raise ValueError(f"row {i} has weight {d1} > d = {self.d}")
            # absent older sections sit in front, absent newer ones at the back
            front = i < tail
            slots = np.repeat(np.arange(len(js)), b[i, js])
            self._rows.append((i, js, bs, npad, bool(front), slots))

    def run(self, ebn0_db: float, n_max: int = 150, audit=None, check_monotone: float | None = None) -> PexitResult:
        """Iterate at one Eb/N0 until every column reaches MI 1 or ``n_max`` sweeps.

        ``audit`` may be a callable receiving a :class:`RowAudit` per row
        update.  ``check_monotone`` (a tolerance) asserts that no
        ``sigma_app`` decreases by more than that amount in any update.
        """
        s_ch = channel_sigma(self.rate, ebn0_db)
        engine = _engine(self.r, s_ch, self.cfg)
        C = self.b.shape[1]
        app2 = np.full(C, s_ch * s_ch)
        contrib = np.zeros(self.b.shape)
        target = SIGMA_CONVERGED**2
        res = PexitResult(False, 0, float(ebn0_db), self.rate, s_ch)
        d = self.d
        for it in range(1, n_max + 1):
            for i, js, bs, npad, front, slots in self._rows:
                old = contrib[i, js]
                # one edge's own contribution is left out of its extrinsic
                sig_av2 = old / bs
                temp2 = np.maximum(app2[js] - old, 0.0)
                sig_ev = np.sqrt(np.maximum(app2[js] - sig_av2, 0.0))
                sig_slots = np.full(d, SIGMA_SAT)
                sat = np.ones(d, dtype=np.bool_)
                sl = slice(npad, d) if front else slice(0, d - npad)
                sig_slots[sl] = sig_ev[slots]
                sat[sl] = False
                i_eh = engine(sig_slots, sat, (it, i) if self.cfg.resample else None)
                i_av = np.bincount(slots, weights=i_eh[sl], minlength=len(js)) / bs
                new = bs * sigma_of_j(i_av) ** 2
                if check_monotone is not None:
                    prev = np.sqrt(app2[js])
                    now = np.sqrt(temp2 + new)
                    if (now < prev - check_monotone).any():
                        raise AssertionError(
                            f"sigma_app decreased at row {i}, sweep {it}: "
                            f"{float((prev - now).max()):.3e}"
                        )
                app2[js] = temp2 + new
                contrib[i, js] = new
                if audit is not None:
                    i_ah = np.ones(d)
                    i_ah[sl] = j_of_sigma(sig_ev)[slots]
                    audit(RowAudit(i, j_of_sigma(sig_ev), i_ah, sat.copy(), i_eh, i_av))
            low = float(app2.min())
            res.min_app_mi.append(j_of_sigma(math.sqrt(low)))
            if low >= target:
                res.converged = True
                res.n_it = it
                return res
        res.n_it = n_max
        return res


def layered_pexit_converges(split: SplitSet, W: int, L: int, ebn0_db: float, n_max: int = 150,
                            cfg: MiSampleConfig | None = None, r: int | None = None) -> tuple[bool, int]:
    """Convenience wrapper: ``(converged, N_it)`` for one operating point."""
    if W != split.W:
        raise ValueError(f"split has W={split.W}, caller asked for W={W}")
    res = LayeredPexit(split, L, r=r, cfg=cfg).run(ebn0_db, n_max)
    return res.converged, res.n_it


@dataclass
class ThresholdResult:
    threshold_db: float
    ladder: list[PexitResult]

    def table(self) -> list[tuple[float, bool, int]]:
        return [(p.ebn0_db, p.converged, p.n_it) for p in self.ladder]


class StartTooLow(ValueError):
    pass


def _grid(x: float) -> float:
    # keep the ladder on exact hundredths so repeated steps do not drift
    return round(x, 10)


def threshold_search(split: SplitSet, W: int, L: int, n_max: int = 150, start_db: float | None = None,
                     step_db: float = 0.05, cfg: MiSampleConfig | None = None, r: int | None = None,
                     coarse_step_db: float | None = None, on_result=None) -> ThresholdResult:
    """Walk Eb/N0 down from ``start_db`` until the first failure.

    The threshold is the last converging point, i.e. the first failing point
    plus one step.  ``coarse_step_db`` first descends in larger strides (on
    the same grid) and then refines from the last converging coarse point.
    """
    if W != split.W:
        raise ValueError(f"split has W={split.W}, caller asked for W={W}")
    pex = LayeredPexit(split, L, r=r, cfg=cfg)
    if start_db is None:
        start_db = DEFAULT_START_DB.get(pex.r, 0.0)
    ladder: list[PexitResult] = []

    def run(db):
        res = pex.run(db, n_max)
        ladder.append(res)
        if on_result is not None:
            on_result(res)
        return res

    db = _grid(start_db)
    if not run(db).converged:
        raise StartTooLow(f"no convergence at the starting point {start_db} dB")
    if coarse_step_db:
        ratio = round(coarse_step_db / step_db)
        if ratio < 1 or abs(ratio * step_db - coarse_step_db) > 1e-9:
            raise ValueError("coarse step must be a multiple of the fine step")
        while True:
            nxt = _grid(db - coarse_step_db)
            if not run(nxt).converged:
                break
            db = nxt
    while True:
        nxt = _grid(db - step_db)
        if nxt in {p.ebn0_db for p in ladder}:
            hit = next(p for p in ladder if p.ebn0_db == nxt)
            if not hit.converged:
                break
            db = nxt
            continue
        if not run(nxt).converged:
            break
        db = nxt
    return ThresholdResult(db, ladder)
