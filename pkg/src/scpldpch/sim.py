"""BPSK/AWGN channel and Monte-Carlo bit-error-rate harness."""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import CcCode, EncoderState, PipelineDecoder, encode_step
from .hadamard import LLR_CLIP
from .protograph import rate_block

CSV_FIELDS = ["codeId", "ebn0_db", "bits", "bit_errors", "frame_errors", "ber", "fer",
              "I", "max_iter", "seed", "seconds"]


@dataclass(frozen=True)
class ChannelModel:
    """BPSK over AWGN at a given Eb/N0 for a code of rate ``rate``.

    Unit-energy symbols get noise variance ``1 / (2 R Eb/N0)``; the
    resulting LLRs ``2y / sigma_n^2`` are Gaussian with mean ``sigma_Lch^2 / 2``
    and variance ``sigma_Lch^2 = 8 R Eb/N0``.
    """

    ebn0_db: float
    rate: float
    noiseless: bool = False

    def __post_init__(self):
        if not self.rate > 0:
            raise ValueError("rate must be positive")

    @property
    def sigma_n2(self) -> float:
        return 1.0 / (2.0 * self.rate * 10.0 ** (self.ebn0_db / 10.0))

    @property
    def sigma_lch2(self) -> float:
        return 8.0 * self.rate * 10.0 ** (self.ebn0_db / 10.0)


def transmit(bits, channel: ChannelModel, rng: np.random.Generator) -> np.ndarray:
    """Channel LLRs for a 0/1 array (0 -> +1, 1 -> -1)."""
    x = 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)
    if channel.noiseless:
        return x * LLR_CLIP
    s2 = channel.sigma_n2
    y = x + rng.normal(0.0, math.sqrt(s2), size=x.shape)
    return 2.0 * y / s2


@dataclass
class BerRecord:
    codeId: str
    ebn0_db: float
    bits: int
    bit_errors: int
    frame_errors: int
    I: int
    max_iter: int
    seed: int
    frames: int = 0
    seconds: float = field(default=0.0, compare=False)

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits if self.bits else float("nan")

    @property
    def upper_bound_only(self) -> bool:
        """No errors seen: the BER estimate is only an upper bound."""
        return self.bit_errors == 0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else float("nan")

    def row(self) -> dict:
        d = asdict(self)
        d["ber"] = self.ber
        d["fer"] = self.fer
        d["seconds"] = round(self.seconds, 3)
        return {k: d[k] for k in CSV_FIELDS}


@dataclass(frozen=True)
class StopRule:
    max_bit_errors: int = 100
    max_bits: int = 10**8


def _run_segment(code: CcCode, ch: ChannelModel, I: int, counted: int, rng):
    """Encode, transmit and decode one stream; count errors on steady-state frames.

    The stream has ``counted + 2 * latency`` frames; the first and last
    ``latency = (W+1) I`` frames (pipeline fill and flush) are not counted.
    """
    dec = PipelineDecoder(code, I)
    lat = dec.latency
    total = counted + 2 * lat
    state = EncoderState(code)
    sent = {}
    bit_err = frame_err = 0
    for t in range(1, total + 1):
        u = rng.integers(0, 2, size=code.K, dtype=np.uint8)
        P, D = encode_step(state, u)
        if lat < t <= lat + counted:
            sent[t] = u
        out = dec.push(transmit(P, ch, rng), transmit(D, ch, rng))
        if out is not None and out[0] in sent:
            tt, phat = out
            e = int((phat[code.info_cols] != sent.pop(tt)).sum())
            bit_err += e
            frame_err += e > 0
    return bit_err, frame_err


def run_ber(code: CcCode, ebn0_grid, I: int = 10, stop: StopRule = StopRule(), seed: int = 0,
            code_id: str = "code", frames_per_segment: int = 100, noiseless: bool = False,
            csv_path=None, json_path=None, rate: float | None = None) -> list[BerRecord]:
    """Simulate the pipeline decoder over an Eb/N0 grid.

    Each grid point ``k`` draws from ``default_rng([seed, k])`` so points
    are reproducible independently of each other.
    """
    if rate is None:
        rate = float(rate_block(code.lifted.split.base, code.hcode.r))
    records = []
    for k, db in enumerate(ebn0_grid):
        rng = np.random.default_rng([seed, k])
        ch = ChannelModel(float(db), rate, noiseless)
        t0 = time.perf_counter()
        bits = berr = ferr = frames = 0
        while berr < stop.max_bit_errors and bits < stop.max_bits:
            n = min(frames_per_segment, max(1, math.ceil((stop.max_bits - bits) / code.K)))
            e, f = _run_segment(code, ch, I, n, rng)
            berr += e
            ferr += f
            bits += n * code.K
            frames += n
        records.append(BerRecord(code_id, float(db), bits, berr, ferr, I, I, seed, frames,
                                 time.perf_counter() - t0))
    if csv_path is not None:
        with open(csv_path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            w.writeheader()
            for rec in records:
                w.writerow(rec.row())
    if json_path is not None:
        with open(json_path, "w") as fh:
            json.dump([rec.row() | {"upper_bound_only": rec.upper_bound_only} for rec in records], fh, indent=2)
    return records


def binomial_ci(errors: int, trials: int, z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for an error probability."""
    if trials <= 0:
        return 0.0, 1.0
    p = errors / trials
    den = 1 + z * z / trials
    mid = (p + z * z / (2 * trials)) / den
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / den
    return max(0.0, mid - half), min(1.0, mid + half)
