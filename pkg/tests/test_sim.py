import csv
import json
import math

import numpy as np
import pytest
from scipy import stats

from scpldpch.sim import CSV_FIELDS, BerRecord, ChannelModel, StopRule, binomial_ci, run_ber, transmit


def test_channel_variances():
    ch = ChannelModel(0.0, 0.5)
    assert ch.sigma_n2 == pytest.approx(1.0)
    assert ch.sigma_lch2 == pytest.approx(4.0)
    assert ChannelModel(3.0, 0.25).sigma_lch2 == pytest.approx(2 * 10 ** 0.3)
    with pytest.raises(ValueError):
        ChannelModel(0.0, 0.0)


@pytest.mark.parametrize("db,rate", [(0.2, 0.0491), (-0.5, 0.25), (2.0, 0.5)])
def test_llr_moments(db, rate):
    ch = ChannelModel(db, rate)
    lam = transmit(np.zeros(10**6, np.uint8), ch, np.random.default_rng(7))
    s2 = ch.sigma_lch2
    assert lam.mean() == pytest.approx(s2 / 2, rel=0.01)
    assert lam.var() == pytest.approx(s2, rel=0.01)
    ones = transmit(np.ones(10**5, np.uint8), ch, np.random.default_rng(8))
    assert ones.mean() == pytest.approx(-s2 / 2, rel=0.03)


def test_noiseless_channel_saturates():
    lam = transmit(np.array([0, 1, 1, 0]), ChannelModel(0.0, 0.5, noiseless=True), np.random.default_rng(0))
    np.testing.assert_array_equal(np.sign(lam), [1, -1, -1, 1])
    assert np.all(np.abs(lam) == np.abs(lam[0]))


def test_noiseless_ber_zero(r4_code):
    rec, = run_ber(r4_code, [0.0], I=2, stop=StopRule(max_bits=20 * r4_code.K), noiseless=True)
    assert rec.bit_errors == 0 and rec.frame_errors == 0
    assert rec.bits == 20 * r4_code.K and rec.frames == 20
    assert rec.upper_bound_only


def test_high_snr_few_errors(r4_code):
    rec, = run_ber(r4_code, [4.0], I=5, stop=StopRule(max_bits=10 * r4_code.K), seed=3)
    assert rec.ber < 1e-2


def test_reproducible(r4_code):
    kw = dict(I=2, stop=StopRule(max_bit_errors=50, max_bits=30 * r4_code.K), seed=11, frames_per_segment=10)
    a = run_ber(r4_code, [-1.0, 0.0], **kw)
    b = run_ber(r4_code, [-1.0, 0.0], **kw)
    assert a == b
    # grid points use independent streams
    c = run_ber(r4_code, [0.0], **kw)
    assert c[0].bits > 0 and a[0].bit_errors > 0


def test_stop_rule_on_errors(r4_code):
    rec, = run_ber(r4_code, [-3.0], I=1, stop=StopRule(max_bit_errors=5, max_bits=10**7), frames_per_segment=2)
    assert rec.bit_errors >= 5
    assert rec.bits <= 10**7


def test_output_files(r4_code, tmp_path):
    cp, jp = tmp_path / "b.csv", tmp_path / "b.json"
    recs = run_ber(r4_code, [0.0, 1.0], I=2, stop=StopRule(max_bits=5 * r4_code.K), code_id="r4",
                   csv_path=cp, json_path=jp)
    with open(cp) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == CSV_FIELDS
    assert [r["codeId"] for r in rows] == ["r4", "r4"]
    assert int(rows[1]["bits"]) == recs[1].bits
    data = json.loads(jp.read_text())
    assert set(CSV_FIELDS) | {"upper_bound_only"} == set(data[0])
    assert data[0]["ber"] == pytest.approx(recs[0].ber)


def test_record_properties():
    r = BerRecord("x", 0.0, 1000, 10, 2, 5, 5, 0, frames=4, seconds=1.5)
    assert r.ber == 0.01 and r.fer == 0.5 and not r.upper_bound_only
    assert r == BerRecord("x", 0.0, 1000, 10, 2, 5, 5, 0, frames=4, seconds=9.0)
    assert math.isnan(BerRecord("x", 0.0, 0, 0, 0, 1, 1, 0).ber)


@pytest.mark.parametrize("k,n", [(0, 100), (5, 100), (37, 1000), (100, 100), (3, 10**6)])
def test_wilson_interval(k, n):
    ci = stats.binomtest(k, n).proportion_ci(method="wilson")
    lo, hi = binomial_ci(k, n)
    assert lo == pytest.approx(ci.low, abs=1e-3 * max(ci.high, 1e-6))
    assert hi == pytest.approx(ci.high, rel=1e-3)
