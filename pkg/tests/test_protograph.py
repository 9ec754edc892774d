from fractions import Fraction

import numpy as np
import pytest

from scpldpch.protograph import (
    ConvolutionalProtograph, Protomatrix, ProtographError, SplitSet, couple_tailbiting, couple_terminated,
    format_split, parse_split, rate_block, rate_decimal, rate_terminated, validate_split,
)

from .conftest import fixture_split

B = [[2, 0, 2, 2], [0, 2, 2, 2], [3, 2, 0, 1]]
B0 = [[1, 0, 0, 2], [0, 1, 1, 1], [1, 2, 0, 1]]
B1 = [[1, 0, 2, 0], [0, 1, 1, 1], [2, 0, 0, 0]]


def test_worked_split_is_valid():
    s = SplitSet(Protomatrix(B), (Protomatrix(B0), Protomatrix(B1)))
    assert validate_split(s) is None
    assert s.W == 1


def test_degenerate_split():
    s = SplitSet(Protomatrix(B), (Protomatrix(B), Protomatrix(np.zeros((3, 4), int))))
    assert validate_split(s) is None


def test_violation_reports_entry():
    bad = np.array(B0)
    bad[2, 3] += 1
    s = SplitSet(Protomatrix(B), (Protomatrix(bad), Protomatrix(B1)))
    assert validate_split(s) == (2, 3)


def test_shape_mismatch_rejected():
    with pytest.raises(ProtographError):
        SplitSet(Protomatrix(B), (Protomatrix(B0), Protomatrix([[1, 2]])))


def test_negative_entries_rejected():
    with pytest.raises(ProtographError):
        Protomatrix([[1, -1]])


def test_terminated_w1_l2():
    c = couple_terminated(SplitSet.from_parts([B0, B1]), 2)
    M = c.matrix.entries
    assert M.shape == (9, 8)
    assert M[0].tolist() == [1, 0, 0, 2, 0, 0, 0, 0]
    np.testing.assert_array_equal(c.block(0, 0), B0)
    np.testing.assert_array_equal(c.block(1, 0), B1)
    np.testing.assert_array_equal(c.block(1, 1), B0)
    np.testing.assert_array_equal(c.block(2, 1), B1)
    assert not c.block(0, 1).any() and not c.block(2, 0).any()


def test_terminated_l1_is_stack():
    c = couple_terminated(SplitSet.from_parts([B0, B1]), 1)
    np.testing.assert_array_equal(c.matrix.entries, np.vstack([B0, B1]))


def test_terminated_w2_band():
    split, _ = fixture_split("toy_w2")
    c = couple_terminated(split, 4)
    assert c.matrix.shape == (18, 16)
    for t in range(6):
        for s in range(4):
            k = t - s
            want = split.parts[k].entries if 0 <= k <= 2 else 0
            np.testing.assert_array_equal(c.block(t, s), np.zeros((3, 4), int) + want)


@pytest.mark.parametrize("L", [1, 3, 7])
def test_terminated_degrees(L):
    split, _ = fixture_split("toy_w2")
    c = couple_terminated(split, L)
    cols = c.matrix.entries.sum(axis=0).reshape(L, 4)
    assert (cols == split.base.col_weights()).all()
    rw = c.row_weights
    m, W = 3, 2
    assert (rw[W * m:L * m] == 6).all()
    assert (rw <= 6).all()


def test_tailbiting():
    split = SplitSet.from_parts([B0, B1])
    c = couple_tailbiting(split, 3)
    E = c.matrix.entries
    np.testing.assert_array_equal(E[0:3, 8:12], B1)
    np.testing.assert_array_equal(E[3:6, 0:4], B1)
    np.testing.assert_array_equal(E[6:9, 8:12], B0)
    assert (c.row_weights == 6).all()
    assert sorted(c.row_weights.tolist()) == sorted(np.tile(Protomatrix(B).row_weights(), 3).tolist())
    with pytest.raises(ProtographError):
        couple_tailbiting(split, 1)


def test_tailbiting_zero_part_is_block_diagonal():
    split = SplitSet(Protomatrix(B), (Protomatrix(B), Protomatrix(np.zeros((3, 4), int))))
    E = couple_tailbiting(split, 3).matrix.entries
    np.testing.assert_array_equal(E, np.kron(np.eye(3, dtype=int), np.array(B)))


def test_convolutional_window():
    split = SplitSet.from_parts([B0, B1])
    cp = ConvolutionalProtograph(split)
    np.testing.assert_array_equal(cp.block(5, 4), B1)
    assert not cp.block(5, 3).any()
    w = cp.window(2, 3)
    # rows t=2,3 touch columns s=1..3
    assert w.matrix.shape == (6, 12)


@pytest.mark.parametrize("name,r,want,dec", [
    ("r4_opt", 4, Fraction(4, 81), "0.0494"),
    ("r5_opt", 5, Fraction(4, 190), "0.0211"),
    ("r8_opt", 8, Fraction(10, 1245), "0.0080"),
])
def test_rate_block(name, r, want, dec):
    split, rr = fixture_split(name)
    assert rr == r
    assert rate_block(split.base, r) == want
    assert str(rate_decimal(want)) == dec


def test_rate_terminated():
    split, _ = fixture_split("r4_opt")
    assert rate_terminated(split.base, 4, 1, 500) == Fraction(1993, 40570)
    assert abs(float(rate_terminated(split.base, 4, 1, 10**9)) - 4 / 81) < 1e-6
    rates = [rate_terminated(split.base, 4, 1, L) for L in range(2, 51)]
    assert all(a < b for a, b in zip(rates, rates[1:]))
    s10, _ = fixture_split("r10_opt")
    assert str(rate_decimal(rate_terminated(s10.base, 10, 1, 100))) == "0.0029"


def test_rate_rejects_bad_rows():
    with pytest.raises(ProtographError):
        rate_block(Protomatrix([[1, 2, 2]]), 4)


def test_nonpositive_terminated_rate():
    with pytest.raises(ProtographError):
        rate_terminated(Protomatrix([[3, 3]]), 4, 1, 1)


def test_text_round_trip():
    split, r = fixture_split("toy_w2")
    again, r2 = parse_split(format_split(split, r))
    assert again == split and r2 == r


@pytest.mark.parametrize("text", ["", "3 4 1\n", "1 2 0 4\n1 x\n", "1 2 0 4\n1 2 3\n", "2 2 0 4\n1 1\n"])
def test_parse_errors(text):
    with pytest.raises(ProtographError):
        parse_split(text)
