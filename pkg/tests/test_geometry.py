import itertools

import pytest
import torch
from hypothesis import given, strategies as st

from cloc.errors import CoordinateOutOfRange, DegenerateBox, OddDimension
from cloc.geometry import BoundingBox, box_prompt_tokens, clamp_box, encode_box_prompt, iou, validate_box

unit = st.floats(min_value=0.0, max_value=1.0, allow_nan=False)


@st.composite
def boxes(draw, min_size=0.0):
    x1, x2 = sorted([draw(unit), draw(unit)])
    y1, y2 = sorted([draw(unit), draw(unit)])
    if x2 - x1 < min_size or y2 - y1 < min_size:
        x1, y1 = max(0.0, x2 - min_size), max(0.0, y2 - min_size)
        x2, y2 = x1 + min_size, y1 + min_size
    return validate_box((x1, y1, x2, y2))


def test_full_image_box():
    b = validate_box((0, 0, 1, 1))
    assert b == BoundingBox(0.0, 0.0, 1.0, 1.0)
    assert b.area == 1.0


def test_degenerate_box_rejected():
    with pytest.raises(DegenerateBox):
        validate_box((0.2, 0.3, 0.1, 0.5))


@pytest.mark.parametrize("raw", [(-0.1, 0, 0.5, 0.5), (0, 0, 1.2, 1), (0, 0, float("nan"), 1)])
def test_out_of_range_rejected(raw):
    with pytest.raises(CoordinateOutOfRange):
        validate_box(raw)


def test_quarter_area():
    assert validate_box((0.25, 0.25, 0.75, 0.75)).area == 0.25


def test_iou_examples():
    b = validate_box((0.1, 0.2, 0.6, 0.9))
    assert iou(b, b) == 1.0
    assert iou(validate_box((0, 0, 0.5, 0.5)), validate_box((0.5, 0.5, 1, 1))) == 0.0
    # intersection 0.5, union 1.0
    assert iou(validate_box((0, 0, 1, 1)), validate_box((0, 0, 0.5, 1))) == pytest.approx(0.5, abs=1e-15)


def test_zero_area_convention():
    p = validate_box((0.3, 0.3, 0.3, 0.3))
    q = validate_box((0.4, 0.4, 0.4, 0.4))
    assert iou(p, p) == 1.0
    assert iou(p, q) == 0.0


@given(boxes(), boxes())
def test_iou_symmetric_and_bounded(a, b):
    v = iou(a, b)
    assert v == iou(b, a)
    assert 0.0 <= v <= 1.0


@given(boxes(min_size=1e-3), boxes(min_size=1e-3))
def test_iou_one_iff_equal(a, b):
    gap = max(abs(u - v) for u, v in zip(a.as_tuple(), b.as_tuple()))
    if a == b:
        assert iou(a, b) == pytest.approx(1.0)
    elif gap > 1e-9:  # smaller offsets vanish in double-precision areas
        assert iou(a, b) < 1.0


def test_clamp_box_reorders_and_clips():
    assert clamp_box((0.8, 1.3, -0.2, 0.4)).as_tuple() == (0.0, 0.4, 0.8, 1.0)


def test_box_prompt_zero_box_alternates():
    tok = encode_box_prompt(validate_box((0, 0, 0, 0)), 8)
    assert tok.shape == (2, 8)
    assert tok[0].tolist() == [0.0, 1.0] * 4


def test_box_prompt_deterministic():
    b = validate_box((0.1, 0.2, 0.3, 0.4))
    assert torch.equal(encode_box_prompt(b, 32), encode_box_prompt(b, 32))


def test_box_prompt_odd_dimension():
    with pytest.raises(OddDimension):
        encode_box_prompt(validate_box((0, 0, 1, 1)), 7)


@given(boxes(), st.sampled_from([4, 6, 8, 16, 128]))
def test_box_prompt_bounded(b, d):
    tok = encode_box_prompt(b, d)
    assert tok.shape == (2, d)
    assert tok.abs().max() <= 1.0


def test_box_prompt_corner_grid_injective():
    # 100 x 100 grid of corner positions with spacing 1e-2 (>= 1e-3)
    vals = torch.arange(100, dtype=torch.float64) / 100
    corners = torch.tensor(list(itertools.product(vals.tolist(), vals.tolist())), dtype=torch.float64)
    boxes_t = torch.cat([corners, corners], dim=1)
    enc = box_prompt_tokens(boxes_t, 16)[:, 0]
    d = torch.cdist(enc, enc)
    d.fill_diagonal_(float("inf"))
    assert d.min() > 1e-6


def test_box_prompt_separates_small_shifts():
    base = validate_box((0.5, 0.5, 0.6, 0.6))
    for i in range(4):
        shifted = list(base.as_tuple())
        shifted[i] += 1e-3
        assert not torch.equal(encode_box_prompt(base, 128), encode_box_prompt(validate_box(shifted), 128))
