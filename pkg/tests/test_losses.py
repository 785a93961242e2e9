import math

import pytest
import torch
from hypothesis import given, settings, strategies as st

from cloc.encoders import l2_normalize
from cloc.errors import EmptyBatch, NoRegions
from cloc.losses import BatchEmbeddings, build_negative_mask, clip_loss, cloc_loss, grounding_loss, total_loss

from oracles import D, brute_clip, brute_cloc, make_batch, unit


def test_clip_single_pair_is_zero():
    gen = torch.Generator().manual_seed(0)
    b = make_batch(gen, 1, [0])
    assert float(clip_loss(b)) == 0.0


def test_clip_two_pairs_hand_value():
    e = torch.tensor([[1.0, 0.0]], dtype=D)
    b = BatchEmbeddings(
        image_emb=torch.cat([e, -e]),
        text_emb=torch.cat([e, -e]),
        temperature=torch.tensor(1.0, dtype=D),
        has_region_labels=torch.tensor([False, False]),
    )
    assert float(clip_loss(b)) == pytest.approx(math.log(1 + math.exp(-2)), abs=1e-14)


def test_clip_empty_batch():
    b = BatchEmbeddings(torch.zeros(0, 4), torch.zeros(0, 4), torch.tensor(1.0), torch.zeros(0, dtype=torch.bool))
    with pytest.raises(EmptyBatch):
        clip_loss(b)


def test_cloc_no_regions():
    gen = torch.Generator().manual_seed(0)
    with pytest.raises(NoRegions):
        cloc_loss(make_batch(gen, 2, [0, 0]))


def test_cloc_single_region_is_zero():
    gen = torch.Generator().manual_seed(0)
    assert float(cloc_loss(make_batch(gen, 1, [1]))) == 0.0


def test_vectorized_matches_brute_force():
    gen = torch.Generator().manual_seed(1234)
    for trial in range(100):
        n = int(torch.randint(1, 5, (1,), generator=gen))
        counts = [int(c) for c in torch.randint(0, 4, (n,), generator=gen)]
        if sum(counts) == 0:
            counts[0] = 1
        b = make_batch(gen, n, counts, tau=float(torch.empty(1).uniform_(0.05, 1.0, generator=gen)))
        tau = float(b.temperature)
        assert abs(float(clip_loss(b)) - brute_clip(b.image_emb.tolist(), b.text_emb.tolist(), tau)) < 1e-10
        regions, texts = b.region_emb.tolist(), b.region_text_emb.tolist()
        assert abs(float(cloc_loss(b)) - brute_cloc(regions, texts, tau)) < 1e-10
        mask = build_negative_mask(b.region_text_emb, 0.9)
        assert abs(float(cloc_loss(b, mask)) - brute_cloc(regions, texts, tau, 0.9)) < 1e-10


def test_mask_empty_when_texts_dissimilar():
    t = torch.eye(4, dtype=D)
    mask = build_negative_mask(t, 0.9)
    assert not mask.any()
    gen = torch.Generator().manual_seed(3)
    b = make_batch(gen, 2, [2, 2], d=8, dup_prob=0.0)
    b.region_text_emb = torch.eye(8, dtype=D)[:4]
    assert float(cloc_loss(b, build_negative_mask(b.region_text_emb))) == float(cloc_loss(b))


def test_mask_duplicate_caption():
    t = l2_normalize(torch.tensor([[1.0, 0.2, 0.0], [1.0, 0.2, 0.0], [0.0, 0.0, 1.0]], dtype=D))
    mask = build_negative_mask(t, 0.9)
    assert mask[0, 1] and mask[1, 0]
    assert not mask.diagonal().any()
    assert not mask[0, 2] and not mask[2, 0]


def test_masking_hard_negative_lowers_loss():
    z = l2_normalize(torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=D))
    t = l2_normalize(torch.tensor([[1.0, 0.0], [1.0, 0.0]], dtype=D))
    b = BatchEmbeddings(
        image_emb=z[:1], text_emb=z[:1], temperature=torch.tensor(0.5, dtype=D),
        has_region_labels=torch.tensor([True]), region_emb=z, region_text_emb=t,
        region_image=torch.tensor([0, 0]), gt_boxes=torch.zeros(2, 4, dtype=D),
    )
    mask = build_negative_mask(t)
    assert mask[0, 1]
    assert float(cloc_loss(b, mask)) < float(cloc_loss(b))


def test_mask_contributes_no_gradient():
    gen = torch.Generator().manual_seed(11)
    b = make_batch(gen, 3, [2, 2, 1], dup_prob=0.8)
    leaves = [b.image_emb, b.text_emb, b.region_emb, b.region_text_emb, b.pred_boxes]
    for x in leaves:
        x.requires_grad_(True)
    mask = build_negative_mask(b.region_text_emb)
    assert not mask.requires_grad and mask.any()

    total_loss(b, threshold=0.9).total.backward()
    inside = [x.grad.clone() for x in leaves]
    for x in leaves:
        x.grad = None
    total_loss(b, mask=build_negative_mask(b.region_text_emb.detach().clone())).total.backward()
    for g, x in zip(inside, leaves):
        assert torch.equal(g, x.grad)


def test_grounding_hand_values():
    gt = torch.tensor([[0.2, 0.2, 0.6, 0.6]], dtype=D)
    b = BatchEmbeddings(torch.zeros(1, 2), torch.zeros(1, 2), torch.tensor(1.0), torch.tensor([True]), gt_boxes=gt)
    assert float(grounding_loss(b, gt.clone())) == 0.0
    off = gt + torch.tensor([[0.1, 0.0, 0.0, 0.0]], dtype=D)
    assert float(grounding_loss(b, off)) == pytest.approx(0.025, abs=1e-15)


@given(st.lists(st.floats(-2, 2, allow_nan=False), min_size=8, max_size=8))
def test_grounding_nonnegative_zero_only_at_match(vals):
    gt = torch.tensor([vals[:4]], dtype=D)
    pred = torch.tensor([vals[4:]], dtype=D)
    b = BatchEmbeddings(torch.zeros(1, 2), torch.zeros(1, 2), torch.tensor(1.0), torch.tensor([True]), gt_boxes=gt)
    v = float(grounding_loss(b, pred))
    assert v >= 0.0
    if torch.equal(gt, pred):
        assert v == 0.0
    elif (gt - pred).abs().max() > 1e-100:  # squares of smaller offsets underflow
        assert v > 0.0


def test_total_loss_lambda_rule():
    gen = torch.Generator().manual_seed(5)
    none = make_batch(gen, 3, [0, 0, 0])
    out = total_loss(none)
    assert out.lambda_effective == 0.0
    assert float(out.total) == float(out.l_clip)
    assert float(out.l_cloc) == 0.0 and float(out.l_grounding) == 0.0

    full = total_loss(make_batch(gen, 3, [1, 2, 3]))
    assert full.lambda_effective == 1.0

    half = total_loss(make_batch(gen, 4, [2, 0, 1, 0]))
    assert half.lambda_effective == 0.5
    expected = float(half.l_clip) + 0.5 * (float(half.l_cloc) + float(half.l_grounding))
    assert float(half.total) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.integers(0, 3), min_size=1, max_size=5))
def test_permutation_invariance(seed, counts):
    gen = torch.Generator().manual_seed(seed)
    b = make_batch(gen, len(counts), counts)
    perm_img = torch.randperm(len(counts), generator=gen)
    base = total_loss(b).as_dict()
    # permute images and keep each image's regions attached to it
    r_img = b.region_image
    order = [r for i in perm_img.tolist() for r in range(len(r_img)) if int(r_img[r]) == i]
    order = torch.tensor(order, dtype=torch.long)
    inv = torch.empty_like(perm_img)
    inv[perm_img] = torch.arange(len(perm_img))
    p = BatchEmbeddings(
        image_emb=b.image_emb[perm_img], text_emb=b.text_emb[perm_img], temperature=b.temperature,
        has_region_labels=b.has_region_labels[perm_img],
        region_emb=None if b.region_emb is None else b.region_emb[order],
        region_text_emb=None if b.region_text_emb is None else b.region_text_emb[order],
        region_image=inv[r_img[order]] if len(order) else r_img,
        gt_boxes=b.gt_boxes[order], pred_boxes=b.pred_boxes[order],
    )
    for k, v in total_loss(p).as_dict().items():
        assert v == pytest.approx(base[k], abs=1e-10)


def test_temperature_monotone_when_separable():
    gen = torch.Generator().manual_seed(2)
    img = unit(gen, 4, 8)
    txt = l2_normalize(img + 0.1 * torch.randn(4, 8, generator=gen, dtype=D))
    sims = img @ txt.T
    assert sims.diagonal().min() > (sims - 10 * torch.eye(4, dtype=D)).max()
    values = []
    for tau in (1.0, 0.5, 0.1):
        b = BatchEmbeddings(img, txt, torch.tensor(tau, dtype=D), torch.zeros(4, dtype=torch.bool))
        values.append(float(clip_loss(b)))
    assert values[0] > values[1] > values[2]


def test_scale_invariance_of_normalized_inputs():
    gen = torch.Generator().manual_seed(8)
    raw = [torch.randn(5, 6, generator=gen, dtype=D) for _ in range(4)]

    def losses(c):
        img, txt, reg, rtxt = (l2_normalize(c * x) for x in raw)
        b = BatchEmbeddings(
            img[:2], txt[:2], torch.tensor(0.2, dtype=D), torch.tensor([True, True]),
            region_emb=reg, region_text_emb=rtxt, region_image=torch.tensor([0, 0, 1, 1, 1]),
            gt_boxes=torch.zeros(5, 4, dtype=D), pred_boxes=torch.ones(5, 4, dtype=D),
        )
        return total_loss(b).as_dict()

    a, b = losses(1.0), losses(37.5)
    for k in a:
        assert a[k] == pytest.approx(b[k], abs=1e-12)
