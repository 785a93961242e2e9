import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from cloc.errors import ZeroImages
from cloc.geometry import validate_box
from cloc.synthdata import (
    DatasetRecord,
    RegionAnnotation,
    SceneObject,
    SceneSpec,
    corpus_vocabulary,
    generate_corpus,
    write_dataset,
)
from cloc.vesl import (
    COMMON_GENERIC_WORDS,
    DEFAULT_LEXICON,
    STOPWORDS_EN,
    AnnotationSummary,
    PhraseCandidate,
    annotate_records,
    caption_tokens,
    dataset_stats,
    extract_phrases,
    ngram_candidates,
    oracle_detect,
    token_f1,
)

GOLDEN = Path(__file__).parent / "data" / "vesl_golden.jsonl"


def texts(caption, **kw):
    return [c.text for c in extract_phrases(caption, **kw)]


def test_examples():
    assert texts("a photo of the red apples and green vases") == ["the red apples", "green vases"]
    assert texts("the") == []
    assert texts("") == []


def test_cap_at_twenty():
    nouns = [f"thing{i}x" for i in range(30)]
    caption = " and ".join(f"the {n}" for n in nouns)
    out = texts(caption)
    assert len(out) == 20
    assert out == [f"the {n}" for n in nouns[:20]]
    assert len(texts(caption, max_queries=50)) == 30


def test_golden_file():
    rows = [json.loads(line) for line in GOLDEN.read_text().splitlines()]
    assert len(rows) == 50
    for row in rows:
        assert texts(row["caption"]) == row["phrases"], row["caption"]


def test_lexicon_covers_corpus_vocabulary():
    for word in corpus_vocabulary():
        assert word in DEFAULT_LEXICON.table


def test_unknown_word_defaults_to_noun():
    assert DEFAULT_LEXICON.tag("zebra") == "NN"


word_pool = st.sampled_from(
    ["a", "the", "red", "big", "circle", "dog", "and", "of", "with", "green", "vases", "is", "photo",
     "stock", "image", "small", ",", "blue", "square", "on", "tree", "very"]
)


@given(st.lists(word_pool, max_size=25))
def test_candidates_ordered_non_overlapping(words):
    cands = extract_phrases(" ".join(words))
    for a, b in zip(cands, cands[1:]):
        assert a.end <= b.start
    for c in cands:
        assert not set(c.words) <= STOPWORDS_EN
        assert not set(c.words) & COMMON_GENERIC_WORDS


@given(st.lists(word_pool, max_size=20), st.integers(0, 20), st.sampled_from(sorted(COMMON_GENERIC_WORDS)))
def test_generic_word_never_adds_candidates(words, pos, generic):
    with_generic = words[:pos] + [generic] + words[pos:]
    assert len(extract_phrases(" ".join(with_generic))) <= len(extract_phrases(" ".join(words)))


def test_token_f1_example():
    assert token_f1("red circle", "big red circle") == pytest.approx(0.8, abs=1e-15)
    assert token_f1("big red circle", "big red circle") == 1.0
    assert token_f1("blue square", "big red circle") == 0.0


def _scene(*objs):
    return SceneSpec(0, tuple(objs))


CIRCLE = SceneObject("circle", "red", "big", 0.3, 0.3, 0.15)
SQUARE = SceneObject("square", "blue", "small", 0.7, 0.7, 0.1)


def test_oracle_exact_match_confidence_one():
    out = oracle_detect(_scene(CIRCLE), [PhraseCandidate("a dog", 0, 2), PhraseCandidate("big red circle", 2, 5)])
    assert out == [RegionAnnotation(CIRCLE.box, "big red circle", 1.0)]


def test_oracle_zero_overlap_dropped():
    assert oracle_detect(_scene(CIRCLE, SQUARE), [PhraseCandidate("small blue square", 0, 3)]) == [
        RegionAnnotation(SQUARE.box, "small blue square", 1.0)
    ]


def test_oracle_partial_match_and_reuse():
    out = oracle_detect(_scene(CIRCLE, SceneObject("circle", "red", "small", 0.7, 0.7, 0.1)),
                        [PhraseCandidate("red circle", 0, 2)])
    assert [a.conf for a in out] == pytest.approx([0.8, 0.8])
    assert all(a.text == "red circle" for a in out)


def test_oracle_annotations_valid():
    records = list(generate_corpus(50, 2))
    for rec in annotate_records(records, "ngram"):
        for reg in rec.regions or []:
            assert reg.conf > 0.1
            validate_box(reg.box.as_tuple())


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_rich_caption_recovery(seed):
    summary = AnnotationSummary()
    out = list(annotate_records(generate_corpus(200, seed), "ner", summary))
    assert len(out) == 200
    assert summary.recovery >= 0.95
    assert summary.correct_recovery >= 0.95


def test_impoverished_captions_lose_regions():
    rich, poor = AnnotationSummary(), AnnotationSummary()
    list(annotate_records(generate_corpus(200, 0), "ner", rich))
    list(annotate_records(generate_corpus(200, 0, caption_mode="impoverished"), "ngram", poor))
    assert poor.correct_recovery < rich.correct_recovery


def test_ngram_candidates_filtered():
    grams = [c.text for c in ngram_candidates("a photo of the dog")]
    assert "photo" not in " ".join(grams)
    assert "a" not in grams and "of the" not in grams
    assert "dog" in grams and "the dog" in grams and "of the dog" in grams


def test_caption_tokens_punctuation():
    assert caption_tokens("A dog, a cat.") == ["a", "dog", ",", "a", "cat", "."]


def test_stats_mean_regions():
    box = validate_box((0, 0, 0.5, 0.5))
    recs = [
        DatasetRecord("a", "one two", seed=1, regions=[RegionAnnotation(box, "x y", 1.0)] * 3),
        DatasetRecord("b", "one two three four", seed=2, regions=[RegionAnnotation(box, "x", 1.0)] * 5),
    ]
    stats = dataset_stats(recs)
    assert stats.images == 2
    assert stats.mean_regions_per_image == 4.0
    assert stats.mean_image_text_len == 3.0
    assert stats.mean_region_text_len == pytest.approx(11 / 8)


def test_stats_empty(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(ZeroImages):
        dataset_stats(path)


def test_stats_reproducible(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_dataset(annotate_records(generate_corpus(100, 7)), a)
    write_dataset(annotate_records(generate_corpus(100, 7)), b)
    assert a.read_bytes() == b.read_bytes()
    assert dataset_stats(a) == dataset_stats(b)
