"""Region-caption candidates from captions and box matching against scene ground truth.

Phrase extraction follows the usual noun-phrase recipe: lowercase, tokenize,
drop generic web words, POS-tag, chunk with ``DT? JJ* NN+`` and discard chunks
made only of stopwords. Tagging uses a small lexicon instead of a statistical
tagger. Detection is simulated: each ground-truth region takes the candidate
with the best token F1 against its true phrase, and regions whose best score
is not above 0.1 are dropped.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

from .synthdata import (
    COLORS,
    SHAPES,
    SIZES,
    DatasetRecord,
    RegionAnnotation,
    SceneSpec,
    generate_scene,
    iter_dataset,
)
from .errors import ZeroImages
from .tokenizer import split_words

MAX_QUERIES = 20
CONFIDENCE_THRESHOLD = 0.1

# Stopwords from nltk.corpus.stopwords.words("english")
STOPWORDS_EN = frozenset({
    "a", "about", "above", "after", "again", "against", "all", "am", "an",
    "and", "any", "are", "as", "at", "be", "because", "been", "before", "being",
    "below", "between", "both", "but", "by", "can", "did", "do", "does",
    "doing", "don", "down", "during", "each", "few", "for", "from", "further",
    "had", "has", "have", "having", "he", "her", "here", "hers", "herself",
    "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not",
    "now", "of", "off", "on", "once", "only", "or", "other", "our", "ours",
    "ourselves", "out", "over", "own", "s", "same", "she", "should", "so",
    "some", "such", "t", "than", "that", "the", "their", "theirs", "them",
    "themselves", "then", "there", "these", "they", "this", "those", "through",
    "to", "too", "under", "until", "up", "very", "was", "we", "were", "what",
    "when", "where", "which", "while", "who", "whom", "why", "will", "with",
    "you", "your", "yours", "yourself", "yourselves"
})

# Generic alt-text words without specific meaning
COMMON_GENERIC_WORDS = frozenset({
    "alibaba", "aliexpress", "amazon", "available", "background", "blog", "buy",
    "co", "com", "description", "diy", "download", "facebook", "free", "gif",
    "hd", "ideas", "illustration", "illustrations", "image", "images", "img",
    "instagram", "jpg", "online", "org", "original", "page", "pdf", "photo",
    "photography", "photos", "picclick", "picture", "pictures", "png", "porn",
    "premium", "resolution", "royalty", "sale", "sex", "shutterstock", "stock",
    "svg", "thumbnail", "tumblr", "tumgir", "twitter", "uk", "uploaded", "vector",
    "vectors", "video", "videos", "wallpaper", "wallpapers", "wholesale", "www",
    "xxx", "youtube"
})


def _tags(tag: str, words: str) -> dict[str, str]:
    return {w: tag for w in words.split()}


_BASE_LEXICON: dict[str, str] = {
    **_tags("DT", "a an the this that these those each all any some no both every another"),
    **_tags("IN", "about above after against at before below between by during for from in into of off "
                  "on over through to under until with as than because if while near beside behind inside "
                  "across along around among up down out"),
    **_tags("CC", "and or but nor"),
    **_tags("PRP", "i me he him she her it we us they them you myself himself herself itself ourselves "
                   "themselves yourself yourselves"),
    **_tags("PRP$", "my his its our their your hers ours theirs yours"),
    **_tags("VBZ", "is has does"),
    **_tags("VBP", "am are have do don"),
    **_tags("VBD", "was were had did"),
    **_tags("VBN", "been"),
    **_tags("VBG", "being having doing"),
    **_tags("VB", "be"),
    **_tags("MD", "can will should could would may might must"),
    **_tags("RB", "again further then once here there very too so just now only not also always never"),
    **_tags("WRB", "when where why how"),
    **_tags("WDT", "what which"),
    **_tags("WP", "who whom"),
    **_tags("JJ", "few other own same such many several"),
    **_tags("JJR", "more"),
    **_tags("JJS", "most"),
    **_tags("NN", "s t"),
    **_tags("CD", "one two three four five six seven eight nine ten"),
    # scene vocabulary
    **_tags("JJ", " ".join(SIZES)),
    **_tags("JJ", " ".join(COLORS)),
    **_tags("NN", " ".join(SHAPES)),
    **_tags("JJ", "large tiny little long short tall round bright dark wooden metal old new green-roofed "
                  "decorative purple pink brown black gray grey golden silver"),
    **_tags("NN", "picture photo image scene table dog cat tree car house sky grass man woman"),
}

_SUFFIX_RULES: tuple[tuple[str, str], ...] = (
    ("ness", "NN"),
    ("ment", "NN"),
    ("tion", "NN"),
    ("ous", "JJ"),
    ("ful", "JJ"),
    ("ive", "JJ"),
    ("able", "JJ"),
    ("ible", "JJ"),
    ("ing", "VBG"),
    ("ed", "VBD"),
    ("ly", "RB"),
    ("ss", "NN"),
    ("s", "NNS"),
)

_PUNCT_TAG = {",": ",", ".": ".", ":": ":", ";": ":", "!": ".", "?": "."}


@dataclass
class PosLexicon:
    """Word -> tag table with suffix fallbacks; unknown words default to NN."""

    table: dict[str, str] = field(default_factory=lambda: dict(_BASE_LEXICON))
    suffix_rules: tuple[tuple[str, str], ...] = _SUFFIX_RULES
    default: str = "NN"

    def tag(self, word: str) -> str:
        if word in self.table:
            return self.table[word]
        if word in _PUNCT_TAG:
            return _PUNCT_TAG[word]
        if not any(c.isalnum() for c in word):
            return "SYM"
        if word.isdigit():
            return "CD"
        for suffix, tag in self.suffix_rules:
            if len(word) > len(suffix) + 2 and word.endswith(suffix):
                return tag
        return self.default

    def pos_tag(self, words: list[str]) -> list[tuple[str, str]]:
        return [(w, self.tag(w)) for w in words]


DEFAULT_LEXICON = PosLexicon()


@dataclass(frozen=True)
class PhraseCandidate:
    text: str
    start: int  # token span in the generic-word-filtered caption
    end: int

    @property
    def words(self) -> list[str]:
        return self.text.split()


_TOKEN_RE = re.compile(r"[a-z0-9]+(?:[-'][a-z0-9]+)*|[^\sa-z0-9]")


def caption_tokens(caption: str) -> list[str]:
    """Lowercase and split into words and single punctuation marks."""
    return _TOKEN_RE.findall(caption.lower())


def _chunk_code(tag: str) -> str:
    if tag == "DT":
        return "D"
    if tag.startswith("JJ"):
        return "J"
    if tag.startswith("NN"):
        return "N"
    return "x"


_NP_RE = re.compile(r"D?J*N+")


def chunk_noun_phrases(tagged: list[tuple[str, str]]) -> list[tuple[int, int]]:
    """Leftmost-longest ``DT? JJ* NN+`` spans as (start, end) token indices."""
    codes = "".join(_chunk_code(t) for _, t in tagged)
    return [m.span() for m in _NP_RE.finditer(codes)]


def extract_phrases(
    caption: str, max_queries: int = MAX_QUERIES, lexicon: PosLexicon = DEFAULT_LEXICON
) -> list[PhraseCandidate]:
    words = [w for w in caption_tokens(caption) if w not in COMMON_GENERIC_WORDS]
    tagged = lexicon.pos_tag(words)
    out = []
    for start, end in chunk_noun_phrases(tagged):
        chunk = words[start:end]
        if set(chunk).issubset(STOPWORDS_EN):
            continue
        out.append(PhraseCandidate(" ".join(chunk), start, end))
    return out[:max_queries]


def ngram_candidates(caption: str, max_n: int = 3) -> list[PhraseCandidate]:
    """All word n-grams (n <= max_n) under the same generic-word and stopword filters."""
    words = [w for w in split_words(caption) if w not in COMMON_GENERIC_WORDS]
    out = []
    for n in range(1, max_n + 1):
        for i in range(len(words) - n + 1):
            gram = words[i : i + n]
            if set(gram).issubset(STOPWORDS_EN):
                continue
            out.append(PhraseCandidate(" ".join(gram), i, i + n))
    return out


def token_f1(candidate: str, reference: str) -> float:
    c, r = split_words(candidate), split_words(reference)
    if not c or not r:
        return 0.0
    overlap = sum((Counter(c) & Counter(r)).values())
    if overlap == 0:
        return 0.0
    precision, recall = overlap / len(c), overlap / len(r)
    return 2 * precision * recall / (precision + recall)


def oracle_detect(scene: SceneSpec, candidates: list[PhraseCandidate]) -> list[RegionAnnotation]:
    """Stand-in detector: label each true box with its best-matching candidate phrase.

    Ties go to the earliest candidate; a phrase may label several boxes.
    """
    out = []
    for box, phrase in scene.regions:
        best, best_score = None, 0.0
        for cand in candidates:
            score = token_f1(cand.text, phrase)
            if score > best_score:
                best, best_score = cand, score
        if best is not None and best_score > CONFIDENCE_THRESHOLD:
            out.append(RegionAnnotation(box, best.text, best_score))
    return out


def annotate_record(record: DatasetRecord, candidates: str = "ner") -> tuple[DatasetRecord, int]:
    """Replace the regions of ``record``; returns the new record and the raw candidate count."""
    if record.seed is None:
        raise ValueError(f"record {record.id} has no scene seed to detect against")
    if candidates == "ner":
        cands = extract_phrases(record.caption)
    elif candidates == "ngram":
        cands = ngram_candidates(record.caption)
    else:
        raise ValueError(f"unknown candidate mode {candidates!r}")
    regions = oracle_detect(generate_scene(record.seed), cands)
    return DatasetRecord(record.id, record.caption, record.seed, None, regions or None), len(cands)


@dataclass
class AnnotationSummary:
    images: int = 0
    true_regions: int = 0
    kept_regions: int = 0
    correct_regions: int = 0
    candidates: int = 0

    @property
    def recovery(self) -> float:
        return self.kept_regions / self.true_regions if self.true_regions else 0.0

    @property
    def correct_recovery(self) -> float:
        return self.correct_regions / self.true_regions if self.true_regions else 0.0

    def as_dict(self) -> dict:
        return {
            "images": self.images,
            "true_regions": self.true_regions,
            "kept_regions": self.kept_regions,
            "correct_regions": self.correct_regions,
            "candidates": self.candidates,
            "recovery": self.recovery,
            "correct_recovery": self.correct_recovery,
        }


def annotate_records(
    records: Iterable[DatasetRecord], candidates: str = "ner", summary: AnnotationSummary | None = None
) -> Iterator[DatasetRecord]:
    """Annotate a stream of records; ``summary`` is updated in place as records flow through.

    A kept region counts as correct when every word of its true phrase
    appears in the assigned caption.
    """
    summary = AnnotationSummary() if summary is None else summary
    for rec in records:
        new, n_cands = annotate_record(rec, candidates)
        scene = generate_scene(rec.seed)
        truth = dict((box, phrase) for box, phrase in scene.regions)
        summary.images += 1
        summary.true_regions += len(scene.objects)
        summary.candidates += n_cands
        for ann in new.regions or []:
            summary.kept_regions += 1
            if set(split_words(truth[ann.box])) <= set(split_words(ann.text)):
                summary.correct_regions += 1
        yield new


@dataclass(frozen=True)
class DatasetStats:
    images: int
    mean_regions_per_image: float
    mean_image_text_len: float
    mean_region_text_len: float

    def as_dict(self) -> dict:
        return {
            "images": self.images,
            "mean_regions_per_image": self.mean_regions_per_image,
            "mean_image_text_len": self.mean_image_text_len,
            "mean_region_text_len": self.mean_region_text_len,
        }


def dataset_stats(dataset: str | Path | Iterable[DatasetRecord]) -> DatasetStats:
    """Corpus statistics; token lengths count words as split by the model tokenizer."""
    records = iter_dataset(dataset) if isinstance(dataset, (str, Path)) else dataset
    n_images = n_regions = caption_tokens_total = region_tokens_total = 0
    for rec in records:
        n_images += 1
        caption_tokens_total += len(split_words(rec.caption))
        for reg in rec.regions or []:
            n_regions += 1
            region_tokens_total += len(split_words(reg.text))
    if n_images == 0:
        raise ZeroImages("dataset has no records")
    return DatasetStats(
        images=n_images,
        mean_regions_per_image=n_regions / n_images,
        mean_image_text_len=caption_tokens_total / n_images,
        mean_region_text_len=region_tokens_total / n_regions if n_regions else 0.0,
    )
