"""Regenerate tests/data/vesl_golden.jsonl with nltk's RegexpParser as the chunker.

The expected phrases come from nltk's chunk parser fed with the package's
lexicon tags, so they are independent of the regex chunker in ``cloc.vesl``.
Review the output by hand after any change.

    python3 scripts/make_vesl_golden.py
"""

import json
from pathlib import Path

import nltk

from cloc.vesl import COMMON_GENERIC_WORDS, DEFAULT_LEXICON, MAX_QUERIES, STOPWORDS_EN, caption_tokens

CAPTIONS = [
    "a photo of the red apples and green vases",
    "the",
    "",
    "a picture with a big red circle and a small blue square",
    "a picture with a big red circle, a small blue square and a small white triangle",
    "a picture with a small cyan triangle",
    "stock photo of a dog on the grass",
    "Royalty free vector illustration of a tall tree",
    "A man and a woman walking near the old house",
    "the cat is sitting on the wooden table",
    "two dogs playing in the park at sunset",
    "a red car parked beside a tall building",
    "image of a golden retriever in the snow",
    "the sky is very bright today",
    "close up of a pink flower with green leaves",
    "this is it",
    "some of them were there",
    "a bowl of fresh fruit on a kitchen counter",
    "white clouds over the blue ocean",
    "an old man reading a newspaper in the morning",
    "a little girl with a purple umbrella",
    "the big brown dog and the small black cat",
    "wallpaper hd background with beautiful mountains",
    "download free clipart of a yellow star",
    "people at the beach during summer",
    "A dark forest path covered with leaves.",
    "the quick brown fox jumps over the lazy dog",
    "a tall glass of orange juice next to breakfast",
    "a group of students in a classroom",
    "the happiness of children on a playground",
    "Shutterstock image: silver necklace with a round pendant",
    "a boat on the lake, mountains in the distance",
    "a square box and a round ball",
    "the red and the blue",
    "all of the small ones",
    "a very tall and thin tower in the city center",
    "the dog's toy under the chair",
    "a green-roofed house near a river",
    "three red apples and two green pears on a plate",
    "a woman wearing a black dress and white shoes",
    "an elephant in the wild",
    "fresh bread, cheese and wine on a wooden board",
    "two big magenta circles and a tiny orange square",
    "the most beautiful sunset over the sea",
    "a sign that says stop",
    "aerial view of a busy highway at night",
    "a cup of coffee and a laptop on a desk",
    "the cat the dog the bird the fish the cow the horse the pig the goat the duck the hen "
    "the fox the owl the bee the ant the bat the rat the eel the elk the yak the emu "
    "the ram the ox the gnu the cod the jay the asp the koi the kid the cub the pup",
    "a picture with a small red circle, a big red circle, a small red square, a big red square, "
    "a small red triangle and a big red triangle",
    "colorful balloons floating in the air",
]

GRAMMAR = "NP: {<DT>?<JJ.*>*<NN.*>+}"


def oracle_phrases(caption: str, parser: nltk.RegexpParser) -> list[str]:
    words = [w for w in caption_tokens(caption) if w not in COMMON_GENERIC_WORDS]
    if not words:
        return []
    tree = parser.parse(DEFAULT_LEXICON.pos_tag(words))
    out = []
    for sub in tree.subtrees(lambda t: t.label() == "NP"):
        chunk = [w for w, _ in sub.leaves()]
        if all(w in STOPWORDS_EN for w in chunk):
            continue
        out.append(" ".join(chunk))
    return out[:MAX_QUERIES]


def main() -> None:
    parser = nltk.RegexpParser(GRAMMAR)
    path = Path(__file__).resolve().parent.parent / "tests" / "data" / "vesl_golden.jsonl"
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for caption in CAPTIONS:
            fh.write(json.dumps({"caption": caption, "phrases": oracle_phrases(caption, parser)}) + "\n")
    print(f"wrote {len(CAPTIONS)} captions to {path}")


if __name__ == "__main__":
    main()
