#!/usr/bin/env python3
"""Regenerate the text fixtures under crates/core/tests/fixtures/.

Lines are built from lexicon words with a fixed seed. Generation continues
until the phonemized lines use every symbol of the en-US inventory, so
phonemic character vocabularies built from the fixture are complete.

    python3 scripts/make_fixtures.py
"""

import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
ASSETS = ROOT / "crates" / "core" / "assets" / "en_us"
OUT = ROOT / "crates" / "core" / "tests" / "fixtures"

PUNCT = [".", ".", ".", "?", "!", ","]


def read_rows(path):
    for line in path.read_text(encoding="utf-8").splitlines():
        if line and not line.startswith("#"):
            yield line


def make_lines(rng, words, prons, inventory, n):
    lines, seen = [], set()
    while len(lines) < n:
        k = rng.randint(4, 12)
        picked = [rng.choice(words) for _ in range(k)]
        # Bias later lines towards words carrying symbols not yet seen.
        missing = inventory - seen
        if missing and len(lines) > n // 2:
            carriers = [w for w in words if missing & set(prons[w])]
            picked[rng.randrange(k)] = rng.choice(carriers)
        for w in picked:
            seen.update(prons[w])
        text = " ".join(picked)
        text = text[0].upper() + text[1:] + rng.choice(PUNCT)
        lines.append(text)
    assert seen >= inventory, sorted(inventory - seen)
    return lines


def main():
    inventory = set(read_rows(ASSETS / "inventory.txt"))
    prons = {}
    for row in read_rows(ASSETS / "lexicon.tsv"):
        word, phones = row.split("\t")
        if word.isalpha() and word not in prons:
            prons[word] = phones.split()
    words = sorted(prons)
    OUT.mkdir(parents=True, exist_ok=True)
    for name, n, seed in [("corpus_1k.txt", 1000, 1), ("corpus_100.txt", 100, 2)]:
        lines = make_lines(random.Random(seed), words, prons, inventory, n)
        (OUT / name).write_text("\n".join(lines) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
