#!/usr/bin/env python3
"""Regenerate crates/core/assets/en_us/lexicon.tsv.

Inputs are the CMU Pronouncing Dictionary (cmudict.dict, as shipped by the
`cmudict` PyPI package) and the wordfreq English frequency table
(large_en.msgpack.gz, as shipped by the `wordfreq` package). The most frequent
words that have a CMU pronunciation are converted from ARPAbet to the 47-symbol
en-US inventory in crates/core/assets/en_us/inventory.txt.

    python3 scripts/build_en_us_lexicon.py CMUDICT WORDFREQ_MSGPACK [--size N]
"""

import argparse
import gzip
import re
import sys
from pathlib import Path

import msgpack

ROOT = Path(__file__).resolve().parent.parent
ASSETS = ROOT / "crates" / "core" / "assets"

CONSONANTS = {
    "P": "p", "B": "b", "T": "t", "D": "d", "K": "k", "G": "ɡ",
    "F": "f", "V": "v", "TH": "θ", "DH": "ð", "S": "s", "Z": "z",
    "SH": "ʃ", "ZH": "ʒ", "HH": "h", "CH": "tʃ", "JH": "dʒ",
    "M": "m", "N": "n", "NG": "ŋ", "L": "l", "R": "ɹ", "W": "w", "Y": "j",
}
VOWELS = {
    "AA": "ɑː", "AE": "æ", "AO": "ɔː", "AW": "aʊ", "AY": "aɪ", "EH": "ɛ",
    "EY": "eɪ", "IH": "ɪ", "IY": "iː", "OW": "oʊ", "OY": "ɔɪ", "UH": "ʊ",
    "UW": "uː",
}
# Words the lexicon must contain regardless of frequency rank: number words
# used when spelling out digits, plus words used in documentation examples.
EXTRA_WORDS = """
zero one two three four five six seven eight nine ten eleven twelve thirteen
fourteen fifteen sixteen seventeen eighteen nineteen twenty thirty forty fifty
sixty seventy eighty ninety hundred thousand million billion trillion
conundrum temperature
""".split()
# Citation forms for words CMU lists with a reduced first pronunciation.
OVERRIDES = {
    "a": ["ʌ"],
}


def split_phone(phone):
    m = re.fullmatch(r"([A-Z]+)([012]?)", phone)
    return m.group(1), (int(m.group(2)) if m.group(2) else None)


def is_vowel(base):
    return base in VOWELS or base in ("AH", "ER")


def to_ipa(arpabet):
    phones = [split_phone(p) for p in arpabet]
    n = len(phones)
    syllables = sum(1 for b, _ in phones if is_vowel(b))
    out = []
    i = 0
    while i < n:
        base, stress = phones[i]
        prev = phones[i - 1] if i > 0 else None
        nxt = phones[i + 1] if i + 1 < n else None
        last = i == n - 1
        if base in ("T", "D"):
            # syllabic n after t/d: "button", "sudden"
            if (i + 2 == n - 1 and nxt == ("AH", 0) and phones[i + 2][0] == "N"):
                if base == "T" and prev is not None and is_vowel(prev[0]):
                    out.append("ʔ")
                else:
                    out.append(CONSONANTS[base])
                out.append("n̩")
                i += 3
                continue
            # flap between a vowel and an unstressed vowel: "water", "little"
            if (prev is not None and is_vowel(prev[0]) and nxt is not None
                    and is_vowel(nxt[0]) and nxt[1] == 0):
                out.append("ɾ")
                i += 1
                continue
        if base == "AH" and stress == 0 and i == n - 2 and phones[i + 1][0] == "L" \
                and prev is not None and not is_vowel(prev[0]):
            out.append("l̩")
            i += 2
            continue
        if base in CONSONANTS:
            out.append(CONSONANTS[base])
        elif base == "AH":
            if stress == 0:
                out.append("ɐ" if last and syllables > 1 else "ə")
            else:
                out.append("ʌ")
        elif base == "ER":
            out.extend(["ə", "ɹ"] if stress == 0 else ["ɜː", "ɹ"])
        elif base == "IH" and stress == 0 and i == n - 2 and phones[i + 1][0] in ("D", "Z"):
            out.append("ᵻ")
        elif base == "IY" and stress == 0 and last and syllables > 1:
            out.append("i")
        else:
            out.append(VOWELS[base])
        i += 1
    return out


def load_cmudict(path):
    entries = {}
    for line in open(path, encoding="utf-8"):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        word, *phones = line.split()
        if "(" in word:
            continue
        entries.setdefault(word, phones)
    return entries


def ranked_words(path):
    table = msgpack.load(gzip.open(path), raw=False)
    for bucket in table[1:]:
        for word in sorted(bucket):
            yield word


def grammar_words():
    words = set()
    for line in open(ASSETS / "toy_grammar.txt", encoding="utf-8"):
        line = line.split("#", 1)[0].strip()
        if "->" in line:
            rhs = line.split("->", 1)[1].split(";", 1)[0].split()
            words.update(w for w in rhs if w.islower())
    return words


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("cmudict")
    ap.add_argument("wordfreq")
    ap.add_argument("--size", type=int, default=6000)
    args = ap.parse_args()

    inventory = [l.strip() for l in open(ASSETS / "en_us" / "inventory.txt", encoding="utf-8")
                 if l.strip() and not l.startswith("#")]
    cmu = load_cmudict(args.cmudict)
    wanted = re.compile(r"[a-z]+(?:'[a-z]+)?")

    chosen = []
    seen = set()
    for word in ranked_words(args.wordfreq):
        if len(chosen) >= args.size:
            break
        if word in seen or not wanted.fullmatch(word) or word not in cmu:
            continue
        seen.add(word)
        chosen.append(word)
    for word in sorted((grammar_words() | set(EXTRA_WORDS)) - seen):
        if word not in cmu:
            sys.exit(f"required word {word!r} has no CMU pronunciation")
        chosen.append(word)

    lines = []
    used = set()
    for word in sorted(chosen):
        ipa = OVERRIDES.get(word) or to_ipa(cmu[word])
        bad = [p for p in ipa if p not in inventory]
        if bad:
            sys.exit(f"{word}: symbols outside inventory: {bad}")
        used.update(ipa)
        lines.append(f"{word}\t{' '.join(ipa)}")

    missing = [p for p in inventory if p not in used]
    if missing:
        sys.exit(f"inventory symbols never used: {missing}")

    out = ASSETS / "en_us" / "lexicon.tsv"
    with open(out, "w", encoding="utf-8") as f:
        f.write("# en-US seed lexicon, derived from the CMU Pronouncing Dictionary\n")
        f.write("# (BSD-2-Clause, Carnegie Mellon University) by scripts/build_en_us_lexicon.py\n")
        f.write("\n".join(lines) + "\n")
    print(f"wrote {len(lines)} entries to {out}")


if __name__ == "__main__":
    main()
