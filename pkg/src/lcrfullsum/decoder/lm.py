"""ARPA back-off n-gram language model."""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Sequence

LN10 = math.log(10.0)
BOS, EOS, UNK = "<s>", "</s>", "<unk>"


class ArpaFormatError(ValueError):
    pass


@dataclass
class NGramLM:
    order: int
    # probs[n][(w1..wn)] and backoffs[n][(w1..wn)] in natural log
    probs: dict[int, dict[tuple[str, ...], float]] = field(default_factory=dict)
    backoffs: dict[int, dict[tuple[str, ...], float]] = field(default_factory=dict)
    unk: str | None = None

    @property
    def vocab(self) -> set[str]:
        return {ng[0] for ng in self.probs.get(1, {})}

    def state(self, history: Sequence[str]) -> tuple[str, ...]:
        """History truncated to the part that can influence future scores."""
        return tuple(history[-(self.order - 1):]) if self.order > 1 else ()

    def score(self, history: Sequence[str], word: str) -> float:
        """ln P(word | history) with Katz back-off."""
        if (word,) not in self.probs[1]:
            if self.unk is None or (self.unk,) not in self.probs[1]:
                raise KeyError(f"word {word!r} not in LM vocabulary")
            word = self.unk
        hist = tuple(history[-(self.order - 1):]) if self.order > 1 else ()
        penalty = 0.0
        while True:
            ngram = hist + (word,)
            lp = self.probs.get(len(ngram), {}).get(ngram)
            if lp is not None:
                return penalty + lp
            penalty += self.backoffs.get(len(hist), {}).get(hist, 0.0)
            hist = hist[1:]

    def sentence_score(self, words: Sequence[str]) -> float:
        hist = [BOS]
        total = 0.0
        for w in list(words) + [EOS]:
            total += self.score(hist, w)
            hist.append(w)
        return total


def lm_score(lm: NGramLM, history: Sequence[str], word: str) -> float:
    return lm.score(history, word)


_NGRAM_HDR = re.compile(r"^\\(\d+)-grams:$")
_COUNT = re.compile(r"^ngram\s+(\d+)\s*=\s*(\d+)$")


def load_arpa(text: str, unk: str | None = None) -> NGramLM:
    lines = [ln.strip() for ln in text.splitlines()]
    i = 0
    while i < len(lines) and lines[i] != "\\data\\":
        i += 1
    if i == len(lines):
        raise ArpaFormatError("missing \\data\\ section")
    i += 1
    counts: dict[int, int] = {}
    while i < len(lines) and not lines[i].startswith("\\"):
        if lines[i]:
            m = _COUNT.match(lines[i])
            if not m:
                raise ArpaFormatError(f"bad count line {lines[i]!r}")
            counts[int(m.group(1))] = int(m.group(2))
        i += 1
    if not counts:
        raise ArpaFormatError("no n-gram counts in \\data\\ section")
    lm = NGramLM(order=max(counts), unk=unk)
    current = None
    seen_end = False
    for line in lines[i:]:
        if not line:
            continue
        if line == "\\end\\":
            seen_end = True
            break
        m = _NGRAM_HDR.match(line)
        if m:
            current = int(m.group(1))
            if current not in counts:
                raise ArpaFormatError(f"section {line} not announced in \\data\\")
            lm.probs[current] = {}
            lm.backoffs[current] = {}
            continue
        if line.startswith("\\"):
            raise ArpaFormatError(f"unexpected section header {line!r}")
        if current is None:
            raise ArpaFormatError("n-gram entry outside of a section")
        parts = line.split()
        if len(parts) not in (current + 1, current + 2):
            raise ArpaFormatError(f"bad {current}-gram line {line!r}")
        ngram = tuple(parts[1:current + 1])
        lm.probs[current][ngram] = float(parts[0]) * LN10
        if len(parts) == current + 2:
            lm.backoffs[current][ngram] = float(parts[-1]) * LN10
    if not seen_end:
        raise ArpaFormatError("missing \\end\\ marker")
    for n, c in counts.items():
        got = len(lm.probs.get(n, {}))
        if got != c:
            warnings.warn(f"ARPA {n}-gram count mismatch: header {c}, found {got}")
    if 1 not in lm.probs:
        raise ArpaFormatError("no unigram section")
    return lm


def write_arpa(lm: NGramLM) -> str:
    out = ["\\data\\"]
    for n in range(1, lm.order + 1):
        out.append(f"ngram {n}={len(lm.probs.get(n, {}))}")
    for n in range(1, lm.order + 1):
        out.append("")
        out.append(f"\\{n}-grams:")
        for ngram, lp in lm.probs.get(n, {}).items():
            row = f"{lp / LN10:.10f}\t{' '.join(ngram)}"
            bo = lm.backoffs.get(n, {}).get(ngram)
            if bo is not None:
                row += f"\t{bo / LN10:.10f}"
            out.append(row)
    out += ["", "\\end\\", ""]
    return "\n".join(out)
