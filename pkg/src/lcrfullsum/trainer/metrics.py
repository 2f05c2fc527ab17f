"""Word error rate by Levenshtein alignment."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class WerStats:
    substitutions: int
    insertions: int
    deletions: int
    ref_len: int
    empty_ref: bool = False

    @property
    def errors(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        """Percent; denominator floored at one word."""
        return 100.0 * self.errors / max(1, self.ref_len)

    def __add__(self, other: "WerStats") -> "WerStats":
        return WerStats(self.substitutions + other.substitutions, self.insertions + other.insertions,
                        self.deletions + other.deletions, self.ref_len + other.ref_len,
                        self.empty_ref or other.empty_ref)


def wer(ref: Sequence[str], hyp: Sequence[str]) -> WerStats:
    n, m = len(ref), len(hyp)
    # d[i][j] = (cost, subs, ins, dels) aligning ref[:i] with hyp[:j]
    d = [[(0, 0, 0, 0)] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = (i, 0, 0, i)
    for j in range(1, m + 1):
        d[0][j] = (j, 0, j, 0)
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            c, s, a, b = d[i - 1][j - 1]
            diag = (c, s, a, b) if ref[i - 1] == hyp[j - 1] else (c + 1, s + 1, a, b)
            c, s, a, b = d[i - 1][j]
            dele = (c + 1, s, a, b + 1)
            c, s, a, b = d[i][j - 1]
            ins = (c + 1, s, a + 1, b)
            d[i][j] = min((diag, dele, ins), key=lambda x: x[0])
    _, s, a, b = d[n][m]
    return WerStats(s, a, b, n, empty_ref=(n == 0))


def corpus_wer(pairs: Iterable[tuple[Sequence[str], Sequence[str]]]) -> WerStats:
    total = WerStats(0, 0, 0, 0)
    for ref, hyp in pairs:
        total = total + wer(ref, hyp)
    return total
