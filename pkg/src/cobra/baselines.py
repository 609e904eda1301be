"""Reference reputation scorers used for comparison.

Both are context-blind: they reduce a target's history to counts or
averages and cannot react to the circumstances of an interaction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class FeedbackTally:
    """Counts of positive (r) and negative (s) interaction outcomes."""

    r: int = 0
    s: int = 0

    def __post_init__(self) -> None:
        if self.r < 0 or self.s < 0 or self.r != int(self.r) or self.s != int(self.s):
            raise ValueError("tally counts must be non-negative integers")

    def plus(self, outcome: int) -> "FeedbackTally":
        return FeedbackTally(self.r + (1 if outcome else 0), self.s + (0 if outcome else 1))


def brs_score(tally: FeedbackTally) -> float:
    """Beta-reputation score: the Beta(r+1, s+1) posterior mean under a
    uniform prior, (r+1) / (r+s+2)."""
    return (tally.r + 1) / (tally.r + tally.s + 2)


def tmsiot_score(own: float, opinions: Sequence[float], w_own: float = 0.5) -> float:
    """Weighted sum of a node's own experience and the mean opinion of the
    other nodes; with no opinions the own experience stands alone."""
    if not 0 <= own <= 1:
        raise ValueError("own experience must lie in [0, 1]")
    if not 0 <= w_own <= 1:
        raise ValueError("w_own must lie in [0, 1]")
    ops = list(opinions)
    if not ops:
        return own
    if any(not 0 <= o <= 1 for o in ops):
        raise ValueError("opinions must lie in [0, 1]")
    return w_own * own + (1.0 - w_own) * (sum(ops) / len(ops))
