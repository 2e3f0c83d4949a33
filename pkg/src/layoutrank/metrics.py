"""Ranking and classification metrics for quality scores.

All functions take plain sequences and return floats, so they can be
checked pair-by-pair against brute-force recounts. PNR and AUC are pure
order statistics: any strictly increasing transform of the scores leaves
them unchanged.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "SingleClass", "NoComparablePairs", "ShortList", "EmptyCounts",
    "pnr", "auc", "prf1", "Prf1", "dcg_at", "mean_dcg", "low_quality_share",
    "gsb", "EvalReport", "evaluate_scores",
]


class SingleClass(ValueError):
    """AUC needs at least one positive and one negative label."""


class NoComparablePairs(ValueError):
    """PNR needs at least one pair with differing labels."""


class ShortList(ValueError):
    """DCG@p needs at least p results."""


class EmptyCounts(ValueError):
    """Good/same/bad counts must not all be zero."""


def _paired(labels: Sequence[float], scores: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    l = np.asarray(labels, dtype=float)
    s = np.asarray(scores, dtype=float)
    if l.shape != s.shape or l.ndim != 1:
        raise ValueError(f"labels {l.shape} and scores {s.shape} must be equal-length 1-D")
    return l, s


def pnr(labels: Sequence[float], scores: Sequence[float]) -> float:
    """Positive-negative ratio: concordant over discordant label pairs.

    A pair with differing labels is concordant when the scores order the
    same way and discordant when they order the opposite way; score ties
    count as neither. Returns inf when nothing is discordant and NaN when
    every comparable pair is score-tied.
    """
    l, s = _paired(labels, scores)
    order_l = np.sign(l[:, None] - l[None, :])
    order_s = np.sign(s[:, None] - s[None, :])
    if not np.any(order_l):
        raise NoComparablePairs("all labels are equal")
    agreement = order_l * order_s
    concordant = int(np.count_nonzero(agreement > 0)) // 2
    discordant = int(np.count_nonzero(agreement < 0)) // 2
    if discordant == 0:
        return math.inf if concordant > 0 else math.nan
    return concordant / discordant


def auc(labels: Sequence[float], scores: Sequence[float]) -> float:
    """Probability a positive outscores a negative, ties worth half."""
    l, s = _paired(labels, scores)
    if not set(np.unique(l)) <= {0.0, 1.0}:
        raise ValueError("labels must be 0 or 1")
    pos = s[l == 1.0]
    neg = s[l == 0.0]
    if len(pos) == 0 or len(neg) == 0:
        raise SingleClass(f"{len(pos)} positives, {len(neg)} negatives")
    wins = np.count_nonzero(pos[:, None] > neg[None, :])
    ties = np.count_nonzero(pos[:, None] == neg[None, :])
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


@dataclass(frozen=True)
class Prf1:
    precision: float
    recall: float
    f1: float
    degenerate: bool  # some denominator was zero and reported as 0.0


def prf1(labels: Sequence[float], scores: Sequence[float], threshold: float = 0.5) -> Prf1:
    """Precision/recall/F1 for the positive class at a score threshold."""
    l, s = _paired(labels, scores)
    predicted = s >= threshold
    actual = l == 1.0
    tp = int(np.count_nonzero(predicted & actual))
    fp = int(np.count_nonzero(predicted & ~actual))
    fn = int(np.count_nonzero(~predicted & actual))
    degenerate = (tp + fp == 0) or (tp + fn == 0)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Prf1(precision, recall, f1, degenerate)


def dcg_at(relevances: Sequence[float], p: int) -> float:
    """Discounted cumulative gain over the first p results."""
    if p <= 0:
        raise ValueError(f"p must be positive, got {p}")
    if len(relevances) < p:
        raise ShortList(f"need {p} results, got {len(relevances)}")
    total = 0.0
    for i, rel in enumerate(relevances[:p], start=1):
        total += (2.0 ** rel - 1.0) / math.log2(i + 1)
    return total


def mean_dcg(ranked_lists: Sequence[Sequence[float]], p: int) -> float:
    """Mean DCG@p over queries; names the offending query when one is short."""
    if not ranked_lists:
        raise ValueError("no queries")
    totals = []
    for q, rels in enumerate(ranked_lists):
        try:
            totals.append(dcg_at(rels, p))
        except ShortList as exc:
            raise ShortList(f"query {q}: {exc}") from None
    return float(np.mean(totals))


def low_quality_share(relevances: Sequence[float], p: int, cutoff: float = 1.0) -> float:
    """Fraction of the top p results with relevance at or below the cutoff."""
    if len(relevances) < p:
        raise ShortList(f"need {p} results, got {len(relevances)}")
    top = relevances[:p]
    return sum(1 for rel in top if rel <= cutoff) / p


def gsb(good: int, same: int, bad: int) -> float:
    """Side-by-side delta: (good - bad) / (good + same + bad)."""
    if min(good, same, bad) < 0:
        raise ValueError("counts must be non-negative")
    total = good + same + bad
    if total == 0:
        raise EmptyCounts("all counts are zero")
    return (good - bad) / total


@dataclass(frozen=True)
class EvalReport:
    auc: float
    pnr: float
    precision: float
    recall: float
    f1: float
    num_pos: int
    num_neg: int

    def line(self) -> str:
        pnr_text = "inf" if math.isinf(self.pnr) else f"{self.pnr:.4f}"
        return (f"auc={self.auc:.4f} pnr={pnr_text} p={self.precision:.4f} "
                f"r={self.recall:.4f} f1={self.f1:.4f} "
                f"(+{self.num_pos}/-{self.num_neg})")


def evaluate_scores(labels: Sequence[float], scores: Sequence[float],
                    threshold: float = 0.5) -> EvalReport:
    l, s = _paired(labels, scores)
    quality = prf1(l, s, threshold)
    return EvalReport(
        auc=auc(l, s),
        pnr=pnr(l, s),
        precision=quality.precision,
        recall=quality.recall,
        f1=quality.f1,
        num_pos=int(np.count_nonzero(l == 1.0)),
        num_neg=int(np.count_nonzero(l == 0.0)),
    )
