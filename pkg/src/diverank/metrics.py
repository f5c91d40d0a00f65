"""Ranking and classification metrics used across evaluation and sweeps.

All functions are pure numpy and operate on plain arrays; LabeledRanking
bundles the per-user inputs the evaluators need.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import ValidationError


@dataclass(frozen=True, eq=False)
class LabeledRanking:
    """An ordered ranking with aligned binary relevance and embeddings."""

    item_ids: tuple[str, ...]
    labels: np.ndarray
    embeddings: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        embs = np.asarray(self.embeddings, dtype=np.float64)
        n = len(self.item_ids)
        if labels.shape != (n,):
            raise ValidationError("labels must align with item_ids")
        if not np.all((labels == 0) | (labels == 1)):
            raise ValidationError("labels must be binary")
        if embs.ndim != 2 or embs.shape[0] != n:
            raise ValidationError("embeddings must be (n, d) aligned with item_ids")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "embeddings", embs)


def _check_k(k: int) -> None:
    if k < 1:
        raise ValidationError("k must be >= 1")


def dcg_at_k(relevances, k: int) -> float:
    """Discounted cumulative gain with gain 2^rel - 1, discount log2(pos + 1)."""
    _check_k(k)
    rel = np.asarray(relevances, dtype=np.float64)[:k]
    if rel.size == 0:
        return 0.0
    positions = np.arange(1, rel.size + 1, dtype=np.float64)
    return float(np.sum((np.exp2(rel) - 1.0) / np.log2(positions + 1.0)))


def ndcg_at_k(relevances, k: int, ideal_relevances=None) -> float:
    """Normalized DCG; 0.0 when no relevant item exists.

    By default the ideal ordering is the list's own relevances sorted
    descending.  Pass `ideal_relevances` (the ground-truth relevance
    pool) to normalize against the best ranking achievable from the full
    candidate universe instead of just the surfaced list.
    """
    _check_k(k)
    rel = np.asarray(relevances, dtype=np.float64)
    pool = rel if ideal_relevances is None else np.asarray(ideal_relevances, dtype=np.float64)
    ideal = np.sort(pool)[::-1]
    denom = dcg_at_k(ideal, k)
    if denom == 0.0:
        return 0.0
    return dcg_at_k(rel, k) / denom


def map_at_k(relevances, k: int) -> float:
    """Average precision at k, normalized by min(k, total relevant)."""
    _check_k(k)
    rel = np.asarray(relevances, dtype=np.int64)
    total_relevant = int(rel.sum())
    if total_relevant == 0:
        return 0.0
    top = rel[:k]
    hits = 0
    score = 0.0
    for pos, r in enumerate(top, start=1):
        if r:
            hits += 1
            score += hits / pos
    return score / min(k, total_relevant)


def auc(labels, scores) -> float:
    """Area under the ROC curve via the rank statistic; ties count half.

    Raises when only one class is present, where AUC is undefined.
    """
    labels = np.asarray(labels, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ValidationError("labels and scores must be equal-length vectors")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValidationError("labels must be binary")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC needs both classes present")
    order = np.argsort(scores, kind="stable")
    sorted_scores = scores[order]
    ranks = np.empty(labels.size, dtype=np.float64)
    i = 0
    while i < labels.size:
        j = i
        while j + 1 < labels.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average 1-based rank
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def logloss(labels, probabilities) -> float:
    """Mean binary cross-entropy; probabilities clamped to [1e-15, 1 - 1e-15]."""
    labels = np.asarray(labels, dtype=np.float64)
    probs = np.asarray(probabilities, dtype=np.float64)
    if labels.shape != probs.shape or labels.ndim != 1 or labels.size == 0:
        raise ValidationError("labels and probabilities must be equal-length vectors")
    if not np.all((labels == 0.0) | (labels == 1.0)):
        raise ValidationError("labels must be binary")
    clamped = np.clip(probs, 1e-15, 1.0 - 1e-15)
    return float(-np.mean(labels * np.log(clamped) + (1.0 - labels) * np.log(1.0 - clamped)))


def ilad(embeddings) -> float:
    """Intra-list average distance: mean pairwise (1 - cosine similarity).

    Needs at least two items; zero-norm embeddings are rejected because
    cosine similarity is undefined for them.
    """
    embs = np.asarray(embeddings, dtype=np.float64)
    if embs.ndim != 2 or embs.shape[0] < 2:
        raise ValidationError("ilad needs at least two embeddings")
    norms = np.linalg.norm(embs, axis=1)
    if np.any(norms == 0.0):
        raise ValidationError("ilad is undefined for zero-norm embeddings")
    unit = embs / norms[:, None]
    cosine = unit @ unit.T
    n = embs.shape[0]
    iu = np.triu_indices(n, k=1)
    return float(np.mean(1.0 - cosine[iu]))
