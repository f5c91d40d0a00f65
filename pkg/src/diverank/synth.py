"""Seeded synthetic fixtures: clustered items, user histories, candidates.

The world model is simple and fully deterministic given one seed: unit
cluster centroids, Gaussian item noise around them, users with one to
three preferred clusters, and clicks drawn from a logistic model on the
dot product between item embedding and user taste vector.  Candidate
base scores observe the same model through added noise, leaving the
trained scorer genuine headroom over the upstream scores.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .data import BehaviorEvent, CandidateSet, ItemRecord, ValidationError

NOW_TS = 1_700_000_000  # fixed reference clock so fixtures never drift
THIRTY_DAYS = 30 * 24 * 3600


def derive_seed(seed: int, stage: str) -> int:
    """Stable 64-bit sub-seed for a named pipeline stage."""
    digest = hashlib.sha256(f"{seed}:{stage}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of a generated world; defaults give the standard fixture."""

    clusters: int = 6
    items_per_cluster: int = 30
    dim: int = 16
    noise: float = 0.15
    users: int = 50
    behaviors_per_user: int = 60
    candidates_per_user: int = 100
    sharpness: float = 6.0
    threshold: float = 0.45
    score_noise: float = 5.0
    seed: int = 0

    def __post_init__(self):
        problems = []
        if self.clusters < 1:
            problems.append("clusters must be >= 1")
        if self.items_per_cluster < 1:
            problems.append("items_per_cluster must be >= 1")
        if self.dim < 2:
            problems.append("dim must be >= 2")
        if self.noise < 0:
            problems.append("noise must be >= 0")
        if self.users < 1:
            problems.append("users must be >= 1")
        if self.behaviors_per_user < 1:
            problems.append("behaviors_per_user must be >= 1")
        if self.candidates_per_user < 1:
            problems.append("candidates_per_user must be >= 1")
        if self.sharpness <= 0:
            problems.append("sharpness must be positive")
        if self.score_noise < 0:
            problems.append("score_noise must be >= 0")
        n_items = self.clusters * self.items_per_cluster
        if self.candidates_per_user > n_items:
            problems.append("candidates_per_user cannot exceed the catalog size")
        if problems:
            raise ValidationError("; ".join(problems))


@dataclass(frozen=True)
class SyntheticWorld:
    """Everything one seed generates, before serialization."""

    items: list[ItemRecord]
    behaviors: list[BehaviorEvent]
    candidates: list[CandidateSet]
    labels: list[BehaviorEvent]  # candidate ground truth, ts = 0
    true_clusters: dict[str, int]


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def generate(spec: SyntheticSpec) -> SyntheticWorld:
    rng = np.random.default_rng(derive_seed(spec.seed, "synth"))
    n_items = spec.clusters * spec.items_per_cluster

    centroids = rng.normal(size=(spec.clusters, spec.dim))
    centroids /= np.linalg.norm(centroids, axis=1, keepdims=True)

    item_embs = np.empty((n_items, spec.dim))
    true_clusters: dict[str, int] = {}
    item_ids: list[str] = []
    for c in range(spec.clusters):
        block = centroids[c] + spec.noise * rng.normal(size=(spec.items_per_cluster, spec.dim))
        lo = c * spec.items_per_cluster
        item_embs[lo : lo + spec.items_per_cluster] = block
        for offset in range(spec.items_per_cluster):
            item_id = f"it{lo + offset:04d}"
            item_ids.append(item_id)
            true_clusters[item_id] = c

    unit_embs = item_embs / np.linalg.norm(item_embs, axis=1, keepdims=True)

    items = [
        ItemRecord(item_id=item_ids[i], embedding=item_embs[i]) for i in range(n_items)
    ]

    behaviors: list[BehaviorEvent] = []
    candidates: list[CandidateSet] = []
    labels: list[BehaviorEvent] = []
    for u in range(spec.users):
        user_id = f"u{u:04d}"
        n_pref = int(rng.integers(1, min(3, spec.clusters) + 1))
        preferred = rng.choice(spec.clusters, size=n_pref, replace=False)
        taste = centroids[preferred].mean(axis=0)
        taste /= np.linalg.norm(taste)

        # Behavior history: mostly preferred clusters, some exploration.
        offsets = np.sort(rng.integers(0, THIRTY_DAYS, size=spec.behaviors_per_user))[::-1]
        for b in range(spec.behaviors_per_user):
            if rng.random() < 0.9:
                cluster = int(preferred[rng.integers(0, n_pref)])
            else:
                cluster = int(rng.integers(0, spec.clusters))
            idx = cluster * spec.items_per_cluster + int(
                rng.integers(0, spec.items_per_cluster)
            )
            affinity = float(unit_embs[idx] @ taste)
            p_click = float(_sigmoid(spec.sharpness * (affinity - spec.threshold)))
            behaviors.append(
                BehaviorEvent(
                    user_id=user_id,
                    item_id=item_ids[idx],
                    ts=int(NOW_TS - offsets[b]),
                    label=int(rng.random() < p_click),
                )
            )

        # Candidates: half preferred-cluster items, rest catalog-wide.
        n_cand = spec.candidates_per_user
        pref_pool = np.concatenate(
            [
                np.arange(c * spec.items_per_cluster, (c + 1) * spec.items_per_cluster)
                for c in preferred
            ]
        )
        n_from_pref = min(len(pref_pool), n_cand // 2)
        chosen = list(rng.choice(pref_pool, size=n_from_pref, replace=False))
        rest_pool = np.setdiff1d(np.arange(n_items), np.asarray(chosen))
        chosen.extend(rng.choice(rest_pool, size=n_cand - n_from_pref, replace=False))
        chosen_arr = np.asarray(chosen)
        perm = rng.permutation(n_cand)
        chosen_arr = chosen_arr[perm]

        affinities = unit_embs[chosen_arr] @ taste
        score_noise = spec.score_noise * rng.normal(size=n_cand)
        base_scores = _sigmoid(spec.sharpness * (affinities - spec.threshold) + score_noise)
        true_p = _sigmoid(spec.sharpness * (affinities - spec.threshold))
        drawn = rng.random(n_cand) < true_p

        cand_items = []
        for pos, idx in enumerate(chosen_arr):
            item_id = item_ids[int(idx)]
            cand_items.append(
                ItemRecord(
                    item_id=item_id,
                    embedding=item_embs[int(idx)],
                    base_score=float(base_scores[pos]),
                )
            )
            labels.append(
                BehaviorEvent(
                    user_id=user_id, item_id=item_id, ts=0, label=int(drawn[pos])
                )
            )
        candidates.append(CandidateSet(user_id=user_id, items=tuple(cand_items)))

    return SyntheticWorld(
        items=items,
        behaviors=behaviors,
        candidates=candidates,
        labels=labels,
        true_clusters=true_clusters,
    )
