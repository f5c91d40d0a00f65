"""Core record types, validation, and line-delimited JSON persistence.

Every on-disk format used by the pipeline lives here: item and behavior
lines, candidate sets, experiment configuration, and re-ranking results.
Loaders fail fast with line numbers; serializers are deterministic so a
pipeline re-run with the same seed writes byte-identical files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Iterable, Iterator, Sequence

import numpy as np


class ValidationError(ValueError):
    """A record or configuration violates a documented constraint."""


class ParseError(ValueError):
    """An input file could not be parsed; carries the offending line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(RuntimeError):
    """A numerical operation failed (singular kernel, non-finite values)."""


def _as_embedding(values: Sequence[float]) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValidationError("embedding must be a non-empty 1-D float vector")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("embedding contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ItemRecord:
    """One candidate or catalog item.

    Attributes:
        item_id: non-empty unique identifier.
        embedding: dense float64 vector, finite entries.
        cluster_id: optional non-negative cluster label.
        base_score: optional upstream point-wise score in [0, 1].
    """

    item_id: str
    embedding: np.ndarray
    cluster_id: int | None = None
    base_score: float | None = None

    def __post_init__(self):
        if not self.item_id:
            raise ValidationError("item_id must be non-empty")
        object.__setattr__(self, "embedding", _as_embedding(self.embedding))
        if self.cluster_id is not None and self.cluster_id < 0:
            raise ValidationError(f"item {self.item_id}: cluster_id must be >= 0")
        if self.base_score is not None:
            score = float(self.base_score)
            if not (0.0 <= score <= 1.0) or not math.isfinite(score):
                raise ValidationError(
                    f"item {self.item_id}: base_score must lie in [0, 1]"
                )
            object.__setattr__(self, "base_score", score)

    @property
    def dim(self) -> int:
        return int(self.embedding.size)

    def to_json(self) -> str:
        doc = {"item_id": self.item_id, "embedding": list(map(float, self.embedding))}
        if self.cluster_id is not None:
            doc["cluster_id"] = int(self.cluster_id)
        if self.base_score is not None:
            doc["base_score"] = float(self.base_score)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "ItemRecord":
        try:
            return cls(
                item_id=doc["item_id"],
                embedding=doc["embedding"],
                cluster_id=doc.get("cluster_id"),
                base_score=doc.get("base_score"),
            )
        except KeyError as exc:
            raise ValidationError(f"item record missing field {exc}") from exc


@dataclass(frozen=True)
class BehaviorEvent:
    """One user interaction: user, item, timestamp, optional binary label."""

    user_id: str
    item_id: str
    ts: int
    label: int | None = None

    def __post_init__(self):
        if not self.user_id:
            raise ValidationError("user_id must be non-empty")
        if not self.item_id:
            raise ValidationError("item_id must be non-empty")
        if self.ts < 0:
            raise ValidationError(
                f"behavior ({self.user_id}, {self.item_id}): ts must be >= 0"
            )
        if self.label is not None and self.label not in (0, 1):
            raise ValidationError(
                f"behavior ({self.user_id}, {self.item_id}): label must be 0 or 1"
            )

    def to_json(self) -> str:
        doc = {"user_id": self.user_id, "item_id": self.item_id, "ts": int(self.ts)}
        if self.label is not None:
            doc["label"] = int(self.label)
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "BehaviorEvent":
        try:
            return cls(
                user_id=doc["user_id"],
                item_id=doc["item_id"],
                ts=int(doc["ts"]),
                label=doc.get("label"),
            )
        except KeyError as exc:
            raise ValidationError(f"behavior record missing field {exc}") from exc


class EmbeddingTable:
    """Ordered item_id -> ItemRecord map with a single enforced dimension."""

    def __init__(self, records: Iterable[ItemRecord] = ()):
        self._records: dict[str, ItemRecord] = {}
        self._dim: int | None = None
        for rec in records:
            self.add(rec)

    def add(self, rec: ItemRecord) -> None:
        if rec.item_id in self._records:
            raise ValidationError(f"duplicate item_id {rec.item_id!r}")
        if self._dim is None:
            self._dim = rec.dim
        elif rec.dim != self._dim:
            raise ValidationError(
                f"item {rec.item_id}: embedding dim {rec.dim} != table dim {self._dim}"
            )
        self._records[rec.item_id] = rec

    @property
    def dim(self) -> int:
        if self._dim is None:
            raise ValidationError("embedding table is empty")
        return self._dim

    @property
    def ids(self) -> list[str]:
        return list(self._records)

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._records

    def __getitem__(self, item_id: str) -> ItemRecord:
        try:
            return self._records[item_id]
        except KeyError:
            raise KeyError(f"unknown item_id {item_id!r}") from None

    def __iter__(self) -> Iterator[ItemRecord]:
        return iter(self._records.values())

    def matrix(self, ids: Sequence[str] | None = None) -> np.ndarray:
        """Stack embeddings for `ids` (table order when omitted) into (n, d)."""
        if ids is None:
            ids = self.ids
        if not ids:
            raise ValidationError("cannot build a matrix from zero items")
        return np.stack([self[i].embedding for i in ids])


@dataclass(frozen=True, eq=False)
class CandidateSet:
    """The per-user input to re-ranking: ordered items with base scores."""

    user_id: str
    items: tuple[ItemRecord, ...]

    def __post_init__(self):
        if not self.user_id:
            raise ValidationError("user_id must be non-empty")
        items = tuple(self.items)
        object.__setattr__(self, "items", items)
        if not items:
            raise ValidationError(f"candidate set {self.user_id}: needs >= 1 item")
        seen: set[str] = set()
        dim = items[0].dim
        for rec in items:
            if rec.item_id in seen:
                raise ValidationError(
                    f"candidate set {self.user_id}: duplicate item {rec.item_id!r}"
                )
            seen.add(rec.item_id)
            if rec.dim != dim:
                raise ValidationError(
                    f"candidate set {self.user_id}: mixed embedding dims"
                )
            if rec.base_score is None:
                raise ValidationError(
                    f"candidate set {self.user_id}: item {rec.item_id} lacks base_score"
                )

    @property
    def size(self) -> int:
        return len(self.items)

    @property
    def dim(self) -> int:
        return self.items[0].dim

    @property
    def ids(self) -> list[str]:
        return [rec.item_id for rec in self.items]

    def embeddings(self) -> np.ndarray:
        return np.stack([rec.embedding for rec in self.items])

    def base_scores(self) -> np.ndarray:
        return np.array([rec.base_score for rec in self.items], dtype=np.float64)

    def to_json(self) -> str:
        doc = {
            "user_id": self.user_id,
            "items": [json.loads(rec.to_json()) for rec in self.items],
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "CandidateSet":
        try:
            items = tuple(ItemRecord.from_dict(d) for d in doc["items"])
            return cls(user_id=doc["user_id"], items=items)
        except KeyError as exc:
            raise ValidationError(f"candidate set missing field {exc}") from exc


@dataclass(frozen=True)
class SelectionStep:
    """One greedy pick: score, diversity increment, and their combination."""

    item_id: str
    score: float
    log_d2: float
    marginal: float

    def to_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "score": float(self.score),
            "log_d2": float(self.log_d2),
            "marginal": float(self.marginal),
        }


@dataclass(frozen=True)
class RerankResult:
    """Ordered re-ranked list plus per-step diagnostics.

    `objective` is the accumulated joint value: the sum over steps of
    score + alpha * log d^2, whose diversity part telescopes to
    alpha * log det of the selected principal submatrix.  `exhausted`
    flags lists cut short because every remaining candidate fell at or
    below the numerical exclusion threshold.
    """

    user_id: str
    item_ids: tuple[str, ...]
    steps: tuple[SelectionStep, ...]
    objective: float
    exhausted: bool = False

    def __post_init__(self):
        if len(self.item_ids) != len(self.steps):
            raise ValidationError("result steps and item_ids must align")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise ValidationError("result contains duplicate item ids")

    def to_json(self) -> str:
        doc = {
            "user_id": self.user_id,
            "item_ids": list(self.item_ids),
            "steps": [s.to_dict() for s in self.steps],
            "objective": float(self.objective),
            "exhausted": bool(self.exhausted),
        }
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: dict) -> "RerankResult":
        steps = tuple(
            SelectionStep(
                item_id=s["item_id"],
                score=float(s["score"]),
                log_d2=float(s["log_d2"]),
                marginal=float(s["marginal"]),
            )
            for s in doc["steps"]
        )
        return cls(
            user_id=doc["user_id"],
            item_ids=tuple(doc["item_ids"]),
            steps=steps,
            objective=float(doc["objective"]),
            exhausted=bool(doc.get("exhausted", False)),
        )


@dataclass(frozen=True)
class ExperimentConfig:
    """All re-ranking knobs.

    Field names are the canonical config-file keys.  `a_item` and `b_item`
    default to the short-term kernel amplitudes when left unset.
    """

    alpha: float = 1.0
    beta1: float = 0.5
    beta2: float = 0.5
    a_l: float = 1.0
    b_l: float = 1.0
    a_s: float = 1.0
    b_s: float = 1.0
    a_item: float | None = None
    b_item: float | None = None
    epsilon: float = 1e-10
    k: int = 10
    top_m: int = 5
    time_buckets: int = 16
    jitter: float = 1e-6
    recent_window: int = 50
    normalize_embeddings: bool = True
    scalar_interest_projection: bool = False
    diversity_only_init: bool = False
    negative_exponent_kernels: bool = False

    def __post_init__(self):
        if self.a_item is None:
            object.__setattr__(self, "a_item", self.a_s)
        if self.b_item is None:
            object.__setattr__(self, "b_item", self.b_s)

    def to_json(self) -> str:
        doc = {f.name: getattr(self, f.name) for f in fields(self)}
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def validate_config(cfg: ExperimentConfig) -> ExperimentConfig:
    """Check every constraint; the error message names each violation."""
    problems: list[str] = []
    if not (cfg.alpha >= 0.0) or not math.isfinite(cfg.alpha):
        problems.append("alpha must be >= 0")
    for name in ("beta1", "beta2"):
        val = getattr(cfg, name)
        if not (val >= 0.0) or not math.isfinite(val):
            problems.append(f"{name} must be >= 0")
    for name in ("a_l", "b_l", "a_s", "b_s", "a_item", "b_item"):
        val = getattr(cfg, name)
        if not (val > 0.0) or not math.isfinite(val):
            problems.append(f"{name} must be positive")
    if not (cfg.epsilon > 0.0) or not math.isfinite(cfg.epsilon):
        problems.append("epsilon must be positive")
    if cfg.k < 1:
        problems.append("k must be >= 1")
    if cfg.top_m < 1:
        problems.append("top_m must be >= 1")
    if cfg.time_buckets < 1:
        problems.append("time_buckets must be >= 1")
    if not (cfg.jitter >= 0.0) or not math.isfinite(cfg.jitter):
        problems.append("jitter must be >= 0")
    if cfg.recent_window < 1:
        problems.append("recent_window must be >= 1")
    if problems:
        raise ValidationError("; ".join(problems))
    return cfg


def config_overrides(cfg: ExperimentConfig, **overrides) -> ExperimentConfig:
    """Return a validated copy with non-None overrides applied."""
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ValidationError(f"unknown config fields: {', '.join(unknown)}")
    applied = {k: v for k, v in overrides.items() if v is not None}
    return validate_config(replace(cfg, **applied))


# ----- line-delimited JSON IO -----


def _iter_json_lines(path: str) -> Iterator[tuple[int, dict]]:
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON ({exc.msg})", line=lineno) from exc
            if not isinstance(doc, dict):
                raise ParseError("expected a JSON object", line=lineno)
            yield lineno, doc


def load_items(path: str) -> EmbeddingTable:
    """Read an item file into an EmbeddingTable, enforcing one dimension."""
    table = EmbeddingTable()
    for lineno, doc in _iter_json_lines(path):
        try:
            table.add(ItemRecord.from_dict(doc))
        except ValidationError as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return table


def save_items(path: str, records: Iterable[ItemRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def load_behaviors(path: str) -> list[BehaviorEvent]:
    """Read behavior events sorted by (user_id, ts); sort is stable, so
    equal timestamps keep their input order."""
    events: list[BehaviorEvent] = []
    for lineno, doc in _iter_json_lines(path):
        try:
            events.append(BehaviorEvent.from_dict(doc))
        except (ValidationError, ValueError) as exc:
            raise ParseError(str(exc), line=lineno) from exc
    events.sort(key=lambda e: (e.user_id, e.ts))
    return events


def save_behaviors(path: str, events: Iterable[BehaviorEvent]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.to_json() + "\n")


def load_candidates(path: str) -> list[CandidateSet]:
    sets: list[CandidateSet] = []
    seen_users: set[str] = set()
    for lineno, doc in _iter_json_lines(path):
        try:
            cs = CandidateSet.from_dict(doc)
        except ValidationError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if cs.user_id in seen_users:
            raise ParseError(f"duplicate candidate set for user {cs.user_id!r}", lineno)
        seen_users.add(cs.user_id)
        sets.append(cs)
    return sets


def save_candidates(path: str, sets: Iterable[CandidateSet]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for cs in sets:
            fh.write(cs.to_json() + "\n")


def load_results(path: str) -> list[RerankResult]:
    out: list[RerankResult] = []
    for lineno, doc in _iter_json_lines(path):
        try:
            out.append(RerankResult.from_dict(doc))
        except (ValidationError, KeyError, ValueError) as exc:
            raise ParseError(str(exc), line=lineno) from exc
    return out


def save_results(path: str, results: Iterable[RerankResult]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for res in results:
            fh.write(res.to_json() + "\n")


def load_config(path: str) -> ExperimentConfig:
    """Read a JSON config document whose keys mirror ExperimentConfig."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(f"malformed config JSON ({exc.msg})") from exc
    if not isinstance(doc, dict):
        raise ParseError("config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise ValidationError(f"unknown config fields: {', '.join(unknown)}")
    return validate_config(ExperimentConfig(**doc))


def save_config(path: str, cfg: ExperimentConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(cfg.to_json() + "\n")
