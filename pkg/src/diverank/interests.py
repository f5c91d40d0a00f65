"""User interest extraction: cluster-grouped interest points, long-term
(macro) and short-term (micro) interest vectors via multi-head attention.

Macro interest attends over the user's top-M interest points, each the
sum-pooled embedding of the behavior items falling in one cluster.
Micro interest attends over the most recent items, each embedding
concatenated with a learnable time-decay embedding indexed by a
log2-scaled age bucket.  Both attention outputs are mean-pooled over
positions to a single length-d vector.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .clustering import load_clusters  # re-exported convenience  # noqa: F401
from .data import BehaviorEvent, EmbeddingTable, ParseError, ValidationError

SECONDS_PER_HOUR = 3600


@dataclass(frozen=True)
class InterestPoint:
    """One cluster's footprint in a user's history."""

    cluster_id: int
    item_ids: tuple[str, ...]
    vector: np.ndarray  # sum of member embeddings
    last_ts: int

    @property
    def count(self) -> int:
        return len(self.item_ids)


@dataclass(frozen=True)
class InterestProfile:
    """Cached per-user interest state consumed by scoring and kernels."""

    user_id: str
    h_macro: np.ndarray
    h_micro: np.ndarray
    points: tuple[InterestPoint, ...] = ()
    recent_buckets: tuple[int, ...] = ()

    def __post_init__(self):
        if self.h_macro.shape != self.h_micro.shape:
            raise ValidationError("macro and micro vectors must share a dimension")


@dataclass
class AttentionParams:
    """Per-head projection matrices plus the shared output projection.

    heads[h] = (wq, wk, wv), each (input_dim, head_dim); wo maps the
    concatenated head outputs (heads * head_dim) to output_dim.  The
    score scaling is 1/sqrt(head_dim).
    """

    heads: list[tuple[Tensor, Tensor, Tensor]]
    wo: Tensor
    head_dim: int

    @property
    def num_heads(self) -> int:
        return len(self.heads)

    @property
    def scaling(self) -> float:
        return 1.0 / math.sqrt(self.head_dim)

    @property
    def input_dim(self) -> int:
        return self.heads[0][0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.wo.shape[1]

    def tensors(self) -> list[Tensor]:
        out: list[Tensor] = []
        for wq, wk, wv in self.heads:
            out.extend((wq, wk, wv))
        out.append(self.wo)
        return out


def init_attention_params(
    input_dim: int,
    output_dim: int,
    num_heads: int,
    head_dim: int,
    rng: np.random.Generator,
    requires_grad: bool = True,
) -> AttentionParams:
    if num_heads < 1 or head_dim < 1:
        raise ValidationError("attention needs >= 1 head of width >= 1")
    heads = []
    for _ in range(num_heads):
        wq = ad.init_param(input_dim, head_dim, rng)
        wk = ad.init_param(input_dim, head_dim, rng)
        wv = ad.init_param(input_dim, head_dim, rng)
        heads.append((wq, wk, wv))
    wo = ad.init_param(num_heads * head_dim, output_dim, rng)
    params = AttentionParams(heads=heads, wo=wo, head_dim=head_dim)
    for t in params.tensors():
        t.requires_grad = requires_grad
    return params


def multi_head_attention(inputs: Tensor, params: AttentionParams) -> Tensor:
    """Self-attention over the rows of `inputs`, one output row per input row.

    Each head computes softmax(Q K^T / sqrt(head_dim)) V; head outputs are
    concatenated and projected by wo.
    """
    if inputs.shape[1] != params.input_dim:
        raise ValidationError(
            f"attention input dim {inputs.shape[1]} != params dim {params.input_dim}"
        )
    head_outputs = []
    for wq, wk, wv in params.heads:
        q = ad.matmul(inputs, wq)
        k = ad.matmul(inputs, wk)
        v = ad.matmul(inputs, wv)
        scores = ad.scale(ad.matmul(q, ad.transpose(k)), params.scaling)
        weights = ad.softmax_rows(scores)
        head_outputs.append(ad.matmul(weights, v))
    joined = head_outputs[0] if len(head_outputs) == 1 else ad.concat_cols(head_outputs)
    return ad.matmul(joined, params.wo)


def attention_pool(inputs: Tensor, params: AttentionParams) -> Tensor:
    """Attention followed by mean over positions: (n, d_in) -> (1, d_out)."""
    return ad.mean_rows(multi_head_attention(inputs, params))


@dataclass
class InterestParams:
    """All trainable interest-extraction state."""

    macro: AttentionParams
    micro: AttentionParams
    time_table: Tensor  # (buckets, time_dim)
    time_dim: int

    @property
    def dim(self) -> int:
        return self.macro.output_dim

    @property
    def time_buckets(self) -> int:
        return self.time_table.shape[0]

    def tensors(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for scope, att in (("macro", self.macro), ("micro", self.micro)):
            for h, (wq, wk, wv) in enumerate(att.heads):
                out[f"{scope}.h{h}.wq"] = wq
                out[f"{scope}.h{h}.wk"] = wk
                out[f"{scope}.h{h}.wv"] = wv
            out[f"{scope}.wo"] = att.wo
        out["time_table"] = self.time_table
        return out


def init_interest_params(
    dim: int,
    time_buckets: int,
    rng: np.random.Generator,
    num_heads: int = 2,
    head_dim: int | None = None,
    time_dim: int = 8,
    requires_grad: bool = True,
) -> InterestParams:
    """Default geometry: 2 heads of width dim/2, output back to dim."""
    if head_dim is None:
        if dim % num_heads != 0:
            raise ValidationError(
                f"embedding dim {dim} not divisible by {num_heads} heads; "
                "pass head_dim explicitly"
            )
        head_dim = dim // num_heads
    macro = init_attention_params(dim, dim, num_heads, head_dim, rng, requires_grad)
    micro = init_attention_params(
        dim + time_dim, dim, num_heads, head_dim, rng, requires_grad
    )
    time_table = ad.init_param(time_buckets, time_dim, rng)
    time_table.requires_grad = requires_grad
    return InterestParams(macro=macro, micro=micro, time_table=time_table, time_dim=time_dim)


def interest_params_from_arrays(
    arrays: dict[str, np.ndarray], num_heads: int, time_dim: int
) -> InterestParams:
    """Rebuild InterestParams from checkpointed arrays (inference only)."""
    def attention(scope: str) -> AttentionParams:
        heads = []
        for h in range(num_heads):
            try:
                wq = arrays[f"{scope}.h{h}.wq"]
                wk = arrays[f"{scope}.h{h}.wk"]
                wv = arrays[f"{scope}.h{h}.wv"]
            except KeyError as exc:
                raise ValidationError(f"checkpoint missing tensor {exc}") from exc
            heads.append((Tensor(wq), Tensor(wk), Tensor(wv)))
        if f"{scope}.wo" not in arrays:
            raise ValidationError(f"checkpoint missing tensor {scope}.wo")
        return AttentionParams(
            heads=heads, wo=Tensor(arrays[f"{scope}.wo"]), head_dim=heads[0][0].shape[1]
        )

    if "time_table" not in arrays:
        raise ValidationError("checkpoint missing tensor time_table")
    return InterestParams(
        macro=attention("macro"),
        micro=attention("micro"),
        time_table=Tensor(arrays["time_table"]),
        time_dim=time_dim,
    )


def group_interest_points(
    events: list[BehaviorEvent],
    table: EmbeddingTable,
    item_clusters: dict[str, int],
    top_m: int,
) -> list[InterestPoint]:
    """Group one user's behavior items by cluster and keep the top-M groups.

    Groups rank by member count; equal counts break toward the more
    recently interacted cluster, then the lower cluster id.  Pooling is
    the plain sum of member embeddings.  Items with no cluster or no
    embedding are skipped.
    """
    if top_m < 1:
        raise ValidationError("top_m must be >= 1")
    members: dict[int, dict[str, int]] = {}
    for ev in events:
        cid = item_clusters.get(ev.item_id)
        if cid is None or ev.item_id not in table:
            continue
        group = members.setdefault(cid, {})
        prev = group.get(ev.item_id)
        if prev is None or ev.ts > prev:
            group[ev.item_id] = ev.ts
    points = []
    for cid in sorted(members):
        group = members[cid]
        ids = tuple(sorted(group))
        vector = np.sum([table[i].embedding for i in ids], axis=0)
        points.append(
            InterestPoint(
                cluster_id=cid,
                item_ids=ids,
                vector=vector,
                last_ts=max(group.values()),
            )
        )
    points.sort(key=lambda p: (-p.count, -p.last_ts, p.cluster_id))
    return points[:top_m]


def macro_interest(points: list[InterestPoint], params: InterestParams) -> Tensor:
    """Long-term interest vector from attention over pooled interest points.

    Zero points is a documented cold start: the result is the zero vector
    and the parameters are never touched.
    """
    if not points:
        return ad.constant(np.zeros((1, params.dim)))
    stacked = ad.constant(np.stack([p.vector for p in points]))
    return attention_pool(stacked, params.macro)


def time_bucket(delta_seconds: int, buckets: int) -> int:
    """log2-scaled hour bucket, capped at the table size."""
    if delta_seconds < 0:
        raise ValidationError("event timestamp lies in the future")
    raw = int(math.floor(math.log2(1.0 + delta_seconds / SECONDS_PER_HOUR)))
    return min(raw, buckets - 1)


def micro_interest(
    recent: list[tuple[np.ndarray, int]],
    now: int,
    params: InterestParams,
) -> Tensor:
    """Short-term interest from attention over recent items.

    `recent` must be sorted most recent first.  Each embedding is
    concatenated with the learnable time-decay embedding of its age
    bucket before attention; mean pooling over positions returns a
    single row.  Zero recent items yields the zero vector.
    """
    if not recent:
        return ad.constant(np.zeros((1, params.dim)))
    ts_list = [ts for _, ts in recent]
    if any(b > a for a, b in zip(ts_list, ts_list[1:])):
        raise ValidationError("recent items must be sorted most recent first")
    buckets = [time_bucket(now - ts, params.time_buckets) for _, ts in recent]
    embs = ad.constant(np.stack([e for e, _ in recent]))
    decay = ad.gather_rows(params.time_table, buckets)
    joined = ad.concat_cols([embs, decay])
    return attention_pool(joined, params.micro)


def build_profile(
    user_id: str,
    events: list[BehaviorEvent],
    table: EmbeddingTable,
    item_clusters: dict[str, int],
    params: InterestParams,
    top_m: int,
    recent_window: int,
    now: int | None = None,
) -> InterestProfile:
    """Assemble one user's full interest profile from behavior history.

    An empty or fully-unknown history yields a zero profile (cold start).
    `now` defaults to the latest event timestamp.
    """
    if recent_window < 1:
        raise ValidationError("recent_window must be >= 1")
    known = [ev for ev in events if ev.item_id in table]
    known.sort(key=lambda e: e.ts)
    if now is None:
        now = known[-1].ts if known else 0
    points = group_interest_points(known, table, item_clusters, top_m)
    recent = [
        (table[ev.item_id].embedding, ev.ts) for ev in reversed(known[-recent_window:])
    ]
    with ad.no_grad():
        h_macro = macro_interest(points, params).data[0].copy()
        h_micro = micro_interest(recent, now, params).data[0].copy()
    bucket_ids = tuple(time_bucket(now - ts, params.time_buckets) for _, ts in recent)
    return InterestProfile(
        user_id=user_id,
        h_macro=h_macro,
        h_micro=h_micro,
        points=tuple(points),
        recent_buckets=bucket_ids,
    )


# ----- profile cache IO -----


def save_profiles(path: str, profiles: list[InterestProfile]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in profiles:
            doc = {
                "user_id": p.user_id,
                "h_macro": [float(v) for v in p.h_macro],
                "h_micro": [float(v) for v in p.h_micro],
            }
            fh.write(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_profiles(path: str) -> dict[str, InterestProfile]:
    out: dict[str, InterestProfile] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
                profile = InterestProfile(
                    user_id=doc["user_id"],
                    h_macro=np.asarray(doc["h_macro"], dtype=np.float64),
                    h_micro=np.asarray(doc["h_micro"], dtype=np.float64),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad profile line ({exc})", line=lineno) from exc
            if profile.user_id in out:
                raise ParseError(f"duplicate profile for {profile.user_id!r}", lineno)
            out[profile.user_id] = profile
    return out
