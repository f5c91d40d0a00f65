"""Record validation, JSONL parsing, and config handling tests."""

import json

import numpy as np
import pytest

from diverank.data import (
    BehaviorEvent,
    CandidateSet,
    EmbeddingTable,
    ExperimentConfig,
    ItemRecord,
    ParseError,
    ValidationError,
    config_overrides,
    load_behaviors,
    load_candidates,
    load_config,
    load_items,
    load_results,
    save_behaviors,
    save_candidates,
    save_config,
    save_items,
    save_results,
    validate_config,
)


def make_item(item_id="it1", dim=4, base_score=0.5, cluster_id=None):
    return ItemRecord(
        item_id=item_id,
        embedding=np.arange(dim, dtype=float),
        cluster_id=cluster_id,
        base_score=base_score,
    )


class TestItemRecord:
    def test_valid(self):
        rec = make_item()
        assert rec.dim == 4
        assert rec.base_score == 0.5

    def test_embedding_read_only(self):
        rec = make_item()
        with pytest.raises(ValueError):
            rec.embedding[0] = 99.0

    def test_base_score_range(self):
        with pytest.raises(ValidationError):
            make_item(base_score=1.5)
        with pytest.raises(ValidationError):
            make_item(base_score=-0.1)
        assert make_item(base_score=0.0).base_score == 0.0
        assert make_item(base_score=1.0).base_score == 1.0
        assert make_item(base_score=None).base_score is None

    def test_empty_id_rejected(self):
        with pytest.raises(ValidationError):
            make_item(item_id="")

    def test_empty_embedding_rejected(self):
        with pytest.raises(ValidationError):
            ItemRecord(item_id="x", embedding=np.array([]), cluster_id=None, base_score=None)


class TestBehaviorEvent:
    def test_valid(self):
        ev = BehaviorEvent(user_id="u1", item_id="i1", ts=10, label=1)
        assert ev.ts == 10

    def test_negative_timestamp_rejected(self):
        with pytest.raises(ValidationError):
            BehaviorEvent(user_id="u1", item_id="i1", ts=-1, label=None)

    def test_label_domain(self):
        BehaviorEvent(user_id="u", item_id="i", ts=0, label=0)
        BehaviorEvent(user_id="u", item_id="i", ts=0, label=None)
        with pytest.raises(ValidationError):
            BehaviorEvent(user_id="u", item_id="i", ts=0, label=2)


class TestEmbeddingTable:
    def test_three_valid_lines(self, tmp_path):
        path = tmp_path / "items.jsonl"
        recs = [make_item(f"it{i}") for i in range(3)]
        save_items(str(path), recs)
        table = load_items(str(path))
        assert len(table) == 3
        assert table.dim == 4
        assert table.ids == ["it0", "it1", "it2"]

    def test_empty_file(self, tmp_path):
        path = tmp_path / "items.jsonl"
        path.write_text("")
        table = load_items(str(path))
        assert len(table) == 0
        with pytest.raises(ValidationError):
            table.dim  # undefined until first insert

    def test_dim_mismatch_cites_line(self, tmp_path):
        path = tmp_path / "items.jsonl"
        lines = [
            json.dumps({"item_id": "a", "embedding": [1, 2, 3, 4]}),
            json.dumps({"item_id": "b", "embedding": [1, 2, 3]}),
        ]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as err:
            load_items(str(path))
        assert err.value.line == 2
        assert "2" in str(err.value)

    def test_malformed_json_cites_line(self, tmp_path):
        path = tmp_path / "items.jsonl"
        path.write_text('{"item_id": "a", "embedding": [1]}\nnot json\n')
        with pytest.raises(ParseError) as err:
            load_items(str(path))
        assert err.value.line == 2

    def test_duplicate_id_rejected(self):
        table = EmbeddingTable([make_item("a")])
        with pytest.raises(ValidationError):
            table.add(make_item("a"))

    def test_matrix_row_order(self):
        table = EmbeddingTable(
            [
                ItemRecord("a", np.array([1.0, 0.0]), None, None),
                ItemRecord("b", np.array([0.0, 1.0]), None, None),
            ]
        )
        assert np.array_equal(table.matrix(), np.array([[1.0, 0.0], [0.0, 1.0]]))


class TestBehaviorIO:
    def test_out_of_order_events_sorted(self, tmp_path):
        path = tmp_path / "behaviors.jsonl"
        events = [
            BehaviorEvent("u1", "i2", ts=20, label=None),
            BehaviorEvent("u1", "i1", ts=10, label=None),
        ]
        save_behaviors(str(path), events)
        loaded = load_behaviors(str(path))
        assert [e.ts for e in loaded] == [10, 20]

    def test_duplicates_retained(self, tmp_path):
        path = tmp_path / "behaviors.jsonl"
        events = [
            BehaviorEvent("u1", "i1", ts=5, label=1),
            BehaviorEvent("u1", "i1", ts=5, label=1),
        ]
        save_behaviors(str(path), events)
        assert len(load_behaviors(str(path))) == 2

    def test_round_trip(self, tmp_path):
        path = tmp_path / "behaviors.jsonl"
        events = [
            BehaviorEvent("u1", "i1", ts=5, label=1),
            BehaviorEvent("u2", "i9", ts=7, label=None),
        ]
        save_behaviors(str(path), events)
        loaded = load_behaviors(str(path))
        assert loaded == events


class TestCandidateSet:
    def test_duplicate_ids_rejected(self):
        with pytest.raises(ValidationError):
            CandidateSet("u1", (make_item("a"), make_item("a")))

    def test_mixed_dims_rejected(self):
        with pytest.raises(ValidationError):
            CandidateSet("u1", (make_item("a", dim=4), make_item("b", dim=3)))

    def test_missing_base_score_rejected(self):
        with pytest.raises(ValidationError):
            CandidateSet("u1", (make_item("a", base_score=None),))

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            CandidateSet("u1", ())

    def test_accessors(self):
        cs = CandidateSet("u1", (make_item("a", base_score=0.9), make_item("b", base_score=0.1)))
        assert cs.ids == ["a", "b"]
        assert cs.size == 2
        assert np.array_equal(cs.base_scores(), np.array([0.9, 0.1]))
        assert cs.embeddings().shape == (2, 4)

    def test_round_trip(self, tmp_path):
        path = tmp_path / "candidates.jsonl"
        sets = [
            CandidateSet("u1", (make_item("a", base_score=0.9),)),
            CandidateSet("u2", (make_item("b", base_score=0.2), make_item("c", base_score=0.3))),
        ]
        save_candidates(str(path), sets)
        loaded = load_candidates(str(path))
        assert [cs.user_id for cs in loaded] == ["u1", "u2"]
        assert loaded[1].ids == ["b", "c"]
        assert np.array_equal(loaded[1].embeddings(), sets[1].embeddings())


class TestItemRoundTrip:
    def test_field_for_field(self, tmp_path, rng):
        path = tmp_path / "items.jsonl"
        recs = []
        for i in range(10):
            recs.append(
                ItemRecord(
                    item_id=f"it{i}",
                    embedding=rng.normal(size=6),
                    cluster_id=int(rng.integers(0, 3)) if i % 2 else None,
                    base_score=float(rng.random()) if i % 3 else None,
                )
            )
        save_items(str(path), recs)
        loaded = list(load_items(str(path)))
        assert len(loaded) == len(recs)
        for got, want in zip(loaded, recs):
            assert got.item_id == want.item_id
            assert np.array_equal(got.embedding, want.embedding)
            assert got.cluster_id == want.cluster_id
            assert got.base_score == want.base_score


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert validate_config(cfg) is cfg

    def test_alpha_zero_allowed(self):
        validate_config(ExperimentConfig(alpha=0.0))

    def test_b_l_zero_message(self):
        with pytest.raises(ValidationError) as err:
            validate_config(ExperimentConfig(b_l=0.0))
        assert "b_l must be positive" in str(err.value)

    def test_k_zero_rejected(self):
        with pytest.raises(ValidationError):
            validate_config(ExperimentConfig(k=0))

    def test_negative_alpha_rejected(self):
        with pytest.raises(ValidationError):
            validate_config(ExperimentConfig(alpha=-0.5))

    def test_all_violations_collected(self):
        with pytest.raises(ValidationError) as err:
            validate_config(ExperimentConfig(b_l=0.0, k=0, a_s=-1.0))
        message = str(err.value)
        assert "b_l" in message
        assert "k" in message
        assert "a_s" in message

    def test_item_kernel_defaults_inherit(self):
        cfg = ExperimentConfig(a_s=2.0, b_s=3.0)
        assert cfg.a_item == 2.0
        assert cfg.b_item == 3.0
        explicit = ExperimentConfig(a_s=2.0, b_s=3.0, a_item=5.0, b_item=7.0)
        assert explicit.a_item == 5.0
        assert explicit.b_item == 7.0

    def test_overrides_win(self):
        cfg = ExperimentConfig(alpha=1.0, k=10)
        out = config_overrides(cfg, alpha=2.5, k=None)
        assert out.alpha == 2.5
        assert out.k == 10  # None means "not overridden"

    def test_unknown_override_rejected(self):
        with pytest.raises(ValidationError):
            config_overrides(ExperimentConfig(), nonsense=1)

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "config.json"
        cfg = ExperimentConfig(alpha=2.0, beta1=0.25, k=7, diversity_only_init=True)
        save_config(str(path), cfg)
        assert load_config(str(path)) == cfg

    def test_unknown_config_key_rejected(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text('{"alpha": 1.0, "bogus": 2}\n')
        with pytest.raises(ValidationError):
            load_config(str(path))


class TestResultsIO:
    def test_round_trip(self, tmp_path):
        from diverank.data import RerankResult, SelectionStep

        path = tmp_path / "results.jsonl"
        results = [
            RerankResult(
                user_id="u1",
                item_ids=("a", "b"),
                steps=(
                    SelectionStep("a", score=0.9, log_d2=0.0, marginal=0.9),
                    SelectionStep("b", score=0.5, log_d2=-0.3, marginal=0.2),
                ),
                objective=1.1,
                exhausted=False,
            )
        ]
        save_results(str(path), results)
        loaded = load_results(str(path))
        assert loaded == results
