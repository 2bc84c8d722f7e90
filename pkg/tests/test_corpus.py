import json

import pytest
from hypothesis import given, settings, strategies as st

from eadwsd import errors
from eadwsd.corpus import (
    Pos,
    SampleSpec,
    Source,
    WsdInstance,
    candidate_senses,
    dump_instances,
    instance_to_dict,
    load_adversarial_set,
    load_instances,
    load_sense_inventory,
    parse_pos,
    retag,
    split_marked_sentence,
    stratified_sample,
)

from conftest import DATA


class TestInventory:
    def test_loads_entries_in_file_order(self, inventory):
        assert len(inventory) == 7
        ids = [e.sense_id for e in candidate_senses(inventory, "bank", Pos.NOUN)]
        assert ids == ["bank.noun.1", "bank.noun.2"]

    def test_examples_column_optional(self, inventory):
        assert inventory.by_id["bank.noun.1"].examples == ("The boat drifted to the bank.",)
        assert inventory.by_id["cold.adj.1"].examples == ()

    def test_unknown_lemma_gives_empty_candidates(self, inventory):
        assert candidate_senses(inventory, "zzz", Pos.NOUN) == ()

    def test_duplicate_sense_id_aborts_with_row(self, tmp_path):
        p = tmp_path / "inv.tsv"
        p.write_text("a.noun.1\ta\tnoun\tg1\na.noun.1\ta\tnoun\tg2\n")
        with pytest.raises(errors.InventoryLoadError, match="inv.tsv:2"):
            load_sense_inventory(p)

    def test_short_row_aborts(self, tmp_path):
        p = tmp_path / "inv.tsv"
        p.write_text("a.noun.1\ta\tnoun\n")
        with pytest.raises(errors.InventoryLoadError, match=">=4"):
            load_sense_inventory(p)

    def test_empty_gloss_aborts(self, tmp_path):
        p = tmp_path / "inv.tsv"
        p.write_text("a.noun.1\ta\tnoun\t\n")
        with pytest.raises(errors.InventoryLoadError, match="empty gloss"):
            load_sense_inventory(p)

    def test_bad_pos_aborts(self, tmp_path):
        p = tmp_path / "inv.tsv"
        p.write_text("a.x.1\ta\tparticle\tg\n")
        with pytest.raises(errors.InventoryLoadError, match="part of speech"):
            load_sense_inventory(p)

    def test_comments_and_blanks_skipped(self, tmp_path):
        p = tmp_path / "inv.tsv"
        p.write_text("# header\n\na.noun.1\ta\tnoun\tg\n")
        assert len(load_sense_inventory(p)) == 1

    def test_unsupported_format(self):
        with pytest.raises(errors.InventoryLoadError, match="format"):
            load_sense_inventory(DATA / "inventory.tsv", format="csv")


class TestMarkers:
    def test_round_trip(self):
        pre, target, post = split_marked_sentence("a <WSD>b</WSD> c")
        assert (pre, target, post) == ("a ", "b", " c")

    @pytest.mark.parametrize(
        "bad",
        [
            "no marker here",
            "two <WSD>a</WSD> and <WSD>b</WSD>",
            "<WSD>unclosed",
            "backwards</WSD> then <WSD>",
            "<WSD></WSD> empty",
        ],
    )
    def test_violations(self, bad):
        with pytest.raises(errors.MarkerError):
            split_marked_sentence(bad)

    def test_instance_properties(self):
        inst = WsdInstance("i:1", "on the <WSD>bank</WSD>!", "bank", Pos.NOUN)
        assert inst.target_surface == "bank"
        assert inst.plain_sentence == "on the bank!"
        assert inst.span == (7, 11)
        start, end = inst.span
        assert inst.plain_sentence[start:end] == "bank"

    def test_empty_lemma_rejected(self):
        with pytest.raises(errors.InstanceError, match="lemma"):
            WsdInstance("i:1", "a <WSD>b</WSD>", "", Pos.NOUN)


class TestLoadInstances:
    def test_tsv_order_and_fields(self, instances):
        assert [i.instance_id for i in instances] == [f"train:{n}" for n in range(1, 8)]
        first = instances[0]
        assert first.lemma == "bank" and first.pos is Pos.NOUN
        assert first.gold_sense_id == "bank.noun.1"

    def test_invalid_rows_skipped_and_reported(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text(
            "good <WSD>bank</WSD> row\tbank.noun.1\n"
            "no marker\tbank.noun.1\n"
            "unknown pos id <WSD>x</WSD>\tx.pcl.9\n"
        )
        result = load_instances(p)
        assert len(result) == 1
        rows = [e.row for e in result.report.errors]
        assert rows == [2, 3]
        assert result.report.skipped == 2

    def test_inventory_checks_gold_at_load(self, tmp_path, inventory):
        p = tmp_path / "c.tsv"
        p.write_text("a <WSD>bank</WSD>\tbank.noun.9\n")
        result = load_instances(p, inventory=inventory)
        assert len(result) == 0
        assert "unknown gold sense" in result.report.errors[0].reason

    def test_provenance_header_ignored(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("# provenance line\na <WSD>bank</WSD>\tbank.noun.1\n")
        result = load_instances(p)
        assert len(result) == 1
        assert result.instances[0].instance_id == "c:2"

    def test_jsonl_format(self, tmp_path):
        p = tmp_path / "c.jsonl"
        rows = [
            {"sentence": "a <WSD>bank</WSD>", "gold_sense_id": "bank.noun.1"},
            {"sentence": "b <WSD>run</WSD>", "lemma": "Run", "pos": "v",
             "instance_id": "my:id", "candidates": ["run.verb.1", "run.verb.2"]},
        ]
        p.write_text("".join(json.dumps(r) + "\n" for r in rows))
        result = load_instances(p, format="jsonl")
        assert len(result) == 2
        assert result.instances[0].instance_id == "c:1"
        second = result.instances[1]
        assert second.instance_id == "my:id"
        assert second.lemma == "run" and second.pos is Pos.VERB
        assert second.candidates == ("run.verb.1", "run.verb.2")

    def test_unsupported_format(self, tmp_path):
        with pytest.raises(errors.InstanceError, match="format"):
            load_instances(tmp_path / "x.csv", format="csv")

    def test_dump_round_trip_with_header(self, tmp_path, instances):
        p = tmp_path / "dump.jsonl"
        dump_instances(instances, p, header="origin test")
        text = p.read_text()
        assert text.startswith("# origin test\n")
        back = load_instances(p, format="jsonl")
        assert list(back) == instances

    def test_instance_to_dict_key_order(self, instances):
        keys = list(instance_to_dict(instances[0]))
        assert keys == [
            "instance_id", "sentence", "lemma", "pos",
            "gold_sense_id", "source", "candidates",
        ]

    def test_retag(self, instances):
        tagged = retag(instances[0], Source.SEMCOR)
        assert tagged.source is Source.SEMCOR
        assert tagged.sentence == instances[0].sentence


class TestAdversarial:
    def test_fool_me_requires_two_candidates(self, tmp_path):
        p = tmp_path / "fm.tsv"
        p.write_text(
            "a <WSD>bank</WSD>\tbank.noun.1\tbank.noun.1,bank.noun.2\n"
            "b <WSD>bank</WSD>\tbank.noun.2\tbank.noun.2\n"
            "c <WSD>bank</WSD>\tbank.noun.1\n"
        )
        result = load_adversarial_set(p, "fool_me_1")
        assert len(result) == 1
        assert result.instances[0].source is Source.FOOL_ME_SET1
        assert len(result.report.errors) == 2

    def test_non_binary_sets_skip_candidate_rule(self, tmp_path):
        p = tmp_path / "h.tsv"
        p.write_text("a <WSD>bank</WSD>\tbank.noun.1\n")
        result = load_adversarial_set(p, "hard_en")
        assert len(result) == 1
        assert result.instances[0].source is Source.HARD_EN

    def test_unknown_set_name(self, tmp_path):
        with pytest.raises(errors.InstanceError, match="fool_me_1"):
            load_adversarial_set(tmp_path / "x.tsv", "fool_me_9")


def _pool(counts: dict[Pos, int]) -> list[WsdInstance]:
    pool = []
    for pos, n in counts.items():
        for i in range(n):
            pool.append(
                WsdInstance(
                    f"{pos.value}:{i}",
                    f"w{i} <WSD>t{i}</WSD> x",
                    f"lemma{i}",
                    pos,
                    gold_sense_id=f"lemma{i}.{pos.value}.1",
                )
            )
    return pool


class TestSampling:
    def test_counts_and_determinism(self):
        pool = _pool({Pos.NOUN: 40, Pos.VERB: 30, Pos.ADJECTIVE: 20, Pos.ADVERB: 10})
        spec = SampleSpec({"noun": 4, "verb": 3, "adjective": 3, "adverb": 1}, seed=11)
        a = stratified_sample(pool, spec)
        b = stratified_sample(pool, spec)
        assert [i.instance_id for i in a] == [i.instance_id for i in b]
        by_pos = {}
        for inst in a:
            by_pos[inst.pos] = by_pos.get(inst.pos, 0) + 1
        assert by_pos == {Pos.NOUN: 4, Pos.VERB: 3, Pos.ADJECTIVE: 3, Pos.ADVERB: 1}

    def test_different_seeds_differ(self):
        pool = _pool({Pos.NOUN: 200})
        a = stratified_sample(pool, SampleSpec({"noun": 10}, seed=1))
        b = stratified_sample(pool, SampleSpec({"noun": 10}, seed=2))
        assert [i.instance_id for i in a] != [i.instance_id for i in b]

    def test_insufficient_pool_names_shortfall(self):
        pool = _pool({Pos.NOUN: 2})
        with pytest.raises(errors.SamplingError, match="shortfall 3"):
            stratified_sample(pool, SampleSpec({"noun": 5}, seed=1))

    def test_negative_count_rejected(self):
        with pytest.raises(errors.SamplingError, match="negative"):
            stratified_sample([], SampleSpec({"noun": -1}, seed=1))

    def test_pos_aliases_in_spec(self):
        pool = _pool({Pos.ADJECTIVE: 3})
        out = stratified_sample(pool, SampleSpec({"adj": 2}, seed=5))
        assert len(out) == 2

    @given(
        sizes=st.tuples(st.integers(0, 12), st.integers(0, 12)),
        want=st.tuples(st.integers(0, 12), st.integers(0, 12)),
        seed=st.integers(0, 2**32 - 1),
    )
    @settings(max_examples=60, deadline=None)
    def test_sample_is_subset_without_replacement(self, sizes, want, seed):
        pool = _pool({Pos.NOUN: sizes[0], Pos.VERB: sizes[1]})
        spec = SampleSpec({"noun": want[0], "verb": want[1]}, seed=seed)
        if want[0] > sizes[0] or want[1] > sizes[1]:
            with pytest.raises(errors.SamplingError):
                stratified_sample(pool, spec)
            return
        out = stratified_sample(pool, spec)
        ids = [i.instance_id for i in out]
        assert len(ids) == len(set(ids)) == want[0] + want[1]
        assert set(ids) <= {i.instance_id for i in pool}


def test_parse_pos_aliases():
    assert parse_pos("N") is Pos.NOUN
    assert parse_pos(" v ") is Pos.VERB
    assert parse_pos("ADJ") is Pos.ADJECTIVE
    assert parse_pos("r") is Pos.ADVERB
    with pytest.raises(ValueError):
        parse_pos("x")
