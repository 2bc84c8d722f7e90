"""Acceptance gate: one test per shipping criterion.

Each test prints one ``[acceptance] <name>: PASS`` line (or FAIL) and
enforces its wall-clock bound. Oracles here are deliberately independent
reimplementations: a character-scanner tokenizer and selection-sort ranking
for the context pipeline, full bitstring enumeration and scipy for the
paired significance test, hand-computed vector fixtures for the embedding
score.
"""

import itertools
import json
import math
import os
import random
from contextlib import contextmanager
from pathlib import Path
from time import perf_counter

import pytest

from eadwsd import errors
from eadwsd.context import ContextConfig, extract_features, stopwords
from eadwsd.corpus import (
    Pos,
    SampleSpec,
    WsdInstance,
    load_sense_inventory,
    stratified_sample,
)
from eadwsd.datagen import (
    ReviewStatus,
    ReviewStore,
    build_advanced,
    build_cot_neighbour,
    build_direct,
    check_export_integrity,
    export_jsonl,
    load_export,
)
from eadwsd.ead_engine import ParseStatus, run_pipeline
from eadwsd.embedding import ConfigEmbedder, EmbeddingBackendConfig, cosine
from eadwsd.evaluation import (
    METHOD_CHI2,
    METHOD_EXACT,
    PairedOutcomes,
    embedding_score,
    mcnemar,
    render_report_json,
    score_exact,
)
from eadwsd.llm_gateway import FinishReason, ScriptedGateway, parse_judge_json
from eadwsd.prompting import PromptKind, render_golden

from conftest import DATA
from helpers import TableEmbedder

GOLDEN_DIR = Path(__file__).parents[1] / "prompts" / "golden"

BAT_SENTENCE = (
    "After the match, the <WSD>bat</WSD> was placed carefully back "
    "into the player's bag"
)


@contextmanager
def criterion(name: str, bound_s: float):
    start = perf_counter()
    try:
        yield
    except BaseException:
        print(f"[acceptance] {name}: FAIL")
        raise
    elapsed = perf_counter() - start
    if elapsed >= bound_s:
        print(f"[acceptance] {name}: FAIL (took {elapsed:.3f}s, bound {bound_s:g}s)")
        raise AssertionError(f"{name} exceeded its time bound: {elapsed:.3f}s >= {bound_s:g}s")
    print(f"[acceptance] {name}: PASS ({elapsed:.3f}s < {bound_s:g}s)")


def _embedder(dim: int) -> ConfigEmbedder:
    return ConfigEmbedder(EmbeddingBackendConfig(kind="deterministic_offline", dim=dim))


# --- independent context oracle -------------------------------------------

def _oracle_word_tokens(text: str) -> list[str]:
    """Character-scanner tokenizer: letter runs with internal apostrophes."""
    runs: list[str] = []
    current: list[str] = []
    for i, ch in enumerate(text):
        if ch.isalpha():
            current.append(ch)
        elif ch in "'’" and current and i + 1 < len(text) and text[i + 1].isalpha():
            current.append(ch)
        else:
            if current:
                runs.append("".join(current))
            current = []
    if current:
        runs.append("".join(current))

    tokens: list[str] = []
    for run in runs:
        token = run.lower()
        if token.endswith("'s") or token.endswith("’s"):
            token = token[:-2]
        if token and token.isalpha():
            tokens.append(token)
    return tokens


def _oracle_rank(entries: list[dict]) -> list[dict]:
    """Selection sort with an explicit pairwise comparison."""

    def better(a: dict, b: dict) -> bool:
        if a["sim"] != b["sim"]:
            return a["sim"] > b["sim"]
        if a["distance"] != b["distance"]:
            return a["distance"] < b["distance"]
        if a["side"] != b["side"]:
            return a["side"] == "pre"
        return a["token"] < b["token"]

    remaining = list(entries)
    ordered: list[dict] = []
    while remaining:
        best = 0
        for i in range(1, len(remaining)):
            if better(remaining[i], remaining[best]):
                best = i
        ordered.append(remaining.pop(best))
    return ordered


def _oracle_features(sentence: str, window: int, embedder) -> dict:
    head, rest = sentence.split("<WSD>", 1)
    target, tail = rest.split("</WSD>", 1)
    stops = stopwords("en-v1")
    pre = [t for t in _oracle_word_tokens(head) if t not in stops][-window:]
    post = [t for t in _oracle_word_tokens(tail) if t not in stops][:window]

    def embed_one(text: str):
        return embedder.embed_texts([text])[0]

    target_vec = embed_one(target.lower())
    entries = []
    for distance, token in enumerate(reversed(pre), start=1):
        entries.append(
            {
                "token": token,
                "sim": cosine(target_vec, embed_one(token)),
                "side": "pre",
                "distance": distance,
            }
        )
    for distance, token in enumerate(post, start=1):
        entries.append(
            {
                "token": token,
                "sim": cosine(target_vec, embed_one(token)),
                "side": "post",
                "distance": distance,
            }
        )
    return {"preceding": pre, "following": post, "ranked": _oracle_rank(entries)}


_POOL = [
    "match", "player", "bag", "storm", "river", "cricket", "pitch", "umpire",
    "the", "a", "of", "and", "was", "into", "back", "carefully", "near",
    "player's", "team’s", "don't", "b2b", "route66", "semi-final", "BALL",
    "éclair", "innings", "over", "willow", "crease", "boundary", "match",
]
_PUNCT = ["", "", "", ",", ".", "!", ";"]
_TARGETS = ["bat", "bank", "run", "cold", "pitch", "Over"]


def _random_sentence(rng: random.Random) -> str:
    def words(n: int) -> str:
        return " ".join(rng.choice(_POOL) + rng.choice(_PUNCT) for _ in range(n))

    pre = words(rng.randint(0, 16))
    post = words(rng.randint(0, 16))
    target = rng.choice(_TARGETS)
    return f"{pre} <WSD>{target}</WSD> {post}".strip()


def _adhoc(sentence: str, i: int) -> WsdInstance:
    return WsdInstance(
        instance_id=f"oracle:{i}", sentence=sentence, lemma="adhoc", pos=Pos.NOUN
    )


# --- synthetic corpora ------------------------------------------------------

_SENSE_TEMPLATES = [
    ("bank", Pos.NOUN, "bank.noun.1",
     "Reeds lined the muddy <WSD>bank</WSD> beside the slow river {j}."),
    ("bank", Pos.NOUN, "bank.noun.2",
     "She opened an account at the <WSD>bank</WSD> on week {j}."),
    ("run", Pos.VERB, "run.verb.1",
     "Each dawn they <WSD>run</WSD> past the harbour gate {j} times."),
    ("run", Pos.VERB, "run.verb.2",
     "The sisters <WSD>run</WSD> a small press with {j} staff."),
    ("cold", Pos.ADJECTIVE, "cold.adj.1",
     "The cellar stayed <WSD>cold</WSD> through week {j}."),
    ("cold", Pos.ADJECTIVE, "cold.adj.2",
     "His reply was <WSD>cold</WSD> for the {j}th time."),
]


def _synthetic_corpus(n: int) -> list[WsdInstance]:
    out = []
    for i in range(n):
        lemma, pos, gold, template = _SENSE_TEMPLATES[i % len(_SENSE_TEMPLATES)]
        out.append(
            WsdInstance(
                instance_id=f"syn:{i + 1}",
                sentence=template.format(j=i + 1),
                lemma=lemma,
                pos=pos,
                gold_sense_id=gold,
            )
        )
    return out


def _other_sense(gold: str) -> str:
    return gold[:-1] + ("2" if gold.endswith("1") else "1")


@pytest.fixture(scope="module")
def test_inventory():
    return load_sense_inventory(DATA / "inventory.tsv")


# --- the criteria -----------------------------------------------------------

class TestAcceptance:
    def test_worked_example_fidelity(self):
        with criterion("worked_example_fidelity", 1.0):
            features = extract_features(
                _adhoc(BAT_SENTENCE, 0), ContextConfig(), _embedder(32)
            )
            assert features.preceding == ("after", "match")
            assert features.following == (
                "placed", "carefully", "back", "player", "bag",
            )

    def test_context_oracle_equivalence(self):
        with criterion("context_oracle_equivalence", 10.0):
            rng = random.Random(20260815)
            embedder = _embedder(16)
            for i in range(200):
                sentence = _random_sentence(rng)
                window = rng.randint(1, 12)
                top_k = rng.randint(1, 8)
                cfg = ContextConfig(window=window, top_k=top_k)
                got = extract_features(_adhoc(sentence, i), cfg, embedder)
                want = _oracle_features(sentence, window, embedder)
                assert list(got.preceding) == want["preceding"], sentence
                assert list(got.following) == want["following"], sentence
                got_ranked = [
                    (r.token, r.similarity, r.side, r.distance) for r in got.ranked
                ]
                want_ranked = [
                    (e["token"], e["sim"], e["side"], e["distance"])
                    for e in want["ranked"]
                ]
                assert got_ranked == want_ranked, sentence
                assert list(got.top_k_tokens) == [
                    e["token"] for e in want["ranked"][:top_k]
                ]

    def test_window_topk_contracts(self):
        with criterion("window_topk_contracts", 30.0):
            rng = random.Random(42)
            embedder = _embedder(8)
            for i in range(1000):
                sentence = _random_sentence(rng)
                window = rng.randint(1, 10)
                top_k = rng.randint(1, 6)
                cfg = ContextConfig(window=window, top_k=top_k)
                instance = _adhoc(sentence, i)
                got = extract_features(instance, cfg, embedder)

                # window bound
                assert len(got.preceding) <= window
                assert len(got.following) <= window
                assert len(got.ranked) == len(got.preceding) + len(got.following)
                assert all(r.distance <= window for r in got.ranked)

                # ranking is totally ordered by the documented key
                for a, b in zip(got.ranked, got.ranked[1:]):
                    key_a = (-a.similarity, a.distance, a.side == "post", a.token)
                    key_b = (-b.similarity, b.distance, b.side == "post", b.token)
                    assert key_a <= key_b

                # top-k prefix monotonicity
                assert list(got.top_k_tokens) == [
                    r.token for r in got.ranked[:top_k]
                ]
                wider = extract_features(
                    instance,
                    ContextConfig(window=window, top_k=top_k + 3),
                    embedder,
                )
                assert list(wider.top_k_tokens[:top_k]) == list(got.top_k_tokens)

                # determinism
                again = extract_features(instance, cfg, embedder)
                assert again == got

    def test_prompt_golden_files(self):
        with criterion("prompt_golden_files", 1.0):
            for kind, filename in (
                (PromptKind.ADVANCED_REASONING, "advanced.txt"),
                (PromptKind.VERB_REASONING, "verb.txt"),
                (PromptKind.JUDGE, "judge.txt"),
            ):
                disk = (GOLDEN_DIR / filename).read_bytes()
                assert render_golden(kind).encode("utf-8") + b"\n" == disk, filename

    def test_judge_parsing_exhaustive(self):
        with criterion("judge_parsing_exhaustive", 5.0):
            keys = (
                "contextual_analysis_score",
                "justification_accuracy_score",
                "elimination_completeness_score",
                "coherence_score",
            )
            for combo in itertools.product(range(1, 6), repeat=4):
                payload = json.dumps(dict(zip(keys, combo)))
                plain = parse_judge_json(f"Verdict follows.\n{payload}\n")
                fenced = parse_judge_json(f"```json\n{payload}\n```")
                for parsed in (plain, fenced):
                    assert tuple(parsed.as_dict()[k] for k in keys) == combo
                    assert parsed.min_score() == min(combo)

            for bad in (
                "no json at all",
                '{"contextual_analysis_score": 5}',
                json.dumps(dict(zip(keys, (0, 3, 3, 3)))),
                json.dumps(dict(zip(keys, (6, 3, 3, 3)))),
                json.dumps(dict(zip(keys, (3.5, 3, 3, 3)))),
            ):
                with pytest.raises(errors.JudgeParseError):
                    parse_judge_json(bad)

    def test_stratified_sampling_design(self):
        with criterion("stratified_sampling_design", 1.0):
            pool: list[WsdInstance] = []
            for pos, label, size in (
                (Pos.NOUN, "noun", 600),
                (Pos.VERB, "verb", 450),
                (Pos.ADJECTIVE, "adjective", 450),
                (Pos.ADVERB, "adverb", 120),
            ):
                for i in range(size):
                    pool.append(
                        WsdInstance(
                            instance_id=f"{label}:{i}",
                            sentence=f"case {i} has a <WSD>word</WSD> in it.",
                            lemma="word",
                            pos=pos,
                        )
                    )
            spec = SampleSpec(
                per_pos_counts={"noun": 400, "verb": 300, "adjective": 300, "adverb": 50},
                seed=1234,
            )
            sampled = stratified_sample(pool, spec)
            assert len(sampled) == 1050
            by_pos = {}
            for instance in sampled:
                by_pos[instance.pos] = by_pos.get(instance.pos, 0) + 1
            assert by_pos == {
                Pos.NOUN: 400, Pos.VERB: 300, Pos.ADJECTIVE: 300, Pos.ADVERB: 50,
            }
            ids = [i.instance_id for i in sampled]
            assert len(set(ids)) == len(ids)
            again = stratified_sample(pool, spec)
            assert [i.instance_id for i in again] == ids

    def test_mcnemar_correctness(self):
        with criterion("mcnemar_correctness", 5.0):
            scipy_stats = pytest.importorskip("scipy.stats")

            # exact branch equals full enumeration for every b+c <= 12
            for n in range(0, 13):
                strings = [bits.bit_count() for bits in range(2**n)]
                for b in range(n + 1):
                    c = n - b
                    result = mcnemar(
                        PairedOutcomes(b=b, c=c, n_both_correct=3, n_both_wrong=1)
                    )
                    assert result.method == METHOD_EXACT
                    hits = sum(1 for ones in strings if ones <= min(b, c))
                    expected = min(1.0, 2.0 * hits / 2**n)
                    assert result.p_value == pytest.approx(expected, abs=1e-12), (b, c)

            # chi-squared branch against the documented case and a scipy oracle
            result = mcnemar(
                PairedOutcomes(b=10, c=2, n_both_correct=0, n_both_wrong=0),
                method=METHOD_CHI2,
            )
            assert result.statistic == pytest.approx(4.0833, abs=0.0005)
            assert result.p_value == pytest.approx(0.0433, abs=0.001)
            assert result.p_value == pytest.approx(
                float(scipy_stats.chi2.sf(result.statistic, df=1)), abs=1e-9
            )

    def test_embedding_score_correctness(self):
        with criterion("embedding_score_correctness", 5.0):
            embedder = _embedder(32)
            for text in (
                "the bat was placed carefully",
                "reeds lined the muddy bank",
                "a single word",
            ):
                score = embedding_score(text, text, embedder)
                assert score.f1 == pytest.approx(1.0, abs=1e-9)

            table = TableEmbedder(
                {
                    "cat": (1.0, 0.0),
                    "dog": (0.0, 1.0),
                    "bird": (0.6, 0.8),
                    "fish": (1.0, 0.0),
                }
            )
            score = embedding_score("cat dog", "bird fish", table)
            # precision: cat->fish 1.0, dog->bird 0.8; recall: bird->dog 0.8, fish->cat 1.0
            assert score.precision == pytest.approx(0.9, abs=1e-9)
            assert score.recall == pytest.approx(0.9, abs=1e-9)
            assert score.f1 == pytest.approx(0.9, abs=1e-9)

            swapped = embedding_score("bird fish", "cat dog", table)
            assert swapped.precision == pytest.approx(0.9, abs=1e-9)
            assert swapped.recall == pytest.approx(0.9, abs=1e-9)

    def test_end_to_end_mock_run(self, test_inventory):
        with criterion("end_to_end_mock_run", 10.0):
            corpus = _synthetic_corpus(50)

            def script() -> list:
                lines = []
                for i, instance in enumerate(corpus):
                    if i < 40:
                        lines.append(f"Sense ID: {instance.gold_sense_id}")
                    elif i < 46:
                        lines.append(f"Sense ID: {_other_sense(instance.gold_sense_id)}")
                    else:
                        lines.append("I really cannot decide here.")
                return lines

            reports = []
            for _ in range(2):
                predictions = run_pipeline(
                    corpus, test_inventory, "direct", ScriptedGateway(responses=script())
                )
                assert [p.instance_id for p in predictions] == [
                    i.instance_id for i in corpus
                ]
                report = score_exact(
                    predictions, corpus, dataset="synthetic-50", strategy="direct"
                )
                reports.append(render_report_json(report).encode("utf-8"))
                assert report.parse_failures == 4
                assert report.skipped == 0
                # parse failures are charged as incorrect: 40 of 50 correct
                assert report.overall_f1 == pytest.approx(40 / 50)
            assert reports[0] == reports[1]

    def test_dataset_pipeline_integrity(self, test_inventory, tmp_path):
        with criterion("dataset_pipeline_integrity", 30.0):
            corpus = _synthetic_corpus(1000)
            embedder = _embedder(8)

            # deterministic variants rebuild byte-identically
            for builder, kwargs in (
                (build_direct, {}),
                (build_cot_neighbour, {"cfg": ContextConfig(), "backend": embedder}),
            ):
                paths = []
                for run in range(2):
                    result = builder(corpus, test_inventory, **kwargs)
                    assert not result.errors
                    path = tmp_path / f"{builder.__name__}_{run}.jsonl"
                    export_jsonl(result.examples, path)
                    paths.append(path)
                assert paths[0].read_bytes() == paths[1].read_bytes(), builder.__name__

            # 1K-record reasoning build: rejected records never leak, ids stay known
            responses = []
            for i, instance in enumerate(corpus):
                if i % 7 == 0:
                    responses.append(("cut off mid-thought", FinishReason.LENGTH))
                else:
                    responses.append(
                        "Contextual analysis: clear.\n"
                        f"Sense ID: {instance.gold_sense_id}"
                    )
            built = build_advanced(
                corpus, test_inventory, ScriptedGateway(responses=responses)
            )
            assert len(built.records) == 1000
            rejected = {
                r.example_id
                for r in built.records
                if r.review_status is ReviewStatus.REJECTED
            }
            assert len(rejected) == 143  # ceil(1000 / 7)

            store = ReviewStore(tmp_path / "review")
            store.add_records(built.records)
            out = tmp_path / "reasoning.jsonl"
            export_jsonl(store.records(), out)
            exported = load_export(out)
            assert len(exported) == 1000 - 143
            assert rejected.isdisjoint({e.example_id for e in exported})
            assert check_export_integrity(out, corpus, store) == []

    def test_live_smoke(self):
        if not os.environ.get("EADWSD_LIVE_SMOKE"):
            print("[acceptance] live_smoke: SKIP (non-gating; set EADWSD_LIVE_SMOKE=1, "
                  "EADWSD_LLM_BASE_URL, EADWSD_LLM_MODEL, EADWSD_LIVE_CORPUS, "
                  "EADWSD_LIVE_INVENTORY to enable)")
            pytest.skip("live smoke disabled")
        from eadwsd.corpus import load_instances
        from eadwsd.llm_gateway import LlmGateway

        with criterion("live_smoke", 3600.0):
            inventory = load_sense_inventory(os.environ["EADWSD_LIVE_INVENTORY"])
            instances = list(
                load_instances(os.environ["EADWSD_LIVE_CORPUS"])
            )[:100]
            gateway = LlmGateway(
                base_url=os.environ["EADWSD_LLM_BASE_URL"],
                model=os.environ["EADWSD_LLM_MODEL"],
            )
            predictions = run_pipeline(
                instances,
                inventory,
                "cot_neighbour",
                gateway,
                backend=_embedder(64),
            )
            assert len(predictions) == len(instances)
            transport_failures = sum(
                1 for p in predictions if p.skip_reason == "analysis failed upstream"
            )
            assert transport_failures / len(predictions) < 0.05
            report = score_exact(predictions, instances, dataset="live-smoke")
            parsed = json.loads(render_report_json(report))
            assert set(parsed) >= {"overall_f1", "per_pos", "parse_failures"}
