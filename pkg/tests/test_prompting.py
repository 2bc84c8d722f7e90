from pathlib import Path

import pytest

from eadwsd import errors
from eadwsd.context import ContextConfig, extract_features
from eadwsd.corpus import Pos, SenseEntry, WsdInstance
from eadwsd.embedding import ConfigEmbedder, EmbeddingBackendConfig
from eadwsd.prompting import (
    DEFAULT_PARAMS,
    NO_EXAMPLES_LINE,
    NO_NEIGHBOURS_LINE,
    ChatMessage,
    ChatRequest,
    GenerationParams,
    PromptKind,
    Role,
    examples_kb,
    format_candidates,
    format_neighbours,
    load_template,
    render_advanced,
    render_advanced_inference,
    render_cot_neighbour,
    render_direct,
    render_fewshot_block,
    render_golden,
    render_judge,
    render_slots,
    render_verb,
    render_verb_inference,
)

GOLDEN_DIR = Path(__file__).resolve().parents[1] / "prompts" / "golden"

EMB = ConfigEmbedder(EmbeddingBackendConfig(kind="deterministic_offline", dim=16))

NOUN = WsdInstance(
    instance_id="t:0",
    sentence="She sat on the <WSD>bank</WSD> of the river.",
    lemma="bank",
    pos=Pos.NOUN,
)
VERB = WsdInstance(
    instance_id="t:1",
    sentence="They <WSD>run</WSD> the bakery together.",
    lemma="run",
    pos=Pos.VERB,
)
CANDS = (
    SenseEntry(sense_id="bank.noun.1", lemma="bank", pos=Pos.NOUN, gloss="river edge"),
    SenseEntry(sense_id="bank.noun.2", lemma="bank", pos=Pos.NOUN, gloss="money house"),
)
VERB_CANDS = (
    SenseEntry(sense_id="run.verb.1", lemma="run", pos=Pos.VERB, gloss="move fast"),
    SenseEntry(sense_id="run.verb.2", lemma="run", pos=Pos.VERB, gloss="operate"),
)


class TestMessages:
    def test_roles_and_structure(self):
        req = render_direct(NOUN)
        assert [m.role for m in req.messages] == [Role.SYSTEM, Role.USER]
        assert req.system_text == load_template("direct_system")
        assert "bank" in req.user_text
        assert req.params is DEFAULT_PARAMS

    def test_message_validation(self):
        with pytest.raises(errors.PromptError):
            ChatMessage(Role.USER, "")
        with pytest.raises(errors.PromptError):
            ChatMessage("narrator", "hi")
        assert ChatMessage("user", "hi").role is Role.USER

    def test_request_validation(self):
        with pytest.raises(errors.PromptError):
            ChatRequest(messages=())
        with pytest.raises(errors.PromptError):
            ChatRequest(messages=(ChatMessage(Role.USER, "no system first"),))
        with pytest.raises(errors.PromptError):
            ChatRequest(messages=(ChatMessage(Role.SYSTEM, "system only"),))

    def test_params_validation(self):
        with pytest.raises(errors.PromptError):
            GenerationParams(temperature=-0.1)
        with pytest.raises(errors.PromptError):
            GenerationParams(max_tokens=0)
        assert GenerationParams().temperature == 0.0


class TestTemplates:
    def test_unknown_template(self):
        with pytest.raises(errors.PromptError, match="unknown prompt template"):
            load_template("missing_template")

    def test_trailing_newline_stripped_once(self):
        text = load_template("direct_system")
        assert not text.endswith("\n")
        assert text  # non-empty

    def test_render_slots_single_pass(self):
        out = render_slots("{a} and {b}", {"a": "{b}", "b": "two"})
        assert out == "{b} and two"  # inserted text is never rescanned

    def test_render_slots_unknown_slot_stays_literal(self):
        assert render_slots("keep {unknown} here", {}) == "keep {unknown} here"
        assert render_slots("{UPPER} {ok}", {"ok": "x"}) == "{UPPER} x"

    def test_format_candidates(self):
        assert format_candidates(CANDS) == (
            "- bank.noun.1: river edge\n- bank.noun.2: money house"
        )

    def test_format_neighbours(self):
        assert format_neighbours(["match", "player"]) == "1. match\n2. player"
        assert format_neighbours([]) == NO_NEIGHBOURS_LINE


class TestGolden:
    @pytest.mark.parametrize(
        ("kind", "fname"),
        [
            (PromptKind.ADVANCED_REASONING, "advanced.txt"),
            (PromptKind.VERB_REASONING, "verb.txt"),
            (PromptKind.JUDGE, "judge.txt"),
        ],
    )
    def test_byte_identity(self, kind, fname):
        disk = (GOLDEN_DIR / fname).read_text(encoding="utf-8")
        assert disk == render_golden(kind) + "\n"

    def test_kind_accepts_strings(self):
        assert render_golden("judge") == render_golden(PromptKind.JUDGE)

    def test_unknown_or_uncovered_kind(self):
        with pytest.raises(errors.PromptError, match="unknown prompt kind"):
            render_golden("mystery")
        with pytest.raises(errors.PromptError, match="no golden copy"):
            render_golden(PromptKind.DIRECT)


class TestRenderers:
    def test_direct_with_and_without_candidates(self):
        bare = render_direct(NOUN)
        assert NOUN.sentence in bare.user_text
        assert "bank.noun.1" not in bare.user_text
        listed = render_direct(NOUN, candidates=CANDS)
        assert "Possible sense IDs and definitions:" in listed.user_text
        assert "- bank.noun.2: money house" in listed.user_text

    def test_direct_rejects_blank_sentence(self):
        blank = WsdInstance(
            instance_id="t:9", sentence="<WSD>  </WSD>", lemma="b", pos=Pos.NOUN
        )
        with pytest.raises(errors.PromptError, match="empty"):
            render_direct(blank)

    def test_cot_neighbour_contents(self):
        feats = extract_features(NOUN, ContextConfig(), EMB)
        req = render_cot_neighbour(NOUN, feats, CANDS)
        assert format_candidates(CANDS) in req.user_text
        assert format_neighbours(feats.top_k_tokens) in req.user_text
        assert "Sense ID:" in req.system_text + req.user_text

    def test_cot_neighbour_requires_candidates(self):
        feats = extract_features(NOUN, ContextConfig(), EMB)
        with pytest.raises(errors.PromptError):
            render_cot_neighbour(NOUN, feats, ())

    def test_cot_fewshot_appended(self):
        feats = extract_features(NOUN, ContextConfig(), EMB)
        block = render_fewshot_block(CANDS, {"bank.noun.1": ("The boat hit the bank.",)})
        req = render_cot_neighbour(NOUN, feats, CANDS, fewshot_block=block)
        assert req.user_text.endswith("\n\n" + block)

    def test_advanced_reveals_gold_and_checks_membership(self):
        req = render_advanced(NOUN, CANDS, gold="bank.noun.1")
        assert "bank.noun.1" in req.user_text
        with pytest.raises(errors.PromptError, match="not among the candidates"):
            render_advanced(NOUN, CANDS, gold="bank.noun.9")

    def test_advanced_inference_is_gold_free(self):
        train = render_advanced(NOUN, CANDS, gold="bank.noun.1")
        infer = render_advanced_inference(NOUN, CANDS)
        assert infer.user_text != train.user_text
        assert "bank.noun.1: river edge" in infer.user_text  # candidates listed
        with pytest.raises(errors.PromptError):
            render_advanced_inference(NOUN, ())

    def test_verb_prompts_reject_non_verbs(self):
        with pytest.raises(errors.PromptError, match="pos='noun'"):
            render_verb(NOUN, VERB_CANDS, gold="run.verb.1")
        with pytest.raises(errors.PromptError, match="pos='noun'"):
            render_verb_inference(NOUN, VERB_CANDS)

    def test_verb_shares_rationale_scaffold(self):
        verb_req = render_verb(VERB, VERB_CANDS, gold="run.verb.2")
        advanced_req = render_advanced(VERB, VERB_CANDS, gold="run.verb.2")
        assert verb_req.user_text == advanced_req.user_text
        assert verb_req.system_text != advanced_req.system_text
        for section in (
            "Syntactic Evidence",
            "Semantic Evidence",
            "Decision",
            "Elimination of Alternatives",
        ):
            assert section in verb_req.system_text

    def test_judge_fills_slots_and_validates(self):
        req = render_judge("the task text", "run.verb.1", "because reasons")
        assert "the task text" in req.user_text
        assert "run.verb.1" in req.user_text
        assert "because reasons" in req.user_text
        for bad in (("", "s", "r"), ("i", " ", "r"), ("i", "s", "")):
            with pytest.raises(errors.PromptError, match="non-empty"):
                render_judge(*bad)

    def test_judge_mentions_all_four_score_keys(self):
        req = render_judge("i", "s", "r")
        text = req.system_text + req.user_text
        for key in (
            "contextual_analysis_score",
            "justification_accuracy_score",
            "elimination_completeness_score",
            "coherence_score",
        ):
            assert key in text


class TestFewshot:
    def test_block_caps_at_two_examples(self):
        kb = {"bank.noun.1": ("one", "two", "three"), "bank.noun.2": ()}
        block = render_fewshot_block(CANDS, kb)
        lines = block.splitlines()
        assert lines[0] == "Examples of each sense in use:"
        assert lines[1] == "- bank.noun.1: river edge"
        assert lines[2:4] == ["  Example: one", "  Example: two"]
        assert "three" not in block
        assert f"  {NO_EXAMPLES_LINE}" in lines

    def test_examples_kb_from_inventory(self, inventory):
        kb = examples_kb(inventory)
        assert kb["bank.noun.1"] == ("The boat drifted to the bank.",)
        assert kb["cold.adj.2"] == ()
