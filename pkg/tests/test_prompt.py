"""Context serialization, dialogue assembly, and the two-line protocol."""

from __future__ import annotations

import string

import pytest
from hypothesis import given, settings, strategies as st

from kgcorrect.evaluate import QAItem
from kgcorrect.prompt import (
    ContextBudget,
    ParseError,
    PHONETIC_HEADER,
    SEMANTIC_HEADER,
    SYSTEM_INSTRUCTION,
    ValidationError,
    assemble_inference_input,
    count_tokens,
    parse_two_line_output,
    parse_with_fallback,
    render_training_sample,
    serialize_context,
)
from kgcorrect.retrieval import KGContext

OPTIONS = {"A": "alpha choice", "B": "beta choice", "C": "gamma choice", "D": "delta choice"}


def make_context(n_semantic=3, n_phonetic=2):
    semantic = tuple(
        (f"term{i}", "due_to", f"cause{i}") for i in range(n_semantic)
    )
    phonetic = tuple((f"word{i}", f"confusable{i}", 0.9) for i in range(n_phonetic))
    return KGContext(semantic_entries=semantic, phonetic_entries=phonetic)


class TestCountTokens:
    def test_empty(self):
        assert count_tokens("") == 0

    def test_two_words(self):
        assert count_tokens("hello world") == 2

    @given(st.text(alphabet=string.ascii_lowercase + " ", max_size=60), st.text(alphabet=string.ascii_lowercase + " ", max_size=60))
    def test_additive_over_space_join(self, a, b):
        assert count_tokens(f"{a} {b}") == count_tokens(a) + count_tokens(b)

    @given(st.text(max_size=80), st.text(max_size=80))
    def test_monotone_under_concatenation(self, a, b):
        assert count_tokens(a + b) >= max(count_tokens(a), count_tokens(b))
        assert count_tokens(a + " " + b) >= max(count_tokens(a), count_tokens(b))


class TestSerializeContext:
    def test_small_context_fully_present(self):
        ctx = make_context()
        text = serialize_context(ctx)
        for src, tag, dst in ctx.semantic_entries:
            assert f"{src} —{tag}→ {dst}" in text
        for a, b, _ in ctx.phonetic_entries:
            assert f"{a} sounds like {b}" in text

    def test_empty_context_keeps_headers(self):
        text = serialize_context(KGContext())
        assert text == f"{SEMANTIC_HEADER}\n{PHONETIC_HEADER}"

    def test_sections_respect_budgets(self):
        ctx = make_context(n_semantic=2000, n_phonetic=1500)
        text = serialize_context(ctx)
        semantic_part, phonetic_part = text.split(PHONETIC_HEADER)
        assert count_tokens(semantic_part) <= 600
        assert count_tokens(PHONETIC_HEADER + phonetic_part) <= 300

    def test_priority_entry_survives_truncation(self):
        fillers = tuple((f"filler{i}", "due_to", f"other{i}") for i in range(1000))
        gold = ("chorioretinitis", "due_to", "toxoplasma")
        ctx = KGContext(semantic_entries=fillers + (gold,))
        text = serialize_context(ctx, priority_terms=["chorioretinitis"])
        assert "chorioretinitis —due_to→ toxoplasma" in text

    def test_lines_kept_whole(self):
        ctx = make_context(n_semantic=500, n_phonetic=0)
        text = serialize_context(ctx)
        for line in text.splitlines():
            if line in (SEMANTIC_HEADER, PHONETIC_HEADER):
                continue
            assert line.count("—") == 1
            assert line.endswith(tuple(f"cause{i}" for i in range(500)))


class TestAssembleInferenceInput:
    def test_message_shape(self):
        messages = assemble_inference_input("noisy transcript", OPTIONS, make_context())
        assert [m.role for m in messages] == ["system", "user"]
        assert messages[0].content == SYSTEM_INSTRUCTION
        for marker in ("A)", "B)", "C)", "D)"):
            assert marker in messages[1].content
        assert "noisy transcript" in messages[1].content

    def test_missing_option_rejected(self):
        options = {"A": "a", "B": "b", "C": "c"}
        with pytest.raises(ValidationError):
            assemble_inference_input("text", options, KGContext())

    def test_deterministic(self):
        first = assemble_inference_input("text here", OPTIONS, make_context())
        second = assemble_inference_input("text here", OPTIONS, make_context())
        assert first == second

    def test_oversized_context_stays_within_sequence_budget(self):
        ctx = make_context(n_semantic=5000, n_phonetic=3000)
        messages = assemble_inference_input("word " * 1500, OPTIONS, ctx)
        total = sum(count_tokens(m.content) for m in messages)
        assert total <= 2048

    def test_transcript_and_options_never_shrunk(self):
        transcript = "tok " * 3000
        messages = assemble_inference_input(transcript, OPTIONS, make_context())
        assert transcript.strip() in messages[1].content


class TestRenderTrainingSample:
    def test_target_is_exact_two_lines(self, make_item):
        item = make_item(gt_text="The exact ground truth", answer="C")
        sample = render_training_sample(item, KGContext())
        assert sample.target.content == "Corrected Text: The exact ground truth\nCorrect Option: C"

    def test_round_trip(self, make_item):
        item = make_item(gt_text="some transcript words", answer="D")
        sample = render_training_sample(item, KGContext())
        parsed = parse_two_line_output(sample.target.content)
        assert parsed.corrected_text == item.gt_text
        assert parsed.option == item.answer

    def test_system_user_match_inference_assembly(self, make_item):
        item = make_item(asr_text="noisy words")
        sample = render_training_sample(item, KGContext())
        system, user = assemble_inference_input("noisy words", item.options, KGContext())
        assert sample.system == system
        assert sample.user == user

    def test_missing_gt_rejected(self, make_item):
        item = make_item(gt_text="  ")
        with pytest.raises(ValidationError):
            render_training_sample(item, KGContext())

    def test_multiline_gt_rejected(self, make_item):
        item = make_item(gt_text="line one\nline two")
        with pytest.raises(ValidationError):
            render_training_sample(item, KGContext())

    def test_chat_dict_shape(self, make_item):
        sample = render_training_sample(make_item(), KGContext())
        payload = sample.to_chat_dict()
        assert [m["role"] for m in payload["messages"]] == ["system", "user", "assistant"]


class TestParseTwoLineOutput:
    def test_plain(self):
        parsed = parse_two_line_output("Corrected Text: foo\nCorrect Option: B")
        assert (parsed.corrected_text, parsed.option) == ("foo", "B")

    def test_tolerant_casing_spacing_parenthesis(self):
        parsed = parse_two_line_output("corrected text:  foo \ncorrect option: (b)")
        assert (parsed.corrected_text, parsed.option) == ("foo", "B")

    def test_trailing_lines_ignored(self):
        raw = "Corrected Text: foo\nCorrect Option: A\nThanks for asking!"
        assert parse_two_line_output(raw).option == "A"

    def test_both_labels_on_one_line(self):
        parsed = parse_two_line_output("Corrected Text: foo Correct Option: C")
        assert (parsed.corrected_text, parsed.option) == ("foo", "C")

    def test_missing_labels_raise(self):
        with pytest.raises(ParseError) as excinfo:
            parse_two_line_output("The answer is B")
        assert excinfo.value.raw == "The answer is B"

    def test_missing_letter_raises(self):
        with pytest.raises(ParseError):
            parse_two_line_output("Corrected Text: foo\nCorrect Option: none")

    def test_fallback_uses_input_transcript(self):
        parsed, fell_back = parse_with_fallback("garbage", "original asr")
        assert fell_back
        assert (parsed.corrected_text, parsed.option) == ("original asr", "A")

    def test_fallback_not_taken_on_valid_output(self):
        parsed, fell_back = parse_with_fallback("Corrected Text: x\nCorrect Option: D", "asr")
        assert not fell_back
        assert parsed.option == "D"


class TestContextBudget:
    def test_defaults(self):
        budget = ContextBudget()
        assert (budget.semantic_tokens, budget.phonetic_tokens) == (600, 300)
        assert budget.max_sequence_tokens == 2048

    def test_sum_capped_at_900(self):
        with pytest.raises(ValueError):
            ContextBudget(semantic_tokens=700, phonetic_tokens=300)

    def test_positive_required(self):
        with pytest.raises(ValueError):
            ContextBudget(semantic_tokens=0)


single_line_text = st.text(
    alphabet=string.ascii_letters + string.digits + " .,'-",
    min_size=1,
    max_size=80,
).map(str.strip).filter(bool)


@settings(max_examples=120, deadline=None)
@given(gt=single_line_text, answer=st.sampled_from("ABCD"))
def test_round_trip_property(gt, answer):
    item = QAItem(
        id="x",
        task="t",
        gt_text=gt,
        options=dict.fromkeys("ABCD", "option text"),
        answer=answer,
    )
    sample = render_training_sample(item, KGContext())
    parsed = parse_two_line_output(sample.target.content)
    assert parsed.corrected_text == gt
    assert parsed.option == answer
