"""Dialogue assembly: budgeted KG context, training targets, two-line output parsing.

The model contract is a strict two-line completion:

    Corrected Text: <transcript>
    Correct Option: <A|B|C|D>

Training export and inference both render the same system/user pair; the
context sections are truncated to fixed token budgets so retrieved
entries can never push the important ones (or the gold labels) out of the
window.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, TYPE_CHECKING

from .text import normalize_term

if TYPE_CHECKING:
    from .evaluate import QAItem
    from .retrieval import KGContext

__all__ = [
    "ChatMessage",
    "ContextBudget",
    "DialogueSample",
    "ParsedOutput",
    "ParseError",
    "ValidationError",
    "OPTION_LETTERS",
    "SYSTEM_INSTRUCTION",
    "SEMANTIC_HEADER",
    "PHONETIC_HEADER",
    "count_tokens",
    "serialize_context",
    "assemble_inference_input",
    "render_training_sample",
    "parse_two_line_output",
    "parse_with_fallback",
]

OPTION_LETTERS = ("A", "B", "C", "D")

# Whitespace token counts underestimate subword counts; budget comparisons
# scale by this factor so real-tokenizer limits still hold.
TOKEN_MULTIPLIER = 1.3

SEMANTIC_HEADER = "Semantic relations:"
PHONETIC_HEADER = "Phonetic confusions:"

SYSTEM_INSTRUCTION = (
    "You are a medical transcription and question answering assistant. "
    "You receive a possibly misrecognized speech transcript of a multiple-choice "
    "medical question, the four answer options, and knowledge graph context "
    "listing semantic relations and phonetically confusable terms.\n"
    "Rules:\n"
    "1. Correct any speech recognition errors in the transcript, using the "
    "phonetic confusions and semantic relations as evidence.\n"
    "2. Choose the single best answer option.\n"
    "3. Reply with exactly two lines and nothing else:\n"
    "Corrected Text: <the corrected transcript>\n"
    "Correct Option: <A|B|C|D>"
)


class ValidationError(ValueError):
    """Raised when an input violates the dialogue contract."""


class ParseError(ValueError):
    """Raised when model output lacks the two labeled lines; carries the raw text."""

    def __init__(self, message: str, raw: str) -> None:
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str


@dataclass(frozen=True)
class ContextBudget:
    """Token budgets: 600 semantic + 300 phonetic inside a 2048-token sequence."""

    semantic_tokens: int = 600
    phonetic_tokens: int = 300
    max_sequence_tokens: int = 2048

    def __post_init__(self) -> None:
        if min(self.semantic_tokens, self.phonetic_tokens, self.max_sequence_tokens) <= 0:
            raise ValueError("budgets must be positive")
        if self.semantic_tokens + self.phonetic_tokens > 900:
            raise ValueError("semantic plus phonetic budget must stay within 900 tokens")


@dataclass(frozen=True)
class DialogueSample:
    """System/user pair plus the training target (absent at inference)."""

    system: ChatMessage
    user: ChatMessage
    target: ChatMessage | None = None

    def to_chat_dict(self) -> dict:
        messages = [
            {"role": self.system.role, "content": self.system.content},
            {"role": self.user.role, "content": self.user.content},
        ]
        if self.target is not None:
            messages.append({"role": self.target.role, "content": self.target.content})
        return {"messages": messages}


@dataclass(frozen=True)
class ParsedOutput:
    corrected_text: str
    option: str


TokenCounter = Callable[[str], int]


def count_tokens(text: str) -> int:
    """Whitespace-delimited token count; the default pluggable counter."""

    return len(text.split())


def _pack_section(
    header: str,
    lines: Sequence[str],
    limit: int,
    priority_terms: Sequence[str],
    count: TokenCounter,
    multiplier: float,
) -> str:
    """Keep whole lines under the budget, priority-bearing lines first."""

    def cost(text: str) -> int:
        return math.ceil(count(text) * multiplier)

    normalized_terms = [normalize_term(t) for t in priority_terms]
    normalized_terms = [t for t in normalized_terms if t]

    def has_priority(line: str) -> bool:
        if not normalized_terms:
            return False
        joined = f" {' '.join(normalize_term(line).split())} "
        return any(f" {term} " in joined for term in normalized_terms)

    flags = [has_priority(line) for line in lines]
    ordered = [line for line, hit in zip(lines, flags) if hit]
    ordered += [line for line, hit in zip(lines, flags) if not hit]

    used = cost(header)
    kept: list[str] = []
    for line in ordered:
        line_cost = cost(line)
        if used + line_cost > limit:
            continue
        kept.append(line)
        used += line_cost
    return "\n".join([header, *kept])


def serialize_context(
    ctx: "KGContext",
    budget: ContextBudget | None = None,
    priority_terms: Sequence[str] = (),
    count: TokenCounter = count_tokens,
    multiplier: float = TOKEN_MULTIPLIER,
    semantic_limit: int | None = None,
    phonetic_limit: int | None = None,
) -> str:
    """Render the two labeled context sections within their token budgets.

    Entries render one per line; entries containing a priority term are
    packed first so they survive truncation. Lines are kept whole. The
    explicit ``*_limit`` overrides exist for sequence-level shrinking.
    """

    budget = budget or ContextBudget()
    semantic_lines = [f"{src} —{tag}→ {dst}" for src, tag, dst in ctx.semantic_entries]
    phonetic_lines = [f"{a} sounds like {b}" for a, b, _score in ctx.phonetic_entries]
    semantic = _pack_section(
        SEMANTIC_HEADER,
        semantic_lines,
        semantic_limit if semantic_limit is not None else budget.semantic_tokens,
        priority_terms,
        count,
        multiplier,
    )
    phonetic = _pack_section(
        PHONETIC_HEADER,
        phonetic_lines,
        phonetic_limit if phonetic_limit is not None else budget.phonetic_tokens,
        priority_terms,
        count,
        multiplier,
    )
    return f"{semantic}\n{phonetic}"


def _priority_terms_from_options(options: Mapping[str, str]) -> list[str]:
    terms: list[str] = []
    seen: set[str] = set()
    for letter in OPTION_LETTERS:
        for token in normalize_term(options[letter]).split():
            if len(token) >= 3 and token not in seen:
                seen.add(token)
                terms.append(token)
    return terms


def _validate_options(options: Mapping[str, str]) -> None:
    missing = [letter for letter in OPTION_LETTERS if letter not in options]
    if missing:
        raise ValidationError(f"missing answer option(s): {', '.join(missing)}")


def assemble_inference_input(
    asr_text: str,
    options: Mapping[str, str],
    ctx: "KGContext",
    budget: ContextBudget | None = None,
    count: TokenCounter = count_tokens,
    multiplier: float = TOKEN_MULTIPLIER,
) -> list[ChatMessage]:
    """Build the [system, user] message pair for one question.

    The user message holds, in order, the ASR transcript, the options, and
    the serialized KG context. If the whole input would exceed the maximum
    sequence budget, the KG sections are shrunk first; the transcript and
    options are never touched.
    """

    budget = budget or ContextBudget()
    _validate_options(options)
    priority = _priority_terms_from_options(options)

    option_block = "\n".join(f"{letter}) {options[letter]}" for letter in OPTION_LETTERS)
    fixed_part = f"ASR Transcript: {asr_text}\nOptions:\n{option_block}\nKnowledge graph context:\n"

    context_text = serialize_context(ctx, budget, priority, count, multiplier)
    fixed_cost = count(SYSTEM_INSTRUCTION) + count(fixed_part)
    if fixed_cost + count(context_text) > budget.max_sequence_tokens:
        room = max(0, budget.max_sequence_tokens - fixed_cost)
        total = budget.semantic_tokens + budget.phonetic_tokens
        semantic_limit = min(budget.semantic_tokens, room * budget.semantic_tokens // total)
        phonetic_limit = min(budget.phonetic_tokens, room * budget.phonetic_tokens // total)
        context_text = serialize_context(
            ctx,
            budget,
            priority,
            count,
            multiplier,
            semantic_limit=semantic_limit,
            phonetic_limit=phonetic_limit,
        )
        if fixed_cost + count(context_text) > budget.max_sequence_tokens:
            context_text = f"{SEMANTIC_HEADER}\n{PHONETIC_HEADER}"

    return [
        ChatMessage("system", SYSTEM_INSTRUCTION),
        ChatMessage("user", fixed_part + context_text),
    ]


def render_training_sample(
    item: "QAItem",
    ctx: "KGContext",
    budget: ContextBudget | None = None,
) -> DialogueSample:
    """Render one supervised sample; the target is the exact two-line completion."""

    if not item.gt_text or not item.gt_text.strip():
        raise ValidationError(f"item {item.id}: ground-truth text is required")
    if "\n" in item.gt_text:
        raise ValidationError(f"item {item.id}: ground-truth text must be a single line")
    if item.answer not in OPTION_LETTERS:
        raise ValidationError(f"item {item.id}: answer must be one of A-D")
    asr_text = item.asr_text if item.asr_text is not None else item.gt_text
    system, user = assemble_inference_input(asr_text, item.options, ctx, budget)
    target = ChatMessage(
        "assistant",
        f"Corrected Text: {item.gt_text}\nCorrect Option: {item.answer}",
    )
    return DialogueSample(system=system, user=user, target=target)


_CORRECTED_RE = re.compile(r"corrected\s+text\s*:", re.IGNORECASE)
_OPTION_RE = re.compile(r"correct\s+option\s*:", re.IGNORECASE)


def parse_two_line_output(raw: str) -> ParsedOutput:
    """Tolerant parse of the two-line completion.

    Label matching is case-insensitive, surrounding whitespace is ignored,
    the option letter is the first A-D character after the option label,
    and extra trailing lines are ignored. Missing either labeled part
    raises :class:`ParseError` with the raw text attached.
    """

    text_match = _CORRECTED_RE.search(raw)
    option_match = _OPTION_RE.search(raw)
    if text_match is None or option_match is None:
        raise ParseError("output does not contain the two labeled lines", raw=raw)

    text_end = raw.find("\n", text_match.end())
    if text_end == -1:
        text_end = len(raw)
    if text_match.end() <= option_match.start() < text_end:
        text_end = option_match.start()
    corrected = raw[text_match.end() : text_end].strip()

    option = None
    for ch in raw[option_match.end() :]:
        if ch.upper() in OPTION_LETTERS:
            option = ch.upper()
            break
    if option is None:
        raise ParseError("no option letter after the option label", raw=raw)
    return ParsedOutput(corrected_text=corrected, option=option)


def parse_with_fallback(raw: str, asr_text: str) -> tuple[ParsedOutput, bool]:
    """Parse model output, falling back to (input transcript, option A).

    Returns the parsed output and whether the fallback fired; evaluation
    must stay total even on protocol violations.
    """

    try:
        return parse_two_line_output(raw), False
    except ParseError:
        return ParsedOutput(corrected_text=asr_text, option="A"), True
