"""Dataset ingestion, WER and QA accuracy metrics, noise simulation, benchmarking.

WER is the punctuation-insensitive word error rate (S + D + I) / N * 100
over a minimal-cost word-level alignment of the normalized reference and
hypothesis. Reports hold one row per task plus an unweighted macro
average, mirroring the usual benchmark table layout.
"""

from __future__ import annotations

import csv
import io
import json
import random
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import IO, Mapping, Sequence, Union

from .distance import levenshtein
from .graph import KnowledgeGraph
from .llm import Backend, CompletionRequest, complete_batch
from .phonetics import PhoneticIndex, PhoneticPolicy
from .prompt import (
    ContextBudget,
    OPTION_LETTERS,
    assemble_inference_input,
    parse_with_fallback,
)
from .retrieval import build_context, spot_terms
from .text import tokenize

__all__ = [
    "QAItem",
    "DatasetError",
    "EvalError",
    "NoiseSpec",
    "NoiseEvent",
    "TaskRow",
    "EvalReport",
    "ItemTrace",
    "BenchmarkResult",
    "qa_item_from_dict",
    "load_dataset",
    "normalize_for_wer",
    "wer",
    "qa_accuracy",
    "simulate_asr_noise",
    "run_benchmark",
]


class DatasetError(ValueError):
    """Raised for unusable dataset files or records."""


class EvalError(ValueError):
    """Raised for undefined metric inputs."""


@dataclass
class QAItem:
    """One spoken-question record."""

    id: str
    task: str
    gt_text: str
    options: dict[str, str]
    answer: str
    asr_text: str | None = None


def qa_item_from_dict(payload: Mapping) -> QAItem:
    try:
        item_id = str(payload["id"]).strip()
        task = str(payload["task"]).strip()
        gt_text = str(payload["gt_text"]).strip()
        options_raw = payload["options"]
        answer = str(payload["answer"]).strip().upper()
    except (KeyError, TypeError) as exc:
        raise DatasetError(f"missing field: {exc}") from exc
    if not item_id or not gt_text:
        raise DatasetError("id and gt_text must be non-empty")
    if not isinstance(options_raw, Mapping) or set(options_raw) != set(OPTION_LETTERS):
        raise DatasetError("options must map exactly the keys A-D")
    if answer not in OPTION_LETTERS:
        raise DatasetError(f"answer must be one of A-D, got {answer!r}")
    asr_text = payload.get("asr_text")
    if asr_text is not None:
        asr_text = str(asr_text).strip()
    return QAItem(
        id=item_id,
        task=task,
        gt_text=gt_text,
        options={k: str(options_raw[k]).strip() for k in OPTION_LETTERS},
        answer=answer,
        asr_text=asr_text,
    )


Source = Union[str, Path, IO[str], IO[bytes]]


def _read_lines(source: Source) -> list[str]:
    if isinstance(source, (str, Path)):
        return Path(source).read_text(encoding="utf-8").splitlines()
    data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    return data.splitlines()


def load_dataset(
    source: Source, max_invalid_fraction: float = 0.10
) -> tuple[list[QAItem], int]:
    """Read a QAItem-per-line JSONL file, skipping and counting bad lines.

    Raises :class:`DatasetError` when more than ``max_invalid_fraction`` of
    the non-empty lines are unusable.
    """

    items: list[QAItem] = []
    skipped = 0
    total = 0
    for line in _read_lines(source):
        if not line.strip():
            continue
        total += 1
        try:
            items.append(qa_item_from_dict(json.loads(line)))
        except (json.JSONDecodeError, DatasetError):
            skipped += 1
    if total and skipped / total > max_invalid_fraction:
        raise DatasetError(f"{skipped} of {total} dataset lines are invalid")
    return items, skipped


def normalize_for_wer(text: str) -> list[str]:
    """Lowercase, strip every punctuation character, split on whitespace.

    Punctuation is removed without inserting spaces, so hyphenated
    fragments merge ("B-12" becomes "b12").
    """

    cleaned = "".join(
        ch for ch in text.lower() if ch.isalnum() or ch.isspace()
    )
    return cleaned.split()


def wer(reference: str, hypothesis: str) -> float:
    """Word error rate in percent; may exceed 100 for long hypotheses."""

    ref_words = normalize_for_wer(reference)
    if not ref_words:
        raise EvalError("reference normalizes to zero words; WER is undefined")
    hyp_words = normalize_for_wer(hypothesis)
    return levenshtein(ref_words, hyp_words) / len(ref_words) * 100.0


def qa_accuracy(predictions: Sequence[str], golds: Sequence[str]) -> float:
    """Percentage of matching answer letters."""

    if len(predictions) != len(golds):
        raise EvalError("predictions and golds must have equal lengths")
    if not golds:
        raise EvalError("cannot score an empty prediction list")
    matches = sum(1 for p, g in zip(predictions, golds) if p == g)
    return matches / len(golds) * 100.0


@dataclass(frozen=True)
class NoiseSpec:
    """Seeded phonetic corruption: each eligible mention swaps with this rate."""

    substitution_rate: float = 0.5
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.substitution_rate <= 1.0:
            raise ValueError("substitution_rate must be within [0, 1]")


@dataclass(frozen=True)
class NoiseEvent:
    position: int
    original: str
    injected: str


def simulate_asr_noise(
    gt_text: str,
    graph: KnowledgeGraph,
    spec: NoiseSpec,
) -> tuple[str, list[NoiseEvent]]:
    """Corrupt a transcript by swapping spotted terms for phonetic neighbors.

    Each spotted mention with at least one phonetic-edge neighbor is
    replaced, with probability ``substitution_rate`` under the seeded
    generator, by a uniformly chosen neighbor surface. Deterministic per
    (text, spec); with no swaps the input string is returned unchanged.
    """

    tokens = tokenize(gt_text)
    mentions = spot_terms(gt_text, graph)
    # seeding with a string hashes it via sha512, so the stream is stable
    # across processes and decorrelated between transcripts
    rng = random.Random(f"{spec.seed}\x1f{gt_text}")
    log: list[NoiseEvent] = []

    pieces: list[str] = []
    cursor = 0
    for mention in mentions:
        neighbor_ids = graph.phonetic_neighbors(mention.node_id)
        if not neighbor_ids:
            continue
        if spec.substitution_rate <= 0.0 or rng.random() >= spec.substitution_rate:
            continue
        injected = graph.node(rng.choice(neighbor_ids)).surface
        pieces.extend(tokens[cursor : mention.start_token])
        pieces.append(injected)
        cursor = mention.end_token
        log.append(
            NoiseEvent(
                position=mention.start_token,
                original=mention.matched_surface,
                injected=injected,
            )
        )
    if not log:
        return gt_text, []
    pieces.extend(tokens[cursor:])
    return " ".join(pieces), log


def _round2(value: float) -> float:
    return float(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class TaskRow:
    task: str
    n_items: int
    qa_accuracy_percent: float
    wer_percent: float


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[TaskRow, ...]
    average: TaskRow

    def all_rows(self) -> list[TaskRow]:
        return [*self.rows, self.average]

    def to_text(self) -> str:
        header = ("Task", "N", "Accuracy(%)", "WER(%)")
        body = [
            (
                row.task,
                str(row.n_items),
                f"{_round2(row.qa_accuracy_percent):.2f}",
                f"{_round2(row.wer_percent):.2f}",
            )
            for row in self.all_rows()
        ]
        widths = [
            max(len(header[col]), *(len(line[col]) for line in body))
            for col in range(4)
        ]
        lines = [
            "  ".join(header[col].ljust(widths[col]) for col in range(4)).rstrip()
        ]
        lines.append("  ".join("-" * widths[col] for col in range(4)))
        for line in body:
            lines.append("  ".join(line[col].ljust(widths[col]) for col in range(4)).rstrip())
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["task", "n", "accuracy", "wer"])
        for row in self.all_rows():
            writer.writerow(
                [
                    row.task,
                    row.n_items,
                    f"{_round2(row.qa_accuracy_percent):.2f}",
                    f"{_round2(row.wer_percent):.2f}",
                ]
            )
        return buffer.getvalue()


@dataclass(frozen=True)
class ItemTrace:
    id: str
    task: str
    option: str
    corrected_text: str
    wer: float
    correct: bool
    fallback: bool
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "task": self.task,
            "option": self.option,
            "corrected_text": self.corrected_text,
            "wer": _round2(self.wer),
            "correct": self.correct,
            "fallback": self.fallback,
            "error": self.error,
        }


@dataclass(frozen=True)
class BenchmarkResult:
    report: EvalReport
    traces: tuple[ItemTrace, ...]
    backend_errors: int


def run_benchmark(
    items: Sequence[QAItem],
    graph: KnowledgeGraph,
    backend: Backend,
    budget: ContextBudget | None = None,
    hops: int = 1,
    index: PhoneticIndex | None = None,
    policy: PhoneticPolicy | None = None,
    max_in_flight: int = 4,
    max_output_tokens: int = 512,
) -> BenchmarkResult:
    """Score a dataset end to end against a backend.

    Per item: retrieve context, assemble the dialogue, complete, parse with
    the documented fallback, and score. Backend failures are scored as
    fallback outputs and counted; a report is always produced. Aggregation
    uses sums and counts only, so concurrent completion order cannot change
    the result.
    """

    budget = budget or ContextBudget()
    missing = [item.id for item in items if item.asr_text is None]
    if missing:
        raise DatasetError(
            f"items without asr_text (supply or simulate noise first): {missing[:5]}"
        )

    requests = []
    for item in items:
        ctx = build_context(graph, item.asr_text, item.options, hops, index, policy)
        messages = assemble_inference_input(item.asr_text, item.options, ctx, budget)
        requests.append(
            CompletionRequest(
                messages=tuple(messages),
                max_output_tokens=max_output_tokens,
                metadata={"item_id": item.id},
            )
        )
    outcomes = complete_batch(backend, requests, max_in_flight)

    traces: list[ItemTrace] = []
    per_task: dict[str, dict[str, float]] = {}
    backend_errors = 0
    for item, outcome in zip(items, outcomes):
        if outcome.ok:
            parsed, fallback = parse_with_fallback(outcome.text, item.asr_text)
        else:
            backend_errors += 1
            parsed, fallback = parse_with_fallback("", item.asr_text)
        ref_words = normalize_for_wer(item.gt_text)
        if not ref_words:
            raise EvalError(f"item {item.id}: ground truth normalizes to zero words")
        edits = levenshtein(ref_words, normalize_for_wer(parsed.corrected_text))
        item_wer = edits / len(ref_words) * 100.0
        correct = parsed.option == item.answer
        traces.append(
            ItemTrace(
                id=item.id,
                task=item.task,
                option=parsed.option,
                corrected_text=parsed.corrected_text,
                wer=item_wer,
                correct=correct,
                fallback=fallback,
                error=outcome.error,
            )
        )
        bucket = per_task.setdefault(
            item.task, {"n": 0, "correct": 0, "edits": 0, "ref_words": 0}
        )
        bucket["n"] += 1
        bucket["correct"] += int(correct)
        bucket["edits"] += edits
        bucket["ref_words"] += len(ref_words)

    rows = []
    for task in dict.fromkeys(item.task for item in items):
        bucket = per_task[task]
        rows.append(
            TaskRow(
                task=task,
                n_items=int(bucket["n"]),
                qa_accuracy_percent=bucket["correct"] / bucket["n"] * 100.0,
                wer_percent=bucket["edits"] / bucket["ref_words"] * 100.0,
            )
        )
    if not rows:
        raise EvalError("cannot benchmark an empty dataset")
    average = TaskRow(
        task="Avg.",
        n_items=sum(row.n_items for row in rows),
        qa_accuracy_percent=sum(r.qa_accuracy_percent for r in rows) / len(rows),
        wer_percent=sum(r.wer_percent for r in rows) / len(rows),
    )
    return BenchmarkResult(
        report=EvalReport(rows=tuple(rows), average=average),
        traces=tuple(traces),
        backend_errors=backend_errors,
    )
