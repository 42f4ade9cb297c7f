"""Pronunciation index and the phonetic-similarity decision rule.

Sound-alike matching combines Double Metaphone codes with edit distance
over both the codes and ARPABET phoneme sequences. Metaphone equality
alone over-matches badly, so a candidate pair must clear one of four
tighter rules (see :func:`phonetic_similarity`).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

from .distance import levenshtein
from .metaphone import MetaphoneCodes, double_metaphone
from .text import normalize_term

__all__ = [
    "ARPABET",
    "Pronunciation",
    "PhoneticPolicy",
    "PhoneticIndex",
    "SimilarityResult",
    "load_cmu_dict",
    "phonetic_similarity",
    "phonetic_candidates",
]

# The 39-symbol ARPABET alphabet of the CMU Pronouncing Dictionary,
# stress digits stripped.
ARPABET = frozenset(
    {
        "AA", "AE", "AH", "AO", "AW", "AY", "EH", "ER", "EY", "IH",
        "IY", "OW", "OY", "UH", "UW",
        "B", "CH", "D", "DH", "F", "G", "HH", "JH", "K", "L", "M",
        "N", "NG", "P", "R", "S", "SH", "T", "TH", "V", "W", "Y",
        "Z", "ZH",
    }
)


@dataclass(frozen=True)
class Pronunciation:
    """One dictionary entry: a word plus its stress-stripped phoneme sequence."""

    word: str
    phonemes: tuple[str, ...]
    variant: int = 0


@dataclass(frozen=True)
class PhoneticPolicy:
    """Thresholds for the confusable-pair decision rule.

    Defaults are the loosest settings under which the canonical confusable
    pairs (hypertension/hypotension, hypoplasia/hyperplasia,
    atrophy/hypertrophy, chorioretinitis/chorioamnionitis) all match while
    unrelated pairs such as aspirin/hypotension do not.
    """

    code_distance_max: int = 1
    phoneme_ratio_max: float = 0.35
    shared_suffix_min: int = 4
    max_candidates: int = 8

    def __post_init__(self) -> None:
        if self.code_distance_max < 0 or self.shared_suffix_min < 0:
            raise ValueError("thresholds must be non-negative")
        if not 0.0 <= self.phoneme_ratio_max <= 1.0:
            raise ValueError("phoneme_ratio_max must be within [0, 1]")
        if self.max_candidates < 0:
            raise ValueError("max_candidates must be non-negative")


@dataclass(frozen=True)
class SimilarityResult:
    match: bool
    score: float


class PhoneticIndex:
    """Pronunciations and metaphone codes for a fixed vocabulary.

    Immutable after :func:`load_cmu_dict`; safe for concurrent readers.
    """

    def __init__(self) -> None:
        self.by_code: dict[str, set[str]] = {}
        self.by_word: dict[str, list[Pronunciation]] = {}
        self.vocabulary: set[str] = set()
        self.skipped_lines = 0
        self.skipped_phonemes = 0
        self._codes: dict[str, MetaphoneCodes] = {}

    def pronunciations(self, word: str) -> list[Pronunciation]:
        return self.by_word.get(word, [])

    def codes(self, word: str) -> MetaphoneCodes:
        """Metaphone codes, cached for vocabulary words."""

        cached = self._codes.get(word)
        if cached is not None:
            return cached
        return _codes_for(word)

    def _add(self, word: str, phonemes: tuple[str, ...], variant: int) -> None:
        self.by_word.setdefault(word, []).append(
            Pronunciation(word=word, phonemes=phonemes, variant=variant)
        )
        if word not in self.vocabulary:
            self.vocabulary.add(word)
            codes = double_metaphone(word)
            self._codes[word] = codes
            if codes.primary:
                self.by_code.setdefault(codes.primary, set()).add(word)
            if codes.alternate:
                self.by_code.setdefault(codes.alternate, set()).add(word)


@lru_cache(maxsize=16384)
def _codes_for(word: str) -> MetaphoneCodes:
    return double_metaphone(word)


Source = Union[str, Path, IO[bytes], IO[str]]


def _iter_lines(source: Source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "rb") as handle:
            yield from _decode_lines(handle)
        return
    if isinstance(source, io.TextIOBase):
        yield from source
        return
    yield from _decode_lines(source)


def _decode_lines(handle: Iterable[bytes]) -> Iterator[str]:
    for raw in handle:
        try:
            yield raw.decode("utf-8")
        except UnicodeDecodeError:
            yield raw.decode("latin-1")


def load_cmu_dict(source: Source) -> PhoneticIndex:
    """Parse a CMU-format pronouncing dictionary into a :class:`PhoneticIndex`.

    Expected line shape: ``WORD  PHONEME PHONEME ...`` with stress digits on
    vowels and alternates written ``WORD(1)``. Lines starting with ``;;;``
    are comments. Unparseable lines and lines with unknown phoneme symbols
    are skipped and counted, never fatal.
    """

    index = PhoneticIndex()
    for line in _iter_lines(source):
        line = line.strip()
        if not line or line.startswith(";;;"):
            continue
        parts = line.split()
        if len(parts) < 2:
            index.skipped_lines += 1
            continue
        head, raw_phonemes = parts[0], parts[1:]
        variant = 0
        if head.endswith(")") and "(" in head:
            head, _, suffix = head.partition("(")
            suffix = suffix[:-1]
            if not head or not suffix.isdigit():
                index.skipped_lines += 1
                continue
            variant = int(suffix)
        word = head.lower()
        phonemes = tuple(p.rstrip("0123456789") for p in raw_phonemes)
        if any(p not in ARPABET for p in phonemes):
            index.skipped_phonemes += 1
            continue
        index._add(word, phonemes, variant)
    return index


def _suffix_overlap(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    k = 0
    for sym_a, sym_b in zip(reversed(a), reversed(b)):
        if sym_a != sym_b:
            break
        k += 1
    return k


def phonetic_similarity(
    a: str,
    b: str,
    index: PhoneticIndex,
    policy: PhoneticPolicy | None = None,
) -> SimilarityResult:
    """Decide whether two words are confusable by sound, with a score in [0, 1].

    A pair matches when any rule holds:

    1. a metaphone code of one word equals a code of the other;
    2. primary codes are within ``code_distance_max`` edits;
    3. some pronunciation pair is within ``phoneme_ratio_max`` of the longer
       phoneme sequence, by edit distance;
    4. some pronunciation pair shares a phoneme suffix of at least
       ``shared_suffix_min`` while the prefixes differ (catches prefix swaps
       like atrophy/hypertrophy that fail whole-word ratios).

    Rules 3 and 4 need pronunciations for both words; out-of-vocabulary
    words fall back to the code rules alone. The score is 1 minus the
    normalized phoneme distance when pronunciations exist on both sides,
    else 1 minus the normalized code distance. A word never matches itself.
    """

    policy = policy or PhoneticPolicy()
    word_a = normalize_term(a)
    word_b = normalize_term(b)
    if word_a == word_b:
        return SimilarityResult(match=False, score=0.0)

    codes_a = index.codes(word_a)
    codes_b = index.codes(word_b)
    set_a = {c for c in (codes_a.primary, codes_a.alternate) if c}
    set_b = {c for c in (codes_b.primary, codes_b.alternate) if c}

    code_equal = bool(set_a & set_b)
    code_close = False
    code_score = 0.0
    if codes_a.primary and codes_b.primary:
        code_dist = levenshtein(codes_a.primary, codes_b.primary)
        longer = max(len(codes_a.primary), len(codes_b.primary))
        code_close = code_dist <= policy.code_distance_max
        code_score = 1.0 - code_dist / longer

    prons_a = index.pronunciations(word_a)
    prons_b = index.pronunciations(word_b)

    phoneme_close = False
    suffix_hit = False
    best_phoneme_score: float | None = None
    for pa in prons_a:
        for pb in prons_b:
            longer = max(len(pa.phonemes), len(pb.phonemes))
            if longer == 0:
                continue
            dist = levenshtein(pa.phonemes, pb.phonemes)
            ratio = dist / longer
            if ratio <= policy.phoneme_ratio_max:
                phoneme_close = True
            if pa.phonemes != pb.phonemes:
                if _suffix_overlap(pa.phonemes, pb.phonemes) >= policy.shared_suffix_min:
                    suffix_hit = True
            score = 1.0 - ratio
            if best_phoneme_score is None or score > best_phoneme_score:
                best_phoneme_score = score

    match = code_equal or code_close or phoneme_close or suffix_hit
    score = best_phoneme_score if best_phoneme_score is not None else code_score
    return SimilarityResult(match=match, score=max(0.0, min(1.0, score)))


def phonetic_candidates(
    term: str,
    index: PhoneticIndex,
    policy: PhoneticPolicy | None = None,
) -> list[tuple[str, float]]:
    """Confusable vocabulary words for ``term``, best first.

    Ranked by descending score with a lexicographic tie-break, truncated to
    ``policy.max_candidates``. Never contains ``term`` itself.
    """

    policy = policy or PhoneticPolicy()
    matches: list[tuple[str, float]] = []
    for word in index.vocabulary:
        result = phonetic_similarity(term, word, index, policy)
        if result.match:
            matches.append((word, result.score))
    matches.sort(key=lambda pair: (-pair[1], pair[0]))
    return matches[: policy.max_candidates]
