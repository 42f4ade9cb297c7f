"""Shared term normalization used by graph building, spotting, and noise injection."""

from __future__ import annotations

import re

__all__ = ["normalize_term", "tokenize"]

_DISALLOWED = re.compile(r"[^a-z0-9 \-]+")
_SPACES = re.compile(r" {2,}")
_WHITESPACE = re.compile(r"\s+")


def normalize_term(surface: str) -> str:
    """Lowercase, keep only letters/digits/space/hyphen, collapse whitespace.

    Deterministic key for joining term surfaces across casings and light
    punctuation ("Vitamin B-12," and "vitamin b-12" share a key).
    """

    lowered = _WHITESPACE.sub(" ", surface.lower())
    stripped = _DISALLOWED.sub("", lowered)
    return _SPACES.sub(" ", stripped).strip()


def tokenize(text: str) -> list[str]:
    """Whitespace tokens of a transcript, punctuation left attached."""

    return text.split()
