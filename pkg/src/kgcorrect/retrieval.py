"""Term spotting over noisy transcripts and KG context retrieval.

Spotting is greedy longest-match over normalized token n-grams, so a
misrecognized word that exists in the graph as a confusable node is
spotted too; its phonetic neighbors then surface the plausible intended
term to the downstream model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

from .graph import PHONETIC_TAG, KnowledgeGraph, RelationEdge
from .phonetics import PhoneticIndex, PhoneticPolicy, phonetic_similarity
from .text import normalize_term, tokenize

__all__ = [
    "TermMention",
    "KGContext",
    "MAX_NGRAM",
    "spot_terms",
    "retrieve_semantic",
    "retrieve_phonetic",
    "build_context",
]

MAX_NGRAM = 5


@dataclass(frozen=True)
class TermMention:
    """One matched transcript span; token indices are [start, end)."""

    start_token: int
    end_token: int
    node_id: str
    matched_surface: str


@dataclass(frozen=True)
class KGContext:
    """Retrieved context for one question, before any token budgeting."""

    semantic_entries: tuple[tuple[str, str, str], ...] = ()
    phonetic_entries: tuple[tuple[str, str, float], ...] = ()


def spot_terms(transcript: str, graph: KnowledgeGraph) -> list[TermMention]:
    """Greedy left-to-right longest-match of graph terms in a transcript.

    N-grams up to MAX_NGRAM tokens are normalized and looked up in the
    graph's surface index; a match consumes its span, so mentions never
    overlap.
    """

    tokens = tokenize(transcript)
    mentions: list[TermMention] = []
    i = 0
    while i < len(tokens):
        matched = None
        for n in range(min(MAX_NGRAM, len(tokens) - i), 0, -1):
            key = normalize_term(" ".join(tokens[i : i + n]))
            if key and key in graph.surface_index:
                matched = (n, graph.surface_index[key])
                break
        if matched is None:
            i += 1
            continue
        n, node_id = matched
        mentions.append(
            TermMention(
                start_token=i,
                end_token=i + n,
                node_id=node_id,
                matched_surface=" ".join(tokens[i : i + n]),
            )
        )
        i += n
    return mentions


def _option_node_ids(graph: KnowledgeGraph, options: Sequence[str]) -> set[str]:
    spotted: set[str] = set()
    for text in options:
        spotted.update(m.node_id for m in spot_terms(text, graph))
    return spotted


def retrieve_semantic(
    graph: KnowledgeGraph,
    mentions: Sequence[TermMention],
    options: Sequence[str] = (),
    hops: int = 1,
) -> list[tuple[str, str, str]]:
    """Non-phonetic edges within ``hops`` of any mention, as surface triples.

    Entries touching a term spotted in the answer options come first, then
    nearer hops, then lexicographic order. The options influence ordering
    only, never membership.
    """

    if hops < 1:
        raise ValueError("hops must be >= 1")
    seeds = {m.node_id for m in mentions}
    if not seeds:
        return []

    # breadth-first distances over the undirected non-phonetic edge view
    dist = {node_id: 0 for node_id in seeds}
    frontier = list(seeds)
    for depth in range(1, hops):
        nxt: list[str] = []
        for node_id in frontier:
            for edge in graph.edges_touching(node_id):
                if edge.tag == PHONETIC_TAG:
                    continue
                other = edge.dst if edge.src == node_id else edge.src
                if other not in dist:
                    dist[other] = depth
                    nxt.append(other)
        frontier = nxt

    collected: dict[RelationEdge, int] = {}
    for node_id, d in dist.items():
        for edge in graph.edges_touching(node_id):
            if edge.tag == PHONETIC_TAG:
                continue
            prior = collected.get(edge)
            if prior is None or d < prior:
                collected[edge] = d

    option_nodes = _option_node_ids(graph, options)
    rendered = []
    for edge, hop in collected.items():
        entry = (graph.node(edge.src).surface, edge.tag, graph.node(edge.dst).surface)
        option_hit = edge.src in option_nodes or edge.dst in option_nodes
        rendered.append((0 if option_hit else 1, hop, entry))
    rendered.sort()
    return [entry for _, _, entry in rendered]


def retrieve_phonetic(
    graph: KnowledgeGraph,
    mentions: Sequence[TermMention],
    index: PhoneticIndex | None = None,
    policy: PhoneticPolicy | None = None,
) -> list[tuple[str, str, float]]:
    """Phonetic-edge neighbors of each mentioned node as (term, confusable, score).

    Scores are recomputed from pronunciations when an index is supplied and
    covers both words, else 1.0. Sorted by descending score with a
    lexicographic tie-break, duplicates removed.
    """

    seen: set[tuple[str, str]] = set()
    entries: list[tuple[str, str, float]] = []
    for mention in sorted(mentions, key=lambda m: m.start_token):
        source = graph.node(mention.node_id)
        for neighbor_id in graph.phonetic_neighbors(mention.node_id):
            pair = (mention.node_id, neighbor_id)
            if pair in seen:
                continue
            seen.add(pair)
            neighbor = graph.node(neighbor_id)
            score = 1.0
            if (
                index is not None
                and source.normalized in index.by_word
                and neighbor.normalized in index.by_word
            ):
                score = phonetic_similarity(
                    source.normalized, neighbor.normalized, index, policy
                ).score
            entries.append((source.surface, neighbor.surface, score))
    entries.sort(key=lambda e: (-e[2], e[0], e[1]))
    return entries


def build_context(
    graph: KnowledgeGraph,
    transcript: str,
    options: Mapping[str, str] | Sequence[str] = (),
    hops: int = 1,
    index: PhoneticIndex | None = None,
    policy: PhoneticPolicy | None = None,
) -> KGContext:
    """Spot terms and retrieve the semantic plus phonetic context for one question."""

    option_texts = list(options.values()) if isinstance(options, Mapping) else list(options)
    mentions = spot_terms(transcript, graph)
    return KGContext(
        semantic_entries=tuple(retrieve_semantic(graph, mentions, option_texts, hops)),
        phonetic_entries=tuple(retrieve_phonetic(graph, mentions, index, policy)),
    )
