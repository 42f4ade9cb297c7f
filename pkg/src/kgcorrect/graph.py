"""Medical term graph: relation-table ingestion, filtering, build, phonetic merge, persistence.

Nodes are unique term strings keyed by a normalized surface; edges carry
relation tags. Phonetic confusability links are merged in as symmetric
edges tagged ``phonetic``. A built graph is immutable and safe to share
across threads.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import IO, Iterable, Iterator, Sequence, Union

from .phonetics import PhoneticIndex, PhoneticPolicy, phonetic_candidates
from .text import normalize_term

__all__ = [
    "TermNode",
    "RelationEdge",
    "RelationRecord",
    "KnowledgeGraph",
    "TableFormat",
    "FilterConfig",
    "TableLoadResult",
    "TableFormatError",
    "GraphFormatError",
    "NAMED_TAGS",
    "PHONETIC_TAG",
    "load_relation_table",
    "filter_relations",
    "build_graph",
    "add_phonetic_edges",
    "save_graph",
    "load_graph",
]

# Relation tags with first-class meaning; any other rela is kept verbatim.
PHONETIC_TAG = "phonetic"
NAMED_TAGS = frozenset({"classifies", "constitutes", "due_to", "plays_role", PHONETIC_TAG})

# Coarse relation labels dropped as generic by default. The UMLS hierarchy
# and synonymy labels carry no specific semantics on their own.
DEFAULT_GENERIC_RELS = frozenset({"RO", "RB", "RN", "SY", "SIB"})


class TableFormat(Enum):
    """Input layouts for the relation table."""

    TSV = "tsv"
    RRF = "rrf"


class TableFormatError(ValueError):
    """Raised when the relation table cannot be read in the selected format."""


class GraphFormatError(ValueError):
    """Raised on a corrupt graph file; carries the byte offset when known."""

    def __init__(self, message: str, offset: int = 0) -> None:
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class TermNode:
    node_id: str
    surface: str
    normalized: str
    concept_id: str | None = None


@dataclass(frozen=True)
class RelationEdge:
    src: str
    dst: str
    tag: str


@dataclass(frozen=True)
class RelationRecord:
    """One parsed relation-table row."""

    concept_id_1: str
    term_1: str
    rel: str
    rela: str
    concept_id_2: str
    term_2: str


@dataclass(frozen=True)
class FilterConfig:
    generic_rels: frozenset[str] = DEFAULT_GENERIC_RELS


@dataclass
class GraphStats:
    """Build and augmentation counters surfaced by the CLI."""

    records: int = 0
    self_loops_skipped: int = 0
    empty_terms_skipped: int = 0
    phonetic_pairs_added: int = 0
    phonetic_nodes_created: int = 0
    nodes_skipped_multiword: int = 0
    nodes_skipped_oov: int = 0


@dataclass
class KnowledgeGraph:
    """Immutable term graph; equality is node-set plus edge-set equality."""

    nodes: dict[str, TermNode]
    edges: frozenset[RelationEdge]
    surface_index: dict[str, str]
    stats: GraphStats | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        # eager adjacency keeps reads lock-free for concurrent consumers
        adjacency: dict[str, list[RelationEdge]] = {}
        for edge in sorted(self.edges, key=lambda e: (e.src, e.dst, e.tag)):
            adjacency.setdefault(edge.src, []).append(edge)
            if edge.dst != edge.src:
                adjacency.setdefault(edge.dst, []).append(edge)
        self._adjacency = adjacency

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KnowledgeGraph):
            return NotImplemented
        return (
            set(self.nodes.values()) == set(other.nodes.values())
            and self.edges == other.edges
        )

    __hash__ = None  # type: ignore[assignment]

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def node(self, node_id: str) -> TermNode:
        return self.nodes[node_id]

    def node_for_surface(self, surface: str) -> TermNode | None:
        node_id = self.surface_index.get(normalize_term(surface))
        return self.nodes.get(node_id) if node_id is not None else None

    def edges_touching(self, node_id: str) -> list[RelationEdge]:
        """All edges with ``node_id`` as either endpoint, deterministic order."""

        return self._adjacency.get(node_id, [])

    def phonetic_neighbors(self, node_id: str) -> list[str]:
        """Node ids linked to ``node_id`` by a phonetic edge, sorted."""

        out = {
            edge.dst if edge.src == node_id else edge.src
            for edge in self.edges_touching(node_id)
            if edge.tag == PHONETIC_TAG
        }
        out.discard(node_id)
        return sorted(out)


@dataclass
class TableLoadResult:
    records: list[RelationRecord]
    malformed: int


Source = Union[str, Path, IO[bytes], IO[str]]


def _open_lines(source: Source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as handle:
            yield from handle
        return
    if isinstance(source, io.TextIOBase):
        yield from source
        return
    for raw in source:
        yield raw.decode("utf-8")


def _parse_row(line: str, fmt: TableFormat) -> RelationRecord | None:
    if fmt is TableFormat.TSV:
        parts = line.rstrip("\n").split("\t")
    else:
        # UMLS-style pipe rows end with a trailing delimiter
        parts = line.rstrip("\n").rstrip("|").split("|")
    if len(parts) < 6:
        return None
    concept_id_1, term_1, rel, rela, concept_id_2, term_2 = (p.strip() for p in parts[:6])
    if not term_1 or not term_2:
        return None
    return RelationRecord(concept_id_1, term_1, rel, rela, concept_id_2, term_2)


def load_relation_table(source: Source, fmt: TableFormat = TableFormat.TSV) -> TableLoadResult:
    """Parse a relation table; malformed rows are counted, not fatal.

    Raises :class:`TableFormatError` when more than half of the non-empty
    rows are malformed, which almost always means the wrong format was
    selected. I/O problems propagate as ``OSError``.
    """

    records: list[RelationRecord] = []
    malformed = 0
    total = 0
    for line in _open_lines(source):
        if not line.strip():
            continue
        total += 1
        record = _parse_row(line, fmt)
        if record is None:
            malformed += 1
            continue
        records.append(record)
    if total and malformed / total > 0.5:
        raise TableFormatError(
            f"{malformed} of {total} rows malformed; wrong table format ({fmt.value})?"
        )
    return TableLoadResult(records=records, malformed=malformed)


def filter_relations(
    records: Iterable[RelationRecord], config: FilterConfig | None = None
) -> list[RelationRecord]:
    """Drop generic, underspecified, and duplicate relations, preserving order.

    A record survives unless its rela is empty, its rel is one of the
    configured generic labels, or the (term_1, rela, term_2) triple was
    already seen. Pure and idempotent.
    """

    config = config or FilterConfig()
    seen: set[tuple[str, str, str]] = set()
    kept: list[RelationRecord] = []
    for record in records:
        if not record.rela:
            continue
        if record.rel in config.generic_rels:
            continue
        triple = (record.term_1, record.rela, record.term_2)
        if triple in seen:
            continue
        seen.add(triple)
        kept.append(record)
    return kept


def _node_id_for_term(normalized: str) -> str:
    return f"kg:{normalized}"


def build_graph(records: Iterable[RelationRecord]) -> KnowledgeGraph:
    """Build the semantic graph from filtered records.

    Every distinct normalized term becomes one node (first-seen casing and
    concept id win on collisions); every record becomes one edge, with the
    four named relation tags mapped through and anything else kept as its
    rela string. Self-loops after normalization are skipped and counted.
    """

    nodes: dict[str, TermNode] = {}
    surface_index: dict[str, str] = {}
    edges: set[RelationEdge] = set()
    stats = GraphStats()

    def intern(surface: str, concept_id: str) -> str | None:
        normalized = normalize_term(surface)
        if not normalized:
            stats.empty_terms_skipped += 1
            return None
        node_id = surface_index.get(normalized)
        if node_id is None:
            node_id = _node_id_for_term(normalized)
            nodes[node_id] = TermNode(
                node_id=node_id,
                surface=surface,
                normalized=normalized,
                concept_id=concept_id or None,
            )
            surface_index[normalized] = node_id
        return node_id

    for record in records:
        stats.records += 1
        src = intern(record.term_1, record.concept_id_1)
        dst = intern(record.term_2, record.concept_id_2)
        if src is None or dst is None:
            continue
        if src == dst:
            stats.self_loops_skipped += 1
            continue
        edges.add(RelationEdge(src=src, dst=dst, tag=record.rela))

    return KnowledgeGraph(
        nodes=nodes, edges=frozenset(edges), surface_index=surface_index, stats=stats
    )


def add_phonetic_edges(
    graph: KnowledgeGraph,
    index: PhoneticIndex,
    policy: PhoneticPolicy | None = None,
) -> KnowledgeGraph:
    """Return a new graph with confusable-word edges merged in.

    Each single-word node found in the dictionary gets its phonetic
    candidates attached via symmetric ``phonetic`` edges; candidates absent
    from the graph become new nodes with id ``phon:<word>`` and no concept
    id. Multi-word and out-of-dictionary nodes are skipped and counted in
    the returned graph's stats. Existing edges are never removed or
    retagged.
    """

    policy = policy or PhoneticPolicy()
    nodes = dict(graph.nodes)
    surface_index = dict(graph.surface_index)
    edges = set(graph.edges)
    stats = replace(graph.stats) if graph.stats else GraphStats()
    stats.phonetic_pairs_added = 0
    stats.phonetic_nodes_created = 0
    stats.nodes_skipped_multiword = 0
    stats.nodes_skipped_oov = 0

    for node in sorted(graph.nodes.values(), key=lambda n: n.node_id):
        word = node.normalized
        if not word or " " in word:
            stats.nodes_skipped_multiword += 1
            continue
        if word not in index.vocabulary:
            stats.nodes_skipped_oov += 1
            continue
        for candidate, _score in phonetic_candidates(word, index, policy):
            normalized = normalize_term(candidate)
            if not normalized:
                continue
            target_id = surface_index.get(normalized)
            if target_id is None:
                target_id = f"phon:{normalized}"
                nodes[target_id] = TermNode(
                    node_id=target_id,
                    surface=candidate,
                    normalized=normalized,
                    concept_id=None,
                )
                surface_index[normalized] = target_id
                stats.phonetic_nodes_created += 1
            if target_id == node.node_id:
                continue
            forward = RelationEdge(node.node_id, target_id, PHONETIC_TAG)
            if forward not in edges:
                stats.phonetic_pairs_added += 1
            edges.add(forward)
            edges.add(RelationEdge(target_id, node.node_id, PHONETIC_TAG))

    return KnowledgeGraph(
        nodes=nodes, edges=frozenset(edges), surface_index=surface_index, stats=stats
    )


def save_graph(graph: KnowledgeGraph, sink: Union[str, Path, IO[str]]) -> None:
    """Write the graph as a single sorted JSON document, newline-terminated."""

    payload = {
        "nodes": [
            {"id": n.node_id, "surface": n.surface, "concept_id": n.concept_id}
            for n in sorted(graph.nodes.values(), key=lambda n: n.node_id)
        ],
        "edges": [
            {"src": e.src, "dst": e.dst, "tag": e.tag}
            for e in sorted(graph.edges, key=lambda e: (e.src, e.dst, e.tag))
        ],
    }
    text = json.dumps(payload, ensure_ascii=False, indent=2) + "\n"
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text, encoding="utf-8")
    else:
        sink.write(text)


def load_graph(source: Source) -> KnowledgeGraph:
    """Read a graph file; ``load(save(g))`` equals ``g``.

    Raises :class:`GraphFormatError` carrying a byte offset for corrupt
    payloads and schema violations.
    """

    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(
            f"corrupt graph payload at byte {exc.pos}: {exc.msg}", offset=exc.pos
        ) from exc

    if not isinstance(payload, dict) or "nodes" not in payload or "edges" not in payload:
        raise GraphFormatError("graph payload must be an object with nodes and edges")

    nodes: dict[str, TermNode] = {}
    surface_index: dict[str, str] = {}
    for entry in payload["nodes"]:
        try:
            node_id, surface = entry["id"], entry["surface"]
            concept_id = entry.get("concept_id")
        except (TypeError, KeyError) as exc:
            raise GraphFormatError(f"malformed node entry: {entry!r}") from exc
        if not isinstance(node_id, str) or not isinstance(surface, str) or not surface:
            raise GraphFormatError(f"malformed node entry: {entry!r}")
        if node_id in nodes:
            raise GraphFormatError(f"duplicate node id: {node_id}")
        normalized = normalize_term(surface)
        if normalized in surface_index:
            raise GraphFormatError(f"duplicate normalized surface: {normalized!r}")
        nodes[node_id] = TermNode(
            node_id=node_id, surface=surface, normalized=normalized, concept_id=concept_id
        )
        surface_index[normalized] = node_id

    edges: set[RelationEdge] = set()
    for entry in payload["edges"]:
        try:
            edge = RelationEdge(entry["src"], entry["dst"], entry["tag"])
        except (TypeError, KeyError) as exc:
            raise GraphFormatError(f"malformed edge entry: {entry!r}") from exc
        if edge.src not in nodes or edge.dst not in nodes:
            raise GraphFormatError(f"edge references unknown node: {entry!r}")
        if edge.src == edge.dst:
            raise GraphFormatError(f"self-loop edge: {entry!r}")
        edges.add(edge)
    for edge in edges:
        if edge.tag == PHONETIC_TAG and RelationEdge(edge.dst, edge.src, PHONETIC_TAG) not in edges:
            raise GraphFormatError(f"phonetic edge missing mirror: {edge!r}")

    return KnowledgeGraph(nodes=nodes, edges=frozenset(edges), surface_index=surface_index)
