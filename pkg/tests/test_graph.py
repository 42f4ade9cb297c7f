"""Relation-table ingestion, filtering, graph building, phonetic merge, persistence."""

from __future__ import annotations

import io
import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from kgcorrect.graph import (
    FilterConfig,
    GraphFormatError,
    KnowledgeGraph,
    PHONETIC_TAG,
    RelationEdge,
    RelationRecord,
    TableFormat,
    TableFormatError,
    TermNode,
    add_phonetic_edges,
    build_graph,
    filter_relations,
    load_graph,
    load_relation_table,
    save_graph,
)
from kgcorrect.text import normalize_term


def record(t1="hypertension", rela="due_to", t2="kidney disease", rel="RQ", c1="C001", c2="C002"):
    return RelationRecord(c1, t1, rel, rela, c2, t2)


class TestLoadRelationTable:
    def test_tsv_row(self):
        row = "C001\thypertension\tRO\tdue_to\tC002\tkidney disease\n"
        result = load_relation_table(io.StringIO(row), TableFormat.TSV)
        assert result.malformed == 0
        assert result.records == [
            RelationRecord("C001", "hypertension", "RO", "due_to", "C002", "kidney disease")
        ]

    def test_pipe_row_with_trailing_delimiter(self):
        row = "C001|hypertension|RO|due_to|C002|kidney disease|\n"
        result = load_relation_table(io.StringIO(row), TableFormat.RRF)
        assert result.records[0].term_2 == "kidney disease"

    def test_empty_file(self):
        result = load_relation_table(io.StringIO(""))
        assert result.records == [] and result.malformed == 0

    def test_missing_term_is_counted(self):
        rows = "C001\thypertension\tRO\tdue_to\tC002\t\nC001\ta\tRO\tx\tC002\tb\n"
        result = load_relation_table(io.StringIO(rows))
        assert result.malformed == 1
        assert len(result.records) == 1

    def test_mostly_malformed_signals_wrong_format(self):
        tsv_rows = "C001\ta\tRO\tx\tC002\tb\n" * 4
        with pytest.raises(TableFormatError):
            load_relation_table(io.StringIO(tsv_rows), TableFormat.RRF)

    def test_bytes_stream(self):
        raw = io.BytesIO(b"C001\ta\tRO\tx\tC002\tb\n")
        assert len(load_relation_table(raw).records) == 1


class TestFilterRelations:
    def test_empty_rela_dropped(self):
        assert filter_relations([record(rela="")]) == []

    def test_duplicates_keep_first(self):
        first, second = record(), record()
        assert filter_relations([first, second]) == [first]

    def test_specific_relation_kept(self):
        kept = record(rela="due_to", rel="RQ")
        assert filter_relations([kept]) == [kept]

    def test_generic_rel_dropped(self):
        for rel in ("RO", "RB", "RN", "SY", "SIB"):
            assert filter_relations([record(rel=rel)]) == []

    def test_drop_list_is_configurable(self):
        config = FilterConfig(generic_rels=frozenset({"XX"}))
        assert filter_relations([record(rel="RO")], config) == [record(rel="RO")]
        assert filter_relations([record(rel="XX")], config) == []

    def test_idempotent(self):
        records = [record(), record(), record(rela=""), record(t2="dyspnea")]
        once = filter_relations(records)
        assert filter_relations(once) == once

    def test_preserves_input_order(self):
        records = [record(t1=f"term{i}") for i in range(5)]
        assert filter_relations(records) == records


class TestBuildGraph:
    def test_minimal_graph(self):
        graph = build_graph([record(t1="A-term", t2="B-term")])
        assert graph.node_count == 2
        assert len(graph.edges) == 1
        (edge,) = graph.edges
        assert edge.tag == "due_to"

    def test_normalization_merges_casings(self):
        graph = build_graph(
            [record(t1="Atrophy", t2="B"), record(t1="atrophy!", t2="C")]
        )
        surfaces = {n.normalized for n in graph.nodes.values()}
        assert surfaces == {"atrophy", "b", "c"}
        assert graph.node_count == 3
        # first-seen casing wins
        assert graph.node_for_surface("atrophy").surface == "Atrophy"

    def test_named_tag_mapped(self):
        graph = build_graph([record(rela="classifies")])
        assert {e.tag for e in graph.edges} == {"classifies"}

    def test_other_tag_keeps_rela_string(self):
        graph = build_graph([record(rela="associated_with")])
        assert {e.tag for e in graph.edges} == {"associated_with"}

    def test_node_count_equals_distinct_normalized_terms(self):
        rng = random.Random(5)
        records = [
            record(t1=f"term {rng.randrange(8)}", t2=f"term {rng.randrange(8)}")
            for _ in range(40)
        ]
        graph = build_graph(records)
        distinct = {
            normalize_term(t)
            for r in records
            for t in (r.term_1, r.term_2)
        }
        assert graph.node_count == len(distinct)

    def test_self_loops_skipped(self):
        graph = build_graph([record(t1="Atrophy", t2="atrophy")])
        assert len(graph.edges) == 0
        assert graph.stats.self_loops_skipped == 1


class TestAddPhoneticEdges:
    def test_confusable_edge_added(self, index):
        graph = build_graph([record(t1="hypoplasia", t2="congenital anomaly")])
        merged = add_phonetic_edges(graph, index)
        node = merged.node_for_surface("hypoplasia")
        neighbors = {merged.node(n).normalized for n in merged.phonetic_neighbors(node.node_id)}
        assert "hyperplasia" in neighbors

    def test_existing_node_reused_for_candidate(self, index):
        graph = build_graph(
            [record(t1="hypertension", t2="kidney disease"), record(t1="hypotension", t2="dehydration")]
        )
        merged = add_phonetic_edges(graph, index)
        hyper = merged.node_for_surface("hypertension")
        hypo = merged.node_for_surface("hypotension")
        assert hypo.node_id in merged.phonetic_neighbors(hyper.node_id)
        assert hypo.node_id.startswith("kg:")

    def test_multiword_nodes_skipped_and_counted(self, index):
        graph = build_graph([record(t1="vitamin b12 deficiency", t2="anemia")])
        merged = add_phonetic_edges(graph, index)
        assert merged.stats.nodes_skipped_multiword == 1

    def test_oov_nodes_skipped_and_counted(self, index):
        graph = build_graph([record(t1="qzxghostword", t2="anemia")])
        merged = add_phonetic_edges(graph, index)
        assert merged.stats.nodes_skipped_oov >= 1

    def test_never_removes_existing_edges(self, semantic_graph, index):
        merged = add_phonetic_edges(semantic_graph, index)
        assert semantic_graph.edges <= merged.edges

    def test_phonetic_edges_are_mirrored(self, medical_graph):
        for edge in medical_graph.edges:
            if edge.tag == PHONETIC_TAG:
                assert RelationEdge(edge.dst, edge.src, PHONETIC_TAG) in medical_graph.edges

    def test_created_nodes_use_phon_ids_without_concept(self, medical_graph):
        created = [n for n in medical_graph.nodes.values() if n.node_id.startswith("phon:")]
        assert created
        assert all(n.concept_id is None for n in created)

    def test_input_graph_is_not_mutated(self, semantic_graph, index):
        before_nodes = dict(semantic_graph.nodes)
        before_edges = set(semantic_graph.edges)
        add_phonetic_edges(semantic_graph, index)
        assert semantic_graph.nodes == before_nodes
        assert set(semantic_graph.edges) == before_edges


def random_graph(seed: int) -> KnowledgeGraph:
    rng = random.Random(seed)
    n_nodes = rng.randint(0, 12)
    nodes = {}
    surface_index = {}
    for i in range(n_nodes):
        surface = f"Term{i}x{rng.randrange(100)}"
        normalized = normalize_term(surface)
        node_id = f"kg:{normalized}"
        nodes[node_id] = TermNode(
            node_id=node_id,
            surface=surface,
            normalized=normalized,
            concept_id=rng.choice([None, f"C{i:03d}"]),
        )
        surface_index[normalized] = node_id
    ids = list(nodes)
    edges = set()
    for _ in range(rng.randint(0, 20)):
        if len(ids) < 2:
            break
        src, dst = rng.sample(ids, 2)
        tag = rng.choice(["due_to", "classifies", "constitutes", "plays_role", "other_rel", PHONETIC_TAG])
        edges.add(RelationEdge(src, dst, tag))
        if tag == PHONETIC_TAG:
            edges.add(RelationEdge(dst, src, tag))
    return KnowledgeGraph(nodes=nodes, edges=frozenset(edges), surface_index=surface_index)


class TestSaveLoad:
    def test_empty_graph_round_trip(self):
        graph = KnowledgeGraph(nodes={}, edges=frozenset(), surface_index={})
        buffer = io.StringIO()
        save_graph(graph, buffer)
        assert load_graph(io.StringIO(buffer.getvalue())) == graph

    def test_small_graph_round_trip(self):
        graph = build_graph([record()])
        buffer = io.StringIO()
        save_graph(graph, buffer)
        loaded = load_graph(io.StringIO(buffer.getvalue()))
        assert loaded == graph
        assert loaded.surface_index == graph.surface_index

    def test_output_is_newline_terminated_json(self):
        buffer = io.StringIO()
        save_graph(build_graph([record()]), buffer)
        text = buffer.getvalue()
        assert text.endswith("\n")
        payload = json.loads(text)
        assert set(payload) == {"nodes", "edges"}

    def test_truncated_payload_reports_offset(self):
        buffer = io.StringIO()
        save_graph(build_graph([record()]), buffer)
        truncated = buffer.getvalue()[:40]
        with pytest.raises(GraphFormatError) as excinfo:
            load_graph(io.StringIO(truncated))
        assert excinfo.value.offset > 0

    def test_unknown_edge_endpoint_rejected(self):
        payload = {"nodes": [], "edges": [{"src": "kg:a", "dst": "kg:b", "tag": "due_to"}]}
        with pytest.raises(GraphFormatError):
            load_graph(io.StringIO(json.dumps(payload)))

    def test_unmirrored_phonetic_edge_rejected(self):
        payload = {
            "nodes": [
                {"id": "kg:a", "surface": "a", "concept_id": None},
                {"id": "kg:b", "surface": "b", "concept_id": None},
            ],
            "edges": [{"src": "kg:a", "dst": "kg:b", "tag": PHONETIC_TAG}],
        }
        with pytest.raises(GraphFormatError):
            load_graph(io.StringIO(json.dumps(payload)))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_round_trip_equality_on_random_graphs(self, seed):
        graph = random_graph(seed)
        buffer = io.StringIO()
        save_graph(graph, buffer)
        assert load_graph(io.StringIO(buffer.getvalue())) == graph

    def test_save_is_deterministic(self, medical_graph):
        first, second = io.StringIO(), io.StringIO()
        save_graph(medical_graph, first)
        save_graph(medical_graph, second)
        assert first.getvalue() == second.getvalue()
