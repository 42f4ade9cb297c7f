from __future__ import annotations

from pathlib import Path

import pytest

from kgcorrect.evaluate import QAItem, load_dataset
from kgcorrect.graph import add_phonetic_edges, build_graph, filter_relations, load_relation_table
from kgcorrect.phonetics import load_cmu_dict

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def index():
    return load_cmu_dict(DATA_DIR / "cmudict_fixture.txt")


@pytest.fixture(scope="session")
def semantic_graph():
    loaded = load_relation_table(DATA_DIR / "relations_medical.tsv")
    return build_graph(filter_relations(loaded.records))


@pytest.fixture(scope="session")
def medical_graph(semantic_graph, index):
    return add_phonetic_edges(semantic_graph, index)


@pytest.fixture(scope="session")
def dataset_items():
    items, skipped = load_dataset(DATA_DIR / "dataset_50.jsonl")
    assert skipped == 0
    return items


@pytest.fixture
def make_item():
    def factory(
        item_id: str = "q1",
        task: str = "MedQA",
        gt_text: str = "the patient has hypertension today",
        asr_text: str | None = None,
        answer: str = "B",
        options: dict | None = None,
    ) -> QAItem:
        return QAItem(
            id=item_id,
            task=task,
            gt_text=gt_text,
            asr_text=asr_text,
            answer=answer,
            options=options
            or {"A": "first choice", "B": "second choice", "C": "third choice", "D": "fourth choice"},
        )

    return factory
