"""Knowledge-graph-aided correction and evaluation of noisy medical speech transcripts."""

from .distance import levenshtein
from .evaluate import (
    BenchmarkResult,
    EvalReport,
    NoiseSpec,
    QAItem,
    load_dataset,
    normalize_for_wer,
    qa_accuracy,
    run_benchmark,
    simulate_asr_noise,
    wer,
)
from .graph import (
    FilterConfig,
    KnowledgeGraph,
    RelationEdge,
    RelationRecord,
    TableFormat,
    TermNode,
    add_phonetic_edges,
    build_graph,
    filter_relations,
    load_graph,
    load_relation_table,
    save_graph,
)
from .llm import (
    BackendConfig,
    CompletionRequest,
    EchoBackend,
    HttpBackend,
    MalformedBackend,
    OracleBackend,
    complete_batch,
    make_backend,
)
from .metaphone import MetaphoneCodes, double_metaphone
from .phonetics import (
    PhoneticIndex,
    PhoneticPolicy,
    Pronunciation,
    load_cmu_dict,
    phonetic_candidates,
    phonetic_similarity,
)
from .prompt import (
    ChatMessage,
    ContextBudget,
    DialogueSample,
    ParsedOutput,
    assemble_inference_input,
    count_tokens,
    parse_two_line_output,
    render_training_sample,
    serialize_context,
)
from .retrieval import (
    KGContext,
    TermMention,
    build_context,
    retrieve_phonetic,
    retrieve_semantic,
    spot_terms,
)

__version__ = "0.1.0"
