"""Command line interface: build-kg, correct, evaluate, export-finetune, simulate-noise.

Exit codes: 0 success, 1 backend or protocol degradation, 2 configuration
or I/O errors. Every command is deterministic for a fixed config, seed,
and mock backend.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import AppConfig, ConfigError, load_config
from .evaluate import (
    DatasetError,
    EvalError,
    NoiseSpec,
    load_dataset,
    qa_item_from_dict,
    run_benchmark,
    simulate_asr_noise,
)
from .graph import (
    GraphFormatError,
    TableFormat,
    TableFormatError,
    add_phonetic_edges,
    build_graph,
    filter_relations,
    load_graph,
    load_relation_table,
    save_graph,
)
from .llm import (
    BackendError,
    CompletionRequest,
    MOCK_NAMES,
    RequestError,
    make_backend,
)
from .phonetics import load_cmu_dict
from .prompt import (
    ValidationError,
    assemble_inference_input,
    count_tokens,
    parse_with_fallback,
    render_training_sample,
)
from .retrieval import KGContext, build_context

__all__ = ["main"]


def _fail(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return 2


def _resolved(flag_value, config_value) -> Path | None:
    if flag_value is not None:
        return Path(flag_value)
    return config_value


def _existing(path: Path | None, what: str) -> Path:
    if path is None:
        raise ConfigError(f"{what} is not configured (set it in the config file or pass the flag)")
    if not path.exists():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _load_index_if_configured(args, config: AppConfig):
    path = _resolved(getattr(args, "cmu_dict", None), config.cmu_dict)
    if path is None:
        return None
    return load_cmu_dict(_existing(path, "pronouncing dictionary"))


def _select_backend(args, config: AppConfig, items):
    mock = getattr(args, "mock", None)
    if mock is not None:
        return make_backend(config.backend, mock=mock, items=items)
    return make_backend(config.backend)


def cmd_build_kg(args) -> int:
    config = load_config(args.config)
    table_path = _existing(
        _resolved(args.relation_table, config.relation_table), "relation table"
    )
    dict_path = _existing(_resolved(args.cmu_dict, config.cmu_dict), "pronouncing dictionary")
    out_path = _resolved(args.out, config.graph_file)
    if out_path is None:
        raise ConfigError("graph output path is not configured")

    fmt = TableFormat(args.table_format or config.table_format)
    loaded = load_relation_table(table_path, fmt)
    records = filter_relations(loaded.records)
    graph = build_graph(records)
    index = load_cmu_dict(dict_path)
    graph = add_phonetic_edges(graph, index, config.policy)
    save_graph(graph, out_path)

    stats = graph.stats
    semantic_edges = sum(1 for e in graph.edges if e.tag != "phonetic")
    print(f"graph written to {out_path}")
    print(
        f"nodes={graph.node_count} semantic_edges={semantic_edges} "
        f"phonetic_pairs={stats.phonetic_pairs_added} "
        f"phonetic_nodes_created={stats.phonetic_nodes_created}"
    )
    print(
        f"skipped: malformed_rows={loaded.malformed} "
        f"multiword_nodes={stats.nodes_skipped_multiword} "
        f"oov_nodes={stats.nodes_skipped_oov} "
        f"self_loops={stats.self_loops_skipped}"
    )
    return 0


def cmd_correct(args) -> int:
    config = load_config(args.config)
    graph = load_graph(_existing(_resolved(args.graph, config.graph_file), "graph file"))
    index = _load_index_if_configured(args, config)

    items = []
    item_id = "adhoc"
    if args.item_id is not None:
        dataset_path = _existing(_resolved(args.dataset, config.dataset), "dataset")
        items, _skipped = load_dataset(dataset_path)
        by_id = {item.id: item for item in items}
        if args.item_id not in by_id:
            raise ConfigError(f"item {args.item_id!r} not found in {dataset_path}")
        item = by_id[args.item_id]
        item_id = item.id
        asr_text = item.asr_text if item.asr_text is not None else item.gt_text
        options = item.options
    else:
        if args.asr_text is None:
            raise ConfigError("pass --item-id or --asr-text with the four options")
        asr_text = args.asr_text
        options = {
            "A": args.option_a or "",
            "B": args.option_b or "",
            "C": args.option_c or "",
            "D": args.option_d or "",
        }
        if not all(options.values()):
            raise ConfigError("all four options (--option-a .. --option-d) are required")

    backend = _select_backend(args, config, items)
    ctx = build_context(graph, asr_text, options, config.hops, index, config.policy)
    messages = assemble_inference_input(asr_text, options, ctx, config.budget)
    request = CompletionRequest(messages=tuple(messages), metadata={"item_id": item_id})

    degraded = False
    try:
        raw = backend.complete(request)
    except (BackendError, RequestError) as exc:
        print(f"warning: backend failed ({exc}); using fallback output", file=sys.stderr)
        raw = ""
        degraded = True
    parsed, fallback = parse_with_fallback(raw, asr_text)
    if fallback and not degraded:
        print("warning: output violated the two-line protocol; using fallback", file=sys.stderr)
    print(f"Corrected Text: {parsed.corrected_text}")
    print(f"Correct Option: {parsed.option}")
    return 1 if (fallback or degraded) else 0


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    graph = load_graph(_existing(_resolved(args.graph, config.graph_file), "graph file"))
    dataset_path = _existing(_resolved(args.dataset, config.dataset), "dataset")
    index = _load_index_if_configured(args, config)
    out_dir = Path(args.out_dir) if args.out_dir else config.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    items, skipped = load_dataset(dataset_path)
    if skipped:
        print(f"skipped {skipped} invalid dataset line(s)", file=sys.stderr)

    seed = args.seed if args.seed is not None else config.seed
    swaps = 0
    if args.simulate_noise is not None:
        spec = NoiseSpec(substitution_rate=args.simulate_noise, seed=seed)
        for item in items:
            item.asr_text, log = simulate_asr_noise(item.gt_text, graph, spec)
            swaps += len(log)
        print(f"simulated noise: rate={args.simulate_noise} seed={seed} swaps={swaps}")

    backend = _select_backend(args, config, items)
    result = run_benchmark(
        items,
        graph,
        backend,
        budget=config.budget,
        hops=config.hops,
        index=index,
        policy=config.policy,
        max_in_flight=config.backend.max_in_flight,
    )

    report_txt = out_dir / "report.txt"
    report_csv = out_dir / "report.csv"
    trace_path = out_dir / "trace.jsonl"
    figure_path = out_dir / "report.png"
    report_txt.write_text(result.report.to_text(), encoding="utf-8")
    report_csv.write_text(result.report.to_csv(), encoding="utf-8")
    with open(trace_path, "w", encoding="utf-8") as handle:
        for trace in result.traces:
            handle.write(json.dumps(trace.to_dict(), ensure_ascii=False) + "\n")

    from .figures import render_report_figure

    render_report_figure(result.report, figure_path)

    print(result.report.to_text(), end="")
    print(f"wrote {report_txt}, {report_csv}, {trace_path}, {figure_path}")
    if result.backend_errors:
        print(f"warning: {result.backend_errors} backend error(s)", file=sys.stderr)
        return 1
    return 0


def cmd_export_finetune(args) -> int:
    config = load_config(args.config)
    dataset_path = _existing(_resolved(args.dataset, config.dataset), "dataset")
    out_path = Path(args.out)
    graph_path = _resolved(args.graph, config.graph_file)
    graph = load_graph(_existing(graph_path, "graph file")) if graph_path else None
    index = _load_index_if_configured(args, config)

    items = []
    for lineno, line in enumerate(
        dataset_path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip():
            continue
        try:
            items.append(qa_item_from_dict(json.loads(line)))
        except (json.JSONDecodeError, DatasetError) as exc:
            raise DatasetError(f"{dataset_path}:{lineno}: {exc}") from exc

    token_counts = []
    with open(out_path, "w", encoding="utf-8") as handle:
        for item in items:
            if graph is not None:
                ctx = build_context(
                    graph, item.asr_text or item.gt_text, item.options,
                    config.hops, index, config.policy,
                )
            else:
                ctx = KGContext()
            sample = render_training_sample(item, ctx, config.budget)
            handle.write(json.dumps(sample.to_chat_dict(), ensure_ascii=False) + "\n")
            token_counts.append(
                count_tokens(sample.system.content)
                + count_tokens(sample.user.content)
                + count_tokens(sample.target.content)
            )

    if token_counts:
        ordered = sorted(token_counts)
        p50 = ordered[int(0.50 * (len(ordered) - 1))]
        p90 = ordered[int(0.90 * (len(ordered) - 1))]
        print(
            f"{len(items)} samples -> {out_path} "
            f"(tokens p50={p50} p90={p90} max={ordered[-1]})"
        )
    else:
        print(f"0 samples -> {out_path}")
    return 0


def cmd_simulate_noise(args) -> int:
    config = load_config(args.config)
    graph = load_graph(_existing(_resolved(args.graph, config.graph_file), "graph file"))
    dataset_path = _existing(_resolved(args.dataset, config.dataset), "dataset")
    out_path = Path(args.out)
    seed = args.seed if args.seed is not None else config.seed
    spec = NoiseSpec(substitution_rate=args.rate, seed=seed)

    items, skipped = load_dataset(dataset_path)
    if skipped:
        print(f"skipped {skipped} invalid dataset line(s)", file=sys.stderr)

    swaps = 0
    with open(out_path, "w", encoding="utf-8") as handle:
        for item in items:
            noisy, log = simulate_asr_noise(item.gt_text, graph, spec)
            swaps += len(log)
            payload = {
                "id": item.id,
                "task": item.task,
                "gt_text": item.gt_text,
                "asr_text": noisy,
                "options": item.options,
                "answer": item.answer,
            }
            handle.write(json.dumps(payload, ensure_ascii=False) + "\n")
    print(f"wrote {len(items)} items to {out_path} (rate={args.rate} seed={seed} swaps={swaps})")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kgcorrect",
        description="Knowledge-graph-aided correction and evaluation of noisy medical transcripts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="TOML config file", default=None)

    p = sub.add_parser("build-kg", help="build the knowledge graph from a relation table")
    common(p)
    p.add_argument("--relation-table", default=None)
    p.add_argument("--table-format", choices=[f.value for f in TableFormat], default=None)
    p.add_argument("--cmu-dict", default=None)
    p.add_argument("--out", default=None, help="graph file to write")
    p.set_defaults(func=cmd_build_kg)

    p = sub.add_parser("correct", help="correct one transcript and answer the question")
    common(p)
    p.add_argument("--graph", default=None)
    p.add_argument("--cmu-dict", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--item-id", default=None, help="take transcript and options from this dataset item")
    p.add_argument("--asr-text", default=None)
    p.add_argument("--option-a", default=None)
    p.add_argument("--option-b", default=None)
    p.add_argument("--option-c", default=None)
    p.add_argument("--option-d", default=None)
    p.add_argument("--mock", choices=MOCK_NAMES, default=None)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("evaluate", help="score a dataset and write report files")
    common(p)
    p.add_argument("--graph", default=None)
    p.add_argument("--cmu-dict", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--mock", choices=MOCK_NAMES, default=None)
    p.add_argument("--simulate-noise", type=float, default=None, metavar="RATE")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export-finetune", help="export chat-format training samples")
    common(p)
    p.add_argument("--graph", default=None)
    p.add_argument("--cmu-dict", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_finetune)

    p = sub.add_parser("simulate-noise", help="corrupt transcripts with phonetic swaps")
    common(p)
    p.add_argument("--graph", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--rate", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate_noise)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (
        ConfigError,
        TableFormatError,
        GraphFormatError,
        DatasetError,
        EvalError,
        ValidationError,
        ValueError,
        OSError,
    ) as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
