"""
Command line interface: `reranksearch build|search|eval|inspect`.

Exit codes: 0 success, 1 usage error, 2 data error, 3 provider error.
"""
import argparse
import json
import logging
import sys
import time

from reranksearch.config import ProviderSettings
from reranksearch.embedder import (
    DEFAULT_DIM, MAX_BATCH, LocalEmbedder, RemoteEmbedder, provider_for_model)
from reranksearch.errors import RerankSearchError, UsageError
from reranksearch.evaluation import load_queries, run_eval
from reranksearch.index import (
    Metric, build_index, inspect_index, load_index, save_index)
from reranksearch.ingest import (
    CorpusSchema, default_schema, documents_path, load_csv, load_documents,
    save_documents)
from reranksearch.pipeline import (
    DEFAULT_SHORTLIST_K, DEFAULT_TOP_N, Mode, PipelineConfig, run_search)
from reranksearch.reranker import load_chat_client
from reranksearch.utils import atomic_write_bytes, parse_int_list

logger = logging.getLogger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    """Argument errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _schema(args):
    if args.text_cols:
        return CorpusSchema.from_flags(args.id_col, args.text_cols)
    return default_schema(args.csv, args.id_col)


def _chat_client(args, settings):
    return load_chat_client(args.provider or settings.chat_provider, settings)


def cmd_build(args):
    settings = ProviderSettings.from_env()
    if not 1 <= args.batch_size <= MAX_BATCH:
        raise UsageError(f"--batch-size must be between 1 and {MAX_BATCH}")
    start = time.perf_counter()
    records = load_csv(args.csv, CorpusSchema.from_flags(args.id_col, args.text_cols))
    if args.provider == "local":
        provider = LocalEmbedder(args.dim)
    else:
        provider = RemoteEmbedder(settings, model=args.model,
                                  batch_size=args.batch_size)
    vectors = provider.embed_batch([record.document for record in records])
    index = build_index([(record.id, vector)
                         for record, vector in zip(records, vectors)], args.metric)
    save_index(index, args.out)
    save_documents(records, documents_path(args.out))
    print(f"{len(index)} records indexed (dim={index.dim}, model={index.model_id}, "
          f"metric={index.metric.name}) in {time.perf_counter() - start:.2f}s "
          f"-> {args.out}")
    return 0


def _load_search_documents(args):
    if args.csv:
        return {record.id: record.document
                for record in load_csv(args.csv, _schema(args))}
    return load_documents(documents_path(args.index))


def _print_result(result):
    print(f"{'rank':>4}  {'id':<10}{'score':>8}  document")
    for row in result.results:
        score = "-" if row.stage1_score is None else f"{row.stage1_score:.4f}"
        print(f"{row.rank:>4}  {row.record_id:<10}{score:>8}  {row.document}")
    if result.degraded:
        print(f"degraded: {result.degraded_reason}")


def cmd_search(args):
    settings = ProviderSettings.from_env()
    config = PipelineConfig(shortlist_k=args.k, top_n=args.n, mode=Mode(args.mode),
                            pad_to_n=args.pad)
    index = load_index(args.index)
    documents = _load_search_documents(args)
    provider = provider_for_model(index.model_id, settings)
    chat_client = _chat_client(args, settings) if config.mode is Mode.assisted else None

    result = run_search(args.query, index, provider, chat_client, config, documents)
    if args.json:
        print(json.dumps(result.to_dict(), indent=2))
    else:
        _print_result(result)
    return 0


def cmd_eval(args):
    settings = ProviderSettings.from_env()
    config = PipelineConfig(shortlist_k=args.k, top_n=args.n, pad_to_n=args.pad)
    k_values = parse_int_list(args.k_sweep) if args.k_sweep else None
    modes = (Mode.raw, Mode.assisted) if args.mode == "both" else (Mode(args.mode),)

    records = load_csv(args.csv, _schema(args))
    index = load_index(args.index)
    queries = load_queries(args.queries)
    provider = provider_for_model(index.model_id, settings)
    chat_client = _chat_client(args, settings) if Mode.assisted in modes else None

    report = run_eval(records, index, provider, chat_client, queries, config,
                      k_values=k_values, modes=modes, workers=args.workers)
    if args.out:
        atomic_write_bytes(args.out, report.to_json().encode("utf-8"))
    print(report.format_table())
    if args.plot_dir:
        from reranksearch import draw
        paths = draw.plot_report(report, index, args.plot_dir)
        print(f"plots written to {args.plot_dir} ({len(paths)} files)")
    return 0


def cmd_inspect(args):
    header = inspect_index(args.index)
    print(header.describe())
    if not header.crc_ok:
        print(f"error: {args.index}: corrupt payload (checksum mismatch)",
              file=sys.stderr)
        return 2
    return 0


def build_parser():
    parser = _ArgumentParser(
        prog="reranksearch",
        description="Vector search with LLM-assisted reranking")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="Log debug output to stderr")
    subparsers = parser.add_subparsers(dest="command", required=True)

    build = subparsers.add_parser("build", help="Embed a CSV corpus and save an index")
    build.add_argument("--csv", required=True, help="Corpus CSV file")
    build.add_argument("--id-col", help="Column holding record ids")
    build.add_argument("--text-cols", required=True,
                       help="Comma separated columns composed into documents")
    build.add_argument("--provider", choices=["local", "remote"], default="local")
    build.add_argument("--dim", type=int, default=DEFAULT_DIM,
                       help="Local embedder dimension")
    build.add_argument("--model", help="Remote embedding model")
    build.add_argument("--metric", choices=[m.name for m in Metric], default="cosine")
    build.add_argument("--batch-size", type=int, default=MAX_BATCH,
                       help=f"Texts per remote request, at most {MAX_BATCH}")
    build.add_argument("--out", required=True, help="Index file to write")
    build.set_defaults(func=cmd_build)

    search = subparsers.add_parser("search", help="Query an index")
    search.add_argument("--index", required=True)
    search.add_argument("--query", required=True)
    search.add_argument("--mode", choices=[m.value for m in Mode], default="raw")
    search.add_argument("--k", type=int, default=DEFAULT_SHORTLIST_K,
                        help="Shortlist size for assisted mode")
    search.add_argument("--n", type=int, default=DEFAULT_TOP_N,
                        help="Number of results")
    search.add_argument("--json", action="store_true", help="Print JSON")
    search.add_argument("--pad", action="store_true",
                        help="Pad short reranked selections from vector order")
    search.add_argument("--provider",
                        help="Chat provider: remote or scripted:<fixture.json>")
    search.add_argument("--csv", help="Read documents from this CSV instead of "
                                      "the index sidecar")
    search.add_argument("--id-col")
    search.add_argument("--text-cols")
    search.set_defaults(func=cmd_search)

    evaluate = subparsers.add_parser("eval", help="Compare raw and assisted search")
    evaluate.add_argument("--index", required=True)
    evaluate.add_argument("--csv", required=True)
    evaluate.add_argument("--id-col")
    evaluate.add_argument("--text-cols", help="Defaults to every non-id column")
    evaluate.add_argument("--queries", required=True, help="Judged queries JSON")
    evaluate.add_argument("--mode", choices=["raw", "assisted", "both"], default="both")
    evaluate.add_argument("--k", type=int, default=DEFAULT_SHORTLIST_K)
    evaluate.add_argument("--n", type=int, default=DEFAULT_TOP_N)
    evaluate.add_argument("--k-sweep", help="Comma separated shortlist sizes")
    evaluate.add_argument("--pad", action="store_true")
    evaluate.add_argument("--provider",
                          help="Chat provider: remote or scripted:<fixture.json>")
    evaluate.add_argument("--workers", type=int, default=1)
    evaluate.add_argument("--out", help="Report JSON file to write")
    evaluate.add_argument("--plot-dir", help="Directory for evaluation plots")
    evaluate.set_defaults(func=cmd_eval)

    inspect = subparsers.add_parser("inspect", help="Print an index header")
    inspect.add_argument("--index", required=True)
    inspect.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 1

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except RerankSearchError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
