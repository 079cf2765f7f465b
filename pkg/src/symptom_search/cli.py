"""Command line interface.

Subcommands: ingest, generate, retrieve, evaluate, pool.  Exit codes:
0 success, 1 usage error, 2 data error, 3 service error.  Output files
are write-once; pass --force to overwrite.  All randomness (the mock
completion client) hangs off a single --seed.
"""
from __future__ import annotations

import argparse
import configparser
import logging
import sys
from pathlib import Path
from typing import IO, Sequence

from . import __version__
from .completion import (
    DEFAULT_MAX_TOKENS,
    DEFAULT_RETRIES,
    DEFAULT_TEMPERATURE,
    MockCompletionClient,
    client_from_env,
)
from .corpus import (
    format_stats,
    ingest_directory,
    preprocess_corpus,
    write_corpus_file,
)
from .errors import DataFormatError, ServiceError
from .evaluation import (
    DEFAULT_NDCG_CUTOFF,
    DEFAULT_POOL_K,
    DEFAULT_PRECISION_CUTOFF,
    MODE_MAJORITY,
    MODES,
    aggregate,
    evaluate_run,
    format_report,
    pool_runs,
    read_qrels,
    write_pool,
)
from .language import make_detector
from .questionnaire import default_questionnaire_path, load_questionnaire
from .retrieval import (
    DEFAULT_PER_QUERY_K,
    DEFAULT_SYMPTOM_CAP,
    ORIGIN_FILTERS,
    RunConfig,
    build_run,
    read_run,
    write_run,
)
from .store import load_store
from .synthgen import (
    DEFAULT_MODEL_NAME,
    DEFAULT_N_PER_OPTION,
    ORIGIN_GENERATED,
    ORIGIN_ORIGINAL,
    GenerationConfig,
    PromptTemplate,
    QueryText,
    format_generation_report,
    generate_dataset,
    original_query_texts,
    query_file_line,
    read_query_file,
    write_query_file,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_SERVICE = 3


class _Parser(argparse.ArgumentParser):
    """argparse, but usage errors exit 1 instead of 2."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _open_output(path: str | Path, force: bool) -> IO[str]:
    path = Path(path)
    if path.exists() and not force:
        raise DataFormatError(f"output file {path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path.open("w", encoding="utf-8", newline="\n")


def _read_text(path: str | Path, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot read {what} {path}: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="symptom-search",
        description="Rank social-media sentences against questionnaire symptoms.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="log progress to stderr"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse per-user TREC files into the corpus file")
    p.add_argument("--corpus-dir", required=True, help="directory of per-user TREC files")
    p.add_argument("--out", required=True, help="canonical corpus file to write")
    p.add_argument("--stats-out", help="also write preprocessing statistics here")
    p.add_argument(
        "--detector",
        default="heuristic",
        help="language detector: 'heuristic' or 'external:CMD'",
    )
    p.add_argument("--jobs", type=int, default=1, help="parallel file parsers")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("generate", help="write the query file (originals or synthetic)")
    p.add_argument("--out", required=True, help="query file to write")
    p.add_argument(
        "--questionnaire",
        default=str(default_questionnaire_path()),
        help="questionnaire file (defaults to the bundled placeholder fixture)",
    )
    p.add_argument(
        "--origin",
        choices=(ORIGIN_GENERATED, ORIGIN_ORIGINAL),
        default=ORIGIN_GENERATED,
        help="write synthetic texts (default) or the verbatim response options",
    )
    p.add_argument("--mock", action="store_true", help="use the offline mock client")
    p.add_argument("--seed", type=int, default=0, help="seed for the mock client")
    p.add_argument(
        "--n", type=int, default=DEFAULT_N_PER_OPTION, help="texts per response option"
    )
    p.add_argument("--model", default=DEFAULT_MODEL_NAME, help="completion model name")
    p.add_argument("--temperature", type=float, default=DEFAULT_TEMPERATURE)
    p.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    p.add_argument("--retries", type=int, default=DEFAULT_RETRIES)
    p.add_argument("--template", help="prompt template file overriding the built-in one")
    p.add_argument("--report", help="write the generation report here")
    p.add_argument("--jobs", type=int, default=1, help="concurrent in-flight requests")
    p.add_argument("--force", action="store_true", help="start over instead of resuming")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("retrieve", help="build run files from embedding stores")
    p.add_argument("--config", help="declarative run configuration file")
    p.add_argument(
        "--queries",
        action="append",
        default=None,
        help="query file (repeatable; overrides the config)",
    )
    p.add_argument("--questionnaire", help="questionnaire file (overrides the config)")
    p.add_argument("--out-dir", help="directory for run files (overrides the config)")
    p.add_argument("--run-tag", help="single-run mode: run tag")
    p.add_argument(
        "--origin",
        choices=ORIGIN_FILTERS,
        default="all",
        help="single-run mode: which query origins to use",
    )
    p.add_argument("--encoder-label", default="semantic-search")
    p.add_argument("--corpus-emb", help="single-run mode: corpus embedding file")
    p.add_argument("--query-emb", help="single-run mode: query embedding file")
    p.add_argument("--k", type=int, default=DEFAULT_PER_QUERY_K, help="per-query depth")
    p.add_argument(
        "--cap", type=int, default=DEFAULT_SYMPTOM_CAP, help="entries kept per symptom"
    )
    p.add_argument("--out", help="single-run mode: run file to write")
    p.add_argument("--jobs", type=int, default=1, help="accepted for symmetry; retrieval is vectorized")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("evaluate", help="score a run file against qrels")
    p.add_argument("--run", required=True, help="run file")
    p.add_argument("--qrels", required=True, help="qrels file (extended or standard)")
    p.add_argument("--mode", choices=MODES, default=MODE_MAJORITY)
    p.add_argument("--precision-cutoff", type=int, default=DEFAULT_PRECISION_CUTOFF)
    p.add_argument("--ndcg-cutoff", type=int, default=DEFAULT_NDCG_CUTOFF)
    p.add_argument("--out", help="also write the report here")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("pool", help="pool the top-k of several runs for annotation")
    p.add_argument(
        "--runs", required=True, help="comma-separated run files to pool"
    )
    p.add_argument("--k", type=int, default=DEFAULT_POOL_K, help="pool depth per run")
    p.add_argument("--out", required=True, help="pool file to write")
    p.add_argument("--force", action="store_true", help="overwrite existing outputs")
    p.set_defaults(func=cmd_pool)

    return parser


def cmd_ingest(args: argparse.Namespace) -> int:
    try:
        detector = make_detector(args.detector)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from exc
    records = ingest_directory(args.corpus_dir, jobs=max(1, args.jobs))
    try:
        processed, stats = preprocess_corpus(records, detector)
    finally:
        close = getattr(detector, "close", None)
        if close is not None:
            close()
    with _open_output(args.out, args.force) as out:
        write_corpus_file(processed, out)
    stats_text = format_stats(stats)
    if args.stats_out:
        with _open_output(args.stats_out, args.force) as out:
            out.write(stats_text)
    sys.stdout.write(stats_text)
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    questionnaire = load_questionnaire(args.questionnaire)
    out_path = Path(args.out)

    if args.origin == ORIGIN_ORIGINAL:
        queries = original_query_texts(questionnaire)
        with _open_output(out_path, args.force) as out:
            write_query_file(queries, out)
        print(f"wrote {len(queries)} original queries to {out_path}")
        return EXIT_OK

    template = PromptTemplate(_read_text(args.template, "template")) if args.template else None
    cfg = GenerationConfig(
        n_per_option=args.n,
        model_name=args.model,
        temperature=args.temperature,
        max_tokens=args.max_tokens,
        in_flight=max(1, args.jobs),
    )

    existing: list[QueryText] = []
    skip: set[tuple[int, int]] = set()
    if out_path.exists():
        if args.force:
            out_path.unlink()
        else:
            with out_path.open("r", encoding="utf-8") as f:
                existing = read_query_file(f)
            skip = {
                (q.symptom_index, q.option_index)
                for q in existing
                if q.origin == ORIGIN_GENERATED
            }
            if skip:
                print(f"resuming: {len(skip)} options already in {out_path}")

    if args.mock:
        client = MockCompletionClient(seed=args.seed)
    else:
        client = client_from_env(retries=args.retries)

    out_path.parent.mkdir(parents=True, exist_ok=True)
    append = out_path.open("a", encoding="utf-8", newline="\n")
    try:
        def persist(outcome: object, queries: list[QueryText]) -> None:
            for q in queries:
                append.write(query_file_line(q) + "\n")
            append.flush()

        new_queries, report = generate_dataset(
            questionnaire, client, cfg, template=template, skip=skip, on_option=persist
        )
    finally:
        append.close()

    combined = sorted(
        existing + new_queries,
        key=lambda q: (q.symptom_index, q.option_index, q.origin, q.query_id),
    )
    with out_path.open("w", encoding="utf-8", newline="\n") as out:
        write_query_file(combined, out)

    if args.report:
        with _open_output(args.report, args.force) as out:
            out.write(format_generation_report(report))
    print(
        f"generated {len(new_queries)} texts over {len(report.options)} options "
        f"({report.total_calls} calls, {report.total_tokens} tokens); "
        f"file now holds {len(combined)} queries"
    )
    if report.shortfalls:
        print(f"shortfall on {len(report.shortfalls)} options", file=sys.stderr)
    failed = [o for o in report.options if o.failed]
    if failed:
        print(f"failed options: {len(failed)} (see report)", file=sys.stderr)
    return EXIT_OK


def _run_specs_from_config(path: str) -> tuple[dict[str, str], list[dict[str, str]]]:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as f:
            parser.read_file(f)
    except OSError as exc:
        raise DataFormatError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise DataFormatError(f"config {path}: {exc}") from exc
    pipeline = dict(parser["pipeline"]) if parser.has_section("pipeline") else {}
    specs: list[dict[str, str]] = []
    for section in parser.sections():
        if not section.startswith("run:"):
            continue
        spec = dict(parser[section])
        spec["run_tag"] = section[len("run:"):]
        specs.append(spec)
    if not specs:
        raise DataFormatError(f"config {path} defines no [run:TAG] sections")
    return pipeline, specs


def _spec_to_config(spec: dict[str, str]) -> RunConfig:
    try:
        return RunConfig(
            run_tag=spec["run_tag"],
            query_origin_filter=spec.get("origin", "all"),
            encoder_label=spec.get("encoder_label", "semantic-search"),
            per_query_k=int(spec.get("k", DEFAULT_PER_QUERY_K)),
            symptom_cap=int(spec.get("cap", DEFAULT_SYMPTOM_CAP)),
        )
    except ValueError as exc:
        raise DataFormatError(f"run {spec.get('run_tag')}: {exc}") from exc


def cmd_retrieve(args: argparse.Namespace) -> int:
    if args.config:
        pipeline, specs = _run_specs_from_config(args.config)
    elif args.run_tag:
        if not (args.corpus_emb and args.query_emb and args.out):
            raise DataFormatError(
                "single-run mode needs --corpus-emb, --query-emb, and --out"
            )
        pipeline = {}
        specs = [
            {
                "run_tag": args.run_tag,
                "origin": args.origin,
                "encoder_label": args.encoder_label,
                "corpus_embeddings": args.corpus_emb,
                "query_embeddings": args.query_emb,
                "k": str(args.k),
                "cap": str(args.cap),
                "out": args.out,
            }
        ]
    else:
        raise DataFormatError("pass --config FILE or --run-tag with single-run flags")

    questionnaire_path = args.questionnaire or pipeline.get("questionnaire") or str(
        default_questionnaire_path()
    )
    questionnaire = load_questionnaire(questionnaire_path)

    query_paths: list[str]
    if args.queries:
        query_paths = list(args.queries)
    elif pipeline.get("queries"):
        query_paths = [p.strip() for p in pipeline["queries"].split(",") if p.strip()]
    else:
        raise DataFormatError("no query file given (flag --queries or config queries=)")

    queries: list[QueryText] = []
    seen_ids: set[str] = set()
    for qpath in query_paths:
        try:
            with open(qpath, encoding="utf-8") as f:
                batch = read_query_file(f)
        except OSError as exc:
            raise DataFormatError(f"cannot read query file {qpath}: {exc}") from exc
        for q in batch:
            if q.query_id in seen_ids:
                raise DataFormatError(
                    f"query id {q.query_id!r} appears in more than one query file"
                )
            seen_ids.add(q.query_id)
        queries.extend(batch)
    if not any(q.origin == ORIGIN_ORIGINAL for q in queries):
        originals = original_query_texts(questionnaire)
        logger.info(
            "query files hold no original queries; adding %d from the questionnaire",
            len(originals),
        )
        queries = originals + queries

    out_dir = args.out_dir or pipeline.get("output_dir")
    stores: dict[str, object] = {}

    def store_for(path: str):
        if path not in stores:
            stores[path] = load_store(path)
        return stores[path]

    for spec in specs:
        cfg = _spec_to_config(spec)
        for key in ("corpus_embeddings", "query_embeddings"):
            if not spec.get(key):
                raise DataFormatError(f"run {cfg.run_tag}: missing {key}")
        corpus_store = store_for(spec["corpus_embeddings"])
        query_store = store_for(spec["query_embeddings"])
        entries = build_run(questionnaire, queries, corpus_store, query_store, cfg)
        out_path = spec.get("out")
        if not out_path:
            if not out_dir:
                raise DataFormatError(
                    f"run {cfg.run_tag}: no out= path and no output directory"
                )
            out_path = str(Path(out_dir) / f"{cfg.run_tag}.run")
        with _open_output(out_path, args.force) as out:
            write_run(entries, out)
        print(f"{cfg.run_tag}: {len(entries)} entries -> {out_path}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        with open(args.run, encoding="utf-8") as f:
            run = read_run(f)
    except OSError as exc:
        raise DataFormatError(f"cannot read run file {args.run}: {exc}") from exc
    try:
        with open(args.qrels, encoding="utf-8") as f:
            judgments = read_qrels(f)
    except OSError as exc:
        raise DataFormatError(f"cannot read qrels file {args.qrels}: {exc}") from exc
    qrels = aggregate(judgments, args.mode)
    report = evaluate_run(
        run,
        qrels,
        precision_cutoff=args.precision_cutoff,
        ndcg_cutoff=args.ndcg_cutoff,
    )
    text = format_report(report)
    if args.out:
        with _open_output(args.out, args.force) as out:
            out.write(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_pool(args: argparse.Namespace) -> int:
    runs = []
    for path in (p.strip() for p in args.runs.split(",")):
        if not path:
            continue
        try:
            with open(path, encoding="utf-8") as f:
                runs.append(read_run(f))
        except OSError as exc:
            raise DataFormatError(f"cannot read run file {path}: {exc}") from exc
    if not runs:
        raise DataFormatError("--runs named no files")
    pools = pool_runs(runs, k=args.k)
    with _open_output(args.out, args.force) as out:
        write_pool(pools, out)
    total = sum(len(docs) for docs in pools.values())
    print(f"pooled {total} (symptom, doc) pairs from {len(runs)} runs at depth {args.k}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return code if isinstance(code, int) else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except DataFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ServiceError as exc:
        print(f"service error: {exc}", file=sys.stderr)
        return EXIT_SERVICE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(main())
