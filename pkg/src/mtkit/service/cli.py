"""Command line over every pipeline stage.

One subcommand per stage; every subcommand accepts --config (TOML or
JSON, sections named after the stages) and CLI flags override the file.
Exit codes: 0 success, 1 any violated invariant or missing input,
2 usage errors (argparse).
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from types import SimpleNamespace

from .. import align as align_mod
from .. import dataset, metrics, report, vocab
from ..ingest import (
    IngestError,
    Lang,
    SentenceRecord,
    SourceFormat,
    SourceTag,
    dedup,
    ingest_source,
    read_pairs,
    write_pairs,
)
from .annotation import AnnotationError, RatingStore, create_session, export_ratings
from .config import ConfigError, load_config, section

log = logging.getLogger(__name__)

RUN_DIRECTIONS = tuple(d.value for d in report.Direction)


# --- shared file helpers ---------------------------------------------------------------

def _must_exist(path: str | Path) -> Path:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    return path


def read_records(path: str | Path) -> list[SentenceRecord]:
    records = []
    with open(_must_exist(path), encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(SentenceRecord.from_dict(json.loads(line)))
    return records


def write_records(path: str | Path, records) -> int:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    return len(records)


def load_corpus_texts(paths, fmt: str, side: str) -> list:
    """Corpus rows for BPE work: anything with a .text attribute."""
    rows = []
    for path in paths:
        path = _must_exist(path)
        if fmt == "text":
            for line in path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rows.append(SimpleNamespace(text=line.strip()))
        elif fmt == "records":
            rows.extend(read_records(path))
        elif fmt == "pairs":
            for pair in read_pairs(path):
                if side in ("src", "both"):
                    rows.append(pair.src)
                if side in ("tgt", "both"):
                    rows.append(pair.tgt)
        else:
            raise ValueError(f"unknown corpus format: {fmt}")
    return rows


def parse_run_spec(spec: str) -> tuple[str, str, Path]:
    """NAME:DIRECTION=PATH, e.g. nllb-200:ce-ru=hyps.txt."""
    head, sep, path = spec.rpartition("=")
    if not sep:
        raise ValueError(f"bad --run spec (want NAME:DIRECTION=PATH): {spec!r}")
    name, sep, direction = head.rpartition(":")
    if not sep or direction not in RUN_DIRECTIONS:
        raise ValueError(
            f"bad --run spec, direction must be one of {RUN_DIRECTIONS}: {spec!r}")
    return name, direction, _must_exist(path)


def parse_refs_spec(spec: str) -> tuple[str, Path]:
    direction, sep, path = spec.partition("=")
    if not sep or direction not in RUN_DIRECTIONS:
        raise ValueError(f"bad --refs spec (want DIRECTION=PATH): {spec!r}")
    return direction, _must_exist(path)


# --- subcommands -------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    fmt = SourceFormat(args.format)
    if fmt == SourceFormat.MONOLINGUAL:
        lang_spec = Lang(args.src_lang)
    else:
        if args.tgt_lang is None:
            raise ValueError(f"--tgt-lang is required for format {fmt.value}")
        lang_spec = (Lang(args.src_lang), Lang(args.tgt_lang))
    out = ingest_source(_must_exist(args.input), fmt, SourceTag(args.source_tag), lang_spec)
    if fmt == SourceFormat.MONOLINGUAL:
        n = write_records(args.out, out)
        print(f"{n} sentence records -> {args.out}")
    else:
        if args.dedup:
            out = dedup(out)
        n = write_pairs(args.out, out)
        print(f"{n} pairs -> {args.out}")
    return 0


def cmd_align(args, config: dict) -> int:
    opts = section(config, "align", {
        "threshold": args.threshold,
        "skip_penalty": args.skip_penalty,
        "merge_penalty": args.merge_penalty,
        "margin_k": args.margin_k,
        "endpoint": args.endpoint,
        "batch_size": args.batch_size,
    })
    src = read_records(args.src_records)
    tgt = read_records(args.tgt_records)
    if opts.get("endpoint"):
        batch = int(opts.get("batch_size", 32))
        src_emb = align_mod.fetch_embeddings(opts["endpoint"], src, batch_size=batch)
        tgt_emb = align_mod.fetch_embeddings(opts["endpoint"], tgt, batch_size=batch)
    else:
        if not (args.src_emb and args.tgt_emb):
            raise ValueError("need --src-emb/--tgt-emb files or an [align] endpoint")
        src_emb = align_mod.load_embeddings(_must_exist(args.src_emb))
        tgt_emb = align_mod.load_embeddings(_must_exist(args.tgt_emb))
    sim = align_mod.cosine_matrix(src_emb, tgt_emb)
    scored = align_mod.margin_scores(sim, k=int(opts.get("margin_k", align_mod.DEFAULT_MARGIN_K)))
    path = align_mod.align_monotone(
        scored,
        skip_penalty=float(opts.get("skip_penalty", align_mod.DEFAULT_SKIP_PENALTY)),
        merge_penalty=float(opts.get("merge_penalty", align_mod.DEFAULT_MERGE_PENALTY)))
    pairs = align_mod.filter_pairs(
        path, src, tgt, threshold=float(opts.get("threshold", align_mod.DEFAULT_THRESHOLD)))
    n = write_pairs(args.out, pairs)
    print(f"{n} aligned pairs -> {args.out}")
    return 0


def cmd_vocab_train(args, config: dict) -> int:
    opts = section(config, "vocab", {
        "target_size": args.target_size,
        "min_frequency": args.min_frequency,
    })
    corpus = load_corpus_texts(args.corpus, args.corpus_format, args.side)
    if "target_size" not in opts:
        raise ValueError("--target-size is required (flag or [vocab] section)")
    table = vocab.train_bpe(
        corpus, int(opts["target_size"]), min_frequency=int(opts.get("min_frequency", 2)))
    vocab.save_merges(args.out, table)
    print(f"{len(table.merges)} merges, alphabet {table.alphabet_size} -> {args.out}")
    return 0


def cmd_vocab_extend(args) -> int:
    table = vocab.load_merges(_must_exist(args.merges))
    corpus = load_corpus_texts(args.corpus, args.corpus_format, args.side)
    base_tokens = vocab.load_token_list(_must_exist(args.base_vocab))
    specials = vocab.load_token_list(_must_exist(args.base_specials)) if args.base_specials else []
    base = vocab.ExtendedVocab(base_tokens=tuple(base_tokens), base_specials=tuple(specials))
    new_tokens = vocab.select_new_tokens(table, corpus, set(base_tokens), args.count)
    extended = vocab.extend_vocab(base, new_tokens, args.lang_token)
    vocab.save_vocab_manifest(args.out, extended)
    if args.tokens_out:
        vocab.save_vocab(args.tokens_out, extended)
    print(f"{len(extended.added_tokens)} added tokens + {args.lang_token} -> {args.out}")
    return 0


def cmd_embed_init(args) -> int:
    extended = vocab.load_vocab_manifest(_must_exist(args.vocab))
    base = align_mod.load_embeddings(_must_exist(args.base_emb),
                                     keys=list(extended.base_tokens))
    segmenter = vocab.greedy_segmenter(extended.base_tokens, unk_token=args.unk_token)
    matrix = vocab.init_embeddings(base, extended, segmenter)
    align_mod.save_embeddings(args.out, matrix)
    print(f"{matrix.count} x {matrix.dim} embedding matrix -> {args.out}")
    return 0


def cmd_augment(args) -> int:
    pairs = read_pairs(_must_exist(args.pairs))
    out = dataset.augment_consecutive(pairs, max_window=args.max_window)
    n = write_pairs(args.out, out)
    print(f"{n} pairs ({n - len(pairs)} merged windows) -> {args.out}")
    return 0


def cmd_split(args, config: dict) -> int:
    opts = section(config, "split", {
        "eval_size": args.eval_size,
        "seed": args.seed,
        "excluded_sources": args.exclude_sources,
    })
    pairs = read_pairs(_must_exist(args.pairs))
    excluded = opts.get("excluded_sources")
    if isinstance(excluded, str):
        excluded = [s for s in excluded.split(",") if s]
    kwargs = {}
    if excluded is not None:
        kwargs["excluded_sources"] = frozenset(SourceTag(s) for s in excluded)
    split = dataset.split_holdout(
        pairs,
        eval_size=int(opts.get("eval_size", dataset.DEFAULT_EVAL_SIZE)),
        seed=int(opts.get("seed", 0)),
        **kwargs)
    files = dataset.write_split(split, args.out_dir)
    print(f"train {len(split.train)}, eval {len(split.eval)} -> {files['manifest']}")
    return 0


def cmd_score(args, config: dict) -> int:
    opts = section(config, "metrics", {"tokenization": args.tokenization})
    tokenization = opts.get("tokenization", "intl")
    hyps = metrics.read_segments(_must_exist(args.hyp))
    refs = metrics.read_segments(_must_exist(args.ref))
    wanted = ("bleu", "chrf") if args.metric == "both" else (args.metric,)
    scores = {}
    if "bleu" in wanted:
        scores["bleu"] = metrics.bleu_corpus(hyps, refs, tokenization=tokenization)
    if "chrf" in wanted:
        scores["chrf"] = metrics.chrf_pp(hyps, refs)
    if len(wanted) == 1:
        print(f"{scores[wanted[0]].value:.2f}")
    else:
        for name in wanted:
            print(f"{name}\t{scores[name].value:.2f}")
    return 0


def _read_ratings_file(path: Path) -> list[tuple[str, str, int]]:
    ratings = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                row = json.loads(line)
                ratings.append((row["system"], row["direction"], int(row["score"])))
    return ratings


def cmd_report(args, config: dict) -> int:
    opts = section(config, "metrics", {"tokenization": args.tokenization})
    tokenization = opts.get("tokenization", "intl")
    refs = {}
    for spec in args.refs or []:
        direction, path = parse_refs_spec(spec)
        refs[report.Direction(direction)] = metrics.read_segments(path)
    runs = []
    for spec in args.run or []:
        name, direction, path = parse_run_spec(spec)
        runs.append(report.SystemRun.make(name, direction, metrics.read_segments(path)))

    documents = []
    if runs:
        table = report.model_comparison(runs, refs, tokenization=tokenization)
        documents.append(report.render(table, args.format))
    if args.eval_pairs and runs:
        pairs = read_pairs(_must_exist(args.eval_pairs))
        for run in runs:
            breakdown = report.per_source_breakdown(
                run, pairs, [r for r in refs[run.direction]], tokenization=tokenization)
            documents.append(report.render(breakdown, args.format))
    if args.ratings:
        human = report.human_eval_aggregate(_read_ratings_file(_must_exist(args.ratings)))
        documents.append(report.render(human, args.format))
    if not documents:
        raise ValueError("nothing to report: give --run and/or --ratings")

    text = "\n".join(documents)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"report -> {args.out}")
    else:
        print(text, end="" if text.endswith("\n") else "\n")
    return 0


def cmd_serve(args, config: dict) -> int:
    opts = section(config, "serve", {
        "host": args.host, "port": args.port,
        "token": args.token, "ui_dir": args.ui_dir,
    })
    store_path = section(config, "store", {"path": args.store}).get("path")
    if store_path is None:
        raise ValueError("--store is required (flag or [store] section)")
    from .server import create_app
    import uvicorn

    store = RatingStore(store_path)
    app = create_app(store, token=opts.get("token"), ui_dir=opts.get("ui_dir"))
    uvicorn.run(app, host=opts.get("host", "127.0.0.1"), port=int(opts.get("port", 8000)))
    return 0


def _systems_from_runs(specs) -> dict[str, dict[str, list[str]]]:
    systems: dict[str, dict[str, list[str]]] = {}
    for spec in specs:
        name, direction, path = parse_run_spec(spec)
        systems.setdefault(name, {})[direction] = metrics.read_segments(path)
    return systems


def cmd_anno_create(args, config: dict) -> int:
    opts = section(config, "session", {
        "per_system": args.per_system,
        "seed": args.seed,
        "allow_overlap": args.allow_overlap or None,
    })
    pairs = read_pairs(_must_exist(args.eval_pairs))
    systems = _systems_from_runs(args.run or [])
    store = RatingStore(args.store)
    session = create_session(
        args.annotator, pairs, systems,
        per_system=int(opts.get("per_system", 20)),
        seed=int(opts.get("seed", 0)),
        allow_overlap=bool(opts.get("allow_overlap", False)))
    store.add_session(session, force=args.force)
    print(f"session for {args.annotator}: {len(session.tasks)} tasks -> {args.store}")
    return 0


def cmd_anno_export(args) -> int:
    store = RatingStore(_must_exist(args.store))
    rows = export_ratings(store)
    out = Path(args.out)
    if out.suffix == ".csv":
        with open(out, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["system", "direction", "score"])
            writer.writerows(rows)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            for system, direction, score in rows:
                fh.write(json.dumps(
                    {"system": system, "direction": direction, "score": score},
                    ensure_ascii=False, sort_keys=True) + "\n")
    if args.compact:
        store.compact()
    print(f"{len(rows)} ratings -> {out}")
    return 0


# --- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mtkit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", default=None, help="TOML or JSON config file")
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, help="normalize one raw source into records or pairs")
    p.add_argument("--input", required=True)
    p.add_argument("--format", required=True, choices=[f.value for f in SourceFormat])
    p.add_argument("--source-tag", required=True, choices=[t.value for t in SourceTag])
    p.add_argument("--src-lang", required=True, choices=[l.value for l in Lang])
    p.add_argument("--tgt-lang", default=None, choices=[l.value for l in Lang])
    p.add_argument("--dedup", action="store_true")
    p.add_argument("--out", required=True)

    p = add("align", cmd_align, help="embed, margin-score, and monotone-align two sides")
    p.add_argument("--src-records", required=True)
    p.add_argument("--tgt-records", required=True)
    p.add_argument("--src-emb", default=None, help="EMB1 file (skip fetching)")
    p.add_argument("--tgt-emb", default=None)
    p.add_argument("--endpoint", default=None, help="embedding service base URL")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--skip-penalty", type=float, default=None)
    p.add_argument("--merge-penalty", type=float, default=None)
    p.add_argument("--margin-k", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("vocab-train", cmd_vocab_train, help="learn a BPE merge table")
    p.add_argument("--corpus", required=True, nargs="+")
    p.add_argument("--corpus-format", default="text", choices=["text", "records", "pairs"])
    p.add_argument("--side", default="src", choices=["src", "tgt", "both"])
    p.add_argument("--target-size", type=int, default=None)
    p.add_argument("--min-frequency", type=int, default=None)
    p.add_argument("--out", required=True)

    p = add("vocab-extend", cmd_vocab_extend, help="append new-language tokens to a base vocabulary")
    p.add_argument("--merges", required=True)
    p.add_argument("--corpus", required=True, nargs="+")
    p.add_argument("--corpus-format", default="text", choices=["text", "records", "pairs"])
    p.add_argument("--side", default="src", choices=["src", "tgt", "both"])
    p.add_argument("--base-vocab", required=True, help="one token per line")
    p.add_argument("--base-specials", default=None)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--lang-token", required=True)
    p.add_argument("--tokens-out", default=None)
    p.add_argument("--out", required=True, help="vocabulary manifest (json)")

    p = add("embed-init", cmd_embed_init, help="initialize embeddings for added tokens")
    p.add_argument("--base-emb", required=True, help="EMB1 matrix over the base vocabulary")
    p.add_argument("--vocab", required=True, help="vocabulary manifest from vocab-extend")
    p.add_argument("--unk-token", default=None)
    p.add_argument("--out", required=True)

    p = add("augment", cmd_augment, help="add merged consecutive-sentence windows")
    p.add_argument("--pairs", required=True)
    p.add_argument("--max-window", type=int, default=3)
    p.add_argument("--out", required=True)

    p = add("split", cmd_split, help="carve a seeded, leakage-checked eval set")
    p.add_argument("--pairs", required=True)
    p.add_argument("--eval-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--exclude-sources", default=None, help="comma-separated source tags")
    p.add_argument("--out-dir", required=True)

    p = add("score", cmd_score, help="BLEU / ChrF++ for a hypothesis file")
    p.add_argument("--hyp", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--metric", default="both", choices=["bleu", "chrf", "both"])
    p.add_argument("--tokenization", default=None, choices=["intl", "none"])

    p = add("report", cmd_report, help="comparison tables, breakdowns, human-eval aggregates")
    p.add_argument("--run", action="append", help="NAME:DIRECTION=HYP_FILE, repeatable")
    p.add_argument("--refs", action="append", help="DIRECTION=REF_FILE, repeatable")
    p.add_argument("--eval-pairs", default=None, help="pairs JSONL for per-source breakdowns")
    p.add_argument("--ratings", default=None, help="ratings JSONL for the human-eval table")
    p.add_argument("--tokenization", default=None, choices=["intl", "none"])
    p.add_argument("--format", default="markdown", choices=["markdown", "csv", "json"])
    p.add_argument("--out", default=None)

    p = add("serve", cmd_serve, help="run the blinded annotation service")
    p.add_argument("--store", default=None, help="rating journal path")
    p.add_argument("--host", default=None)
    p.add_argument("--port", type=int, default=None)
    p.add_argument("--token", default=None, help="shared annotator token")
    p.add_argument("--ui-dir", default=None, help="static UI bundle directory")

    p = add("anno-create", cmd_anno_create, help="create a blinded session for an annotator")
    p.add_argument("--store", required=True)
    p.add_argument("--annotator", required=True)
    p.add_argument("--eval-pairs", required=True)
    p.add_argument("--run", action="append", required=True,
                   help="NAME:DIRECTION=HYP_FILE, both directions per system")
    p.add_argument("--per-system", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--allow-overlap", action="store_true")
    p.add_argument("--force", action="store_true")

    p = add("anno-export", cmd_anno_export, help="resolve blinding and dump final ratings")
    p.add_argument("--store", required=True)
    p.add_argument("--out", required=True, help=".jsonl or .csv")
    p.add_argument("--compact", action="store_true")

    return parser


NEEDS_CONFIG = {cmd_align, cmd_vocab_train, cmd_split, cmd_score, cmd_report,
                cmd_serve, cmd_anno_create}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.func in NEEDS_CONFIG:
            return args.func(args, load_config(args.config))
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, IngestError, AnnotationError, dataset.SplitError,
            metrics.MetricInputError, align_mod.EmbeddingFormatError,
            align_mod.DimensionMismatchError, align_mod.ZeroNormRowError,
            ValueError, AssertionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
