"""Corpus assembly: window augmentation, holdout splitting, composition stats.

The split is a seeded Fisher-Yates walk over lexicographically sorted pair
ids; eligibility excludes merged pairs, configured sources, anything from a
document that contributed merged pairs, and text collisions with merged pairs
or already-picked eval pairs. A post-hoc leakage check re-verifies the final
split and raises on any violation.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, asdict
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Sequence

from .ingest import Lang, PairKind, ParallelPair, SentenceRecord, SourceTag, read_pairs, write_pairs

DEFAULT_EVAL_SIZE = 360
DEFAULT_EXCLUDED_SOURCES = frozenset({SourceTag.QURAN})
WORD_PHRASE_SOURCES = frozenset({SourceTag.DICTIONARIES, SourceTag.GATITOS, SourceTag.NUMBERS})

CATEGORY_WORD_PHRASE = "word_phrase"
CATEGORY_SENTENCE = "sentence"


def pair_category(pair: ParallelPair) -> str:
    """Length-category classification is by source, not by pair kind."""
    return CATEGORY_WORD_PHRASE if pair.source_tag in WORD_PHRASE_SOURCES else CATEGORY_SENTENCE


def word_count(text: str) -> int:
    return len(text.split())


def symbol_count(text: str) -> int:
    return sum(1 for ch in text if not ch.isspace())


def round_half_up(value: float, digits: int = 0) -> float:
    quantum = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


# --- augmentation ------------------------------------------------------------------

def augment_consecutive(pairs: Sequence[ParallelPair], max_window: int = 3) -> list[ParallelPair]:
    """Append merged windows (lengths 2..max_window) over consecutive runs.

    Runs are maximal stretches of contiguous src.seq_index within one doc_id.
    Originals are kept; merged pairs get kind=merged and space-joined texts.
    """
    if max_window < 2:
        raise ValueError("max_window must be at least 2")
    by_doc: dict[str, list[ParallelPair]] = {}
    for pair in pairs:
        by_doc.setdefault(pair.src.doc_id, []).append(pair)

    merged: list[ParallelPair] = []
    for doc_id, doc_pairs in by_doc.items():
        doc_pairs = sorted(doc_pairs, key=lambda p: p.src.seq_index)
        run: list[ParallelPair] = []
        runs: list[list[ParallelPair]] = []
        for pair in doc_pairs:
            if run and pair.src.seq_index != run[-1].src.seq_index + 1:
                runs.append(run)
                run = []
            run.append(pair)
        if run:
            runs.append(run)
        for run in runs:
            for size in range(2, max_window + 1):
                for start in range(0, len(run) - size + 1):
                    merged.append(_merge_window(run[start:start + size]))
    return list(pairs) + merged


def _merge_window(window: Sequence[ParallelPair]) -> ParallelPair:
    head = window[0]
    src_text = " ".join(p.src.text for p in window)
    tgt_text = " ".join(p.tgt.text for p in window)
    n = len(window)
    src = SentenceRecord(
        id=f"{head.src.id}+m{n}", text=src_text, lang=head.src.lang,
        source_tag=head.src.source_tag, doc_id=head.src.doc_id, seq_index=head.src.seq_index)
    tgt = SentenceRecord(
        id=f"{head.tgt.id}+m{n}", text=tgt_text, lang=head.tgt.lang,
        source_tag=head.tgt.source_tag, doc_id=head.tgt.doc_id, seq_index=head.tgt.seq_index)
    return ParallelPair(
        id=f"{head.id}+m{n}", src=src, tgt=tgt, source_tag=head.source_tag,
        kind=PairKind.MERGED, align_score=None)


# --- composition statistics -----------------------------------------------------------

@dataclass(frozen=True)
class CompositionStats:
    """Exact counts with percentage accessors; shares round only for display."""

    total_rows: int
    source_rows: dict[SourceTag, int]
    # lang -> category -> {"rows": n, "words": n, "symbols": n}
    lang_categories: dict[Lang, dict[str, dict[str, int]]]

    def source_row_shares(self) -> dict[SourceTag, float]:
        return {tag: 100.0 * n / self.total_rows for tag, n in self.source_rows.items()}

    def category_shares(self, lang: Lang, measure: str) -> dict[str, float]:
        cats = self.lang_categories[lang]
        total = sum(c[measure] for c in cats.values())
        if total == 0:
            return {cat: 0.0 for cat in cats}
        return {cat: 100.0 * c[measure] / total for cat, c in cats.items()}

    def rounded_source_rows(self) -> dict[SourceTag, int]:
        return {tag: int(round_half_up(v)) for tag, v in self.source_row_shares().items()}

    def rounded_category_shares(self, lang: Lang, measure: str) -> dict[str, int]:
        return {cat: int(round_half_up(v))
                for cat, v in self.category_shares(lang, measure).items()}

    def to_dict(self) -> dict:
        return {
            "total_rows": self.total_rows,
            "source_rows": {tag.value: n for tag, n in sorted(
                self.source_rows.items(), key=lambda kv: kv[0].value)},
            "lang_categories": {
                lang.value: {cat: dict(sorted(measures.items()))
                             for cat, measures in sorted(cats.items())}
                for lang, cats in sorted(self.lang_categories.items(), key=lambda kv: kv[0].value)
            },
        }


def _empty_cats() -> dict[str, dict[str, int]]:
    return {
        CATEGORY_WORD_PHRASE: {"rows": 0, "words": 0, "symbols": 0},
        CATEGORY_SENTENCE: {"rows": 0, "words": 0, "symbols": 0},
    }


def compute_stats(corpus: Sequence[ParallelPair]) -> CompositionStats:
    if not corpus:
        raise ValueError("empty corpus")
    source_rows: dict[SourceTag, int] = {}
    lang_categories: dict[Lang, dict[str, dict[str, int]]] = {}
    for pair in corpus:
        source_rows[pair.source_tag] = source_rows.get(pair.source_tag, 0) + 1
        cat = pair_category(pair)
        for record in (pair.src, pair.tgt):
            cats = lang_categories.setdefault(record.lang, _empty_cats())
            cell = cats[cat]
            cell["rows"] += 1
            cell["words"] += word_count(record.text)
            cell["symbols"] += symbol_count(record.text)
    return CompositionStats(total_rows=len(corpus), source_rows=source_rows,
                            lang_categories=lang_categories)


def source_distribution(corpus: Sequence[ParallelPair]) -> CompositionStats:
    return compute_stats(corpus)


def length_category_stats(corpus: Sequence[ParallelPair]) -> CompositionStats:
    return compute_stats(corpus)


# --- holdout split ---------------------------------------------------------------------

class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusSplit:
    train: list[ParallelPair]
    eval: list[ParallelPair]
    seed: int
    manifest: dict


def _fisher_yates(ids: list[str], seed: int) -> list[str]:
    rng = random.Random(seed)
    out = list(ids)
    for i in range(len(out) - 1, 0, -1):
        j = rng.randrange(i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def split_holdout(
    corpus: Sequence[ParallelPair],
    eval_size: int = DEFAULT_EVAL_SIZE,
    seed: int = 0,
    excluded_sources: frozenset[SourceTag] = DEFAULT_EXCLUDED_SOURCES,
) -> CorpusSplit:
    if eval_size < 0:
        raise SplitError("eval_size must be non-negative")
    if len(corpus) <= eval_size:
        raise SplitError(f"corpus of {len(corpus)} pairs cannot yield a {eval_size}-pair holdout")

    by_id = {pair.id: pair for pair in corpus}
    if len(by_id) != len(corpus):
        raise SplitError("duplicate pair ids in corpus")

    merged_docs = {p.src.doc_id for p in corpus if p.kind == PairKind.MERGED}
    merged_texts: set[str] = set()
    for p in corpus:
        if p.kind == PairKind.MERGED:
            merged_texts.add(p.src.text)
            merged_texts.add(p.tgt.text)

    order = _fisher_yates(sorted(by_id), seed)
    eval_ids: list[str] = []
    eval_texts: set[str] = set()
    for pid in order:
        if len(eval_ids) == eval_size:
            break
        pair = by_id[pid]
        if pair.kind == PairKind.MERGED:
            continue
        if pair.source_tag in excluded_sources:
            continue
        if pair.src.doc_id in merged_docs:
            continue
        if pair.src.text in merged_texts or pair.tgt.text in merged_texts:
            continue
        if pair.src.text in eval_texts or pair.tgt.text in eval_texts:
            continue
        eval_ids.append(pid)
        eval_texts.add(pair.src.text)
        eval_texts.add(pair.tgt.text)

    if len(eval_ids) < eval_size:
        raise SplitError(f"only {len(eval_ids)} eligible pairs for eval_size={eval_size}")

    eval_id_set = set(eval_ids)
    eval_pairs = [by_id[pid] for pid in eval_ids]
    train_pairs = [p for p in corpus if p.id not in eval_id_set]

    _assert_no_leakage(train_pairs, eval_pairs, excluded_sources)

    manifest = _build_manifest(train_pairs, eval_pairs, seed, eval_size, excluded_sources)
    return CorpusSplit(train=train_pairs, eval=eval_pairs, seed=seed, manifest=manifest)


def _assert_no_leakage(train: Sequence[ParallelPair], eval_pairs: Sequence[ParallelPair],
                       excluded_sources: frozenset[SourceTag]) -> None:
    """Re-verify every exclusion rule on the finished split."""
    train_ids = {p.id for p in train}
    train_tuples = {(p.src.text, p.tgt.text) for p in train}
    merged_docs = {p.src.doc_id for p in train if p.kind == PairKind.MERGED}
    merged_texts = set()
    for p in train:
        if p.kind == PairKind.MERGED:
            merged_texts.add(p.src.text)
            merged_texts.add(p.tgt.text)

    seen_eval_texts: set[str] = set()
    for p in eval_pairs:
        if p.id in train_ids:
            raise SplitError(f"pair id {p.id} in both splits")
        if (p.src.text, p.tgt.text) in train_tuples:
            raise SplitError(f"eval pair {p.id} duplicates a train pair's texts")
        if p.kind == PairKind.MERGED:
            raise SplitError(f"merged pair {p.id} in eval")
        if p.source_tag in excluded_sources:
            raise SplitError(f"excluded source {p.source_tag.value} in eval ({p.id})")
        if p.src.doc_id in merged_docs:
            raise SplitError(f"eval pair {p.id} comes from a merged-contributing doc")
        if p.src.text in merged_texts or p.tgt.text in merged_texts:
            raise SplitError(f"eval pair {p.id} shares text with a merged pair")
        if p.src.text in seen_eval_texts or p.tgt.text in seen_eval_texts:
            raise SplitError(f"eval pair {p.id} shares text with another eval pair")
        seen_eval_texts.add(p.src.text)
        seen_eval_texts.add(p.tgt.text)


def _source_counts(pairs: Sequence[ParallelPair]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for p in pairs:
        counts[p.source_tag.value] = counts.get(p.source_tag.value, 0) + 1
    return dict(sorted(counts.items()))


def _build_manifest(train, eval_pairs, seed, eval_size, excluded_sources) -> dict:
    return {
        "seed": seed,
        "eval_size": eval_size,
        "excluded_sources": sorted(t.value for t in excluded_sources),
        "train": {"count": len(train), "by_source": _source_counts(train)},
        "eval": {"count": len(eval_pairs), "by_source": _source_counts(eval_pairs)},
    }


def write_split(split: CorpusSplit, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": out / "train.jsonl",
        "eval": out / "eval.jsonl",
        "manifest": out / "manifest.json",
    }
    write_pairs(paths["train"], split.train)
    write_pairs(paths["eval"], split.eval)
    paths["manifest"].write_text(
        json.dumps(split.manifest, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return paths


def read_split(out_dir: str | Path) -> CorpusSplit:
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    return CorpusSplit(
        train=read_pairs(out / "train.jsonl"),
        eval=read_pairs(out / "eval.jsonl"),
        seed=manifest["seed"],
        manifest=manifest)


# --- recipe manifest ---------------------------------------------------------------------

@dataclass(frozen=True)
class RecipeManifest:
    """Published training/inference recipe, shipped as provenance metadata."""

    learning_rate: float = 1e-4
    batch_size: int = 64
    epochs: int = 9
    optimizer: str = "Adafactor"
    scheduler: str = "constant_with_warmup"
    weight_decay: float = 1e-3
    max_sequence_length: int = 128
    warmup_steps: int = 1500
    temperature: float = 1.0
    top_k: int = 50
    top_p: float = 1.0
    beam_width: int = 4
    repetition_penalty: float = 1.0
    max_output_length: int = 1024

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RecipeManifest":
        return cls(**json.loads(text))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "RecipeManifest":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
