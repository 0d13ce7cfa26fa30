"""Corpus BLEU and ChrF++, faithful to the standard scorer definitions.

BLEU: modified 1..4-gram precision with brevity penalty, exponential smoothing
for zero match counts, and the script-agnostic "intl" tokenization (Unicode
punctuation and symbols split off as separate tokens) by default.

ChrF++: character 1..6-grams (whitespace removed) plus word 1..2-grams, beta=2,
per-order F computed from corpus-aggregated counts and averaged over effective
orders; an eps-smoothing mode matches the original reference script.
"""

from __future__ import annotations

import functools
import math
import re
import sys
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

BLEU_ORDER = 4
CHRF_CHAR_ORDER = 6
CHRF_WORD_ORDER = 2
CHRF_BETA = 2


class MetricInputError(ValueError):
    pass


@dataclass(frozen=True)
class MetricScore:
    """A [0,100] score plus the sufficient statistics it was computed from."""

    value: float
    metric: str
    components: dict

    def to_dict(self) -> dict:
        return {"metric": self.metric, "value": self.value, "components": self.components}


# --- tokenization -------------------------------------------------------------

@functools.lru_cache(maxsize=4)
def _chars_in_categories(prefixes: tuple[str, ...]) -> str:
    return "".join(
        chr(cp) for cp in range(sys.maxunicode + 1)
        if unicodedata.category(chr(cp)).startswith(prefixes)
    )


@functools.lru_cache(maxsize=1)
def _intl_regexes() -> tuple[re.Pattern, re.Pattern, re.Pattern]:
    punct = re.escape(_chars_in_categories(("P",)))
    symbol = re.escape(_chars_in_categories(("S",)))
    number = re.escape(_chars_in_categories(("N",)))
    return (
        re.compile(f"([^{number}])([{punct}])"),
        re.compile(f"([{punct}])([^{number}])"),
        re.compile(f"([{symbol}])"),
    )


def tokenize_intl(text: str) -> list[str]:
    """Split punctuation and symbols into their own tokens, then whitespace.

    Punctuation whose existing neighbours are all numeric stays attached
    (decimal points, thousand separators, a trailing "3."), matching the
    international mteval convention.
    """
    nondigit_punct, punct_nondigit, symbol = _intl_regexes()
    text = nondigit_punct.sub(r"\1 \2 ", text)
    text = punct_nondigit.sub(r" \1 \2", text)
    text = symbol.sub(r" \1 ", text)
    return text.split()


def tokenize_whitespace(text: str) -> list[str]:
    return text.split()


_TOKENIZERS = {"intl": tokenize_intl, "whitespace": tokenize_whitespace}


# --- BLEU ---------------------------------------------------------------------

def _ngram_counts(tokens: Sequence[str], order: int) -> list[Counter]:
    """counts[n-1] maps n-gram tuple -> occurrences, for n = 1..order."""
    per_order: list[Counter] = []
    for n in range(1, order + 1):
        counts: Counter = Counter()
        for i in range(len(tokens) - n + 1):
            counts[tuple(tokens[i:i + n])] += 1
        per_order.append(counts)
    return per_order


def bleu_corpus(
    hyps: Sequence[str],
    refs: Sequence[str],
    tokenization: str = "intl",
    effective_order: bool = False,
) -> MetricScore:
    """Corpus BLEU over parallel hypothesis/reference segments.

    Zero match counts at some order are smoothed exponentially (the first
    zero-count order contributes 1/2, the next 1/4, ...). ``effective_order``
    restricts the geometric mean to orders with any hypothesis n-grams, the
    sentence-level convention.
    """
    if len(hyps) != len(refs):
        raise MetricInputError(f"hypothesis/reference count mismatch: {len(hyps)} vs {len(refs)}")
    if not hyps:
        raise MetricInputError("empty corpus")
    tokenize = _TOKENIZERS[tokenization]

    correct = [0] * BLEU_ORDER
    total = [0] * BLEU_ORDER
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_tokens = tokenize(hyp)
        ref_tokens = tokenize(ref)
        hyp_len += len(hyp_tokens)
        ref_len += len(ref_tokens)
        hyp_ngrams = _ngram_counts(hyp_tokens, BLEU_ORDER)
        ref_ngrams = _ngram_counts(ref_tokens, BLEU_ORDER)
        for n in range(BLEU_ORDER):
            total[n] += sum(hyp_ngrams[n].values())
            overlap = hyp_ngrams[n] & ref_ngrams[n]  # clipped counts
            correct[n] += sum(overlap.values())

    return _bleu_from_stats(correct, total, hyp_len, ref_len, tokenization, effective_order)


def _bleu_from_stats(
    correct: list[int],
    total: list[int],
    hyp_len: int,
    ref_len: int,
    tokenization: str,
    effective_order: bool,
) -> MetricScore:
    precisions = [0.0] * BLEU_ORDER
    smooth_denom = 1.0
    max_order = BLEU_ORDER
    if effective_order:
        max_order = max((n + 1 for n in range(BLEU_ORDER) if total[n] > 0), default=0)

    log_sum = 0.0
    degenerate = max_order == 0
    for n in range(max_order):
        if total[n] == 0:
            degenerate = True
            break
        if correct[n] == 0:
            smooth_denom *= 2.0
            precisions[n] = 1.0 / (smooth_denom * total[n])
        else:
            precisions[n] = correct[n] / total[n]
        log_sum += math.log(precisions[n])

    if hyp_len == 0:
        bp = 0.0
    elif hyp_len >= ref_len:
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)

    value = 0.0 if degenerate else 100.0 * bp * math.exp(log_sum / max_order)
    components = {
        "precisions": precisions,
        "correct": list(correct),
        "total": list(total),
        "bp": bp,
        "hyp_len": hyp_len,
        "ref_len": ref_len,
        "effective_order": max_order,
        "tokenization": tokenization,
    }
    return MetricScore(value=value, metric="bleu", components=components)


def recompute_bleu(score: MetricScore) -> float:
    """Recompute the BLEU value from stored components (audit path)."""
    c = score.components
    order = c["effective_order"]
    if order == 0 or any(p == 0.0 for p in c["precisions"][:order]):
        return 0.0
    log_sum = sum(math.log(p) for p in c["precisions"][:order])
    return 100.0 * c["bp"] * math.exp(log_sum / order)


# --- ChrF++ ---------------------------------------------------------------------

_CHRF_WS = re.compile(r"\s+")


def _char_ngrams(text: str, n: int) -> Counter:
    return Counter(text[i:i + n] for i in range(len(text) - n + 1))


def _word_ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _chrf_segment_stats(hyp: str, ref: str, char_order: int, word_order: int) -> list[int]:
    """Flattened [hyp_count, ref_count, match_count] per order (chars then words)."""
    stats: list[int] = []
    hyp_chars = _CHRF_WS.sub("", hyp)
    ref_chars = _CHRF_WS.sub("", ref)
    for n in range(1, char_order + 1):
        h = _char_ngrams(hyp_chars, n)
        r = _char_ngrams(ref_chars, n)
        stats += [sum(h.values()), sum(r.values()), sum((h & r).values())]
    hyp_words = hyp.split()
    ref_words = ref.split()
    for n in range(1, word_order + 1):
        h = _word_ngrams(hyp_words, n)
        r = _word_ngrams(ref_words, n)
        stats += [sum(h.values()), sum(r.values()), sum((h & r).values())]
    return stats


def _chrf_from_stats(
    stats: Sequence[int], char_order: int, word_order: int, beta: float, eps_smoothing: bool
) -> tuple[float, list[dict]]:
    eps = 1e-16
    factor = beta ** 2
    f_sum = 0.0
    effective = 0
    per_order = []
    for i in range(char_order + word_order):
        n_hyp, n_ref, n_match = stats[3 * i:3 * i + 3]
        prec = n_match / n_hyp if n_hyp > 0 else eps
        rec = n_match / n_ref if n_ref > 0 else eps
        denom = factor * prec + rec
        f_sum += ((1 + factor) * prec * rec / denom) if denom > 0 else eps
        if n_hyp > 0 and n_ref > 0:
            effective += 1
        per_order.append({
            "kind": "char" if i < char_order else "word",
            "n": i + 1 if i < char_order else i - char_order + 1,
            "hyp": n_hyp, "ref": n_ref, "match": n_match,
            "precision": prec, "recall": rec,
        })
    if eps_smoothing:
        return 100.0 * f_sum / (char_order + word_order), per_order
    if effective == 0:
        return 0.0, per_order
    return 100.0 * f_sum / effective, per_order


def chrf_pp(
    hyps: Sequence[str],
    refs: Sequence[str],
    char_order: int = CHRF_CHAR_ORDER,
    word_order: int = CHRF_WORD_ORDER,
    beta: float = CHRF_BETA,
    eps_smoothing: bool = False,
) -> MetricScore:
    """Corpus ChrF++ (character order 6, word order 2, beta 2 by default)."""
    if len(hyps) != len(refs):
        raise MetricInputError(f"hypothesis/reference count mismatch: {len(hyps)} vs {len(refs)}")
    if not hyps:
        raise MetricInputError("empty corpus")

    totals = [0] * (3 * (char_order + word_order))
    for hyp, ref in zip(hyps, refs):
        seg = _chrf_segment_stats(hyp, ref, char_order, word_order)
        for i, v in enumerate(seg):
            totals[i] += v

    value, per_order = _chrf_from_stats(totals, char_order, word_order, beta, eps_smoothing)
    components = {
        "per_order": per_order,
        "char_order": char_order,
        "word_order": word_order,
        "beta": beta,
        "eps_smoothing": eps_smoothing,
    }
    return MetricScore(value=value, metric="chrf++", components=components)


def recompute_chrf(score: MetricScore) -> float:
    c = score.components
    stats: list[int] = []
    for row in c["per_order"]:
        stats += [row["hyp"], row["ref"], row["match"]]
    value, _ = _chrf_from_stats(stats, c["char_order"], c["word_order"], c["beta"], c["eps_smoothing"])
    return value


def score_pair(hyp: str, ref: str, tokenization: str = "intl") -> tuple[MetricScore, MetricScore]:
    """Sentence-level BLEU (effective-order) and ChrF++ for one segment pair."""
    bleu = bleu_corpus([hyp], [ref], tokenization=tokenization, effective_order=True)
    chrf = chrf_pp([hyp], [ref])
    return bleu, chrf


def read_segments(path) -> list[str]:
    """One segment per line; parallel files must keep line numbering aligned."""
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]
