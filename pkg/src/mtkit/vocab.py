"""BPE merge learning, encoding, and base-vocabulary extension.

Words carry a leading-of-word marker fused onto their first character, the
SentencePiece convention of the base model being extended. Merge learning is
greedy most-frequent-pair with lexicographic (left, right) tie-breaking so a
given corpus always yields a byte-identical table.
"""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .align import EmbeddingMatrix
from .ingest import SentenceRecord

log = logging.getLogger(__name__)

WORD_MARKER = "▁"
MERGES_HEADER_PREFIX = "mtkit-merges-v1"


@dataclass(frozen=True)
class MergeTable:
    merges: tuple[tuple[str, str], ...]
    alphabet: frozenset[str]
    alphabet_size: int
    vocab_size_target: int

    def rank_map(self) -> dict[tuple[str, str], int]:
        return {pair: rank for rank, pair in enumerate(self.merges)}


def word_symbols(word: str) -> tuple[str, ...]:
    """Split a word into initial symbols, marker fused to the first char."""
    if not word:
        return ()
    return (WORD_MARKER + word[0],) + tuple(word[1:])


def _pair_counts(symbols: Sequence[str]) -> Counter:
    return Counter(zip(symbols, symbols[1:]))


def train_bpe(corpus: Iterable[SentenceRecord], target_size: int,
              min_frequency: int = 2) -> MergeTable:
    """Greedy BPE over the corpus until target_size tokens exist.

    Pair counts are maintained incrementally: a merge touches only words that
    contain the pair, and each touched word contributes the exact count diff
    between its old and new symbol sequence.
    """
    word_freq: Counter = Counter()
    for record in corpus:
        word_freq.update(record.text.split())
    if not word_freq:
        raise ValueError("empty corpus")

    words: list[tuple[str, ...]] = []
    freqs: list[int] = []
    for word, freq in sorted(word_freq.items()):
        words.append(word_symbols(word))
        freqs.append(freq)

    alphabet = frozenset(sym for syms in words for sym in syms)
    if target_size < len(alphabet):
        raise ValueError(f"target_size {target_size} below alphabet size {len(alphabet)}")

    stats: Counter = Counter()
    where: defaultdict[tuple[str, str], set[int]] = defaultdict(set)
    for idx, syms in enumerate(words):
        for pair, n in _pair_counts(syms).items():
            stats[pair] += n * freqs[idx]
            where[pair].add(idx)

    vocab: set[str] = set(alphabet)
    merges: list[tuple[str, str]] = []
    while len(vocab) < target_size and stats:
        pair, count = min(stats.items(), key=lambda kv: (-kv[1], kv[0]))
        if count < min_frequency:
            break
        left, right = pair
        new_token = left + right
        merges.append(pair)
        vocab.add(new_token)
        for idx in sorted(where[pair]):
            old_syms = words[idx]
            new_syms = _merge_word(old_syms, left, right, new_token)
            freq = freqs[idx]
            old_counts = _pair_counts(old_syms)
            new_counts = _pair_counts(new_syms)
            for p in old_counts.keys() | new_counts.keys():
                delta = (new_counts.get(p, 0) - old_counts.get(p, 0)) * freq
                if delta:
                    stats[p] += delta
                    if stats[p] <= 0:
                        del stats[p]
                if new_counts.get(p, 0):
                    where[p].add(idx)
                elif idx in where[p]:
                    where[p].discard(idx)
            words[idx] = new_syms
        where.pop(pair, None)
        stats.pop(pair, None)

    return MergeTable(merges=tuple(merges), alphabet=alphabet,
                      alphabet_size=len(alphabet), vocab_size_target=target_size)


def _merge_word(syms: Sequence[str], left: str, right: str, new_token: str) -> tuple[str, ...]:
    """Replace (left, right) occurrences left to right without overlap."""
    out = []
    i = 0
    while i < len(syms):
        if i + 1 < len(syms) and syms[i] == left and syms[i + 1] == right:
            out.append(new_token)
            i += 2
        else:
            out.append(syms[i])
            i += 1
    return tuple(out)


def encode(merges: MergeTable, text: str) -> list[str]:
    """Tokenize text by applying merges in learned priority order."""
    ranks = merges.rank_map()
    tokens: list[str] = []
    for word in text.split():
        syms = list(word_symbols(word))
        while len(syms) > 1:
            best_rank = None
            best_pair = None
            for pair in zip(syms, syms[1:]):
                rank = ranks.get(pair)
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank = rank
                    best_pair = pair
            if best_pair is None:
                break
            syms = list(_merge_word(syms, best_pair[0], best_pair[1],
                                    best_pair[0] + best_pair[1]))
        tokens.extend(syms)
    return tokens


def detokenize(tokens: Iterable[str]) -> str:
    """Invert encode for marker-free normalized text."""
    return "".join(tokens).replace(WORD_MARKER, " ").strip()


def token_frequencies(merges: MergeTable, corpus: Iterable[SentenceRecord]) -> Counter:
    counts: Counter = Counter()
    for record in corpus:
        counts.update(encode(merges, record.text))
    return counts


def select_new_tokens(merges: MergeTable, corpus: Iterable[SentenceRecord],
                      base_tokens: Iterable[str], target_count: int) -> list[str]:
    """Most frequent encoded tokens absent from the base vocabulary."""
    base = set(base_tokens)
    counts = token_frequencies(merges, corpus)
    novel = [(tok, n) for tok, n in counts.items() if tok not in base]
    novel.sort(key=lambda kv: (-kv[1], kv[0]))
    return [tok for tok, _ in novel[:target_count]]


# --- merge table io ---------------------------------------------------------------

def save_merges(path: str | Path, table: MergeTable) -> None:
    lines = [f"{MERGES_HEADER_PREFIX} {table.alphabet_size}"]
    lines += [f"{left} {right}" for left, right in table.merges]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_merges(path: str | Path) -> MergeTable:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith(MERGES_HEADER_PREFIX):
        raise ValueError(f"{path}: missing merge-table header")
    alphabet_size = int(lines[0].split()[-1])
    merges = []
    for line_no, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(" ")
        if len(parts) != 2:
            raise ValueError(f"{path}:{line_no}: expected 'left right'")
        merges.append((parts[0], parts[1]))
    return MergeTable(merges=tuple(merges), alphabet=frozenset(),
                      alphabet_size=alphabet_size, vocab_size_target=0)


# --- vocabulary extension -----------------------------------------------------------

@dataclass(frozen=True)
class ExtendedVocab:
    """Base tokenizer vocabulary plus appended new-language tokens."""

    base_tokens: tuple[str, ...]
    base_specials: tuple[str, ...] = ()
    added_tokens: tuple[str, ...] = ()
    lang_token: str | None = None

    def __post_init__(self):
        if len(set(self.base_tokens)) != len(self.base_tokens):
            raise ValueError("duplicate base tokens")
        missing = [t for t in self.base_specials if t not in set(self.base_tokens)]
        if missing:
            raise ValueError(f"specials not in base vocabulary: {missing}")
        all_tokens = list(self.all_tokens())
        if len(set(all_tokens)) != len(all_tokens):
            raise ValueError("duplicate tokens across base, added, and lang token")

    def all_tokens(self) -> list[str]:
        out = list(self.base_tokens) + list(self.added_tokens)
        if self.lang_token is not None:
            out.append(self.lang_token)
        return out

    @property
    def total_size(self) -> int:
        return len(self.base_tokens) + len(self.added_tokens) + (self.lang_token is not None)

    def token_id(self, token: str) -> int:
        return self.all_tokens().index(token)


def extend_vocab(base: ExtendedVocab, new_tokens: Sequence[str], lang_token: str) -> ExtendedVocab:
    """Append novel tokens and the language token; base ids never move."""
    if base.added_tokens or base.lang_token is not None:
        raise ValueError("base vocabulary already extended")
    known = set(base.base_tokens)
    if lang_token in known:
        raise ValueError(f"lang token {lang_token!r} already present")
    added = []
    seen = set()
    dropped = 0
    for token in new_tokens:
        if token == lang_token:
            raise ValueError(f"lang token {lang_token!r} listed among new tokens")
        if token in known or token in seen:
            dropped += 1
            continue
        seen.add(token)
        added.append(token)
    if dropped:
        log.info("extend_vocab dropped %d tokens already present", dropped)
    return ExtendedVocab(base_tokens=base.base_tokens, base_specials=base.base_specials,
                         added_tokens=tuple(added), lang_token=lang_token)


def save_vocab(path: str | Path, vocab: ExtendedVocab) -> None:
    Path(path).write_text("\n".join(vocab.all_tokens()) + "\n", encoding="utf-8")


def load_token_list(path: str | Path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def save_vocab_manifest(path: str | Path, vocab: ExtendedVocab) -> None:
    """Structured form: keeps the base/specials/added/lang partition."""
    payload = {
        "base_tokens": list(vocab.base_tokens),
        "base_specials": list(vocab.base_specials),
        "added_tokens": list(vocab.added_tokens),
        "lang_token": vocab.lang_token,
    }
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")


def load_vocab_manifest(path: str | Path) -> ExtendedVocab:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return ExtendedVocab(
        base_tokens=tuple(payload["base_tokens"]),
        base_specials=tuple(payload["base_specials"]),
        added_tokens=tuple(payload["added_tokens"]),
        lang_token=payload["lang_token"],
    )


# --- embedding extension -------------------------------------------------------------

def init_embeddings(
    base_matrix: EmbeddingMatrix,
    vocab: ExtendedVocab,
    base_segmenter: Callable[[str], list[int]],
) -> EmbeddingMatrix:
    """Rows for added tokens are subtoken means; base rows stay bit-identical.

    Means accumulate in float64 and store as float32, so row order inside a
    segmentation cannot change the result beyond deterministic rounding.
    """
    if base_matrix.count != len(vocab.base_tokens):
        raise ValueError(
            f"base matrix has {base_matrix.count} rows for {len(vocab.base_tokens)} base tokens")
    rows = [np.array(base_matrix.rows, dtype=np.float32, copy=True)]
    for token in vocab.added_tokens:
        ids = base_segmenter(token)
        if not ids:
            raise ValueError(f"added token {token!r} has empty base segmentation")
        bad = [i for i in ids if not (0 <= i < base_matrix.count)]
        if bad:
            raise ValueError(f"added token {token!r} segmented to out-of-range ids {bad}")
        mean = base_matrix.rows[ids].astype(np.float64).mean(axis=0)
        rows.append(mean.astype(np.float32)[None, :])
    if vocab.lang_token is not None:
        if not vocab.base_specials:
            raise ValueError("lang token present but base vocabulary declares no specials")
        special_ids = [vocab.base_tokens.index(t) for t in vocab.base_specials]
        mean = base_matrix.rows[special_ids].astype(np.float64).mean(axis=0)
        rows.append(mean.astype(np.float32)[None, :])
    stacked = np.concatenate(rows, axis=0)
    key_map = {tok: i for i, tok in enumerate(vocab.all_tokens())}
    return EmbeddingMatrix(rows=stacked, key_map=key_map)


def greedy_segmenter(base_vocab: Sequence[str],
                     unk_token: str | None = None) -> Callable[[str], list[int]]:
    """Build a token-string → base-id segmenter via greedy longest match.

    Added tokens arrive with their word marker already fused, so segmentation
    runs over the raw token string. Characters not coverable by any base token
    map to unk_token when given, else raise.
    """
    base_ids = {tok: i for i, tok in enumerate(base_vocab)}

    def segment(token: str) -> list[int]:
        return _greedy_base_segment(token, base_ids, unk_token)

    return segment


def _greedy_base_segment(token: str, base_ids: dict[str, int],
                         unk_token: str | None) -> list[int]:
    ids: list[int] = []
    pos = 0
    while pos < len(token):
        match = None
        for end in range(len(token), pos, -1):
            piece = token[pos:end]
            if piece in base_ids:
                match = piece
                break
        if match is None:
            if unk_token is not None and unk_token in base_ids:
                ids.append(base_ids[unk_token])
                pos += 1
                continue
            raise ValueError(f"no base segmentation for {token!r} at offset {pos}")
        ids.append(base_ids[match])
        pos += len(match)
    return ids
