"""Embedding-driven monotone sentence alignment.

Embeddings come from outside (EMB1 files or an HTTP encoder service); this
module scores cross-document similarity, rescales it with a ratio margin, and
runs a monotone dynamic program over link types 1-1, 1-0, 0-1, 2-1, 1-2.
"""

from __future__ import annotations

import logging
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import requests

from .ingest import Lang, PairKind, ParallelPair, SentenceRecord

log = logging.getLogger(__name__)

EMB1_MAGIC = b"EMB1"
DEFAULT_SKIP_PENALTY = 0.1
DEFAULT_MERGE_PENALTY = 0.05
DEFAULT_MARGIN_K = 4
DEFAULT_THRESHOLD = 1.05


class EmbeddingFormatError(ValueError):
    """Base class for EMB1 decode failures."""


class BadMagicError(EmbeddingFormatError):
    pass


class TruncatedPayloadError(EmbeddingFormatError):
    pass


class ChecksumMismatchError(EmbeddingFormatError):
    pass


class NonFiniteValueError(EmbeddingFormatError):
    pass


class DimensionMismatchError(ValueError):
    pass


class ZeroNormRowError(ValueError):
    def __init__(self, side: str, row: int):
        super().__init__(f"zero-norm row {row} on side {side}")
        self.side = side
        self.row = row


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Immutable float32 sentence embeddings keyed by sentence id."""

    rows: np.ndarray
    key_map: dict[str, int]

    def __post_init__(self):
        if self.rows.ndim != 2:
            raise ValueError("rows must be a 2-d array")
        if self.rows.dtype != np.float32:
            raise ValueError("rows must be float32")
        if not np.isfinite(self.rows).all():
            raise NonFiniteValueError("embedding rows contain non-finite values")
        if sorted(self.key_map.values()) != list(range(self.count)):
            raise ValueError("key_map must be a bijection onto 0..count-1")

    @property
    def count(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def _default_keys(n: int) -> dict[str, int]:
    return {str(i): i for i in range(n)}


def make_matrix(rows: Iterable[Sequence[float]], keys: Sequence[str] | None = None,
                dim: int | None = None) -> EmbeddingMatrix:
    arr = np.asarray(list(rows), dtype=np.float32)
    if arr.size == 0:
        arr = arr.reshape(0, dim if dim is not None else 0)
    key_map = {k: i for i, k in enumerate(keys)} if keys is not None else _default_keys(len(arr))
    return EmbeddingMatrix(rows=arr, key_map=key_map)


# --- EMB1 file format ----------------------------------------------------------

def save_embeddings(path: str | Path, matrix: EmbeddingMatrix) -> None:
    payload = np.ascontiguousarray(matrix.rows, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(EMB1_MAGIC)
        fh.write(struct.pack("<II", matrix.count, matrix.dim))
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))


def load_embeddings(path: str | Path, keys: Sequence[str] | None = None) -> EmbeddingMatrix:
    """Decode an EMB1 file; each failure mode raises its own error class."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != EMB1_MAGIC:
        raise BadMagicError(f"{path}: expected magic {EMB1_MAGIC!r}")
    if len(raw) < 12:
        raise TruncatedPayloadError(f"{path}: header truncated at {len(raw)} bytes")
    count, dim = struct.unpack("<II", raw[4:12])
    body_len = count * dim * 4
    if len(raw) < 12 + body_len + 4:
        raise TruncatedPayloadError(
            f"{path}: need {12 + body_len + 4} bytes for count={count} dim={dim}, got {len(raw)}")
    payload = raw[12:12 + body_len]
    (stored_crc,) = struct.unpack("<I", raw[12 + body_len:16 + body_len])
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise ChecksumMismatchError(f"{path}: crc {actual_crc:#010x} != stored {stored_crc:#010x}")
    rows = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32)
    if not np.isfinite(rows).all():
        raise NonFiniteValueError(f"{path}: payload contains NaN or infinity")
    key_map = ({k: i for i, k in enumerate(keys)} if keys is not None else _default_keys(count))
    if len(key_map) != count:
        raise ValueError(f"{path}: {len(key_map)} keys for {count} rows")
    return EmbeddingMatrix(rows=rows, key_map=key_map)


# --- HTTP encoder client --------------------------------------------------------

def fetch_embeddings(
    endpoint: str,
    sentences: Sequence[SentenceRecord],
    batch_size: int = 32,
    max_retries: int = 4,
    backoff: float = 0.5,
    session: requests.Session | None = None,
) -> EmbeddingMatrix:
    """POST /embed in batches, one row per sentence in input order.

    Transient failures (connection errors, 5xx) are retried with exponential
    backoff; a dim change across batches is an error.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be positive")
    sess = session or requests.Session()
    url = endpoint.rstrip("/") + "/embed"
    chunks: list[np.ndarray] = []
    dim: int | None = None
    for start in range(0, len(sentences), batch_size):
        batch = sentences[start:start + batch_size]
        body = {"texts": [s.text for s in batch], "lang": batch[0].lang.value}
        data = _post_with_retries(sess, url, body, max_retries, backoff)
        vectors = np.asarray(data["vectors"], dtype=np.float32)
        got_dim = int(data["dim"])
        if vectors.shape != (len(batch), got_dim):
            raise DimensionMismatchError(
                f"batch at {start}: server sent shape {vectors.shape}, declared dim {got_dim}")
        if dim is None:
            dim = got_dim
        elif got_dim != dim:
            raise DimensionMismatchError(f"batch at {start}: dim changed {dim} -> {got_dim}")
        chunks.append(vectors)
    rows = np.concatenate(chunks, axis=0) if chunks else np.zeros((0, dim or 0), dtype=np.float32)
    return EmbeddingMatrix(rows=rows, key_map={s.id: i for i, s in enumerate(sentences)})


def _post_with_retries(sess, url, body, max_retries, backoff):
    attempt = 0
    while True:
        try:
            resp = sess.post(url, json=body, timeout=30)
            if resp.status_code >= 500:
                raise requests.ConnectionError(f"server error {resp.status_code}")
            resp.raise_for_status()
            return resp.json()
        except (requests.ConnectionError, requests.Timeout) as exc:
            attempt += 1
            if attempt > max_retries:
                raise ConnectionError(f"{url}: giving up after {max_retries} retries") from exc
            delay = backoff * (2 ** (attempt - 1))
            log.warning("embed request failed (%s), retry %d in %.1fs", exc, attempt, delay)
            time.sleep(delay)


# --- similarity ------------------------------------------------------------------

def cosine_matrix(a: EmbeddingMatrix, b: EmbeddingMatrix) -> np.ndarray:
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dim mismatch: {a.dim} vs {b.dim}")
    norms_a = np.linalg.norm(a.rows.astype(np.float64), axis=1)
    norms_b = np.linalg.norm(b.rows.astype(np.float64), axis=1)
    for side, norms in (("a", norms_a), ("b", norms_b)):
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ZeroNormRowError(side, int(zero[0]))
    sim = (a.rows.astype(np.float64) / norms_a[:, None]) @ (b.rows.astype(np.float64) / norms_b[:, None]).T
    return np.clip(sim, -1.0, 1.0)


def margin_scores(sim: np.ndarray, k: int = DEFAULT_MARGIN_K) -> np.ndarray:
    """Ratio margin: sim(i,j) over the mean of each side's k nearest sims."""
    n, m = sim.shape
    if not (1 <= k <= min(n, m)):
        raise ValueError(f"k={k} out of range for {n}x{m} matrix")
    # mean of the k largest entries per row / per column
    row_top = np.sort(sim, axis=1)[:, m - k:].mean(axis=1)
    col_top = np.sort(sim, axis=0)[n - k:, :].mean(axis=0)
    denom = (row_top[:, None] + col_top[None, :]) / 2.0
    out = np.zeros_like(sim, dtype=np.float64)
    np.divide(sim, denom, out=out, where=denom != 0)
    return out


# --- monotone DP -----------------------------------------------------------------

@dataclass(frozen=True)
class Link:
    src_span: tuple[int, int]
    tgt_span: tuple[int, int]
    score: float

    @property
    def is_skip(self) -> bool:
        return self.src_span[0] == self.src_span[1] or self.tgt_span[0] == self.tgt_span[1]


@dataclass(frozen=True)
class AlignmentPath:
    links: tuple[Link, ...]
    total_score: float

    def __post_init__(self):
        prev_i = prev_j = 0
        for link in self.links:
            i0, i1 = link.src_span
            j0, j1 = link.tgt_span
            if not (i0 == prev_i and j0 == prev_j and i1 >= i0 and j1 >= j0):
                raise ValueError(f"non-monotone or overlapping link {link}")
            if i1 - i0 > 2 or j1 - j0 > 2 or (i1 == i0 and j1 == j0):
                raise ValueError(f"bad span sizes in {link}")
            prev_i, prev_j = i1, j1

    @property
    def covered_src(self) -> set[int]:
        return {i for link in self.links for i in range(*link.src_span)}

    @property
    def covered_tgt(self) -> set[int]:
        return {j for link in self.links for j in range(*link.tgt_span)}


def align_monotone(
    scores: np.ndarray,
    skip_penalty: float = DEFAULT_SKIP_PENALTY,
    merge_penalty: float = DEFAULT_MERGE_PENALTY,
) -> AlignmentPath:
    """Best monotone cover of both sides under {1-1, 1-0, 0-1, 2-1, 1-2} links.

    Objective is lexicographic: total score, then more 1-1 links, then fewer
    links, then the lexicographically smallest (src_span, tgt_span) sequence.
    A suffix DP computes the first three; a forward walk that always takes the
    span-smallest optimal move settles the last.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError("score matrix must be 2-d")
    if scores.size and not np.isfinite(scores).all():
        raise ValueError("score matrix contains non-finite values")
    n, m = scores.shape

    # best[(i, j)] = (suffix score, suffix 1-1 count, -suffix link count)
    best: dict[tuple[int, int], tuple[float, int, int]] = {(n, m): (0.0, 0, 0)}
    for i in range(n, -1, -1):
        for j in range(m, -1, -1):
            if i == n and j == m:
                continue
            cand = []
            for value, n11, ni, nj in _moves(scores, i, j, n, m, skip_penalty, merge_penalty):
                tail = best[(ni, nj)]
                cand.append((value + tail[0], n11 + tail[1], tail[2] - 1))
            best[(i, j)] = max(cand)

    links = []
    i = j = 0
    while (i, j) != (n, m):
        target = best[(i, j)]
        chosen = None
        for value, n11, ni, nj in _moves_span_order(scores, i, j, n, m, skip_penalty, merge_penalty):
            tail = best[(ni, nj)]
            if (value + tail[0], n11 + tail[1], tail[2] - 1) == target:
                chosen = (value, ni, nj)
                break
        assert chosen is not None, "forward walk lost the optimal path"
        value, ni, nj = chosen
        links.append(Link(src_span=(i, ni), tgt_span=(j, nj), score=value))
        i, j = ni, nj
    return AlignmentPath(links=tuple(links), total_score=best[(0, 0)][0])


def _moves(scores, i, j, n, m, skip_penalty, merge_penalty):
    """Yield (link value, 1-1 count, next_i, next_j) for every legal link at (i, j)."""
    if i < n and j < m:
        yield scores[i, j], 1, i + 1, j + 1
    if i < n:
        yield -skip_penalty, 0, i + 1, j
    if j < m:
        yield -skip_penalty, 0, i, j + 1
    if i + 1 < n and j < m:
        yield (scores[i, j] + scores[i + 1, j]) / 2.0 - merge_penalty, 0, i + 2, j + 1
    if i < n and j + 1 < m:
        yield (scores[i, j] + scores[i, j + 1]) / 2.0 - merge_penalty, 0, i + 1, j + 2


def _moves_span_order(scores, i, j, n, m, skip_penalty, merge_penalty):
    """Same moves ordered by ((i, next_i), (j, next_j)) ascending."""
    moves = list(_moves(scores, i, j, n, m, skip_penalty, merge_penalty))
    return sorted(moves, key=lambda mv: ((i, mv[2]), (j, mv[3])))


# --- emission --------------------------------------------------------------------

def filter_pairs(
    path: AlignmentPath,
    src: Sequence[SentenceRecord],
    tgt: Sequence[SentenceRecord],
    threshold: float = DEFAULT_THRESHOLD,
) -> list[ParallelPair]:
    """Emit non-skip links scoring at or above threshold as sentence pairs."""
    pairs = []
    for link in path.links:
        if link.is_skip or link.score < threshold:
            continue
        i0, i1 = link.src_span
        j0, j1 = link.tgt_span
        src_records = src[i0:i1]
        tgt_records = tgt[j0:j1]
        head_s, head_t = src_records[0], tgt_records[0]
        merged_src = " ".join(r.text for r in src_records)
        merged_tgt = " ".join(r.text for r in tgt_records)
        pair_src = SentenceRecord(
            id=head_s.id, text=merged_src, lang=head_s.lang,
            source_tag=head_s.source_tag, doc_id=head_s.doc_id, seq_index=head_s.seq_index)
        pair_tgt = SentenceRecord(
            id=head_t.id, text=merged_tgt, lang=head_t.lang,
            source_tag=head_t.source_tag, doc_id=head_t.doc_id, seq_index=head_t.seq_index)
        if pair_src.lang != Lang.CE and pair_tgt.lang == Lang.CE:
            pair_src, pair_tgt = pair_tgt, pair_src
        pairs.append(ParallelPair(
            id=f"{pair_src.source_tag.value}:{pair_src.doc_id}:{pair_src.seq_index}",
            src=pair_src, tgt=pair_tgt,
            source_tag=pair_src.source_tag, kind=PairKind.SENTENCE,
            align_score=min(1.0, max(0.0, link.score)),
        ))
    return pairs
