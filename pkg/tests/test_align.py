"""Embedding io, similarity, margin rescoring, and the monotone aligner."""

import http.server
import json
import random
import threading

import numpy as np
import pytest

from mtkit.align import (
    AlignmentPath,
    BadMagicError,
    ChecksumMismatchError,
    DimensionMismatchError,
    EmbeddingMatrix,
    Link,
    NonFiniteValueError,
    TruncatedPayloadError,
    ZeroNormRowError,
    align_monotone,
    cosine_matrix,
    fetch_embeddings,
    filter_pairs,
    load_embeddings,
    make_matrix,
    margin_scores,
    save_embeddings,
)
from mtkit.ingest import Lang, SentenceRecord, SourceTag

from fixture_gen import dyadic_matrix, dyadic_penalties, planted_alignment_case
from oracles import oracle_best_alignment


# --- EMB1 io --------------------------------------------------------------------

def test_emb1_roundtrip(tmp_path):
    matrix = make_matrix([[1.0, 0.0, 0.5], [0.25, -1.0, 2.0]], keys=["a", "b"])
    path = tmp_path / "m.emb1"
    save_embeddings(path, matrix)
    back = load_embeddings(path, keys=["a", "b"])
    assert back.count == 2 and back.dim == 3
    assert np.array_equal(back.rows, matrix.rows)
    assert back.key_map == {"a": 0, "b": 1}


def test_emb1_bad_magic(tmp_path):
    path = tmp_path / "x.emb1"
    path.write_bytes(b"XXXX" + bytes(12))
    with pytest.raises(BadMagicError):
        load_embeddings(path)


def test_emb1_truncated(tmp_path):
    matrix = make_matrix([[1.0, 2.0, 3.0]])
    path = tmp_path / "t.emb1"
    save_embeddings(path, matrix)
    data = path.read_bytes()
    path.write_bytes(data[:-6])
    with pytest.raises(TruncatedPayloadError):
        load_embeddings(path)


def test_emb1_checksum(tmp_path):
    matrix = make_matrix([[1.0, 2.0, 3.0]])
    path = tmp_path / "c.emb1"
    save_embeddings(path, matrix)
    data = bytearray(path.read_bytes())
    data[14] ^= 0xFF  # flip a payload byte, keep length
    path.write_bytes(bytes(data))
    with pytest.raises(ChecksumMismatchError):
        load_embeddings(path)


def test_emb1_non_finite(tmp_path):
    import struct
    import zlib

    payload = struct.pack("<3f", 1.0, float("nan"), 2.0)
    blob = b"EMB1" + struct.pack("<II", 1, 3) + payload + struct.pack("<I", zlib.crc32(payload))
    path = tmp_path / "n.emb1"
    path.write_bytes(blob)
    with pytest.raises(NonFiniteValueError):
        load_embeddings(path)


def test_error_classes_are_distinct():
    classes = {BadMagicError, TruncatedPayloadError, ChecksumMismatchError, NonFiniteValueError}
    assert len(classes) == 4


# --- HTTP client ------------------------------------------------------------------

class _EmbedHandler(http.server.BaseHTTPRequestHandler):
    fail_first = 0
    requests_seen = []

    def do_POST(self):
        cls = type(self)
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        cls.requests_seen.append(body)
        if cls.fail_first > 0:
            cls.fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        dim = 4
        vectors = [[float(len(t)), 1.0, 0.0, float(i)] for i, t in enumerate(body["texts"])]
        out = json.dumps({"dim": dim, "vectors": vectors}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(out)))
        self.end_headers()
        self.wfile.write(out)

    def log_message(self, *args):
        pass


@pytest.fixture()
def embed_server():
    _EmbedHandler.fail_first = 0
    _EmbedHandler.requests_seen = []
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _EmbedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


def _sentences(texts, lang=Lang.CE):
    return [
        SentenceRecord(id=f"s{i}", text=t, lang=lang, source_tag=SourceTag.NEWS,
                       doc_id="d", seq_index=i)
        for i, t in enumerate(texts)
    ]


def test_fetch_batches_preserve_order(embed_server):
    sentences = _sentences(["аб", "вгде", "ж"])
    matrix = fetch_embeddings(embed_server, sentences, batch_size=2)
    assert matrix.count == 3 and matrix.dim == 4
    assert len(_EmbedHandler.requests_seen) == 2
    assert _EmbedHandler.requests_seen[0]["texts"] == ["аб", "вгде"]
    assert _EmbedHandler.requests_seen[1]["texts"] == ["ж"]
    # row i corresponds to sentence i
    assert matrix.rows[0][0] == 2.0 and matrix.rows[1][0] == 4.0 and matrix.rows[2][0] == 1.0
    assert matrix.key_map == {"s0": 0, "s1": 1, "s2": 2}


def test_fetch_empty_list(embed_server):
    matrix = fetch_embeddings(embed_server, [])
    assert matrix.count == 0


def test_fetch_retries_transient_failures(embed_server):
    _EmbedHandler.fail_first = 2
    sentences = _sentences(["аб"])
    matrix = fetch_embeddings(embed_server, sentences, backoff=0.01)
    assert matrix.count == 1
    assert len(_EmbedHandler.requests_seen) == 3


def test_fetch_gives_up_after_retries(embed_server):
    _EmbedHandler.fail_first = 99
    with pytest.raises(ConnectionError):
        fetch_embeddings(embed_server, _sentences(["аб"]), max_retries=2, backoff=0.01)


# --- cosine ----------------------------------------------------------------------

def test_cosine_identity_and_orthogonal():
    a = make_matrix([[1.0, 0.0], [0.0, 1.0]])
    sim = cosine_matrix(a, a)
    assert sim[0, 0] == pytest.approx(1.0)
    assert sim[0, 1] == pytest.approx(0.0)


def test_cosine_hand_value():
    a = make_matrix([[1.0, 1.0]])
    b = make_matrix([[1.0, 0.0]])
    assert cosine_matrix(a, b)[0, 0] == pytest.approx(1 / 2 ** 0.5, abs=1e-6)


def test_cosine_unit_diagonal_random():
    rng = np.random.default_rng(7)
    rows = rng.normal(size=(20, 8)).astype(np.float32)
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    a = make_matrix(rows)
    sim = cosine_matrix(a, a)
    assert np.allclose(np.diag(sim), 1.0, atol=1e-5)
    assert sim.min() >= -1.0 and sim.max() <= 1.0


def test_cosine_dim_mismatch():
    with pytest.raises(DimensionMismatchError):
        cosine_matrix(make_matrix([[1.0, 0.0]]), make_matrix([[1.0, 0.0, 0.0]]))


def test_cosine_zero_norm_reports_row():
    a = make_matrix([[1.0, 0.0], [0.0, 0.0]])
    with pytest.raises(ZeroNormRowError) as err:
        cosine_matrix(a, a)
    assert err.value.row == 1


# --- margin ----------------------------------------------------------------------

def test_margin_1x1():
    assert margin_scores(np.array([[0.7]]), k=1)[0, 0] == pytest.approx(1.0)


def test_margin_identity_2x2():
    sim = np.eye(2)
    out = margin_scores(sim, k=1)
    assert out[0, 0] == pytest.approx(1.0)
    assert out[0, 1] == pytest.approx(0.0)


def test_margin_hand_value():
    sim = np.array([[0.9, 0.1], [0.2, 0.8]])
    out = margin_scores(sim, k=2)
    row_mean = (0.9 + 0.1) / 2
    col_mean = (0.9 + 0.2) / 2
    assert out[0, 0] == pytest.approx(0.9 / ((row_mean + col_mean) / 2))


def test_margin_scale_invariant():
    rng = np.random.default_rng(3)
    sim = rng.uniform(0.0, 1.0, size=(6, 5))
    base = margin_scores(sim, k=3)
    for c in (0.5, 2.0, 10.0):
        assert np.allclose(margin_scores(c * sim, k=3), base, atol=1e-12)


def test_margin_k_out_of_range():
    with pytest.raises(ValueError):
        margin_scores(np.eye(3), k=4)
    with pytest.raises(ValueError):
        margin_scores(np.eye(3), k=0)


# --- monotone DP -------------------------------------------------------------------

def path_spans(path: AlignmentPath):
    return [(link.src_span, link.tgt_span) for link in path.links]


def test_diagonal_dominant_all_one_one():
    path = align_monotone(np.eye(3))
    assert path_spans(path) == [((0, 1), (0, 1)), ((1, 2), (1, 2)), ((2, 3), (2, 3))]
    assert path.total_score == pytest.approx(3.0)


def test_one_by_zero_is_skip():
    path = align_monotone(np.zeros((1, 0)))
    assert path_spans(path) == [((0, 1), (0, 0))]
    assert path.links[0].is_skip


def test_empty_both_sides():
    path = align_monotone(np.zeros((0, 0)))
    assert path.links == ()
    assert path.total_score == 0.0


def test_merge_wins_when_two_rows_match_one_column():
    # both rows similar to the single column: 2-1 merge beats 1-1 plus skip
    scores = np.array([[0.9], [0.9]])
    path = align_monotone(scores, skip_penalty=0.3, merge_penalty=0.05)
    assert path_spans(path) == [((0, 2), (0, 1))]


def test_structural_invariants_random():
    rng = random.Random(11)
    for _ in range(50):
        n, m = rng.randint(0, 6), rng.randint(0, 6)
        scores = np.array(dyadic_matrix(rng, n, m)).reshape(n, m)
        path = align_monotone(scores)
        covered_src = sorted(path.covered_src)
        covered_tgt = sorted(path.covered_tgt)
        assert covered_src == list(range(n))
        assert covered_tgt == list(range(m))


def test_dp_matches_brute_force_exactly():
    rng = random.Random(20260816)
    checked = 0
    for _ in range(250):
        n, m = rng.randint(0, 6), rng.randint(0, 6)
        grid = dyadic_matrix(rng, n, m)
        skip, merge = dyadic_penalties(rng)
        scores = np.array(grid, dtype=np.float64).reshape(n, m)
        path = align_monotone(scores, skip_penalty=skip, merge_penalty=merge)
        want_path, want_score = oracle_best_alignment(grid, merge, skip, shape=(n, m))
        assert path_spans(path) == want_path, (grid, skip, merge)
        assert path.total_score == want_score
        checked += 1
    assert checked == 250


def test_planted_alignment_recovery():
    src, tgt, src_m, tgt_m, planted = planted_alignment_case(seed=5)
    sim = cosine_matrix(src_m, tgt_m)
    margins = margin_scores(sim)
    path = align_monotone(margins)
    found = {(l.src_span[0], l.tgt_span[0]) for l in path.links
             if l.src_span[1] - l.src_span[0] == 1 and l.tgt_span[1] - l.tgt_span[0] == 1}
    recovered = len(planted & found) / len(planted)
    assert recovered >= 0.95


# --- filter_pairs ------------------------------------------------------------------

def _records(n, lang, tag=SourceTag.FICTION):
    return [
        SentenceRecord(id=f"{lang.value}{i}", text=f"текст {i}", lang=lang,
                       source_tag=tag, doc_id="d", seq_index=i)
        for i in range(n)
    ]


def test_filter_threshold_above_max_is_empty():
    path = align_monotone(np.eye(2))
    out = filter_pairs(path, _records(2, Lang.CE), _records(2, Lang.RU), threshold=2.0)
    assert out == []


def test_filter_minus_inf_keeps_all_non_skips():
    path = align_monotone(np.eye(2))
    out = filter_pairs(path, _records(2, Lang.CE), _records(2, Lang.RU),
                       threshold=float("-inf"))
    assert len(out) == 2
    assert all(p.kind.value == "sentence" for p in out)
    assert all(p.align_score is not None for p in out)


def test_filter_merges_join_with_space():
    path = AlignmentPath(
        links=(Link(src_span=(0, 2), tgt_span=(0, 1), score=0.9),),
        total_score=0.9)
    out = filter_pairs(path, _records(2, Lang.CE), _records(1, Lang.RU), threshold=0.5)
    assert len(out) == 1
    assert out[0].src.text == "текст 0 текст 1"
    assert out[0].src.lang == Lang.CE


def test_filter_reorients_ce_to_source():
    path = align_monotone(np.eye(1))
    out = filter_pairs(path, _records(1, Lang.RU), _records(1, Lang.CE), threshold=0.5)
    assert out[0].src.lang == Lang.CE
    assert out[0].tgt.lang == Lang.RU


def test_filter_count_bounded_by_non_skips():
    rng = random.Random(9)
    for _ in range(20):
        n, m = rng.randint(1, 5), rng.randint(1, 5)
        scores = np.array(dyadic_matrix(rng, n, m)).reshape(n, m)
        path = align_monotone(scores)
        non_skips = sum(1 for l in path.links if not l.is_skip)
        out = filter_pairs(path, _records(n, Lang.CE), _records(m, Lang.RU), threshold=0.0)
        assert len(out) <= non_skips
