"""Augmentation windows, holdout hygiene, and composition statistics."""

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtkit.dataset import (
    CompositionStats,
    RecipeManifest,
    SplitError,
    augment_consecutive,
    compute_stats,
    pair_category,
    read_split,
    round_half_up,
    split_holdout,
    symbol_count,
    word_count,
    write_split,
)
from mtkit.ingest import Lang, PairKind, ParallelPair, SentenceRecord, SourceTag


def make_pair(i, src_text="дош", tgt_text="слово", tag=SourceTag.FICTION, doc="d0",
              seq=None, kind=PairKind.SENTENCE):
    seq = i if seq is None else seq
    src = SentenceRecord(id=f"s{i}", text=src_text, lang=Lang.CE, source_tag=tag,
                         doc_id=doc, seq_index=seq)
    tgt = SentenceRecord(id=f"t{i}", text=tgt_text, lang=Lang.RU, source_tag=tag,
                         doc_id=doc, seq_index=seq)
    return ParallelPair(id=f"p{i:04d}", src=src, tgt=tgt, source_tag=tag, kind=kind)


# --- augment_consecutive -----------------------------------------------------------

def test_three_consecutive_pairs_add_three_windows():
    pairs = [make_pair(i, src_text=f"а{i}", tgt_text=f"б{i}", seq=i) for i in range(3)]
    out = augment_consecutive(pairs)
    merged = [p for p in out if p.kind == PairKind.MERGED]
    assert len(out) == 6 and len(merged) == 3
    texts = sorted(p.src.text for p in merged)
    assert texts == ["а0 а1", "а0 а1 а2", "а1 а2"]
    two = next(p for p in merged if p.src.text == "а0 а1")
    assert two.tgt.text == "б0 б1"


def test_single_pair_no_windows():
    out = augment_consecutive([make_pair(0)])
    assert len(out) == 1


def test_gap_blocks_window():
    pairs = [make_pair(0, seq=0), make_pair(1, seq=1), make_pair(3, seq=3)]
    out = augment_consecutive(pairs)
    merged = [p for p in out if p.kind == PairKind.MERGED]
    assert [p.src.text for p in merged] == ["дош дош"]


def test_docs_do_not_mix():
    pairs = [make_pair(0, doc="a", seq=0), make_pair(1, doc="b", seq=1)]
    out = augment_consecutive(pairs)
    assert len(out) == 2


def test_originals_retained_in_order():
    pairs = [make_pair(i, seq=i) for i in range(4)]
    out = augment_consecutive(pairs)
    assert out[:4] == pairs


@settings(max_examples=100)
@given(st.lists(st.booleans(), min_size=0, max_size=20))
def test_window_count_formula(mask):
    # mask marks which seq positions exist; runs follow from contiguity
    pairs = [make_pair(i, seq=i) for i, present in enumerate(mask) if present]
    if not pairs:
        assert augment_consecutive(pairs) == []
        return
    out = augment_consecutive(pairs)
    runs = []
    run_len = 0
    for present in mask + [False]:
        if present:
            run_len += 1
        elif run_len:
            runs.append(run_len)
            run_len = 0
    want_merged = sum(max(n - 1, 0) + max(n - 2, 0) for n in runs)
    assert len(out) == len(pairs) + want_merged


# --- composition stats ---------------------------------------------------------------

def test_category_by_source_tag():
    assert pair_category(make_pair(0, tag=SourceTag.DICTIONARIES)) == "word_phrase"
    assert pair_category(make_pair(0, tag=SourceTag.GATITOS)) == "word_phrase"
    assert pair_category(make_pair(0, tag=SourceTag.NUMBERS)) == "word_phrase"
    assert pair_category(make_pair(0, tag=SourceTag.BIBLE)) == "sentence"
    assert pair_category(make_pair(0, tag=SourceTag.QURAN)) == "sentence"


def test_counts_and_shares_hand_example():
    # one single-word dictionary pair + one 9-word sentence pair
    pairs = [
        make_pair(0, src_text="дош", tgt_text="слово", tag=SourceTag.DICTIONARIES),
        make_pair(1, src_text=" ".join(["са"] * 9), tgt_text=" ".join(["ну"] * 9),
                  tag=SourceTag.FICTION),
    ]
    stats = compute_stats(pairs)
    assert stats.category_shares(Lang.CE, "rows") == {"word_phrase": 50.0, "sentence": 50.0}
    assert stats.category_shares(Lang.CE, "words") == {"word_phrase": 10.0, "sentence": 90.0}


def test_source_row_shares():
    pairs = [make_pair(0, tag=SourceTag.BIBLE), make_pair(1, tag=SourceTag.NEWS)]
    stats = compute_stats(pairs)
    assert stats.source_row_shares() == {SourceTag.BIBLE: 50.0, SourceTag.NEWS: 50.0}
    only = compute_stats([make_pair(0, tag=SourceTag.QURAN)])
    assert only.source_row_shares() == {SourceTag.QURAN: 100.0}


def test_share_groups_sum_to_100():
    rng = random.Random(5)
    tags = list(SourceTag)
    pairs = [
        make_pair(i, src_text="д " * rng.randint(1, 9), tgt_text="с " * rng.randint(1, 9),
                  tag=rng.choice(tags))
        for i in range(300)
    ]
    stats = compute_stats(pairs)
    assert sum(stats.source_row_shares().values()) == pytest.approx(100.0, abs=0.1)
    for measure in ("rows", "words", "symbols"):
        assert sum(stats.category_shares(Lang.CE, measure).values()) == pytest.approx(100.0, abs=0.1)
        assert sum(stats.category_shares(Lang.RU, measure).values()) == pytest.approx(100.0, abs=0.1)


def test_word_phrase_row_share_equals_source_sum():
    rng = random.Random(6)
    pairs = [make_pair(i, tag=rng.choice(list(SourceTag))) for i in range(500)]
    stats = compute_stats(pairs)
    wp_sources = (SourceTag.DICTIONARIES, SourceTag.GATITOS, SourceTag.NUMBERS)
    wp_from_sources = sum(stats.source_row_shares().get(t, 0.0) for t in wp_sources)
    assert stats.category_shares(Lang.CE, "rows")["word_phrase"] == pytest.approx(wp_from_sources)


def test_word_symbol_counters():
    assert word_count("а б  в") == 3
    assert symbol_count("а б  в") == 3
    assert symbol_count("абв.") == 4


def test_round_half_up():
    assert round_half_up(2.5) == 3.0
    assert round_half_up(3.45, 1) == 3.5
    assert round_half_up(-2.5) == -3.0


# --- split_holdout ---------------------------------------------------------------------

def corpus_with_texts(n, tag=SourceTag.FICTION, doc_per_pair=True):
    return [
        make_pair(i, src_text=f"исходный текст {i}", tgt_text=f"целевой текст {i}",
                  tag=tag, doc=f"d{i}" if doc_per_pair else "d0", seq=i)
        for i in range(n)
    ]


def test_split_sizes_and_determinism(tmp_path):
    corpus = corpus_with_texts(50)
    a = split_holdout(corpus, eval_size=10, seed=7)
    b = split_holdout(corpus, eval_size=10, seed=7)
    assert len(a.eval) == 10 and len(a.train) == 40
    assert [p.id for p in a.eval] == [p.id for p in b.eval]
    write_split(a, tmp_path / "x")
    write_split(b, tmp_path / "y")
    for name in ("train.jsonl", "eval.jsonl", "manifest.json"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()
    back = read_split(tmp_path / "x")
    assert [p.id for p in back.eval] == [p.id for p in a.eval]


def test_split_seed_changes_selection():
    corpus = corpus_with_texts(80)
    a = split_holdout(corpus, eval_size=15, seed=1)
    b = split_holdout(corpus, eval_size=15, seed=2)
    assert [p.id for p in a.eval] != [p.id for p in b.eval]


def test_split_eval_size_zero():
    corpus = corpus_with_texts(5)
    out = split_holdout(corpus, eval_size=0, seed=3)
    assert out.eval == [] and out.train == corpus


def test_split_excludes_merged_and_their_docs():
    base = [make_pair(i, src_text=f"а{i}", tgt_text=f"б{i}", doc="doc", seq=i) for i in range(3)]
    loose = [make_pair(10 + i, src_text=f"в{i}", tgt_text=f"г{i}", doc=f"x{i}") for i in range(10)]
    corpus = augment_consecutive(base) + loose
    out = split_holdout(corpus, eval_size=5, seed=0)
    eval_ids = {p.id for p in out.eval}
    assert all(not pid.startswith("p000") for pid in eval_ids)  # doc "doc" fully excluded
    assert all(p.kind != PairKind.MERGED for p in out.eval)


def test_split_excluded_sources():
    corpus = corpus_with_texts(20, tag=SourceTag.QURAN) + [
        make_pair(100 + i, src_text=f"х{i}", tgt_text=f"у{i}", tag=SourceTag.NEWS, doc=f"n{i}")
        for i in range(15)
    ]
    out = split_holdout(corpus, eval_size=10, seed=4)
    assert all(p.source_tag == SourceTag.NEWS for p in out.eval)


def test_split_all_merged_errors():
    base = [make_pair(i, src_text=f"а{i}", tgt_text=f"б{i}", doc="doc", seq=i) for i in range(4)]
    corpus = augment_consecutive(base)
    with pytest.raises(SplitError):
        split_holdout(corpus, eval_size=1, seed=0)


def test_split_too_small_corpus_errors():
    with pytest.raises(SplitError):
        split_holdout(corpus_with_texts(5), eval_size=5, seed=0)


def test_split_no_text_sharing_within_eval():
    # two pairs share a src text; at most one may enter eval
    corpus = corpus_with_texts(30)
    twin_a = make_pair(200, src_text="общий текст", tgt_text="перевод один", doc="ta")
    twin_b = make_pair(201, src_text="общий текст", tgt_text="перевод два", doc="tb")
    out = split_holdout(corpus + [twin_a, twin_b], eval_size=31, seed=11)
    shared = [p for p in out.eval if p.src.text == "общий текст"]
    assert len(shared) <= 1


def test_split_manifest_contents():
    corpus = corpus_with_texts(40)
    out = split_holdout(corpus, eval_size=8, seed=9)
    assert out.manifest["seed"] == 9
    assert out.manifest["eval"]["count"] == 8
    assert out.manifest["train"]["count"] == 32
    assert out.manifest["excluded_sources"] == ["quran"]


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=2 ** 31))
def test_split_hygiene_property(seed):
    base = [make_pair(i, src_text=f"а{i}", tgt_text=f"б{i}", doc="run", seq=i) for i in range(4)]
    loose = [
        make_pair(50 + i, src_text=f"в{i}", tgt_text=f"г{i}",
                  tag=SourceTag.NEWS if i % 2 else SourceTag.QURAN, doc=f"x{i}")
        for i in range(30)
    ]
    corpus = augment_consecutive(base) + loose
    out = split_holdout(corpus, eval_size=12, seed=seed)
    assert len(out.eval) == 12
    assert len(out.train) + len(out.eval) == len(corpus)
    eval_texts = {p.src.text for p in out.eval} | {p.tgt.text for p in out.eval}
    merged_texts = {p.src.text for p in out.train if p.kind == PairKind.MERGED}
    assert not (eval_texts & merged_texts)
    assert all(p.source_tag != SourceTag.QURAN for p in out.eval)


# --- recipe manifest ---------------------------------------------------------------------

def test_recipe_defaults():
    recipe = RecipeManifest()
    assert recipe.learning_rate == 1e-4
    assert recipe.batch_size == 64
    assert recipe.epochs == 9
    assert recipe.optimizer == "Adafactor"
    assert recipe.weight_decay == 1e-3
    assert recipe.max_sequence_length == 128
    assert recipe.warmup_steps == 1500
    assert recipe.temperature == 1.0
    assert recipe.top_k == 50
    assert recipe.top_p == 1.0
    assert recipe.beam_width == 4
    assert recipe.repetition_penalty == 1.0
    assert recipe.max_output_length == 1024


def test_recipe_roundtrip_lossless(tmp_path):
    recipe = RecipeManifest(learning_rate=3e-5, warmup_steps=777)
    path = tmp_path / "recipe.json"
    recipe.save(path)
    assert RecipeManifest.load(path) == recipe
