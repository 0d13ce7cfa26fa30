"""Parsing of heterogeneous raw sources into normalized sentence records and pairs.

Handles the three input shapes the corpus is collected from (paired tables,
monolingual text, dictionary tables), plus the text normalization every record
passes through: NFC, whitespace collapsing, quote straightening, and canonical
palochka restoration for Chechen.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence

log = logging.getLogger(__name__)


class Lang(str, Enum):
    CE = "ce"
    RU = "ru"
    EN = "en"


class SourceTag(str, Enum):
    BIBLE = "bible"
    QURAN = "quran"
    DICTIONARIES = "dictionaries"
    GATITOS = "gatitos"
    NEWS = "news"
    FICTION = "fiction"
    NUMBERS = "numbers"


class PairKind(str, Enum):
    WORD_PHRASE = "word_phrase"
    SENTENCE = "sentence"
    MERGED = "merged"


@dataclass(frozen=True)
class SentenceRecord:
    """One normalized sentence with its provenance inside a document."""

    id: str
    text: str
    lang: Lang
    source_tag: SourceTag
    doc_id: str
    seq_index: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "lang": self.lang.value,
            "source_tag": self.source_tag.value,
            "doc_id": self.doc_id,
            "seq_index": self.seq_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SentenceRecord":
        return cls(
            id=d["id"],
            text=d["text"],
            lang=Lang(d["lang"]),
            source_tag=SourceTag(d["source_tag"]),
            doc_id=d["doc_id"],
            seq_index=int(d["seq_index"]),
        )


@dataclass(frozen=True)
class ParallelPair:
    """Aligned source/target records; src is always the new-language side."""

    id: str
    src: SentenceRecord
    tgt: SentenceRecord
    source_tag: SourceTag
    kind: PairKind
    align_score: float | None = None

    def __post_init__(self) -> None:
        if self.src.lang == self.tgt.lang:
            raise ValueError(f"pair {self.id}: src and tgt share language {self.src.lang.value}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "src": self.src.to_dict(),
            "tgt": self.tgt.to_dict(),
            "source_tag": self.source_tag.value,
            "kind": self.kind.value,
            "align_score": self.align_score,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ParallelPair":
        return cls(
            id=d["id"],
            src=SentenceRecord.from_dict(d["src"]),
            tgt=SentenceRecord.from_dict(d["tgt"]),
            source_tag=SourceTag(d["source_tag"]),
            kind=PairKind(d["kind"]),
            align_score=d.get("align_score"),
        )


class IngestError(Exception):
    """Malformed input row; carries the file path and 1-based line number."""

    def __init__(self, path: str | Path, line_no: int, reason: str):
        self.path = str(path)
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{self.path}:{line_no}: {reason}")


# --- text normalization -----------------------------------------------------

# Canonical palochka; every lookalike below maps onto it for Chechen text.
PALOCHKA = "Ӏ"  # Ӏ

# Unconditional lookalikes: never legitimate in a Chechen corpus.
_PALOCHKA_ALWAYS = {
    "І": PALOCHKA,  # Ukrainian І
    "ӏ": PALOCHKA,  # lowercase palochka ӏ
}
# Replaced only when adjacent to a Cyrillic letter (keeps Roman numerals and
# standalone digits intact).
_PALOCHKA_INTRA_WORD = {"I", "1"}

# Quote straightening: doubles -> ", singles -> ' (alignment/dedup robustness).
_QUOTE_MAP = str.maketrans({
    "«": '"', "»": '"',   # « »
    "“": '"', "”": '"',   # " "
    "„": '"', "‟": '"',   # „ ‟
    "‹": "'", "›": "'",   # ‹ ›
    "‘": "'", "’": "'",   # ' '
    "‚": "'", "‛": "'",   # ‚ ‛
})

_WS_RUN = re.compile(r"\s+")

_CYRILLIC_RANGES = (
    (0x0400, 0x04FF),
    (0x0500, 0x052F),
    (0x1C80, 0x1C8F),
    (0x2DE0, 0x2DFF),
    (0xA640, 0xA69F),
)


def _is_cyrillic_letter(ch: str) -> bool:
    cp = ord(ch)
    if not any(lo <= cp <= hi for lo, hi in _CYRILLIC_RANGES):
        return False
    return unicodedata.category(ch).startswith("L")


def _restore_palochka(text: str) -> str:
    # Replacement creates new Cyrillic neighbors, so iterate to a fixpoint:
    # "х11ун" -> "хӀ1ун" -> "хӀӀун".
    while True:
        chars = list(text)
        changed = False
        for i, ch in enumerate(chars):
            if ch in _PALOCHKA_ALWAYS:
                chars[i] = PALOCHKA
                changed = True
            elif ch in _PALOCHKA_INTRA_WORD:
                prev_cyr = i > 0 and _is_cyrillic_letter(chars[i - 1])
                next_cyr = i + 1 < len(chars) and _is_cyrillic_letter(chars[i + 1])
                if prev_cyr or next_cyr:
                    chars[i] = PALOCHKA
                    changed = True
        text = "".join(chars)
        if not changed:
            return text


def normalize_text(text: str, lang: Lang = Lang.RU) -> str:
    """Canonicalize one sentence. Total and idempotent.

    NFC-normalizes, drops control characters, collapses whitespace runs,
    straightens quotes, and for Chechen restores the canonical palochka from
    its Latin/digit/Ukrainian lookalikes.
    """
    text = unicodedata.normalize("NFC", text)
    text = "".join(" " if unicodedata.category(c) == "Cc" else c for c in text)
    text = _WS_RUN.sub(" ", text).strip()
    text = text.translate(_QUOTE_MAP)
    if lang == Lang.CE:
        text = _restore_palochka(text)
    return text


# --- sentence segmentation --------------------------------------------------

_TERMINALS = ".!?…"
_OPENERS = "\"'"

# Common Russian abbreviations that never end a sentence; shipped as an
# editable file, single-letter initials are generated at load time.
_ABBREV_FILE = Path(__file__).parent / "data" / "abbreviations_ru.txt"


def load_abbreviations(path: str | Path | None = None) -> frozenset[str]:
    p = Path(path) if path is not None else _ABBREV_FILE
    entries = set()
    for line in p.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.add(line)
    # Initials: "А." "Б." ... and Latin equivalents.
    for cp in range(0x0410, 0x0430):  # А..Я
        entries.add(chr(cp) + ".")
    entries.add("Ё.")
    for cp in range(ord("A"), ord("Z") + 1):
        entries.add(chr(cp) + ".")
    return frozenset(entries)


def _word_before(text: str, end: int) -> str:
    """The whitespace-delimited token ending at text[end] inclusive."""
    start = end
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    return text[start:end + 1]


def segment_sentences(
    text: str,
    lang: Lang = Lang.RU,
    abbreviations: frozenset[str] | None = None,
) -> list[str]:
    """Split normalized text into sentences.

    Splits after a terminal-punctuation run followed by whitespace and an
    uppercase letter or opening quote, except after known abbreviations and
    never while inside an unbalanced double quote.
    """
    if abbreviations is None:
        abbreviations = load_abbreviations()
    if not text:
        return []

    segments: list[str] = []
    start = 0
    in_quote = False
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == '"':
            in_quote = not in_quote
            i += 1
            continue
        if ch in _TERMINALS and not in_quote:
            # Consume the whole terminal run plus a trailing closing quote.
            j = i
            while j + 1 < n and text[j + 1] in _TERMINALS:
                j += 1
            k = j
            if k + 1 < n and text[k + 1] == '"':
                k += 1
            if k + 1 < n and text[k + 1].isspace():
                nxt = k + 1
                while nxt < n and text[nxt].isspace():
                    nxt += 1
                starts_new = nxt < n and (text[nxt].isupper() or text[nxt] in _OPENERS)
                is_abbrev = text[j] == "." and _word_before(text, j) in abbreviations
                if starts_new and not is_abbrev:
                    segments.append(text[start:k + 1].strip())
                    start = nxt
                    i = nxt
                    continue
            i = k + 1
            continue
        i += 1
    tail = text[start:].strip()
    if tail:
        segments.append(tail)
    return segments


# --- source ingestion -------------------------------------------------------

class SourceFormat(str, Enum):
    PAIRED_TABLE = "paired_table"
    MONOLINGUAL = "monolingual"
    DICTIONARY = "dictionary"


@dataclass
class IngestStats:
    """Side-channel counters for one ingest run."""

    rows: int = 0
    empty_input: bool = False
    warnings: list[str] = field(default_factory=list)


def _iter_lines(path: Path) -> Iterator[tuple[int, str]]:
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise
    try:
        textdata = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise IngestError(path, 0, f"invalid UTF-8: {exc}") from exc
    for line_no, line in enumerate(textdata.splitlines(), start=1):
        yield line_no, line


def _make_pair(
    pair_idx: int,
    seq_index: int,
    doc_id: str,
    src_text: str,
    tgt_text: str,
    src_lang: Lang,
    tgt_lang: Lang,
    source_tag: SourceTag,
    kind: PairKind,
) -> ParallelPair:
    # The pair is always oriented new-language-first.
    if tgt_lang == Lang.CE:
        src_text, tgt_text = tgt_text, src_text
        src_lang, tgt_lang = tgt_lang, src_lang
    base = f"{source_tag.value}:{doc_id}:{seq_index}"
    src = SentenceRecord(
        id=base + ":src", text=src_text, lang=src_lang,
        source_tag=source_tag, doc_id=doc_id, seq_index=seq_index,
    )
    tgt = SentenceRecord(
        id=base + ":tgt", text=tgt_text, lang=tgt_lang,
        source_tag=source_tag, doc_id=doc_id, seq_index=seq_index,
    )
    return ParallelPair(id=base, src=src, tgt=tgt, source_tag=source_tag, kind=kind)


def _parse_paired_rows(
    path: Path, lines: Iterable[tuple[int, str]], jsonl: bool
) -> Iterator[tuple[int, str, str, str | None]]:
    """Yield (line_no, src, tgt, doc_id) enforcing a consistent column count."""
    expected_cols: int | None = None
    for line_no, line in lines:
        if not line.strip():
            continue
        if jsonl:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise IngestError(path, line_no, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict) or "src" not in obj or "tgt" not in obj:
                raise IngestError(path, line_no, "object must have 'src' and 'tgt' fields")
            yield line_no, str(obj["src"]), str(obj["tgt"]), obj.get("doc_id")
        else:
            cols = line.split("\t")
            if expected_cols is None:
                if len(cols) not in (2, 3):
                    raise IngestError(path, line_no, f"expected 2 or 3 columns, got {len(cols)}")
                expected_cols = len(cols)
            if len(cols) != expected_cols:
                raise IngestError(
                    path, line_no,
                    f"expected {expected_cols} columns, got {len(cols)}",
                )
            doc_id = cols[2] if expected_cols == 3 else None
            yield line_no, cols[0], cols[1], doc_id


def ingest_source(
    path: str | Path,
    format: SourceFormat | str,
    source_tag: SourceTag | str,
    lang_spec: tuple[Lang, Lang] | Lang,
    stats: IngestStats | None = None,
    abbreviations: frozenset[str] | None = None,
) -> list[ParallelPair] | list[SentenceRecord]:
    """Parse one raw source file into normalized pairs or sentence records.

    ``lang_spec`` is (file-src-lang, file-tgt-lang) for pair formats; pairs are
    re-oriented so the new language is always the src side. For monolingual
    input it is the single language, and each input line is treated as a
    paragraph to segment.
    """
    path = Path(path)
    format = SourceFormat(format)
    source_tag = SourceTag(source_tag)
    if stats is None:
        stats = IngestStats()

    if format == SourceFormat.MONOLINGUAL:
        if not isinstance(lang_spec, Lang):
            raise ValueError("monolingual ingest takes a single language")
        records: list[SentenceRecord] = []
        for line_no, line in _iter_lines(path):
            paragraph = normalize_text(line, lang_spec)
            if not paragraph:
                continue
            # each paragraph is its own document so later windowing never
            # crosses a paragraph boundary
            doc_id = f"{path.stem}:p{line_no}"
            for seq, sent in enumerate(segment_sentences(paragraph, lang_spec, abbreviations)):
                records.append(SentenceRecord(
                    id=f"{source_tag.value}:{doc_id}:{seq}",
                    text=sent, lang=lang_spec, source_tag=source_tag,
                    doc_id=doc_id, seq_index=seq,
                ))
        stats.rows = len(records)
        if not records:
            stats.empty_input = True
            stats.warnings.append(f"{path}: no content rows")
            log.warning("%s: empty %s source", path, format.value)
        return records

    if not (isinstance(lang_spec, tuple) and len(lang_spec) == 2):
        raise ValueError(f"{format.value} ingest takes a (src_lang, tgt_lang) pair")
    src_lang, tgt_lang = lang_spec
    if Lang.CE not in (src_lang, tgt_lang):
        raise ValueError("one side of every pair source must be the new language (ce)")
    kind = PairKind.WORD_PHRASE if format == SourceFormat.DICTIONARY else PairKind.SENTENCE
    jsonl = format == SourceFormat.PAIRED_TABLE and path.suffix in (".jsonl", ".json")

    pairs: list[ParallelPair] = []
    seq_by_doc: dict[str, int] = {}
    if format == SourceFormat.DICTIONARY:
        rows = _parse_dictionary_rows(path)
    else:
        rows = _parse_paired_rows(path, _iter_lines(path), jsonl)
    for line_no, raw_src, raw_tgt, doc_id in rows:
        src_text = normalize_text(raw_src, src_lang)
        tgt_text = normalize_text(raw_tgt, tgt_lang)
        if not src_text or not tgt_text:
            raise IngestError(path, line_no, "empty side after normalization")
        doc = doc_id or path.stem
        seq = seq_by_doc.get(doc, 0)
        seq_by_doc[doc] = seq + 1
        pairs.append(_make_pair(
            len(pairs), seq, doc, src_text, tgt_text,
            src_lang, tgt_lang, source_tag, kind,
        ))
    stats.rows = len(pairs)
    if not pairs:
        stats.empty_input = True
        stats.warnings.append(f"{path}: no content rows")
        log.warning("%s: empty %s source", path, format.value)
    return pairs


def _parse_dictionary_rows(path: Path) -> Iterator[tuple[int, str, str, str | None]]:
    # headword<TAB>translation, optional third sense-notes column (ignored).
    for line_no, line in _iter_lines(path):
        if not line.strip():
            continue
        cols = line.split("\t")
        if len(cols) not in (2, 3):
            raise IngestError(path, line_no, f"expected 2 or 3 columns, got {len(cols)}")
        yield line_no, cols[0], cols[1], None


def dedup(pairs: Sequence[ParallelPair]) -> list[ParallelPair]:
    """Drop exact (src.text, tgt.text) duplicates, keeping first occurrences."""
    seen: set[tuple[str, str]] = set()
    out: list[ParallelPair] = []
    for pair in pairs:
        key = (pair.src.text, pair.tgt.text)
        if key in seen:
            continue
        seen.add(key)
        out.append(pair)
    removed = len(pairs) - len(out)
    if removed:
        log.info("dedup removed %d exact duplicate pairs (%d kept)", removed, len(out))
    return out


# --- corpus JSONL io ----------------------------------------------------------

def write_pairs(path: str | Path, pairs: Iterable[ParallelPair]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps(pair.to_dict(), ensure_ascii=False) + "\n")
            n += 1
    return n


def read_pairs(path: str | Path) -> list[ParallelPair]:
    pairs = []
    for line_no, line in _iter_lines(Path(path)):
        if not line.strip():
            continue
        try:
            pairs.append(ParallelPair.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise IngestError(path, line_no, f"bad pair record: {exc}") from exc
    return pairs


def renumber(pair: ParallelPair, seq_index: int) -> ParallelPair:
    """Rewrite both sides' seq_index (used when re-sequencing a document)."""
    return replace(
        pair,
        src=replace(pair.src, seq_index=seq_index),
        tgt=replace(pair.tgt, seq_index=seq_index),
    )
