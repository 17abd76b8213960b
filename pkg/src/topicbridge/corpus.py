"""Corpus ingestion: tokenizing raw text into a vocabulary and sparse bags of words.

The pipeline is deliberately small and deterministic: lowercase, keep
alphabetic runs of length >= 2, count document frequencies, filter, and
vectorize. Identical input bytes always produce an identical corpus, and
the vocabulary ordering (document frequency descending, ties broken
lexicographically) is a pure function of the counts so downstream matrix
columns are stable across runs.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyVocabulary, FileFormatError, ZeroTotal

# Alphabetic runs of length >= 2; digits, punctuation and underscores separate.
_TOKEN_RE = re.compile(r"[^\W\d_]{2,}", re.UNICODE)

MISSING_REASON_EMPTY = "no tokens"
MISSING_REASON_OOV = "no in-vocabulary tokens"


def tokenize(text: str) -> list[str]:
    """Lowercase ``text`` and return alphabetic tokens of length >= 2."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Vocabulary:
    """Ordered token list with inverse index and per-token document frequency."""

    words: tuple[str, ...]
    index: dict[str, int]
    doc_freq: dict[str, int]

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def from_words(cls, words, doc_freq=None) -> "Vocabulary":
        """Build a vocabulary directly from an ordered word list.

        ``doc_freq`` defaults to 1 per word; used by loaders and synthetic
        fixtures where real frequencies are recomputed or irrelevant.
        """
        words = tuple(words)
        if len(set(words)) != len(words):
            raise FileFormatError("vocabulary words must be unique")
        if not words:
            raise EmptyVocabulary("vocabulary is empty")
        if doc_freq is None:
            doc_freq = {w: 1 for w in words}
        return cls(words=words, index={w: i for i, w in enumerate(words)}, doc_freq=dict(doc_freq))


@dataclass(frozen=True)
class BowDocument:
    """One document as a sparse map from token index to positive count."""

    doc_id: str
    counts: dict[int, int]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class Corpus:
    """A vocabulary plus an ordered list of bag-of-words documents.

    Document order is stable and defines the row index used by soft-label
    files, so it must never be permuted after construction.
    """

    vocabulary: Vocabulary
    documents: tuple[BowDocument, ...]

    def __len__(self) -> int:
        return len(self.documents)


@dataclass(frozen=True)
class DroppedDocument:
    """Record of an input document that vectorized to nothing."""

    index: int
    reason: str


def build_vocabulary(
    token_docs,
    min_df: int = 1,
    max_df_frac: float = 1.0,
    stopwords=frozenset(),
) -> Vocabulary:
    """Count document frequencies and keep tokens inside the df window.

    Tokens are retained when their document frequency lies in
    ``[min_df, max_df_frac * n_docs]`` and they are not stopwords. Ordering
    is df descending with lexicographic tie-break.
    """
    if min_df < 1:
        raise ValueError("min_df must be >= 1")
    if not 0.0 < max_df_frac <= 1.0:
        raise ValueError("max_df_frac must be in (0, 1]")
    df: dict[str, int] = {}
    n_docs = 0
    for tokens in token_docs:
        n_docs += 1
        for tok in set(tokens):
            df[tok] = df.get(tok, 0) + 1
    max_df = max_df_frac * n_docs
    kept = {
        w: c
        for w, c in df.items()
        if min_df <= c <= max_df and w not in stopwords
    }
    if not kept:
        raise EmptyVocabulary("no token survived document-frequency/stopword filtering")
    ordered = tuple(sorted(kept, key=lambda w: (-kept[w], w)))
    return Vocabulary(
        words=ordered,
        index={w: i for i, w in enumerate(ordered)},
        doc_freq={w: kept[w] for w in ordered},
    )


def vectorize(token_docs, vocabulary: Vocabulary) -> tuple[Corpus, list[DroppedDocument]]:
    """Map token lists onto vocabulary indices, dropping empty results.

    Documents with zero in-vocabulary tokens are dropped and reported, never
    silently discarded. ``doc_id`` is the zero-based input position as a
    string, so retained ids still identify input lines after drops.
    """
    docs: list[BowDocument] = []
    dropped: list[DroppedDocument] = []
    index = vocabulary.index
    for pos, tokens in enumerate(token_docs):
        if not tokens:
            dropped.append(DroppedDocument(pos, MISSING_REASON_EMPTY))
            continue
        counts: dict[int, int] = {}
        for tok in tokens:
            v = index.get(tok)
            if v is not None:
                counts[v] = counts.get(v, 0) + 1
        if not counts:
            dropped.append(DroppedDocument(pos, MISSING_REASON_OOV))
            continue
        docs.append(BowDocument(doc_id=str(pos), counts=counts))
    return Corpus(vocabulary=vocabulary, documents=tuple(docs)), dropped


def normalize_bow(counts: dict[int, int], size: int) -> np.ndarray:
    """Return the dense length-``size`` probability vector for sparse counts."""
    total = sum(counts.values())
    if total == 0:
        raise ZeroTotal("cannot normalize a document with zero total count")
    x = np.zeros(size, dtype=np.float64)
    for v, c in counts.items():
        x[v] = c
    return x / total


def dense_counts(corpus: Corpus, indices=None, dtype=np.float64) -> np.ndarray:
    """Densify document counts into an (n_docs, V) matrix.

    ``indices`` selects a subset of document rows (corpus order preserved by
    the caller's index order); None densifies the whole corpus.
    """
    if indices is None:
        indices = range(len(corpus.documents))
    indices = list(indices)
    V = len(corpus.vocabulary)
    out = np.zeros((len(indices), V), dtype=dtype)
    for row, d in enumerate(indices):
        for v, c in corpus.documents[d].counts.items():
            out[row, v] = c
    return out


# ---------------------------------------------------------------------------
# File formats owned by this module: corpus text (one document per line),
# vocabulary export (one token per line), drop report (index TAB reason),
# and the serialized corpus (doc_id TAB idx:count ...).
# ---------------------------------------------------------------------------

VOCAB_FILENAME = "vocab.txt"
BOW_FILENAME = "bow.txt"
DROPS_FILENAME = "drops.txt"


def read_document_lines(path) -> list[str]:
    """Read a UTF-8 corpus file, one document per line."""
    return Path(path).read_text(encoding="utf-8").splitlines()


def format_vocabulary(vocabulary: Vocabulary) -> str:
    return "\n".join(vocabulary.words) + "\n"


def format_drop_report(dropped) -> str:
    return "".join(f"{d.index}\t{d.reason}\n" for d in dropped)


def parse_drop_report(text: str) -> list[DroppedDocument]:
    out = []
    for line in text.splitlines():
        if not line:
            continue
        idx, _, reason = line.partition("\t")
        out.append(DroppedDocument(int(idx), reason))
    return out


def format_bow(corpus: Corpus) -> str:
    lines = []
    for doc in corpus.documents:
        cells = " ".join(f"{v}:{doc.counts[v]}" for v in sorted(doc.counts))
        lines.append(f"{doc.doc_id}\t{cells}")
    return "\n".join(lines) + "\n"


def save_corpus(corpus: Corpus, dropped, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / VOCAB_FILENAME).write_text(format_vocabulary(corpus.vocabulary), encoding="utf-8")
    (out / BOW_FILENAME).write_text(format_bow(corpus), encoding="utf-8")
    (out / DROPS_FILENAME).write_text(format_drop_report(dropped), encoding="utf-8")


def load_corpus(corpus_dir) -> Corpus:
    """Load a serialized corpus; document frequencies are recomputed from counts."""
    root = Path(corpus_dir)
    vocab_path = root / VOCAB_FILENAME
    bow_path = root / BOW_FILENAME
    if not vocab_path.is_file() or not bow_path.is_file():
        raise FileFormatError(f"{corpus_dir} does not contain {VOCAB_FILENAME} and {BOW_FILENAME}")
    words = vocab_path.read_text(encoding="utf-8").splitlines()
    docs: list[BowDocument] = []
    df = [0] * len(words)
    for lineno, line in enumerate(bow_path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line:
            continue
        doc_id, _, rest = line.partition("\t")
        counts: dict[int, int] = {}
        for cell in rest.split():
            idx_s, _, count_s = cell.partition(":")
            try:
                v, c = int(idx_s), int(count_s)
            except ValueError as exc:
                raise FileFormatError(f"{bow_path}:{lineno}: malformed cell {cell!r}") from exc
            if not 0 <= v < len(words):
                raise FileFormatError(f"{bow_path}:{lineno}: index {v} out of range")
            if c < 1:
                raise FileFormatError(f"{bow_path}:{lineno}: count {c} must be >= 1")
            counts[v] = c
        if not counts:
            raise FileFormatError(f"{bow_path}:{lineno}: empty document row")
        for v in counts:
            df[v] += 1
        docs.append(BowDocument(doc_id=doc_id, counts=counts))
    vocab = Vocabulary.from_words(words, doc_freq={w: max(df[i], 1) for i, w in enumerate(words)})
    return Corpus(vocabulary=vocab, documents=tuple(docs))


def build_corpus_from_lines(
    lines,
    min_df: int = 1,
    max_df_frac: float = 1.0,
    stopwords=frozenset(),
) -> tuple[Corpus, list[DroppedDocument]]:
    """Tokenize raw lines, build the vocabulary, and vectorize in one pass."""
    token_docs = [tokenize(line) for line in lines]
    vocab = build_vocabulary(token_docs, min_df=min_df, max_df_frac=max_df_frac, stopwords=stopwords)
    return vectorize(token_docs, vocab)
