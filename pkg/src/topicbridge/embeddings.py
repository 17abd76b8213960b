"""Pretrained word embeddings: loading, vocabulary matrices, and cosine geometry.

Embeddings are the common vector space that lets a reference representation
built on one lexicon guide a model trained on another. The matrices built
here are frozen: training never touches them, which is what keeps the
cross-vocabulary projection meaningful.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Vocabulary, tokenize
from .errors import DimensionMismatch, FileFormatError, LengthMismatch, ParseError

MISSING_ZERO = "zero"
MISSING_RANDOM = "deterministic-random"


@dataclass(frozen=True)
class EmbeddingTable:
    """Token -> fixed-length vector map loaded from a text embedding file."""

    dim: int
    vectors: dict[str, np.ndarray]

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Per-vocabulary-word embedding rows plus the fraction found in the table."""

    matrix: np.ndarray
    coverage: float


def load_embeddings(path) -> EmbeddingTable:
    """Parse a word2vec-style text file: ``token v1 ... vL`` per line.

    An optional first line holding exactly two integers (count and
    dimensionality) is detected and skipped. Duplicate tokens keep their
    first occurrence.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    start = 0
    if lines:
        head = lines[0].split()
        if len(head) == 2 and all(_is_int(f) for f in head):
            start = 1
    vectors: dict[str, np.ndarray] = {}
    dim = None
    for lineno in range(start, len(lines)):
        fields = lines[lineno].split()
        if not fields:
            continue
        token, values = fields[0], fields[1:]
        if dim is None:
            if not values:
                raise DimensionMismatch(f"line {lineno + 1}: no vector components")
            dim = len(values)
        elif len(values) != dim:
            raise DimensionMismatch(
                f"line {lineno + 1}: expected {dim} components, found {len(values)}"
            )
        if token in vectors:
            continue
        try:
            vectors[token] = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"line {lineno + 1}: non-numeric field") from exc
    if dim is None or not vectors:
        raise FileFormatError(f"{path}: no embedding rows found")
    return EmbeddingTable(dim=dim, vectors=vectors)


def _is_int(field: str) -> bool:
    try:
        int(field)
        return True
    except ValueError:
        return False


def _missing_row(word: str, dim: int) -> np.ndarray:
    # Per-word deterministic seed; Python's hash() is salted so it cannot be used.
    seed = int.from_bytes(hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest(), "little")
    rng = np.random.default_rng(seed)
    return rng.standard_normal(dim) / np.sqrt(dim)


def embedding_matrix_for(
    vocab: Vocabulary,
    table: EmbeddingTable,
    missing_policy: str = MISSING_RANDOM,
) -> EmbeddingMatrix:
    """Assemble the V x L matrix whose row v embeds vocabulary word v.

    Missing words get a zero row or a per-word deterministic random row,
    depending on ``missing_policy``. The random policy is the default so
    out-of-table words do not collapse onto one another.
    """
    if missing_policy not in (MISSING_ZERO, MISSING_RANDOM):
        raise ValueError(f"unknown missing policy {missing_policy!r}")
    rows = np.zeros((len(vocab), table.dim), dtype=np.float64)
    found = 0
    for i, word in enumerate(vocab.words):
        vec = table.vectors.get(word)
        if vec is not None:
            rows[i] = vec
            found += 1
        elif missing_policy == MISSING_RANDOM:
            rows[i] = _missing_row(word, table.dim)
    return EmbeddingMatrix(matrix=rows, coverage=found / len(vocab))


def cosine(u, v) -> float:
    """Cosine similarity in [-1, 1]; zero when either vector has zero norm."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise LengthMismatch(f"vector lengths differ: {u.shape} vs {v.shape}")
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def name_embedding(surface_name: str, table: EmbeddingTable) -> np.ndarray:
    """Mean embedding of the name's in-table tokens; zero vector if none.

    Callers that need a usable direction must check for the zero vector
    themselves (the supervision builder raises NamelessTopic).
    """
    vecs = [table.vectors[t] for t in tokenize(surface_name) if t in table.vectors]
    if not vecs:
        return np.zeros(table.dim, dtype=np.float64)
    return np.mean(vecs, axis=0)


def matrix_checksum(matrix: np.ndarray) -> str:
    """Content hash used to assert the embedding matrix stays frozen."""
    return hashlib.sha256(np.ascontiguousarray(matrix).tobytes()).hexdigest()
