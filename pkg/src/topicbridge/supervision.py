"""Guidance signals: topic-level, document-level, and word-level supervision.

Three ingredients steer training beyond the plain reconstruction objective:

* topic level — KL between known reference topic rows and the model's
  projection of its topics onto the reference lexicon;
* document level — KL between sharpened per-document soft labels and the
  inferred document-topic distribution;
* word level — KL between a name-similarity distribution over the target
  vocabulary and the model's topic-word rows.

Each signal is gated per topic by a supervision mask, which is what lets
adapted topics coexist with freely discovered ones in a single model.
All artifacts built here are computed once before training and frozen.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .embeddings import EmbeddingMatrix, EmbeddingTable, name_embedding
from .errors import (
    DegenerateColumn,
    DegenerateRow,
    EmptyMask,
    FileFormatError,
    NamelessTopic,
    NotADistribution,
    RenormalizationUnderflow,
)
from .model import softmax

KL_EPS = 1e-12
SIMPLEX_TOL = 1e-6
ROW_RENORM_TOL = 1e-3

SUPERVISION_FULL = "full"
SUPERVISION_NAME_ONLY = "name-only"
SUPERVISION_NONE = "none"


def kl_divergence(p, q, eps: float = KL_EPS) -> float:
    """KL(p || q) with zero-count convention 0*log(0) = 0 and a floor on q.

    Both arguments must already lie on the simplex (within 1e-6); that is a
    caller bug otherwise, so it raises rather than renormalizing.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise NotADistribution(f"shape mismatch: {p.shape} vs {q.shape}")
    for name, vec in (("p", p), ("q", q)):
        if np.any(vec < -SIMPLEX_TOL) or abs(float(vec.sum()) - 1.0) > SIMPLEX_TOL:
            raise NotADistribution(f"{name} is off the simplex (sum={vec.sum():.9f})")
    pos = p > 0
    return float(np.sum(p[pos] * (np.log(p[pos]) - np.log(np.maximum(q[pos], eps)))))


# ---------------------------------------------------------------------------
# Reference topics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceTopics:
    """Known topic-word rows over a source lexicon, with surface names."""

    ref_vocab: tuple[str, ...]
    names: tuple[str, ...]
    beta_ref: np.ndarray  # (k_named, ref vocab size)


def load_reference_topics(path) -> ReferenceTopics:
    """Load {"vocab": [...], "topics": [{"name":..., "dist": [...]}]} JSON.

    Rows off the simplex by at most 1e-3 are renormalized (serialization
    rounding); anything worse is rejected as corrupt.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, dict) or "vocab" not in data or "topics" not in data:
        raise FileFormatError(f"{path}: expected keys 'vocab' and 'topics'")
    vocab = tuple(str(w) for w in data["vocab"])
    if not vocab:
        raise FileFormatError(f"{path}: empty reference vocabulary")
    names = []
    rows = []
    for i, entry in enumerate(data["topics"]):
        name = entry.get("name")
        dist = entry.get("dist")
        if not name or dist is None:
            raise FileFormatError(f"{path}: topic {i} needs 'name' and 'dist'")
        row = np.asarray(dist, dtype=np.float64)
        if row.shape != (len(vocab),):
            raise FileFormatError(
                f"{path}: topic {name!r} has {row.size} entries, vocab has {len(vocab)}"
            )
        if np.any(row < 0):
            raise NotADistribution(f"{path}: topic {name!r} has negative entries")
        total = float(row.sum())
        if abs(total - 1.0) > ROW_RENORM_TOL:
            raise NotADistribution(
                f"{path}: topic {name!r} row sums to {total:.6f}, beyond the 1e-3 repair limit"
            )
        names.append(str(name))
        rows.append(row / total)
    if len(set(names)) != len(names):
        raise FileFormatError(f"{path}: duplicate topic names")
    if not rows:
        raise FileFormatError(f"{path}: no topics")
    return ReferenceTopics(ref_vocab=vocab, names=tuple(names), beta_ref=np.vstack(rows))


# ---------------------------------------------------------------------------
# Soft labels and sharpening
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SoftLabelMatrix:
    """Per-document, per-named-topic probabilities with column sums f."""

    p: np.ndarray  # (n_docs, k_named)
    f: np.ndarray  # (k_named,), recomputed from p, never trusted from file

    @classmethod
    def from_probabilities(cls, p: np.ndarray) -> "SoftLabelMatrix":
        p = np.asarray(p, dtype=np.float64)
        if p.ndim != 2:
            raise FileFormatError("soft labels must be a 2-D matrix")
        if np.any(p < 0) or np.any(p > 1):
            raise FileFormatError("soft-label entries must lie in [0, 1]")
        return cls(p=p, f=p.sum(axis=0))


@dataclass(frozen=True)
class SharpenedTargets:
    """Square-and-normalize transform of soft labels; rows on the simplex."""

    theta_t: np.ndarray  # (n_docs, k_named)


def sharpen_soft_labels(labels: SoftLabelMatrix) -> SharpenedTargets:
    """Amplify confident labels: target_dk = (p_dk^2 / f_k) / sum_k' (p_dk'^2 / f_k').

    Dividing by the column sum f_k keeps frequent topics from swamping rare
    ones; squaring pushes each row toward its dominant label. The transform
    is exactly invariant to scaling the whole matrix by any c > 0.
    """
    p, f = labels.p, labels.f
    if np.any(f <= 0):
        bad = int(np.argmin(f))
        raise DegenerateColumn(f"soft-label column {bad} sums to {f[bad]}")
    row_mass = (p > 0).any(axis=1)
    if not row_mass.all():
        raise DegenerateRow(f"soft-label row {int(np.argmin(row_mass))} is all zeros")
    scores = (p**2) / f
    return SharpenedTargets(theta_t=scores / scores.sum(axis=1, keepdims=True))


# ---------------------------------------------------------------------------
# Supervision mask and topic configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TopicSpec:
    """One topic-config entry: optional surface name plus supervision mode."""

    name: str | None
    supervision: str


@dataclass(frozen=True)
class SupervisionMask:
    """Per-topic gates for the three guidance signals.

    Reference-adapted topics occupy the leading indices; topics beyond them
    never carry topic- or document-level supervision, though a named
    discovery topic may still receive word-level guidance.
    """

    topic_level: tuple[bool, ...]
    doc_level: tuple[bool, ...]
    word_level: tuple[bool, ...]

    @property
    def n_topics(self) -> int:
        return len(self.topic_level)

    def topic_indices(self) -> list[int]:
        return [i for i, on in enumerate(self.topic_level) if on]

    def doc_indices(self) -> list[int]:
        return [i for i, on in enumerate(self.doc_level) if on]

    def word_indices(self) -> list[int]:
        return [i for i, on in enumerate(self.word_level) if on]


def load_topic_config(path) -> list[TopicSpec]:
    """Load the per-topic JSON list; the number of entries fixes K."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(data, list) or not data:
        raise FileFormatError(f"{path}: expected a nonempty JSON list of topic entries")
    specs = []
    for i, entry in enumerate(data):
        if not isinstance(entry, dict):
            raise FileFormatError(f"{path}: entry {i} is not an object")
        mode = entry.get("supervision", SUPERVISION_NONE)
        if mode not in (SUPERVISION_FULL, SUPERVISION_NAME_ONLY, SUPERVISION_NONE):
            raise FileFormatError(f"{path}: entry {i} has unknown supervision {mode!r}")
        name = entry.get("name")
        specs.append(TopicSpec(name=str(name) if name is not None else None, supervision=mode))
    return specs


def build_mask(specs) -> SupervisionMask:
    """Derive the per-topic gates from config entries and validate layout.

    full      -> topic + document + word supervision (name required);
    name-only -> word supervision only (name required);
    none      -> discovery (no supervision even if a name is present).

    Fully supervised topics must come first so their indices align with the
    reference rows.
    """
    topic, doc, word = [], [], []
    seen_non_full = False
    for i, spec in enumerate(specs):
        if spec.supervision == SUPERVISION_FULL:
            if seen_non_full:
                raise FileFormatError(
                    f"topic {i}: fully supervised topics must precede name-only/none topics"
                )
            if not spec.name:
                raise FileFormatError(f"topic {i}: full supervision requires a name")
            topic.append(True)
            doc.append(True)
            word.append(True)
        else:
            seen_non_full = True
            topic.append(False)
            doc.append(False)
            if spec.supervision == SUPERVISION_NAME_ONLY:
                if not spec.name:
                    raise FileFormatError(f"topic {i}: name-only supervision requires a name")
                word.append(True)
            else:
                word.append(False)
    return SupervisionMask(topic_level=tuple(topic), doc_level=tuple(doc), word_level=tuple(word))


# ---------------------------------------------------------------------------
# Regularizers
# ---------------------------------------------------------------------------


def topic_regularizer(beta_ref: np.ndarray, beta_proj: np.ndarray, mask: SupervisionMask) -> float:
    """Mean KL from aligned reference rows to the model's projected rows.

    ``beta_ref`` rows are ordered like ``mask.topic_indices()``; row r is the
    reference for model topic ``mask.topic_indices()[r]``.
    """
    idx = mask.topic_indices()
    if not idx:
        raise EmptyMask("no topic has topic-level supervision; omit the term instead")
    if len(idx) != beta_ref.shape[0]:
        raise NotADistribution(
            f"{beta_ref.shape[0]} reference rows for {len(idx)} masked-in topics"
        )
    return float(np.mean([kl_divergence(beta_ref[r], beta_proj[j]) for r, j in enumerate(idx)]))


def document_regularizer(
    theta_targets: np.ndarray, theta_batch: np.ndarray, mask: SupervisionMask
) -> float:
    """Mean KL from sharpened targets to (restricted, renormalized) theta rows.

    When the model carries more topics than the targets cover, each theta
    row is restricted to the document-supervised coordinates and
    renormalized, so discovery topics are free to hold mass without being
    dragged toward zero.
    """
    idx = mask.doc_indices()
    if not idx:
        raise EmptyMask("no topic has document-level supervision; omit the term instead")
    theta_targets = np.asarray(theta_targets, dtype=np.float64)
    theta_batch = np.asarray(theta_batch, dtype=np.float64)
    if theta_targets.shape != (theta_batch.shape[0], len(idx)):
        raise NotADistribution(
            f"targets {theta_targets.shape} do not match batch of {theta_batch.shape[0]} docs"
            f" over {len(idx)} supervised topics"
        )
    restricted = theta_batch[:, idx]
    mass = restricted.sum(axis=1)
    if np.any(mass < 1e-8):
        raise RenormalizationUnderflow(
            f"document {int(np.argmin(mass))} has {mass.min():.3e} mass on supervised topics"
        )
    restricted = restricted / mass[:, None]
    total = 0.0
    for d in range(theta_batch.shape[0]):
        total += kl_divergence(theta_targets[d], restricted[d])
    return total / theta_batch.shape[0]


def word_regularizer(gamma: np.ndarray, beta: np.ndarray, mask: SupervisionMask) -> float:
    """Mean KL from name-guidance rows to the model's topic-word rows."""
    idx = mask.word_indices()
    if not idx:
        raise EmptyMask("no topic has word-level supervision; omit the term instead")
    if len(idx) != gamma.shape[0]:
        raise NotADistribution(f"{gamma.shape[0]} guidance rows for {len(idx)} masked-in topics")
    return float(np.mean([kl_divergence(gamma[r], beta[j]) for r, j in enumerate(idx)]))


# ---------------------------------------------------------------------------
# Word-level guidance and the embedding-cosine fallback labeler
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GuidanceDist:
    """Name-similarity distributions over the vocabulary, one row per named topic."""

    gamma: np.ndarray  # (n_named, V)
    names: tuple[str, ...]


def build_gamma(
    names, rho: EmbeddingMatrix | np.ndarray, table: EmbeddingTable, tau: float = 0.1
) -> GuidanceDist:
    """Turn name/word cosine similarities into per-topic distributions.

    gamma[j] = softmax over words of cos(name_j, word_v) / tau. The
    temperature concentrates mass on semantically close words; at tau -> inf
    the rows flatten to uniform.
    """
    rho = rho.matrix if isinstance(rho, EmbeddingMatrix) else np.asarray(rho)
    if tau <= 0:
        raise ValueError("tau must be positive")
    rows = []
    for name in names:
        vec = name_embedding(name, table)
        rows.append(_cosine_row(vec, rho, name) / tau)
    return GuidanceDist(gamma=softmax(np.vstack(rows), axis=1), names=tuple(names))


def _cosine_row(vec: np.ndarray, rho: np.ndarray, name: str) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        raise NamelessTopic(f"surface name {name!r} has no embedding")
    row_norms = np.linalg.norm(rho, axis=1)
    safe = np.where(row_norms == 0.0, 1.0, row_norms)
    sims = (rho @ vec) / (safe * norm)
    return np.where(row_norms == 0.0, 0.0, sims)


def fallback_pseudo_labels(
    corpus: Corpus,
    rho: EmbeddingMatrix | np.ndarray,
    names,
    table: EmbeddingTable,
    tau_doc: float = 0.1,
) -> SoftLabelMatrix:
    """Embedding-cosine stand-in for an entailment labeler.

    Each document is summarized as the count-weighted mean embedding of its
    in-vocabulary words; p_dk = softmax over names of cos(centroid_d,
    name_k) / tau_doc.
    """
    names = list(names)
    if not names:
        raise ValueError("fallback_pseudo_labels needs at least one name")
    rho = rho.matrix if isinstance(rho, EmbeddingMatrix) else np.asarray(rho)
    name_vecs = []
    for name in names:
        vec = name_embedding(name, table)
        if np.linalg.norm(vec) == 0.0:
            raise NamelessTopic(f"surface name {name!r} has no embedding")
        name_vecs.append(vec)
    logits = np.zeros((len(corpus.documents), len(names)), dtype=np.float64)
    for d, doc in enumerate(corpus.documents):
        idx = np.fromiter(doc.counts.keys(), dtype=np.int64)
        wts = np.fromiter(doc.counts.values(), dtype=np.float64)
        centroid = (wts[:, None] * rho[idx]).sum(axis=0) / wts.sum()
        cnorm = np.linalg.norm(centroid)
        for k, nv in enumerate(name_vecs):
            if cnorm == 0.0:
                logits[d, k] = 0.0
            else:
                logits[d, k] = float(centroid @ nv / (cnorm * np.linalg.norm(nv))) / tau_doc
    return SoftLabelMatrix.from_probabilities(softmax(logits, axis=1))


# ---------------------------------------------------------------------------
# Soft-label CSV format (shared with the offline labeler) and bundle assembly
# ---------------------------------------------------------------------------


def format_soft_labels(doc_ids, names, p: np.ndarray) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["doc_id", *names])
    for d, doc_id in enumerate(doc_ids):
        writer.writerow([doc_id, *[repr(float(x)) for x in p[d]]])
    return buf.getvalue()


def load_soft_labels(path, corpus: Corpus, names) -> SoftLabelMatrix:
    """Read the labeler CSV and validate it against the corpus, hard.

    The header must carry every expected name (column order in the file is
    free; values are re-ordered to ``names``); each row's doc_id must equal
    the corresponding retained document's id, in order.
    """
    names = list(names)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise FileFormatError(f"{path}: empty file") from None
        if not header or header[0] != "doc_id":
            raise FileFormatError(f"{path}: header must start with 'doc_id'")
        file_names = header[1:]
        missing = [n for n in names if n not in file_names]
        if missing:
            raise FileFormatError(f"{path}: missing columns for topics {missing}")
        order = [file_names.index(n) for n in names]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(file_names) + 1:
                raise FileFormatError(f"{path}:{lineno}: expected {len(file_names) + 1} cells")
            try:
                values = [float(x) for x in row[1:]]
            except ValueError as exc:
                raise FileFormatError(f"{path}:{lineno}: non-numeric probability") from exc
            rows.append((row[0], [values[i] for i in order]))
    if len(rows) != len(corpus.documents):
        raise FileFormatError(
            f"{path}: {len(rows)} rows for {len(corpus.documents)} retained documents"
        )
    for (doc_id, _), doc in zip(rows, corpus.documents):
        if doc_id != doc.doc_id:
            raise FileFormatError(
                f"{path}: row doc_id {doc_id!r} does not match corpus doc_id {doc.doc_id!r}"
            )
    p = np.array([values for _, values in rows], dtype=np.float64)
    if np.any(p < 0) or np.any(p > 1):
        raise FileFormatError(f"{path}: probabilities must lie in [0, 1]")
    return SoftLabelMatrix.from_probabilities(p)


@dataclass(frozen=True)
class SupervisionBundle:
    """Everything the trainer needs, aligned to model topic indices.

    ``beta_ref`` rows follow ``mask.topic_indices()``; ``theta_targets``
    columns follow ``mask.doc_indices()``; ``gamma`` rows follow
    ``mask.word_indices()``. Absent signals are None and their objective
    terms are omitted.
    """

    mask: SupervisionMask
    beta_ref: np.ndarray | None = None
    rho_ref: np.ndarray | None = None
    theta_targets: np.ndarray | None = None
    gamma: np.ndarray | None = None

    @classmethod
    def unsupervised(cls, n_topics: int) -> "SupervisionBundle":
        off = tuple([False] * n_topics)
        return cls(mask=SupervisionMask(topic_level=off, doc_level=off, word_level=off))


def assemble_supervision(
    specs,
    corpus: Corpus,
    rho: EmbeddingMatrix | np.ndarray,
    table: EmbeddingTable,
    reference: ReferenceTopics | None = None,
    soft_labels: SoftLabelMatrix | None = None,
    rho_ref: EmbeddingMatrix | np.ndarray | None = None,
    gamma_tau: float = 0.1,
) -> SupervisionBundle:
    """Wire config, reference rows, soft labels and names into one bundle.

    Reference rows and soft-label columns are matched by surface name and
    re-ordered to the topic-config order. A signal whose artifact is not
    supplied is left as None; the trainer rejects that only if the signal's
    term is actually active (nonzero weight and nonempty mask), so callers
    that zero a weight need not provide the matching file.
    """
    specs = list(specs)
    mask = build_mask(specs)
    beta_ref = None
    rref = None
    t_idx = mask.topic_indices()
    if t_idx and reference is not None:
        rows = []
        for j in t_idx:
            name = specs[j].name
            if name not in reference.names:
                raise FileFormatError(f"topic {j} name {name!r} not found in reference topics")
            rows.append(reference.beta_ref[reference.names.index(name)])
        beta_ref = np.vstack(rows)
        if rho_ref is None:
            raise FileFormatError("topic-level supervision needs the reference embedding matrix")
        rref = rho_ref.matrix if isinstance(rho_ref, EmbeddingMatrix) else np.asarray(rho_ref)
        if rref.shape[0] != len(reference.ref_vocab):
            raise FileFormatError(
                f"reference embedding matrix has {rref.shape[0]} rows,"
                f" reference vocabulary has {len(reference.ref_vocab)}"
            )
    theta_targets = None
    if mask.doc_indices() and soft_labels is not None:
        if soft_labels.p.shape != (len(corpus.documents), len(mask.doc_indices())):
            raise FileFormatError(
                f"soft labels shaped {soft_labels.p.shape}, expected"
                f" ({len(corpus.documents)}, {len(mask.doc_indices())})"
            )
        theta_targets = sharpen_soft_labels(soft_labels).theta_t
    gamma = None
    w_idx = mask.word_indices()
    if w_idx:
        gamma = build_gamma([specs[j].name for j in w_idx], rho, table, tau=gamma_tau).gamma
    return SupervisionBundle(
        mask=mask, beta_ref=beta_ref, rho_ref=rref, theta_targets=theta_targets, gamma=gamma
    )
