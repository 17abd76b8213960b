"""Topic-quality metrics: coherence (NPMI), diversity, and their product.

Coherence uses document-level co-occurrence: a word pair counts as joint
when both words appear anywhere in one document. Counts get add-one
smoothing with probabilities over |D| + 1, which keeps every probability in
(0, 1] and therefore every pair's NPMI inside [-1, 1]; a pair present in
every document carries no information and scores exactly 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Vocabulary
from .errors import InsufficientVocab

COHERENCE_TOP_N = 10
DIVERSITY_TOP_N = 25
TABLE_TOP_N = 5


@dataclass(frozen=True)
class TopicTopWords:
    """Per-topic lists of the highest-probability words, ties by index."""

    topics: tuple[tuple[str, ...], ...]

    def __len__(self) -> int:
        return len(self.topics)


def top_words(beta: np.ndarray, vocab: Vocabulary, n: int) -> TopicTopWords:
    """Top-``n`` words of every topic row, descending with index tie-break."""
    if n < 1:
        raise ValueError("n must be >= 1")
    beta = np.asarray(beta)
    V = beta.shape[1]
    take = min(n, V)
    rows = []
    for k in range(beta.shape[0]):
        # lexsort: primary key is the last one; index breaks exact ties.
        order = np.lexsort((np.arange(V), -beta[k]))
        rows.append(tuple(vocab.words[v] for v in order[:take]))
    return TopicTopWords(topics=tuple(rows))


def _doc_sets(corpus: Corpus, word_ids) -> dict[int, set[int]]:
    """Document-index sets per word id, restricted to the words of interest."""
    wanted = set(word_ids)
    occur: dict[int, set[int]] = {w: set() for w in wanted}
    for d, doc in enumerate(corpus.documents):
        for v in doc.counts:
            if v in wanted:
                occur[v].add(d)
    return occur


def npmi(joint: int, df_i: int, df_j: int, n_docs: int) -> float:
    """Smoothed NPMI of one pair from document counts.

    Probabilities are (count + 1) / (n_docs + 1). A pair with smoothed joint
    probability 1 has zero self-information; its NPMI is defined as 0.
    """
    denom = n_docs + 1.0
    p_ij = (joint + 1.0) / denom
    p_i = (df_i + 1.0) / denom
    p_j = (df_j + 1.0) / denom
    if p_ij >= 1.0:
        return 0.0
    return float(np.log(p_ij / (p_i * p_j)) / (-np.log(p_ij)))


def per_topic_coherence(topics: TopicTopWords, corpus: Corpus) -> list[float]:
    """Mean pairwise NPMI of each topic's top words."""
    if len(corpus.documents) == 0:
        raise ValueError("coherence needs at least one document")
    n_docs = len(corpus.documents)
    index = corpus.vocabulary.index
    values = []
    for words in topics.topics:
        ids = [index[w] for w in words]
        occur = _doc_sets(corpus, ids)
        pair_scores = []
        for a in range(len(ids)):
            for b in range(a + 1, len(ids)):
                i, j = ids[a], ids[b]
                pair_scores.append(npmi(len(occur[i] & occur[j]), len(occur[i]), len(occur[j]), n_docs))
        values.append(float(np.mean(pair_scores)) if pair_scores else 0.0)
    return values


def topic_coherence(topics: TopicTopWords, corpus: Corpus) -> float:
    """Corpus-level coherence: per-topic mean NPMI averaged over topics."""
    return float(np.mean(per_topic_coherence(topics, corpus)))


def topic_diversity(topics: TopicTopWords) -> float:
    """Fraction of distinct words across all topics' top-25 lists."""
    for k, words in enumerate(topics.topics):
        if len(words) < DIVERSITY_TOP_N:
            raise InsufficientVocab(
                f"topic {k} has only {len(words)} top words; diversity needs {DIVERSITY_TOP_N}"
            )
    lists = [words[:DIVERSITY_TOP_N] for words in topics.topics]
    distinct = set().union(*lists)
    return len(distinct) / (DIVERSITY_TOP_N * len(lists))


def topic_quality(tc: float, td: float) -> float:
    return tc * td


@dataclass(frozen=True)
class EvalReport:
    """Headline metrics plus the per-topic detail behind them."""

    tc: float
    td: float
    tq: float
    per_topic: tuple[float, ...]
    tables: tuple[tuple[str, ...], ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "tc": self.tc,
                "td": self.td,
                "tq": self.tq,
                "per_topic_coherence": list(self.per_topic),
                "top_words": [list(t) for t in self.tables],
            },
            indent=2,
        ) + "\n"

    def to_text(self) -> str:
        lines = [
            f"tc {self.tc:.6f}",
            f"td {self.td:.6f}",
            f"tq {self.tq:.6f}",
        ]
        for k, (coh, words) in enumerate(zip(self.per_topic, self.tables)):
            lines.append(f"topic {k:2d}  coherence {coh:+.6f}  {' '.join(words)}")
        return "\n".join(lines) + "\n"


def evaluate(
    beta: np.ndarray,
    vocab: Vocabulary,
    corpus: Corpus,
    coherence_top_n: int = COHERENCE_TOP_N,
    table_top_n: int = TABLE_TOP_N,
) -> EvalReport:
    """Compute the full report; tq is stored as the exact product tc * td."""
    coh_topics = top_words(beta, vocab, coherence_top_n)
    per_topic = per_topic_coherence(coh_topics, corpus)
    tc = float(np.mean(per_topic))
    td = topic_diversity(top_words(beta, vocab, DIVERSITY_TOP_N))
    tables = top_words(beta, vocab, table_top_n)
    return EvalReport(
        tc=tc,
        td=td,
        tq=topic_quality(tc, td),
        per_topic=tuple(per_topic),
        tables=tables.topics,
    )
