"""Command-line entry point: reproducible runs driven by a config file.

Subcommands: build-corpus, train, topics, eval, pseudo-labels, infer-theta.
For ``train``, a JSON config file is the source of truth and command-line
flags override individual keys; the effective merged config is echoed into
the output directory. Every output file is written to a temporary sibling
and renamed, so validation failures never leave partial files behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from . import corpus as corpus_io
from .corpus import Vocabulary, build_corpus_from_lines, load_corpus, read_document_lines
from .embeddings import (
    MISSING_RANDOM,
    embedding_matrix_for,
    load_embeddings,
)
from .errors import CheckpointError, FileFormatError, TopicBridgeError
from .evaluation import evaluate, top_words
from .model import compute_beta, load_checkpoint, save_checkpoint, vocabulary_hash
from .supervision import (
    SUPERVISION_FULL,
    SUPERVISION_NAME_ONLY,
    assemble_supervision,
    build_mask,
    fallback_pseudo_labels,
    format_soft_labels,
    load_reference_topics,
    load_soft_labels,
    load_topic_config,
)
from .training import TrainConfig, infer_theta, train

_MODE_LABELS = {SUPERVISION_FULL: "adapted", SUPERVISION_NAME_ONLY: "name-only"}

# train-config keys that may come from the config file and be overridden by flags
_TRAIN_KEYS = (
    "gamma_beta",
    "gamma_theta",
    "gamma_gamma",
    "epochs",
    "batch_size",
    "learning_rate",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "seed",
    "hidden_width",
    "precision",
)
_PATH_KEYS = ("corpus_dir", "embeddings", "topic_config", "reference_topics", "soft_labels", "out_dir")


def _write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_atomic_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileFormatError(f"{what} not found: {p}")
    return p


def _load_checkpoint_for(corpus, path):
    params, vocab_hash = load_checkpoint(_require(path, "checkpoint"))
    if vocab_hash != vocabulary_hash(corpus.vocabulary):
        raise CheckpointError(f"{path}: vocabulary hash mismatch with the given corpus")
    return params


def cmd_build_corpus(args) -> int:
    lines = read_document_lines(_require(args.input, "corpus file"))
    stopwords = frozenset()
    if args.stopwords:
        stopwords = frozenset(
            w.strip().lower() for w in read_document_lines(_require(args.stopwords, "stopword file")) if w.strip()
        )
    corpus, dropped = build_corpus_from_lines(
        lines, min_df=args.min_df, max_df_frac=args.max_df_frac, stopwords=stopwords
    )
    out = Path(args.out_dir)
    _write_atomic(out / corpus_io.VOCAB_FILENAME, corpus_io.format_vocabulary(corpus.vocabulary))
    _write_atomic(out / corpus_io.BOW_FILENAME, corpus_io.format_bow(corpus))
    _write_atomic(out / corpus_io.DROPS_FILENAME, corpus_io.format_drop_report(dropped))
    print(f"vocabulary: {len(corpus.vocabulary)} tokens")
    print(f"documents: {len(corpus.documents)} retained, {len(dropped)} dropped")
    return 0


def _merge_train_settings(args) -> dict:
    """Config file first, then every explicitly passed flag on top."""
    merged: dict = {}
    if args.config:
        raw = json.loads(_require(args.config, "config file").read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise FileFormatError(f"{args.config}: config must be a JSON object")
        merged.update(raw)
    for key in _PATH_KEYS + _TRAIN_KEYS + ("gamma_tau", "missing_policy"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    return merged


def cmd_train(args) -> int:
    cfg = _merge_train_settings(args)
    for key in ("corpus_dir", "embeddings", "topic_config", "out_dir"):
        if not cfg.get(key):
            raise FileFormatError(f"train needs {key} (config key or flag)")

    corpus = load_corpus(_require(cfg["corpus_dir"], "corpus directory"))
    table = load_embeddings(_require(cfg["embeddings"], "embedding file"))
    specs = load_topic_config(_require(cfg["topic_config"], "topic config"))
    train_config = TrainConfig(
        k_total=len(specs), **{k: cfg[k] for k in _TRAIN_KEYS if k in cfg}
    )
    train_config.validate()

    policy = cfg.get("missing_policy", MISSING_RANDOM)
    rho = embedding_matrix_for(corpus.vocabulary, table, missing_policy=policy)
    print(f"embedding coverage: {rho.coverage:.4f}")

    # Masks demand files only when their term is actually in the objective.
    mask = build_mask(specs)
    need_reference = train_config.gamma_beta > 0 and bool(mask.topic_indices())
    need_labels = train_config.gamma_theta > 0 and bool(mask.doc_indices())
    reference = None
    rho_ref = None
    if need_reference:
        if not cfg.get("reference_topics"):
            raise FileFormatError("topic-level supervision is on but no reference_topics file was given")
        reference = load_reference_topics(_require(cfg["reference_topics"], "reference topics"))
        rho_ref = embedding_matrix_for(
            Vocabulary.from_words(reference.ref_vocab), table, missing_policy=policy
        )
    soft = None
    if need_labels:
        if not cfg.get("soft_labels"):
            raise FileFormatError("document-level supervision is on but no soft_labels file was given")
        full_names = [s.name for s in specs if s.supervision == SUPERVISION_FULL]
        soft = load_soft_labels(_require(cfg["soft_labels"], "soft labels"), corpus, full_names)

    bundle = assemble_supervision(
        specs,
        corpus,
        rho,
        table,
        reference=reference,
        soft_labels=soft,
        rho_ref=rho_ref,
        gamma_tau=cfg.get("gamma_tau", 0.1),
    )
    params, history = train(corpus, rho, bundle, train_config)

    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    tmp_ckpt = out / ".checkpoint.tmp"
    save_checkpoint(tmp_ckpt, params, vocabulary_hash(corpus.vocabulary))
    os.replace(tmp_ckpt, out / "checkpoint.bin")
    _write_atomic(out / "history.csv", history.to_csv())
    merged_echo = dict(cfg)
    merged_echo["k_total"] = train_config.k_total
    _write_atomic(out / "config.json", json.dumps(merged_echo, indent=2, sort_keys=True) + "\n")
    last = history.records[-1]
    print(
        f"final epoch {last.epoch}: elbo {last.elbo:.6f}"
        f" r_beta {last.r_beta:.6f} r_theta {last.r_theta:.6f} r_gamma {last.r_gamma:.6f}"
        f" objective {last.objective:.6f}"
    )
    return 0


def _topic_modes(specs, n_topics: int) -> list[str]:
    if specs is None:
        return ["unlabeled"] * n_topics
    return [_MODE_LABELS.get(s.supervision, "discovered") for s in specs]


def _topic_names(specs, n_topics: int) -> list[str]:
    if specs is None:
        return [f"topic_{k}" for k in range(n_topics)]
    return [s.name or f"topic_{k}" for k, s in enumerate(specs)]


def cmd_topics(args) -> int:
    corpus = load_corpus(_require(args.corpus_dir, "corpus directory"))
    params = _load_checkpoint_for(corpus, args.checkpoint)
    table = load_embeddings(_require(args.embeddings, "embedding file"))
    rho = embedding_matrix_for(corpus.vocabulary, table, missing_policy=args.missing_policy)
    beta = compute_beta(params.alpha, rho.matrix)
    specs = load_topic_config(_require(args.topic_config, "topic config")) if args.topic_config else None
    if specs is not None and len(specs) != params.n_topics:
        raise FileFormatError(
            f"topic config has {len(specs)} entries, checkpoint has {params.n_topics} topics"
        )
    words = top_words(beta, corpus.vocabulary, args.top_n)
    modes = _topic_modes(specs, params.n_topics)
    names = _topic_names(specs, params.n_topics)
    lines = []
    for k, topic_words in enumerate(words.topics):
        lines.append(f"{k}\t{names[k]}\t{modes[k]}\t{' '.join(topic_words)}")
    text = "\n".join(lines) + "\n"
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    corpus = load_corpus(_require(args.corpus_dir, "corpus directory"))
    params = _load_checkpoint_for(corpus, args.checkpoint)
    table = load_embeddings(_require(args.embeddings, "embedding file"))
    rho = embedding_matrix_for(corpus.vocabulary, table, missing_policy=args.missing_policy)
    beta = compute_beta(params.alpha, rho.matrix)
    report = evaluate(
        beta,
        corpus.vocabulary,
        corpus,
        coherence_top_n=args.coherence_top_n,
        table_top_n=args.table_top_n,
    )
    text = report.to_text() if args.text else report.to_json()
    if args.out:
        _write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_pseudo_labels(args) -> int:
    corpus = load_corpus(_require(args.corpus_dir, "corpus directory"))
    table = load_embeddings(_require(args.embeddings, "embedding file"))
    specs = load_topic_config(_require(args.topic_config, "topic config"))
    names = [s.name for s in specs if s.supervision == SUPERVISION_FULL]
    if not names:
        raise FileFormatError("no fully supervised topics in the config; nothing to label")
    rho = embedding_matrix_for(corpus.vocabulary, table, missing_policy=args.missing_policy)
    labels = fallback_pseudo_labels(corpus, rho, names, table, tau_doc=args.tau_doc)
    doc_ids = [d.doc_id for d in corpus.documents]
    _write_atomic(args.out, format_soft_labels(doc_ids, names, labels.p))
    print(f"wrote {labels.p.shape[0]} rows x {labels.p.shape[1]} topics to {args.out}")
    return 0


def cmd_infer_theta(args) -> int:
    corpus = load_corpus(_require(args.corpus_dir, "corpus directory"))
    params = _load_checkpoint_for(corpus, args.checkpoint)
    theta = infer_theta(corpus, params)
    lines = ["doc_id," + ",".join(f"topic_{k}" for k in range(theta.shape[1]))]
    for doc, row in zip(corpus.documents, theta):
        lines.append(doc.doc_id + "," + ",".join(repr(float(x)) for x in row))
    _write_atomic(args.out, "\n".join(lines) + "\n")
    print(f"wrote theta for {theta.shape[0]} documents to {args.out}")
    return 0


def _add_common_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus-dir", required=True, help="directory written by build-corpus")
    p.add_argument("--embeddings", required=True, help="word2vec-style text embedding file")
    p.add_argument("--missing-policy", default=MISSING_RANDOM, help="zero | deterministic-random")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="topicbridge", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-corpus", help="tokenize and vectorize a one-document-per-line file")
    p.add_argument("--input", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--min-df", type=int, default=1)
    p.add_argument("--max-df-frac", type=float, default=1.0)
    p.add_argument("--stopwords", default=None)
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("train", help="optimize the regularized objective")
    p.add_argument("--config", default=None, help="JSON config file; flags override its keys")
    for key in _PATH_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    p.add_argument("--gamma-beta", dest="gamma_beta", type=float, default=None)
    p.add_argument("--gamma-theta", dest="gamma_theta", type=float, default=None)
    p.add_argument("--gamma-gamma", dest="gamma_gamma", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=None)
    p.add_argument("--adam-beta1", dest="adam_beta1", type=float, default=None)
    p.add_argument("--adam-beta2", dest="adam_beta2", type=float, default=None)
    p.add_argument("--adam-eps", dest="adam_eps", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden-width", dest="hidden_width", type=int, default=None)
    p.add_argument("--precision", default=None, help="float64 | float32")
    p.add_argument("--gamma-tau", dest="gamma_tau", type=float, default=None)
    p.add_argument("--missing-policy", dest="missing_policy", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("topics", help="print the per-topic top-word table")
    p.add_argument("--checkpoint", required=True)
    _add_common_model_args(p)
    p.add_argument("--topic-config", default=None)
    p.add_argument("-n", "--top-n", dest="top_n", type=int, default=5)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_topics)

    p = sub.add_parser("eval", help="compute coherence, diversity, and quality")
    p.add_argument("--checkpoint", required=True)
    _add_common_model_args(p)
    p.add_argument("--coherence-top-n", dest="coherence_top_n", type=int, default=10)
    p.add_argument("--table-top-n", dest="table_top_n", type=int, default=5)
    p.add_argument("--text", action="store_true", help="plain table instead of JSON")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pseudo-labels", help="embedding-cosine fallback soft labels")
    _add_common_model_args(p)
    p.add_argument("--topic-config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tau-doc", dest="tau_doc", type=float, default=0.1)
    p.set_defaults(func=cmd_pseudo_labels)

    p = sub.add_parser("infer-theta", help="zero-noise document-topic rows")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus-dir", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer_theta)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (TopicBridgeError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
