"""Model core: topic embeddings, the bag-of-words encoder, and the ELBO pieces.

The decoder has a single parameter, the K x L topic-embedding matrix
``alpha``; the topic-word distribution is always derived as
``beta = softmax_rows(alpha @ rho.T)`` over the frozen word-embedding matrix
``rho`` and is never stored. The encoder is one softplus hidden layer with
linear heads producing the mean and log-variance of a logistic-normal
latent, whose softmax is the document-topic distribution theta.

Noise for the reparameterized latent is always injected by the caller, so
every function here is pure and reproducible.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .errors import CheckpointError, DimMismatch

EPS_LOG = 1e-12

_MAGIC = b"TPBRCKPT"
_VERSION = 1
_HEADER = struct.Struct("<8sIIIII32s")  # magic, version, K, V, L, H, vocab hash


@dataclass
class ModelParams:
    """Trainable state: topic embeddings plus encoder weights.

    Array shapes: alpha (K, L); w1 (H, V), b1 (H,); w_mu (K, H), b_mu (K,);
    w_lv (K, H), b_lv (K,). This field order is also the flatten order and
    the checkpoint payload order.
    """

    alpha: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w_mu: np.ndarray
    b_mu: np.ndarray
    w_lv: np.ndarray
    b_lv: np.ndarray

    @property
    def n_topics(self) -> int:
        return self.alpha.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.alpha.shape[1]

    @property
    def hidden_width(self) -> int:
        return self.w1.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.w1.shape[1]

    def arrays(self) -> list[np.ndarray]:
        return [self.alpha, self.w1, self.b1, self.w_mu, self.b_mu, self.w_lv, self.b_lv]

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.arrays()])

    def with_flat(self, flat: np.ndarray) -> "ModelParams":
        """Rebuild params from a flat vector laid out like :meth:`flatten`."""
        out = []
        offset = 0
        for a in self.arrays():
            out.append(flat[offset : offset + a.size].reshape(a.shape).astype(a.dtype))
            offset += a.size
        if offset != flat.size:
            raise DimMismatch(f"flat vector has {flat.size} entries, expected {offset}")
        return ModelParams(*out)

    def copy(self) -> "ModelParams":
        return ModelParams(*[a.copy() for a in self.arrays()])

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(*[a.astype(dtype) for a in self.arrays()])


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-subtracted softmax, stable for large-magnitude logits."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x) without overflow: x + log1p(e^-x) on the positive branch.
    return np.where(x > 0, x + np.log1p(np.exp(-np.abs(x))), np.log1p(np.exp(np.minimum(x, 0.0))))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def compute_beta(alpha: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Topic-word distribution: row k = softmax over words of rho . alpha_k."""
    alpha = np.asarray(alpha)
    rho = np.asarray(rho)
    if alpha.ndim != 2 or rho.ndim != 2 or alpha.shape[1] != rho.shape[1]:
        raise DimMismatch(f"alpha {alpha.shape} and rho {rho.shape} are incompatible")
    return softmax(alpha @ rho.T, axis=1)


def project_reference(alpha: np.ndarray, rho_ref: np.ndarray) -> np.ndarray:
    """Re-express the model's topics over the reference lexicon.

    Same functional form as :func:`compute_beta`, evaluated against the
    embedding matrix of the reference vocabulary, which is what makes a KL
    against reference rows well-defined despite the vocabulary mismatch.
    """
    return compute_beta(alpha, rho_ref)


def encode(x_norm: np.ndarray, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Forward pass of the encoder on normalized bag-of-words input.

    Accepts a single V-vector or a (B, V) batch; returns (mu, log_var) with
    matching leading shape.
    """
    x = np.asarray(x_norm, dtype=params.w1.dtype)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    h = softplus(x @ params.w1.T + params.b1)
    mu = h @ params.w_mu.T + params.b_mu
    log_var = h @ params.w_lv.T + params.b_lv
    if single:
        return mu[0], log_var[0]
    return mu, log_var


@dataclass(frozen=True)
class LatentState:
    """Sampled logistic-normal latent and its softmax, the topic mixture."""

    mu: np.ndarray
    log_var: np.ndarray
    delta: np.ndarray
    theta: np.ndarray


def reparameterize(mu: np.ndarray, log_var: np.ndarray, noise: np.ndarray) -> LatentState:
    """delta = mu + exp(log_var / 2) * noise; theta = softmax(delta)."""
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    delta = mu + np.exp(0.5 * log_var) * noise
    return LatentState(mu=mu, log_var=log_var, delta=delta, theta=softmax(delta, axis=-1))


def reconstruction_loglik(counts, theta: np.ndarray, beta: np.ndarray) -> float:
    """Sum over words of count * log(mixture probability + floor).

    ``counts`` is a sparse index->count map (or a BowDocument, via its
    ``counts`` attribute).
    """
    counts = getattr(counts, "counts", counts)
    mix = np.asarray(theta) @ np.asarray(beta)
    total = 0.0
    for v, c in counts.items():
        total += c * np.log(mix[v] + EPS_LOG)
    return float(total)


def gaussian_kl(mu: np.ndarray, log_var: np.ndarray) -> np.ndarray:
    """Closed-form KL of N(mu, diag(exp(log_var))) from N(0, I), per row."""
    mu = np.asarray(mu, dtype=np.float64)
    log_var = np.asarray(log_var, dtype=np.float64)
    return 0.5 * np.sum(np.exp(log_var) + mu**2 - 1.0 - log_var, axis=-1)


def elbo(docs, params: ModelParams, rho: np.ndarray, noise: np.ndarray) -> float:
    """Mean over documents of reconstruction log-likelihood minus Gaussian KL.

    ``noise`` supplies one standard-normal K-vector per document; injecting
    it keeps the value a pure function of (docs, params, noise).
    """
    docs = list(docs)
    if not docs:
        raise ValueError("elbo needs a nonempty batch")
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != (len(docs), params.n_topics):
        raise DimMismatch(f"noise shape {noise.shape} != ({len(docs)}, {params.n_topics})")
    beta = compute_beta(params.alpha, rho)
    V = rho.shape[0]
    total = 0.0
    for i, doc in enumerate(docs):
        counts = getattr(doc, "counts", doc)
        x = np.zeros(V, dtype=np.float64)
        for v, c in counts.items():
            x[v] = c
        mu, log_var = encode(x / x.sum(), params)
        state = reparameterize(mu, log_var, noise[i])
        total += reconstruction_loglik(counts, state.theta, beta) - float(gaussian_kl(mu, log_var))
    return total / len(docs)


# ---------------------------------------------------------------------------
# Checkpoint format: versioned flat binary. Header (magic, version, K, V, L,
# H, vocabulary sha256), then alpha row-major and the encoder weights in
# declared order, all float64 little-endian.
# ---------------------------------------------------------------------------


def vocabulary_hash(vocab: Vocabulary) -> bytes:
    return hashlib.sha256("\n".join(vocab.words).encode("utf-8")).digest()


def save_checkpoint(path, params: ModelParams, vocab_hash: bytes) -> None:
    if len(vocab_hash) != 32:
        raise ValueError("vocab_hash must be a 32-byte sha256 digest")
    header = _HEADER.pack(
        _MAGIC,
        _VERSION,
        params.n_topics,
        params.vocab_size,
        params.embed_dim,
        params.hidden_width,
        vocab_hash,
    )
    payload = b"".join(
        np.ascontiguousarray(a, dtype="<f8").tobytes() for a in params.arrays()
    )
    Path(path).write_bytes(header + payload)


def load_checkpoint(path) -> tuple[ModelParams, bytes]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, K, V, L, H, vocab_hash = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    shapes = [(K, L), (H, V), (H,), (K, H), (K,), (K, H), (K,)]
    expected = _HEADER.size + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(raw) != expected:
        raise CheckpointError(f"{path}: payload is {len(raw)} bytes, expected {expected}")
    arrays = []
    offset = _HEADER.size
    for shape in shapes:
        n = int(np.prod(shape))
        arrays.append(np.frombuffer(raw, dtype="<f8", count=n, offset=offset).reshape(shape).copy())
        offset += 8 * n
    return ModelParams(*arrays), vocab_hash
