"""Training: maximize the regularized objective with Adam on exact gradients.

The objective per batch is

    mean ELBO  -  w_topic * R_topic  -  w_doc * R_doc  -  w_word * R_word

where the R terms are the supervision regularizers. Gradients are derived
by hand (reverse mode through the encoder, the reparameterized latent, the
softmax decoders, and every KL term) and verified against central finite
differences by :func:`gradient_check`. Everything runs in numpy, in 64-bit
by default, with all randomness drawn from one seeded generator owned by
the loop — identical inputs and seed reproduce the history bitwise.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from math import ceil

import numpy as np

from .corpus import Corpus, dense_counts
from .embeddings import EmbeddingMatrix, matrix_checksum
from .errors import DimMismatch, NonFiniteLoss, RenormalizationUnderflow
from .model import EPS_LOG, ModelParams, sigmoid, softplus
from .supervision import KL_EPS, SupervisionBundle

_PRECISIONS = {"float64": np.float64, "float32": np.float32}


@dataclass
class TrainConfig:
    """Hyperparameters of one training run; everything that affects the result."""

    k_total: int
    gamma_beta: float = 1.0
    gamma_theta: float = 1.0
    gamma_gamma: float = 1.0
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.002
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    hidden_width: int = 300
    precision: str = "float64"

    def validate(self) -> None:
        if self.k_total < 1:
            raise ValueError("k_total must be >= 1")
        if min(self.gamma_beta, self.gamma_theta, self.gamma_gamma) < 0:
            raise ValueError("regularization weights must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")
        if self.precision not in _PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(_PRECISIONS)}")

    @property
    def dtype(self):
        return _PRECISIONS[self.precision]


@dataclass(frozen=True)
class EpochStats:
    """Mean per-batch values of every objective term for one epoch."""

    epoch: int
    elbo: float
    r_beta: float
    r_theta: float
    r_gamma: float
    objective: float


@dataclass
class TrainHistory:
    records: list[EpochStats] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "elbo", "r_beta", "r_theta", "r_gamma", "objective"])
        for r in self.records:
            writer.writerow(
                [r.epoch, repr(r.elbo), repr(r.r_beta), repr(r.r_theta), repr(r.r_gamma), repr(r.objective)]
            )
        return buf.getvalue()


def initialize_params(config: TrainConfig, rng: np.random.Generator, vocab_size: int, embed_dim: int) -> ModelParams:
    """Seeded init: alpha uniform in [-0.1, 0.1], encoder fan-in-scaled uniform."""
    K, H, V, L = config.k_total, config.hidden_width, vocab_size, embed_dim
    dtype = config.dtype
    alpha = rng.uniform(-0.1, 0.1, size=(K, L))
    w1 = rng.uniform(-1.0, 1.0, size=(H, V)) / np.sqrt(V)
    w_mu = rng.uniform(-1.0, 1.0, size=(K, H)) / np.sqrt(H)
    w_lv = rng.uniform(-1.0, 1.0, size=(K, H)) / np.sqrt(H)
    return ModelParams(
        alpha=alpha.astype(dtype),
        w1=w1.astype(dtype),
        b1=np.zeros(H, dtype=dtype),
        w_mu=w_mu.astype(dtype),
        b_mu=np.zeros(K, dtype=dtype),
        w_lv=w_lv.astype(dtype),
        b_lv=np.zeros(K, dtype=dtype),
    )


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_backward(s: np.ndarray, grad_s: np.ndarray) -> np.ndarray:
    # Rowwise Jacobian-vector product: s * (g - <g, s>).
    return s * (grad_s - (grad_s * s).sum(axis=-1, keepdims=True))


@dataclass
class _Terms:
    elbo: float = 0.0
    r_beta: float = 0.0
    r_theta: float = 0.0
    r_gamma: float = 0.0
    objective: float = 0.0


def _active_terms(bundle: SupervisionBundle, config: TrainConfig) -> tuple[bool, bool, bool]:
    """A term is active iff its weight is positive and its mask is nonempty."""
    use_topic = config.gamma_beta > 0 and bool(bundle.mask.topic_indices())
    use_doc = config.gamma_theta > 0 and bool(bundle.mask.doc_indices())
    use_word = config.gamma_gamma > 0 and bool(bundle.mask.word_indices())
    if use_topic and (bundle.beta_ref is None or bundle.rho_ref is None):
        raise ValueError("topic-level term active but bundle lacks reference rows")
    if use_doc and bundle.theta_targets is None:
        raise ValueError("document-level term active but bundle lacks sharpened targets")
    if use_word and bundle.gamma is None:
        raise ValueError("word-level term active but bundle lacks guidance rows")
    return use_topic, use_doc, use_word


def _forward_backward(
    params: ModelParams,
    X: np.ndarray,
    xn: np.ndarray,
    rho: np.ndarray,
    bundle: SupervisionBundle,
    config: TrainConfig,
    noise: np.ndarray,
    theta_target_rows: np.ndarray | None,
    want_grads: bool,
) -> tuple[_Terms, ModelParams | None]:
    """Evaluate the objective (and optionally its exact gradients) on one batch.

    ``X``/``xn`` are dense counts and normalized counts (B, V); ``noise`` is
    (B, K); ``theta_target_rows`` are the sharpened targets for exactly the
    batch documents, or None when the document term is off.
    """
    B = X.shape[0]
    K = params.n_topics
    use_topic, use_doc, use_word = _active_terms(bundle, config)
    if use_doc and (theta_target_rows is None or theta_target_rows.shape[0] != B):
        raise DimMismatch("document-level term needs one target row per batch document")

    # Encoder forward.
    pre1 = xn @ params.w1.T + params.b1
    h = softplus(pre1)
    mu = h @ params.w_mu.T + params.b_mu
    lv = h @ params.w_lv.T + params.b_lv
    sd = np.exp(0.5 * lv)
    delta = mu + sd * noise
    theta = _softmax_rows(delta)

    # Decoder forward.
    beta_logits = params.alpha @ rho.T
    beta = _softmax_rows(beta_logits)
    mix = theta @ beta
    mix_safe = mix + EPS_LOG
    recon = float((X * np.log(mix_safe)).sum())
    klg = 0.5 * (np.exp(lv) + mu**2 - 1.0 - lv).sum()
    elbo_val = (recon - float(klg)) / B

    terms = _Terms(elbo=elbo_val)
    objective = elbo_val

    # Topic-level term: mean KL(reference row, projected row) over masked topics.
    if use_topic:
        t_idx = bundle.mask.topic_indices()
        proj_logits = params.alpha[t_idx] @ bundle.rho_ref.T
        q = _softmax_rows(proj_logits)
        p_ref = bundle.beta_ref
        q_safe = np.maximum(q, KL_EPS)
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = np.where(p_ref > 0, p_ref * (np.log(np.where(p_ref > 0, p_ref, 1.0)) - np.log(q_safe)), 0.0)
        terms.r_beta = float(contrib.sum()) / len(t_idx)
        objective -= config.gamma_beta * terms.r_beta

    # Document-level term: mean KL(target, restricted+renormalized theta).
    if use_doc:
        d_idx = bundle.mask.doc_indices()
        sub = theta[:, d_idx]
        mass = sub.sum(axis=1)
        if np.any(mass < 1e-8):
            raise RenormalizationUnderflow(
                f"batch document {int(np.argmin(mass))} has {mass.min():.3e} supervised mass"
            )
        t_hat = sub / mass[:, None]
        t_tgt = theta_target_rows
        t_hat_safe = np.maximum(t_hat, KL_EPS)
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = np.where(t_tgt > 0, t_tgt * (np.log(np.where(t_tgt > 0, t_tgt, 1.0)) - np.log(t_hat_safe)), 0.0)
        terms.r_theta = float(contrib.sum()) / B
        objective -= config.gamma_theta * terms.r_theta

    # Word-level term: mean KL(guidance row, beta row) over masked topics.
    if use_word:
        w_idx = bundle.mask.word_indices()
        gam = bundle.gamma
        b_rows = np.maximum(beta[w_idx], KL_EPS)
        with np.errstate(divide="ignore", invalid="ignore"):
            contrib = np.where(gam > 0, gam * (np.log(np.where(gam > 0, gam, 1.0)) - np.log(b_rows)), 0.0)
        terms.r_gamma = float(contrib.sum()) / len(w_idx)
        objective -= config.gamma_gamma * terms.r_gamma

    terms.objective = objective
    if not want_grads:
        return terms, None

    # ---- Backward pass (gradient of the objective, ascent direction) ----
    g_mix = X / mix_safe
    g_theta = (g_mix @ beta.T) / B
    g_beta = (theta.T @ g_mix) / B

    if use_doc:
        d_idx = bundle.mask.doc_indices()
        # dKL/dtheta_j = (sum_active t - t_j/t_hat_j) / mass on supervised coords.
        active = t_hat > KL_EPS
        ratio = np.where(active, t_tgt / t_hat_safe, 0.0)
        row_sum_active = (t_tgt * active).sum(axis=1, keepdims=True)
        d_kl_d_sub = (row_sum_active - ratio) / mass[:, None]
        g_theta_doc = np.zeros_like(theta)
        g_theta_doc[:, d_idx] = d_kl_d_sub
        g_theta = g_theta - config.gamma_theta * g_theta_doc / B

    g_delta = _softmax_backward(theta, g_theta)
    g_mu = g_delta - mu / B
    g_lv = g_delta * noise * 0.5 * sd - 0.5 * (np.exp(lv) - 1.0) / B

    g_w_mu = g_mu.T @ h
    g_b_mu = g_mu.sum(axis=0)
    g_w_lv = g_lv.T @ h
    g_b_lv = g_lv.sum(axis=0)
    g_h = g_mu @ params.w_mu + g_lv @ params.w_lv
    g_pre1 = g_h * sigmoid(pre1)
    g_w1 = g_pre1.T @ xn
    g_b1 = g_pre1.sum(axis=0)

    if use_word:
        w_idx = bundle.mask.word_indices()
        grad_rows = np.where(beta[w_idx] > KL_EPS, gam / np.maximum(beta[w_idx], KL_EPS), 0.0)
        g_beta_word = np.zeros_like(beta)
        g_beta_word[w_idx] = grad_rows * (config.gamma_gamma / len(w_idx))
        g_beta = g_beta + g_beta_word

    g_beta_logits = _softmax_backward(beta, g_beta)
    g_alpha = g_beta_logits @ rho

    if use_topic:
        t_idx = bundle.mask.topic_indices()
        g_q = np.where(q > KL_EPS, p_ref / q_safe, 0.0) * (config.gamma_beta / len(t_idx))
        g_proj_logits = _softmax_backward(q, g_q)
        g_alpha[t_idx] += g_proj_logits @ bundle.rho_ref

    grads = ModelParams(
        alpha=g_alpha, w1=g_w1, b1=g_b1, w_mu=g_w_mu, b_mu=g_b_mu, w_lv=g_w_lv, b_lv=g_b_lv
    )
    return terms, grads


def _batch_arrays(corpus: Corpus, doc_indices, dtype) -> tuple[np.ndarray, np.ndarray]:
    X = dense_counts(corpus, doc_indices, dtype=dtype)
    return X, X / X.sum(axis=1, keepdims=True)


def _target_rows(bundle: SupervisionBundle, config: TrainConfig, doc_indices) -> np.ndarray | None:
    if bundle.theta_targets is None or config.gamma_theta <= 0 or not bundle.mask.doc_indices():
        return None
    return bundle.theta_targets[np.asarray(doc_indices, dtype=np.intp)]


def total_objective(
    corpus: Corpus,
    doc_indices,
    params: ModelParams,
    rho: np.ndarray,
    bundle: SupervisionBundle,
    config: TrainConfig,
    noise: np.ndarray,
) -> float:
    """Objective value on the given documents with injected noise.

    Pure function of its arguments; terms with zero weight or an empty mask
    contribute exactly nothing.
    """
    X, xn = _batch_arrays(corpus, doc_indices, config.dtype)
    terms, _ = _forward_backward(
        params, X, xn, rho, bundle, config, np.asarray(noise), _target_rows(bundle, config, doc_indices), False
    )
    return terms.objective


def objective_terms(
    corpus: Corpus,
    doc_indices,
    params: ModelParams,
    rho: np.ndarray,
    bundle: SupervisionBundle,
    config: TrainConfig,
    noise: np.ndarray,
) -> dict[str, float]:
    """Decomposition of the objective into its named terms (for logs and tests)."""
    X, xn = _batch_arrays(corpus, doc_indices, config.dtype)
    terms, _ = _forward_backward(
        params, X, xn, rho, bundle, config, np.asarray(noise), _target_rows(bundle, config, doc_indices), False
    )
    return {
        "elbo": terms.elbo,
        "r_beta": terms.r_beta,
        "r_theta": terms.r_theta,
        "r_gamma": terms.r_gamma,
        "objective": terms.objective,
    }


class _Adam:
    """Plain Adam ascending the objective (applied to the negated gradient)."""

    def __init__(self, config: TrainConfig, params: ModelParams):
        self.lr = config.learning_rate
        self.b1 = config.adam_beta1
        self.b2 = config.adam_beta2
        self.eps = config.adam_eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in params.arrays()]
        self.v = [np.zeros_like(a) for a in params.arrays()]

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        self.t += 1
        arrays = params.arrays()
        for i, (a, g_asc) in enumerate(zip(arrays, grads.arrays())):
            g = -g_asc  # minimize the negated objective
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g
            m_hat = self.m[i] / (1.0 - self.b1**self.t)
            v_hat = self.v[i] / (1.0 - self.b2**self.t)
            a -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(
    corpus: Corpus,
    rho: EmbeddingMatrix | np.ndarray,
    bundle: SupervisionBundle,
    config: TrainConfig,
    params: ModelParams | None = None,
) -> tuple[ModelParams, TrainHistory]:
    """Minibatch Adam on the regularized objective, fully seeded.

    Documents are reshuffled every epoch by the run's generator; per-epoch
    history records the mean of every objective term over the epoch's
    batches. The embedding matrix is checksummed before and after to assert
    it stayed frozen.
    """
    config.validate()
    if len(corpus.documents) == 0:
        raise ValueError("corpus has no documents")
    rho_arr = rho.matrix if isinstance(rho, EmbeddingMatrix) else np.asarray(rho)
    rho_arr = rho_arr.astype(config.dtype, copy=False)
    checksum_before = matrix_checksum(rho_arr)
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = initialize_params(config, rng, len(corpus.vocabulary), rho_arr.shape[1])
    else:
        params = params.astype(config.dtype)
    X_all, xn_all = _batch_arrays(corpus, None, config.dtype)
    n_docs = X_all.shape[0]
    K = config.k_total
    optimizer = _Adam(config, params)
    history = TrainHistory()
    for epoch in range(config.epochs):
        perm = rng.permutation(n_docs)
        sums = np.zeros(5, dtype=np.float64)
        n_batches = 0
        for start in range(0, n_docs, config.batch_size):
            idx = perm[start : start + config.batch_size]
            noise = rng.standard_normal((len(idx), K)).astype(config.dtype)
            terms, grads = _forward_backward(
                params,
                X_all[idx],
                xn_all[idx],
                rho_arr,
                bundle,
                config,
                noise,
                _target_rows(bundle, config, idx),
                True,
            )
            if not np.isfinite(terms.objective) or not all(
                np.all(np.isfinite(g)) for g in grads.arrays()
            ):
                raise NonFiniteLoss(f"non-finite objective at epoch {epoch}, batch {n_batches}")
            optimizer.step(params, grads)
            sums += (terms.elbo, terms.r_beta, terms.r_theta, terms.r_gamma, terms.objective)
            n_batches += 1
        means = sums / n_batches
        history.records.append(
            EpochStats(
                epoch=epoch,
                elbo=float(means[0]),
                r_beta=float(means[1]),
                r_theta=float(means[2]),
                r_gamma=float(means[3]),
                objective=float(means[4]),
            )
        )
    if matrix_checksum(rho_arr) != checksum_before:
        raise AssertionError("embedding matrix changed during training; it must stay frozen")
    return params, history


# ---------------------------------------------------------------------------
# Finite-difference verification
# ---------------------------------------------------------------------------


def fd_max_relative_error(func, x0: np.ndarray, grad: np.ndarray, coords, eps: float) -> float:
    """Max relative error of ``grad`` against central differences of ``func``.

    Relative error per coordinate is |analytic - numeric| / max(|numeric|,
    1e-8). The function is evaluated at x0 +/- eps on each sampled
    coordinate, so ``func`` must be pure.
    """
    worst = 0.0
    x = x0.astype(np.float64, copy=True)
    for i in coords:
        orig = x[i]
        x[i] = orig + eps
        f_plus = func(x)
        x[i] = orig - eps
        f_minus = func(x)
        x[i] = orig
        numeric = (f_plus - f_minus) / (2.0 * eps)
        rel = abs(float(grad[i]) - numeric) / max(abs(numeric), 1e-8)
        worst = max(worst, rel)
    return worst


def sample_coordinates(sizes, n_total: int, rng: np.random.Generator) -> list[int]:
    """Pick flat-vector coordinates spread across parameter arrays.

    Every array contributes at least a few coordinates so small arrays
    (alpha, biases) are always exercised alongside the big weight matrices.
    """
    total = sum(sizes)
    coords: list[int] = []
    offset = 0
    for size in sizes:
        quota = min(size, max(4, ceil(n_total * size / total)))
        picks = rng.choice(size, size=quota, replace=False)
        coords.extend(int(offset + p) for p in picks)
        offset += size
    return coords


def gradient_check(
    params: ModelParams,
    corpus: Corpus,
    doc_indices,
    bundle: SupervisionBundle,
    config: TrainConfig,
    rho: EmbeddingMatrix | np.ndarray,
    fd_eps: float = 1e-5,
    n_coords: int = 200,
    seed: int = 12345,
) -> float:
    """Max relative error of the analytic gradients on one fixed batch.

    Runs in 64-bit with one fixed injected noise draw; coordinates are
    sampled across alpha and every encoder array.
    """
    rho_arr = rho.matrix if isinstance(rho, EmbeddingMatrix) else np.asarray(rho)
    rho_arr = rho_arr.astype(np.float64)
    params = params.astype(np.float64)
    doc_indices = list(doc_indices)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((len(doc_indices), params.n_topics))
    X, xn = _batch_arrays(corpus, doc_indices, np.float64)
    targets = _target_rows(bundle, config, doc_indices)
    _, grads = _forward_backward(params, X, xn, rho_arr, bundle, config, noise, targets, True)

    def value_at(flat: np.ndarray) -> float:
        p = params.with_flat(flat)
        terms, _ = _forward_backward(p, X, xn, rho_arr, bundle, config, noise, targets, False)
        return terms.objective

    coords = sample_coordinates([a.size for a in params.arrays()], n_coords, rng)
    return fd_max_relative_error(value_at, params.flatten(), grads.flatten(), coords, fd_eps)


def infer_theta(corpus: Corpus, params: ModelParams, noise_free: bool = True) -> np.ndarray:
    """Document-topic rows for every document, deterministic when noise-free.

    Zero-noise inference takes the latent at its mean (delta = mu), which is
    the deterministic posterior summary used for exports.
    """
    if not noise_free:
        raise ValueError("stochastic inference is not supported; pass noise to the model core")
    X, xn = _batch_arrays(corpus, None, np.float64)
    pre1 = xn @ params.w1.T.astype(np.float64) + params.b1
    h = softplus(pre1)
    mu = h @ params.w_mu.T + params.b_mu
    return _softmax_rows(mu)
