"""topicbridge: guided neural topic modeling.

Adapts known topics from a reference representation to a target corpus and
discovers new ones, by training an embedded topic model whose objective is
the ELBO constrained by topic-level, document-level, and word-level KL
regularizers.
"""

from .corpus import (
    BowDocument,
    Corpus,
    Vocabulary,
    build_vocabulary,
    normalize_bow,
    tokenize,
    vectorize,
)
from .embeddings import (
    EmbeddingMatrix,
    EmbeddingTable,
    cosine,
    embedding_matrix_for,
    load_embeddings,
    name_embedding,
)
from .evaluation import (
    EvalReport,
    TopicTopWords,
    evaluate,
    top_words,
    topic_coherence,
    topic_diversity,
    topic_quality,
)
from .model import (
    LatentState,
    ModelParams,
    compute_beta,
    elbo,
    encode,
    load_checkpoint,
    project_reference,
    reconstruction_loglik,
    reparameterize,
    save_checkpoint,
    softmax,
)
from .supervision import (
    GuidanceDist,
    ReferenceTopics,
    SharpenedTargets,
    SoftLabelMatrix,
    SupervisionBundle,
    SupervisionMask,
    TopicSpec,
    assemble_supervision,
    build_gamma,
    build_mask,
    document_regularizer,
    fallback_pseudo_labels,
    kl_divergence,
    sharpen_soft_labels,
    topic_regularizer,
    word_regularizer,
)
from .training import (
    TrainConfig,
    TrainHistory,
    gradient_check,
    infer_theta,
    initialize_params,
    total_objective,
    train,
)

__version__ = "0.1.0"
