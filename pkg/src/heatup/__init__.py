"""Softmax embedding learning with temperature control ("heating up").

Plain-numpy MLP embedding networks trained with a temperature-scaled softmax
cross-entropy, plus clustering/retrieval evaluation, gradient anatomy tools,
IDX/blob data sources, binary checkpoints and SVG plots.
"""

from .data import BlobSpec, gen_blobs, load_mnist
from .evaluation import EmbeddingSet, EvalReport, evaluate, kmeans, nmi, recall_at_k
from .loss_head import ClassifierHead, ce_loss, embedding_gradient, grad_logits
from .numerics import Rng, log_softmax_temp, logsumexp, softmax_temp
from .training import (Architecture, EmbeddingNet, TemperatureSchedule, Trainer,
                       TrainingLog, embed_dataset, init_params, run_schedule)

__version__ = "0.1.0"

__all__ = [
    "Architecture", "BlobSpec", "ClassifierHead", "EmbeddingNet", "EmbeddingSet", "EvalReport", "Rng",
    "TemperatureSchedule", "Trainer", "TrainingLog", "ce_loss", "embed_dataset",
    "embedding_gradient", "evaluate", "gen_blobs", "grad_logits", "init_params", "kmeans",
    "load_mnist", "log_softmax_temp", "logsumexp",
    "nmi", "recall_at_k", "run_schedule", "softmax_temp",
]
