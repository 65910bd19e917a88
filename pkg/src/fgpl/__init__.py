"""Fine-grained predicate learning on synthetic long-tailed triplet corpora."""

__version__ = "0.1.0"

from .dataset import (
    ClassFrequencies,
    Corpus,
    GeneratorSpec,
    TripletSample,
    class_frequencies,
    generate_corpus,
    load_corpus,
    save_corpus,
)
from .lattice import (
    ConfusionCounts,
    PredicateLattice,
    collect_biased_predictions,
    correlation_ratio,
    load_lattice,
    normalize_confusion,
    save_lattice,
)
from .losses import (
    LossConfig,
    LossOutput,
    cdl_loss_grad,
    cdl_weight,
    ce_loss_grad,
    edl_loss_grad,
    fgpl_loss_grad,
    make_loss,
)
from .model import (
    Classifier,
    FrequencyPrior,
    TrainConfig,
    build_frequency_prior,
    forward_logits,
    load_model,
    predict_scores,
    save_model,
    train,
)

__all__ = [
    "ClassFrequencies",
    "Classifier",
    "ConfusionCounts",
    "Corpus",
    "FrequencyPrior",
    "GeneratorSpec",
    "LossConfig",
    "LossOutput",
    "PredicateLattice",
    "TrainConfig",
    "TripletSample",
    "build_frequency_prior",
    "cdl_loss_grad",
    "cdl_weight",
    "ce_loss_grad",
    "class_frequencies",
    "collect_biased_predictions",
    "correlation_ratio",
    "edl_loss_grad",
    "fgpl_loss_grad",
    "forward_logits",
    "generate_corpus",
    "load_corpus",
    "load_lattice",
    "load_model",
    "make_loss",
    "normalize_confusion",
    "predict_scores",
    "save_corpus",
    "save_lattice",
    "save_model",
    "train",
]
