"""Linear predicate classifier with a frequency-prior logit bias.

The prior is the Laplace-smoothed context-to-label occurrence distribution
Pr(label | subject, object); it enters the logits as a fixed additive
log-probability and is never trained. Training is plain mini-batch SGD with
analytic gradients supplied by a pluggable loss evaluator.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .dataset import Corpus, TripletSample
from .errors import ParseError, ValidationError
from .losses import softmax

_HEADER_RE = re.compile(r"^# C=(\d+) D=(\d+) O=(\d+) has_prior=([01])$")


@dataclass
class FrequencyPrior:
    """Smoothed context-to-label distribution; rows over labels sum to 1."""

    table: np.ndarray  # (O, O, C) probabilities

    @property
    def log_table(self) -> np.ndarray:
        return np.log(self.table)


@dataclass
class Classifier:
    """Linear classifier: eta = W f + b (+ log prior for the sample's context)."""

    weights: np.ndarray           # (C, D)
    bias: np.ndarray              # (C,)
    prior_log: np.ndarray | None  # (O, O, C) log-prior logit offsets
    num_objects: int


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 16
    epochs: int = 20
    seed: int = 0
    loss_kind: str = "CE"

    def validate(self):
        problems = []
        if not self.learning_rate > 0:
            problems.append(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            problems.append(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            problems.append(f"epochs must be >= 0, got {self.epochs}")
        if problems:
            raise ValidationError("invalid train config: " + "; ".join(problems))


def build_frequency_prior(corpus: Corpus, smoothing: float = 1.0) -> FrequencyPrior:
    """Laplace-smoothed Pr(label | subject, object) over the training set."""
    if not smoothing > 0:
        raise ValidationError(f"smoothing must be > 0, got {smoothing}")
    if not corpus.samples:
        raise ValidationError("cannot build a frequency prior from an empty corpus")
    o, c = corpus.num_objects, corpus.num_classes
    counts = np.zeros((o, o, c))
    np.add.at(
        counts,
        (corpus.subjects_array(), corpus.objects_array(), corpus.labels_array()),
        1.0,
    )
    table = (counts + smoothing) / (counts.sum(axis=-1, keepdims=True) + c * smoothing)
    return FrequencyPrior(table)


def _check_sample_dims(model: Classifier, sample: TripletSample):
    c, d = model.weights.shape
    if sample.features.shape != (d,):
        raise ValidationError(
            f"feature dimension {sample.features.shape} does not match model D={d}"
        )
    if model.prior_log is not None:
        if not (0 <= sample.subject_id < model.num_objects and 0 <= sample.object_id < model.num_objects):
            raise ValidationError(
                f"context ids ({sample.subject_id}, {sample.object_id}) out of range "
                f"[0, {model.num_objects})"
            )


def forward_logits(model: Classifier, sample: TripletSample) -> np.ndarray:
    """eta = W f + b, plus the context's log prior when the table is present."""
    _check_sample_dims(model, sample)
    eta = model.weights @ sample.features + model.bias
    if model.prior_log is not None:
        eta = eta + model.prior_log[sample.subject_id, sample.object_id]
    return eta


def predict_scores(model: Classifier, sample: TripletSample) -> tuple[int, np.ndarray]:
    """Top-1 class (lowest-index tie-break) and the softmax probabilities."""
    phi = softmax(forward_logits(model, sample))
    return int(np.argmax(phi)), phi


def _forward_batch(model: Classifier, features, subjects, objects) -> np.ndarray:
    eta = features @ model.weights.T + model.bias
    if model.prior_log is not None:
        eta = eta + model.prior_log[subjects, objects]
    return eta


def predict_batch(model: Classifier, corpus: Corpus) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized top-1 predictions and probability rows for a whole corpus."""
    if corpus.feature_dim != model.weights.shape[1]:
        raise ValidationError(
            f"corpus D={corpus.feature_dim} does not match model D={model.weights.shape[1]}"
        )
    eta = _forward_batch(
        model, corpus.features_array(), corpus.subjects_array(), corpus.objects_array()
    )
    phi = softmax(eta)
    return np.argmax(phi, axis=1), phi


def init_classifier(
    num_classes: int,
    feature_dim: int,
    rng: np.random.Generator,
    prior: FrequencyPrior | None = None,
    num_objects: int = 0,
) -> Classifier:
    """Zero bias, small seeded uniform weights, optional fixed prior bias."""
    weights = rng.uniform(-0.01, 0.01, size=(num_classes, feature_dim))
    bias = np.zeros(num_classes)
    prior_log = prior.log_table if prior is not None else None
    return Classifier(weights=weights, bias=bias, prior_log=prior_log, num_objects=num_objects)


def train(
    corpus: Corpus,
    config: TrainConfig,
    loss,
    prior: FrequencyPrior | None = None,
) -> Classifier:
    """Shuffled mini-batch SGD; deterministic given (corpus, config, loss).

    The prior table only shifts the logits and is held fixed; the loss
    evaluator returns per-sample gradients with respect to the logits, which
    chain through the affine map as rank-one weight updates.
    """
    config.validate()
    if not corpus.samples:
        raise ValidationError("cannot train on an empty corpus")
    rng = np.random.default_rng(config.seed)
    model = init_classifier(
        corpus.num_classes, corpus.feature_dim, rng, prior, corpus.num_objects
    )
    features = corpus.features_array()
    labels = corpus.labels_array()
    prior_rows = (
        model.prior_log[corpus.subjects_array(), corpus.objects_array()]
        if model.prior_log is not None
        else None
    )
    n = len(corpus.samples)
    lr = config.learning_rate
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = perm[start : start + config.batch_size]
            f = features[idx]
            eta = f @ model.weights.T + model.bias
            if prior_rows is not None:
                eta = eta + prior_rows[idx]
            _, grads = loss.batch(eta, labels[idx])
            b = len(idx)
            model.weights -= lr * (grads.T @ f) / b
            model.bias -= lr * grads.mean(axis=0)
    return model


def save_model(model: Classifier, path) -> None:
    """Write the model file: header, weights, bias, optional prior table."""
    c, d = model.weights.shape
    has_prior = int(model.prior_log is not None)
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# C={c} D={d} O={model.num_objects} has_prior={has_prior}\n")
        for row in model.weights:
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        f.write(" ".join(f"{v:.17g}" for v in model.bias) + "\n")
        if has_prior:
            for row in model.prior_log.reshape(-1, c):
                f.write(" ".join(f"{v:.17g}" for v in row) + "\n")


def load_model(path) -> Classifier:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty model file")
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise ParseError(
            f"{path}: line 1: expected header '# C=<int> D=<int> O=<int> has_prior=<0|1>'"
        )
    c, d, o, has_prior = (int(g) for g in m.groups())
    expected = 1 + c + 1 + (o * o if has_prior else 0)
    if len(lines) != expected:
        raise ParseError(f"{path}: expected {expected} lines, got {len(lines)}")
    try:
        weights = np.array([[float(v) for v in lines[1 + i].split()] for i in range(c)])
        bias = np.array([float(v) for v in lines[1 + c].split()])
        prior_log = None
        if has_prior:
            flat = np.array(
                [[float(v) for v in lines[2 + c + i].split()] for i in range(o * o)]
            )
            prior_log = flat.reshape(o, o, c)
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if weights.shape != (c, d) or bias.shape != (c,):
        raise ParseError(f"{path}: inconsistent parameter dimensions")
    return Classifier(weights=weights, bias=bias, prior_log=prior_log, num_objects=o)
