"""Synthetic long-tailed triplet corpora with planted confusable class pairs.

Labels follow a Zipf law over class rank; features are class-conditional
spherical Gaussians whose means are pulled together for confusable pairs, so
a linear classifier confuses them at a rate controlled by the pair's overlap.
Each class also gets a small set of preferred (subject, object) contexts,
shared within a confusable pair, so context carries real signal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import ParseError, ValidationError

PREFERRED_CONTEXTS_PER_CLASS = 3
PREFERRED_CONTEXT_RATE = 0.8
MEAN_SCALE = 2.0
# Pairwise mean distance floor: a non-overlapped pair separated by d has
# Bayes accuracy Phi(d/2); 5.5 gives ~0.997 for unit-covariance Gaussians.
MIN_MEAN_SEPARATION = 5.5
_MAX_MEAN_REDRAWS = 1000
TRAIN_FRACTION = 0.7

_HEADER_RE = re.compile(r"^# C=(\d+) O=(\d+) D=(\d+)$")


@dataclass(eq=False)
class TripletSample:
    """One (subject, object, feature-vector, label) instance within a scene."""

    scene_id: int
    subject_id: int
    object_id: int
    label: int
    features: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, TripletSample):
            return NotImplemented
        return (
            self.scene_id == other.scene_id
            and self.subject_id == other.subject_id
            and self.object_id == other.object_id
            and self.label == other.label
            and np.array_equal(self.features, other.features)
        )


@dataclass
class GeneratorSpec:
    """Parameters of the synthetic corpus generator."""

    num_classes: int = 50
    num_objects: int = 30
    feature_dim: int = 16
    num_scenes: int = 800
    scene_size: int = 16
    zipf_exponent: float = 1.5
    confusable_pairs: list[tuple[int, int, float]] = field(default_factory=list)
    seed: int = 0

    def validate(self):
        problems = []
        if self.num_classes < 1:
            problems.append(f"num_classes must be >= 1, got {self.num_classes}")
        if self.num_objects < 1:
            problems.append(f"num_objects must be >= 1, got {self.num_objects}")
        if self.feature_dim < 1:
            problems.append(f"feature_dim must be >= 1, got {self.feature_dim}")
        if self.num_scenes < 1:
            problems.append(f"num_scenes must be >= 1, got {self.num_scenes}")
        if self.scene_size < 1:
            problems.append(f"scene_size must be >= 1, got {self.scene_size}")
        if not self.zipf_exponent > 0:
            problems.append(f"zipf_exponent must be > 0, got {self.zipf_exponent}")
        for a, b, overlap in self.confusable_pairs:
            if a == b:
                problems.append(f"confusable pair ({a}, {b}) must name two distinct classes")
            for c in (a, b):
                if not 0 <= c < self.num_classes:
                    problems.append(f"confusable pair class id {c} out of range [0, {self.num_classes})")
            if not 0.0 <= overlap <= 1.0:
                problems.append(f"overlap must lie in [0, 1], got {overlap}")
        if problems:
            raise ValidationError("invalid generator spec: " + "; ".join(problems))


@dataclass
class Corpus:
    """A list of triplet samples plus the dimensions from the corpus header."""

    samples: list[TripletSample]
    num_classes: int
    num_objects: int
    feature_dim: int

    def __len__(self):
        return len(self.samples)

    def features_array(self) -> np.ndarray:
        if not self.samples:
            return np.zeros((0, self.feature_dim))
        return np.stack([s.features for s in self.samples])

    def labels_array(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def subjects_array(self) -> np.ndarray:
        return np.array([s.subject_id for s in self.samples], dtype=np.int64)

    def objects_array(self) -> np.ndarray:
        return np.array([s.object_id for s in self.samples], dtype=np.int64)

    def scene_ids_array(self) -> np.ndarray:
        return np.array([s.scene_id for s in self.samples], dtype=np.int64)


@dataclass
class ClassFrequencies:
    """Per-class sample counts n_i over a corpus."""

    counts: np.ndarray

    def __len__(self):
        return len(self.counts)

    def require_all_positive(self):
        zero = np.flatnonzero(np.asarray(self.counts) == 0)
        if zero.size:
            raise ValidationError(
                f"classes with zero training samples cannot be weighted: {zero.tolist()}"
            )


def zipf_probabilities(num_classes: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, num_classes + 1, dtype=np.float64)
    p = ranks ** (-exponent)
    return p / p.sum()


def _draw_class_means(rng: np.random.Generator, spec: GeneratorSpec) -> np.ndarray:
    """Draw class means, redrawing any mean too close to another one.

    Without a separation floor, an unlucky seed could plant an unintended
    confusable pair; redraws keep non-planted pairs linearly separable.
    """
    means = rng.normal(0.0, MEAN_SCALE, size=(spec.num_classes, spec.feature_dim))
    if spec.num_classes == 1:
        return means
    for _ in range(_MAX_MEAN_REDRAWS):
        dist = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
        np.fill_diagonal(dist, np.inf)
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        if dist[i, j] >= MIN_MEAN_SEPARATION:
            return means
        means[max(i, j)] = rng.normal(0.0, MEAN_SCALE, size=spec.feature_dim)
    raise ValidationError(
        "could not separate class means; increase feature_dim or reduce num_classes"
    )


def generate_corpus(spec: GeneratorSpec) -> tuple[Corpus, Corpus]:
    """Generate (train, test) corpora, split 70/30 by scene.

    Deterministic given the spec: structural randomness (class means,
    preferred contexts) and per-scene randomness use sub-seeds derived from
    (seed,) and (seed, scene_id), so scenes are order-independent.
    """
    spec.validate()
    struct_rng = np.random.default_rng([spec.seed, 0])
    means = _draw_class_means(struct_rng, spec)

    # Pull each confusable pair's means toward their midpoint; overlap=1
    # makes the two class-conditional distributions identical.
    for a, b, overlap in spec.confusable_pairs:
        ma, mb = means[a].copy(), means[b].copy()
        means[a] = ma + 0.5 * overlap * (mb - ma)
        means[b] = mb + 0.5 * overlap * (ma - mb)

    contexts = struct_rng.integers(
        0, spec.num_objects, size=(spec.num_classes, PREFERRED_CONTEXTS_PER_CLASS, 2)
    )
    for a, b, _ in spec.confusable_pairs:
        contexts[b] = contexts[a]

    probs = zipf_probabilities(spec.num_classes, spec.zipf_exponent)

    num_train_scenes = max(1, round(TRAIN_FRACTION * spec.num_scenes))
    if spec.num_scenes > 1:
        num_train_scenes = min(num_train_scenes, spec.num_scenes - 1)

    def make_scenes(scene_ids) -> list[TripletSample]:
        samples = []
        g = spec.scene_size
        for sid in scene_ids:
            rng = np.random.default_rng([spec.seed, 1, sid])
            labels = rng.choice(spec.num_classes, size=g, p=probs)
            feats = means[labels] + rng.standard_normal((g, spec.feature_dim))
            use_pref = rng.random(g) < PREFERRED_CONTEXT_RATE
            pref_idx = rng.integers(0, PREFERRED_CONTEXTS_PER_CLASS, size=g)
            rand_ctx = rng.integers(0, spec.num_objects, size=(g, 2))
            ctx = np.where(use_pref[:, None], contexts[labels, pref_idx], rand_ctx)
            for k in range(g):
                samples.append(
                    TripletSample(
                        scene_id=int(sid),
                        subject_id=int(ctx[k, 0]),
                        object_id=int(ctx[k, 1]),
                        label=int(labels[k]),
                        features=feats[k],
                    )
                )
        return samples

    train = Corpus(
        make_scenes(range(num_train_scenes)),
        spec.num_classes,
        spec.num_objects,
        spec.feature_dim,
    )
    test = Corpus(
        make_scenes(range(num_train_scenes, spec.num_scenes)),
        spec.num_classes,
        spec.num_objects,
        spec.feature_dim,
    )
    return train, test


def class_frequencies(samples: list[TripletSample], num_classes: int) -> ClassFrequencies:
    """Count samples per label; counts sum to len(samples)."""
    if num_classes < 1:
        raise ValidationError(f"num_classes must be >= 1, got {num_classes}")
    counts = np.zeros(num_classes, dtype=np.int64)
    for s in samples:
        counts[s.label] += 1
    return ClassFrequencies(counts)


def save_corpus(corpus: Corpus, path) -> None:
    """Write a corpus in the line-delimited record format (lossless)."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# C={corpus.num_classes} O={corpus.num_objects} D={corpus.feature_dim}\n")
        for s in corpus.samples:
            feats = ",".join(f"{v:.17g}" for v in s.features)
            f.write(f"{s.scene_id},{s.subject_id},{s.object_id},{s.label},{feats}\n")


def load_corpus(path) -> Corpus:
    """Read a corpus file; an empty file yields an empty corpus."""
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        return Corpus([], 0, 0, 0)
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise ParseError(f"{path}: line 1: expected header '# C=<int> O=<int> D=<int>'")
    num_classes, num_objects, feature_dim = (int(g) for g in m.groups())
    samples = []
    for ln, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != 4 + feature_dim:
            raise ParseError(
                f"{path}: line {ln}: expected {4 + feature_dim} fields, got {len(fields)}"
            )
        try:
            scene_id, subject_id, object_id, label = (int(v) for v in fields[:4])
            features = np.array([float(v) for v in fields[4:]])
        except ValueError as exc:
            raise ParseError(f"{path}: line {ln}: {exc}") from None
        if min(scene_id, subject_id, object_id, label) < 0:
            raise ParseError(f"{path}: line {ln}: negative id field")
        if label >= num_classes:
            raise ValidationError(f"{path}: line {ln}: label {label} >= C={num_classes}")
        if subject_id >= num_objects or object_id >= num_objects:
            raise ValidationError(f"{path}: line {ln}: object id out of range [0, {num_objects})")
        if not np.all(np.isfinite(features)):
            raise ValidationError(f"{path}: line {ln}: non-finite feature value")
        samples.append(TripletSample(scene_id, subject_id, object_id, label, features))
    return Corpus(samples, num_classes, num_objects, feature_dim)
