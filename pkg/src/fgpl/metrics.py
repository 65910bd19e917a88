"""Scene-level recall and discrimination metrics.

Predictions are evaluated per scene: triplets are ranked by confidence, the
top K kept, and a ground-truth triplet counts as recalled when its
(subject, object, label) appears among the kept (subject, object, prediction)
triples. Discriminatory power (DP@k) is computed from the row-normalized
prediction confusion matrix, reusing the lattice module's normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dataset import ClassFrequencies, Corpus
from .errors import ValidationError
from .lattice import row_normalize, top_confused

GROUP_SIZE_OVERRIDES = {50: (16, 17, 17)}


@dataclass
class PredictedTriplet:
    """One evaluated triplet: ground truth plus the model's top-1 guess."""

    subject_id: int
    object_id: int
    label: int
    prediction: int
    confidence: float


@dataclass
class GroupSplit:
    """Class ids partitioned into head/body/tail by descending frequency."""

    head: np.ndarray
    body: np.ndarray
    tail: np.ndarray

    def as_dict(self):
        return {"head": self.head, "body": self.body, "tail": self.tail}


@dataclass
class EvalReport:
    num_classes: int
    r_at_k: dict[int, float]
    mr_at_k: dict[int, float]
    per_class_recall: dict[int, np.ndarray]
    group_mr: dict[int, dict[str, float]]
    dp_at_k: dict[int, float]
    confusion_prime: np.ndarray
    present: np.ndarray  # bool mask of classes with >= 1 test instance
    rings: list[dict] = field(default_factory=list)


def predictions_by_scene(corpus: Corpus, preds, phi) -> list[list[PredictedTriplet]]:
    """Group per-sample predictions into scenes, keyed by scene id."""
    scenes: dict[int, list[PredictedTriplet]] = {}
    for i, s in enumerate(corpus.samples):
        scenes.setdefault(s.scene_id, []).append(
            PredictedTriplet(
                subject_id=s.subject_id,
                object_id=s.object_id,
                label=s.label,
                prediction=int(preds[i]),
                confidence=float(phi[i, preds[i]]),
            )
        )
    return [scenes[k] for k in sorted(scenes)]


def _kept_triples(scene: list[PredictedTriplet], k: int) -> set[tuple[int, int, int]]:
    order = sorted(range(len(scene)), key=lambda i: (-scene[i].confidence, i))
    return {
        (scene[i].subject_id, scene[i].object_id, scene[i].prediction)
        for i in order[:k]
    }


def per_class_recall_at_k(
    scenes: list[list[PredictedTriplet]], k: int, num_classes: int
) -> tuple[np.ndarray, np.ndarray]:
    """(hits, totals) per ground-truth class under the top-K kept set."""
    if k < 1:
        raise ValidationError(f"K must be >= 1, got {k}")
    hits = np.zeros(num_classes)
    totals = np.zeros(num_classes)
    for scene in scenes:
        kept = _kept_triples(scene, k)
        for t in scene:
            totals[t.label] += 1
            if (t.subject_id, t.object_id, t.label) in kept:
                hits[t.label] += 1
    return hits, totals


def recall_at_k(scenes: list[list[PredictedTriplet]], k: int, num_classes: int) -> float:
    """Micro-averaged recall of ground-truth triplets over all scenes."""
    hits, totals = per_class_recall_at_k(scenes, k, num_classes)
    total = totals.sum()
    return float(hits.sum() / total) if total else 0.0


def mean_recall_at_k(
    scenes: list[list[PredictedTriplet]], k: int, num_classes: int
) -> tuple[float, np.ndarray]:
    """Macro-averaged per-class recall over classes with >= 1 test instance.

    Returns (mean, per-class recall vector with NaN for absent classes).
    """
    hits, totals = per_class_recall_at_k(scenes, k, num_classes)
    with np.errstate(invalid="ignore"):
        per_class = np.where(totals > 0, hits / np.maximum(totals, 1), np.nan)
    present = totals > 0
    if not present.any():
        return 0.0, per_class
    return float(per_class[present].mean()), per_class


def make_group_split(freqs: ClassFrequencies) -> GroupSplit:
    """Partition classes by descending n_i into head/body/tail.

    Sizes default to (ceil(C/3), ceil(rest/2), remainder); a small override
    table pins well-known splits such as 50 -> (16, 17, 17).
    """
    n = np.asarray(freqs.counts)
    c = len(n)
    order = np.lexsort((np.arange(c), -n))
    if c in GROUP_SIZE_OVERRIDES:
        h, b, _ = GROUP_SIZE_OVERRIDES[c]
    else:
        h = -(-c // 3)
        b = -(-(c - h) // 2)
    return GroupSplit(head=order[:h], body=order[h : h + b], tail=order[h + b :])


def group_mean_recall(per_class: np.ndarray, split: GroupSplit) -> dict[str, float]:
    """Macro-average the per-class recalls within each frequency group."""
    out = {}
    for name, ids in split.as_dict().items():
        vals = per_class[ids]
        vals = vals[~np.isnan(vals)]
        out[name] = float(vals.mean()) if vals.size else float("nan")
    return out


def confusion_from_predictions(labels, preds, num_classes: int) -> tuple[np.ndarray, np.ndarray]:
    """(row-normalized confusion matrix S', per-class test counts)."""
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(labels), np.asarray(preds)), 1)
    totals = counts.sum(axis=1)
    return row_normalize(counts, totals), totals


def dp_at_k(s_prime: np.ndarray, k: int, present=None) -> float:
    """Mean gap, in percent, between s'_ii and its top-k confusion rates.

    Rows for classes absent from the test set are excluded from the mean.
    """
    c = s_prime.shape[0]
    if not 1 <= k <= c - 1:
        raise ValidationError(f"k must lie in [1, {c - 1}], got {k}")
    if present is None:
        present = s_prime.sum(axis=1) > 0
    terms = []
    for i in range(c):
        if not present[i]:
            continue
        v = top_confused(s_prime[i], i, k)
        terms.append(float(np.mean(s_prime[i, i] - s_prime[i, v])))
    if not terms:
        return 0.0
    return 100.0 * float(np.mean(terms))


def prediction_distribution(s_prime: np.ndarray, class_id: int, k: int) -> dict:
    """Ring record for one class: self rate, top-k confuser rates, remainder."""
    c = s_prime.shape[0]
    if not 0 <= class_id < c:
        raise ValidationError(f"class id {class_id} out of range [0, {c})")
    if not 1 <= k <= c - 1:
        raise ValidationError(f"k must lie in [1, {c - 1}], got {k}")
    row = s_prime[class_id]
    confusers = top_confused(row, class_id, k)
    neighbors = [(int(j), float(row[j])) for j in confusers]
    self_rate = float(row[class_id])
    other = float(row.sum() - self_rate - sum(p for _, p in neighbors))
    return {
        "gt_class": class_id,
        "self": self_rate,
        "neighbors": neighbors,
        "other": other,
    }


def evaluate(
    corpus: Corpus,
    preds,
    phi,
    train_freqs: ClassFrequencies,
    ks: list[int],
    dp_ks: list[int],
    ring_k: int = 5,
) -> EvalReport:
    """Compute the full evaluation report for one model on one test corpus."""
    c = corpus.num_classes
    scenes = predictions_by_scene(corpus, preds, phi)
    split = make_group_split(train_freqs)
    r_at_k, mr_at_k, per_class_map, group_mr = {}, {}, {}, {}
    for k in ks:
        r_at_k[k] = recall_at_k(scenes, k, c)
        mr, per_class = mean_recall_at_k(scenes, k, c)
        mr_at_k[k] = mr
        per_class_map[k] = per_class
        group_mr[k] = group_mean_recall(per_class, split)
    s_prime, totals = confusion_from_predictions(corpus.labels_array(), preds, c)
    present = totals > 0
    dp = {k: dp_at_k(s_prime, k, present) for k in dp_ks}
    rings = []
    if c > 1:
        rings = [
            prediction_distribution(s_prime, i, min(ring_k, c - 1))
            for i in range(c)
            if present[i]
        ]
    return EvalReport(
        num_classes=c,
        r_at_k=r_at_k,
        mr_at_k=mr_at_k,
        per_class_recall=per_class_map,
        group_mr=group_mr,
        dp_at_k=dp,
        confusion_prime=s_prime,
        present=present,
        rings=rings,
    )
