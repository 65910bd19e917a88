"""Confusion lattice built from a biased baseline's training-set predictions.

Row i of the lattice holds s_ij, the proportion of training samples labeled i
that the baseline predicted as j; each class also gets an ordered set of its
top-M most confused neighbor classes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .dataset import ClassFrequencies, Corpus
from .errors import ParseError, ValidationError

_HEADER_RE = re.compile(r"^# C=(\d+) M=(\d+)$")


@dataclass
class ConfusionCounts:
    """Integer confusion matrix: entry (i, j) = samples labeled i, predicted j."""

    counts: np.ndarray


@dataclass
class PredicateLattice:
    """Row-normalized confusion correlations plus class counts and neighbors."""

    s: np.ndarray
    n: ClassFrequencies
    neighbors: list[np.ndarray]
    top_m: int


def collect_biased_predictions(model, corpus: Corpus) -> ConfusionCounts:
    """Accumulate top-1 predictions of a trained baseline over the corpus."""
    from .model import predict_batch

    c = corpus.num_classes
    if model.weights.shape != (c, corpus.feature_dim):
        raise ValidationError(
            f"model shape {model.weights.shape} does not match corpus "
            f"(C={c}, D={corpus.feature_dim})"
        )
    counts = np.zeros((c, c), dtype=np.int64)
    if corpus.samples:
        preds, _ = predict_batch(model, corpus)
        np.add.at(counts, (corpus.labels_array(), preds), 1)
    return ConfusionCounts(counts)


def row_normalize(counts: np.ndarray, totals: np.ndarray) -> np.ndarray:
    """Divide each row by its class total; rows with total 0 stay all-zero.

    Shared by lattice construction and the evaluation confusion matrix so
    both use one code path.
    """
    totals = np.asarray(totals, dtype=np.float64)
    out = np.zeros_like(counts, dtype=np.float64)
    nz = totals > 0
    out[nz] = counts[nz] / totals[nz, None]
    return out


def top_confused(s_row: np.ndarray, i: int, k: int) -> np.ndarray:
    """The k off-diagonal columns with highest s_ij, descending with
    ascending-index tie-break."""
    c = len(s_row)
    order = np.lexsort((np.arange(c), -s_row))
    order = order[order != i]
    return order[:k]


def normalize_confusion(
    counts: ConfusionCounts, n: ClassFrequencies, top_m: int = 5
) -> PredicateLattice:
    """Normalize confusion counts into correlations and pick neighbor sets."""
    mat = np.asarray(counts.counts)
    c = mat.shape[0]
    if mat.shape != (c, c):
        raise ValidationError(f"confusion counts must be square, got {mat.shape}")
    if len(n.counts) != c:
        raise ValidationError(
            f"frequency vector length {len(n.counts)} does not match C={c}"
        )
    n.require_all_positive()
    if top_m < 1:
        raise ValidationError(f"top_m must be >= 1, got {top_m}")
    s = row_normalize(mat, np.asarray(n.counts))
    m = min(top_m, c - 1)
    neighbors = [top_confused(s[i], i, m) for i in range(c)]
    return PredicateLattice(s=s, n=n, neighbors=neighbors, top_m=top_m)


def correlation_ratio(lattice: PredicateLattice, i: int, j: int) -> float:
    """phi_ij = s_ij / s_ii; 0 when s_ij = 0, +inf when s_ii = 0 < s_ij."""
    if i == j:
        raise ValidationError("correlation ratio is defined for distinct classes only")
    c = lattice.s.shape[0]
    if not (0 <= i < c and 0 <= j < c):
        raise ValidationError(f"class ids ({i}, {j}) out of range [0, {c})")
    s_ij = lattice.s[i, j]
    s_ii = lattice.s[i, i]
    if s_ij == 0.0:
        return 0.0
    if s_ii == 0.0:
        return float("inf")
    return float(s_ij / s_ii)


def save_lattice(lattice: PredicateLattice, path) -> None:
    """Write the lattice file: header, s matrix, counts, neighbor lists."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# C={lattice.s.shape[0]} M={lattice.top_m}\n")
        for row in lattice.s:
            f.write(" ".join(f"{v:.17g}" for v in row) + "\n")
        f.write(" ".join(str(int(v)) for v in lattice.n.counts) + "\n")
        for v in lattice.neighbors:
            f.write(" ".join(str(int(j)) for j in v) + "\n")


def load_lattice(path) -> PredicateLattice:
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty lattice file")
    m = _HEADER_RE.match(lines[0])
    if m is None:
        raise ParseError(f"{path}: line 1: expected header '# C=<int> M=<int>'")
    c, top_m = int(m.group(1)), int(m.group(2))
    if len(lines) != 1 + 2 * c + 1:
        raise ParseError(f"{path}: expected {1 + 2 * c + 1} lines, got {len(lines)}")
    try:
        s = np.array([[float(v) for v in lines[1 + i].split()] for i in range(c)])
        counts = np.array([int(v) for v in lines[1 + c].split()], dtype=np.int64)
        neighbors = [
            np.array([int(v) for v in lines[2 + c + i].split()], dtype=np.int64)
            for i in range(c)
        ]
    except ValueError as exc:
        raise ParseError(f"{path}: {exc}") from None
    if s.shape != (c, c) or len(counts) != c:
        raise ParseError(f"{path}: inconsistent matrix or count dimensions")
    return PredicateLattice(s=s, n=ClassFrequencies(counts), neighbors=neighbors, top_m=top_m)
