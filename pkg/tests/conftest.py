import numpy as np
import pytest

from fgpl.dataset import ClassFrequencies, GeneratorSpec, class_frequencies, generate_corpus
from fgpl.lattice import PredicateLattice, collect_biased_predictions, normalize_confusion
from fgpl.losses import CrossEntropyLoss
from fgpl.model import TrainConfig, build_frequency_prior, train


def make_lattice(s, counts, top_m=2):
    """Hand-built lattice for loss unit tests."""
    from fgpl.lattice import top_confused

    s = np.asarray(s, dtype=np.float64)
    c = s.shape[0]
    m = min(top_m, c - 1)
    neighbors = [top_confused(s[i], i, m) for i in range(c)]
    return PredicateLattice(
        s=s, n=ClassFrequencies(np.asarray(counts, dtype=np.int64)), neighbors=neighbors, top_m=top_m
    )


SMALL_SPEC = GeneratorSpec(
    num_classes=6,
    num_objects=8,
    feature_dim=6,
    num_scenes=80,
    scene_size=8,
    zipf_exponent=1.2,
    confusable_pairs=[(1, 4, 0.85)],
    seed=7,
)


@pytest.fixture(scope="session")
def small_pipeline():
    """A small corpus with one planted pair, its CE baseline, and lattice."""
    train_corpus, test_corpus = generate_corpus(SMALL_SPEC)
    freqs = class_frequencies(train_corpus.samples, train_corpus.num_classes)
    prior = build_frequency_prior(train_corpus)
    baseline = train(train_corpus, TrainConfig(epochs=15, seed=0), CrossEntropyLoss(), prior)
    counts = collect_biased_predictions(baseline, train_corpus)
    lat = normalize_confusion(counts, freqs, top_m=3)
    return {
        "train": train_corpus,
        "test": test_corpus,
        "freqs": freqs,
        "prior": prior,
        "baseline": baseline,
        "counts": counts,
        "lattice": lat,
    }
