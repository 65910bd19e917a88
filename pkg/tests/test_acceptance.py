"""Acceptance gate for the full pipeline.

Each test covers one numbered criterion and prints a single PASS/FAIL line.
Criteria 1-3 and 5 are exact or finite-difference oracles on the loss
kernels, 4 and 6 are structural invariants, 7 and 8 reproduce the expected
method orderings on the default synthetic specification over five seeds, and
9 checks byte-identical artifacts on re-run.
"""

import filecmp
import shutil
import time
from dataclasses import replace

import numpy as np
import pytest
from conftest import make_lattice

from fgpl.cli import _GEN_DEFAULTS, main, parse_pairs
from fgpl.dataset import ClassFrequencies, GeneratorSpec, class_frequencies, generate_corpus
from fgpl.lattice import collect_biased_predictions, normalize_confusion
from fgpl.losses import (
    CategoryDiscriminatingLoss,
    CrossEntropyLoss,
    EntityDiscriminatingLoss,
    LossConfig,
    cdl_weight,
    cdl_weight_matrix,
    make_loss,
    softmax,
)
from fgpl.metrics import (
    PredictedTriplet,
    dp_at_k,
    make_group_split,
    mean_recall_at_k,
    recall_at_k,
)
from fgpl.model import TrainConfig, build_frequency_prior, predict_batch, train
import fgpl.metrics as metrics

NUM_SEEDS = 5
ORDERING_MIN_SEEDS = 4
MAX_SECONDS_PER_SEED = 120.0
DEFAULT_PAIRS = parse_pairs(_GEN_DEFAULTS["pairs"])


def _report(num: int, name: str, ok: bool, detail: str = ""):
    status = "PASS" if ok else "FAIL"
    print(f"acceptance criterion {num} ({name}): {status}" + (f" [{detail}]" if detail else ""))
    assert ok, f"acceptance criterion {num} ({name}) failed: {detail}"


def _random_lattice(rng, c=50, top_m=5):
    """Row-stochastic confusion with a boosted diagonal and positive counts."""
    s = rng.dirichlet(np.ones(c), c)
    s[np.arange(c), np.arange(c)] += 1.0
    s /= s.sum(axis=1, keepdims=True)
    counts = rng.integers(20, 2000, size=c)
    return make_lattice(s, counts, top_m=top_m)


# --- criteria 7/8 fixture: default-spec pipeline over five seeds -------------------


def _run_default_seed(seed: int) -> dict:
    spec = GeneratorSpec(confusable_pairs=DEFAULT_PAIRS, seed=seed)
    train_c, test_c = generate_corpus(spec)
    freqs = class_frequencies(train_c.samples, train_c.num_classes)
    prior = build_frequency_prior(train_c)
    cfg = LossConfig()

    t0 = time.perf_counter()
    baseline = train(train_c, TrainConfig(epochs=20, seed=seed), CrossEntropyLoss(), prior)
    lat = normalize_confusion(collect_biased_predictions(baseline, train_c), freqs, top_m=5)

    def score(m):
        preds, phi = predict_batch(m, test_c)
        rep = metrics.evaluate(test_c, preds, phi, freqs, [8, 16, 32], [1, 5, 10], 5)
        return rep.mr_at_k[16], rep.dp_at_k[10]

    results = {"CE": score(baseline)}
    variants = [
        ("RW", "REWEIGHT", cfg),
        ("CDL", "CDL", cfg),
        ("FGPL", "CDL_EDL", cfg),
        # cdl_rf off isolates the margin loss: CE + lambda * EDL
        ("EDL", "CDL_EDL", replace(cfg, cdl_rf=False)),
        ("EDL_no_pc", "CDL_EDL", replace(cfg, cdl_rf=False, edl_pc=False)),
        ("EDL_no_bf", "CDL_EDL", replace(cfg, cdl_rf=False, edl_bf=False)),
    ]
    for name, kind, c in variants:
        loss = make_loss(kind, c, freqs, lat)
        m = train(train_c, TrainConfig(epochs=20, seed=seed, loss_kind=kind), loss, prior)
        results[name] = score(m)
    elapsed = time.perf_counter() - t0
    return {"lattice": lat, "results": results, "elapsed": elapsed}


@pytest.fixture(scope="module")
def seed_runs():
    return [_run_default_seed(seed) for seed in range(NUM_SEEDS)]


# --- 1: finite-difference gradient oracle ------------------------------------------


def test_criterion_1_gradient_oracle():
    rng = np.random.default_rng(0)
    c, b, h = 50, 1000, 1e-5
    lat = _random_lattice(rng, c)
    cfg = LossConfig()
    etas = rng.normal(0.0, 2.0, size=(b, c))
    labels = rng.integers(0, c, size=b)

    cdl = make_loss("CDL", cfg, lat.n, lat)
    edl = EntityDiscriminatingLoss(lat.n, cfg, lat)
    fgpl = make_loss("CDL_EDL", cfg, lat.n, lat)

    # exclude samples near a hinge kink for the margin-bearing losses
    phi = softmax(etas)
    nbr = edl.neighbors[labels]
    margins = np.take_along_axis(phi, nbr, axis=1) - phi[np.arange(b), labels][:, None]
    near_kink = (np.abs(margins + cfg.delta) < 1e-3).any(axis=1)

    t0 = time.perf_counter()
    worst = 0.0
    checked = 0
    for loss, mask in ((cdl, np.zeros(b, bool)), (edl, near_kink), (fgpl, near_kink)):
        keep = ~mask
        _, grads = loss.batch(etas, labels)
        fd = np.empty((b, c))
        for d in range(c):
            step = np.zeros(c)
            step[d] = h
            vp, _ = loss.batch(etas + step, labels)
            vm, _ = loss.batch(etas - step, labels)
            fd[:, d] = (vp - vm) / (2 * h)
        num = np.linalg.norm(grads - fd, axis=1)
        denom = np.maximum(np.linalg.norm(fd, axis=1), 1e-12)
        rel = np.where(num == 0.0, 0.0, num / denom)
        worst = max(worst, float(rel[keep].max()))
        checked += int(keep.sum())
    elapsed = time.perf_counter() - t0

    ok = worst < 1e-4 and elapsed < 5.0 and checked >= 2500
    _report(1, "finite-difference gradients",
            ok, f"max rel err {worst:.2e}, {checked} samples, {elapsed:.1f}s")


# --- 2: seesaw reduction -------------------------------------------------------------


def test_criterion_2_seesaw_reduction():
    rng = np.random.default_rng(1)
    c = 50
    cfg = LossConfig(alpha=1.5, beta=1.5, xi=-1.0)
    exact = True
    for _ in range(100):
        counts = rng.integers(1, 1000, size=c)
        s = rng.dirichlet(np.ones(c), c)
        lat = make_lattice(s, counts, top_m=5)
        n = counts.astype(np.float64)
        # vectorized path against an array-shaped seesaw oracle
        mu = n[None, :] / n[:, None]
        oracle = np.where(mu > 1.0, mu ** cfg.alpha, 1.0)
        np.fill_diagonal(oracle, 1.0)
        if not (cdl_weight_matrix(lat.n, cfg, lat) == oracle).all():
            exact = False
            break
        # scalar path against a scalar-shaped oracle over all pairs
        for i in range(c):
            for j in range(c):
                mu_s = n[j] / n[i]
                want = mu_s ** cfg.alpha if (mu_s > 1.0 and i != j) else 1.0
                if cdl_weight(i, j, lat, cfg) != want:
                    exact = False
                    break
            if not exact:
                break
        if not exact:
            break
    _report(2, "seesaw reduction", exact, "exact over 100 frequency vectors, all pairs")


# --- 3: CE reduction -----------------------------------------------------------------


def test_criterion_3_ce_reduction():
    rng = np.random.default_rng(2)
    c, b = 50, 1000
    etas = rng.normal(0.0, 3.0, size=(b, c))
    labels = rng.integers(0, c, size=b)
    freqs = ClassFrequencies(rng.integers(1, 500, size=c))
    plain_v, plain_g = CrossEntropyLoss().batch(etas, labels)
    cdl = CategoryDiscriminatingLoss(freqs, LossConfig(cdl_rf=False))
    cdl_v, cdl_g = cdl.batch(etas, labels)
    dv = float(np.abs(plain_v - cdl_v).max())
    dg = float(np.abs(plain_g - cdl_g).max())
    ok = dv <= 1e-12 and dg <= 1e-12
    _report(3, "CE reduction", ok, f"max value diff {dv:.1e}, max grad diff {dg:.1e}")


# --- 4: lattice invariants -----------------------------------------------------------


def test_criterion_4_lattice_invariants(seed_runs):
    row_sum_err = 0.0
    monotone = True
    recovered = {(a, b): 0 for a, b, _ in DEFAULT_PAIRS}
    for run in seed_runs:
        lat = run["lattice"]
        row_sum_err = max(row_sum_err, float(np.abs(lat.s.sum(axis=1) - 1.0).max()))
        c = lat.s.shape[0]
        for i in range(c):
            inside = lat.neighbors[i]
            vals = lat.s[i, inside]
            floor = vals.min()
            outside = np.setdiff1d(np.arange(c), np.append(inside, i))
            if i in inside or (lat.s[i, outside] > floor).any():
                monotone = False
            if not (vals[:-1] >= vals[1:]).all():
                monotone = False
        for a, b, _ in DEFAULT_PAIRS:
            if b in lat.neighbors[a] or a in lat.neighbors[b]:
                recovered[(a, b)] += 1
    min_recovered = min(recovered.values())
    ok = row_sum_err <= 1e-9 and monotone and min_recovered >= ORDERING_MIN_SEEDS
    _report(4, "lattice invariants", ok,
            f"row sum err {row_sum_err:.1e}, monotone {monotone}, "
            f"weakest pair recovered {min_recovered}/{NUM_SEEDS} seeds")


# --- 5: EDL zero-margin property -------------------------------------------------------


def test_criterion_5_edl_zero_margin():
    rng = np.random.default_rng(3)
    c = 8
    lat = _random_lattice(rng, c, top_m=3)
    edl = EntityDiscriminatingLoss(lat.n, LossConfig(delta=0.5, top_m=3), lat)
    ok = True
    for label in range(c):
        eta = np.zeros(c)
        eta[label] = 20.0  # softmax mass ~1 on the label: every margin is met
        out = edl.single(eta, label)
        if out.value != 0.0 or (out.grad != 0.0).any():
            ok = False
    _report(5, "hinge loss vanishes once margins are met", ok)


# --- 6: metric sanity --------------------------------------------------------------------


def test_criterion_6_metric_sanity():
    checks = []
    checks.append(abs(dp_at_k(np.eye(10), 4) - 100.0) <= 1e-9)
    checks.append(abs(dp_at_k(np.full((10, 10), 0.1), 4)) <= 1e-9)

    scenes = [
        [PredictedTriplet(i, i + 1, l, l, 0.9) for i, l in enumerate([0, 1, 2, 1])]
        for _ in range(3)
    ]
    mr, _ = mean_recall_at_k(scenes, 4, 3)
    checks.append(mr == 1.0)

    rng = np.random.default_rng(4)
    noisy = [
        [
            PredictedTriplet(i, i + 1, int(rng.integers(3)), int(rng.integers(3)),
                             float(rng.random()))
            for i in range(6)
        ]
        for _ in range(10)
    ]
    values = [recall_at_k(noisy, k, 3) for k in range(1, 8)]
    checks.append(all(a <= b for a, b in zip(values, values[1:])))

    split = make_group_split(ClassFrequencies(np.arange(50, 0, -1)))
    checks.append((len(split.head), len(split.body), len(split.tail)) == (16, 17, 17))

    _report(6, "metric sanity", all(checks), f"{sum(checks)}/{len(checks)} checks")


# --- 7: method ordering on the default spec ------------------------------------------------


def test_criterion_7_method_ordering(seed_runs):
    fgpl_beats_ce = sum(
        1 for r in seed_runs
        if r["results"]["FGPL"][0] > r["results"]["CE"][0]
        and r["results"]["FGPL"][1] > r["results"]["CE"][1]
    )
    fgpl_beats_rw_dp = sum(
        1 for r in seed_runs if r["results"]["FGPL"][1] > r["results"]["RW"][1]
    )
    slowest = max(r["elapsed"] for r in seed_runs)
    ok = (
        fgpl_beats_ce >= ORDERING_MIN_SEEDS
        and fgpl_beats_rw_dp >= ORDERING_MIN_SEEDS
        and slowest < MAX_SECONDS_PER_SEED
    )
    _report(7, "combined loss beats baselines", ok,
            f"vs CE {fgpl_beats_ce}/{NUM_SEEDS}, vs re-weight on DP "
            f"{fgpl_beats_rw_dp}/{NUM_SEEDS}, slowest seed {slowest:.0f}s")


# --- 8: ablation ordering ---------------------------------------------------------------------


def test_criterion_8_ablation_ordering(seed_runs):
    edl_pc = sum(
        1 for r in seed_runs if r["results"]["EDL"][0] >= r["results"]["EDL_no_pc"][0]
    )
    edl_bf = sum(
        1 for r in seed_runs if r["results"]["EDL"][0] >= r["results"]["EDL_no_bf"][0]
    )
    cdl_pc = sum(
        1 for r in seed_runs if r["results"]["CDL"][0] >= r["results"]["RW"][0]
    )
    ok = all(v >= ORDERING_MIN_SEEDS for v in (edl_pc, edl_bf, cdl_pc))
    _report(8, "ablation ordering", ok,
            f"EDL pc {edl_pc}/{NUM_SEEDS}, EDL bf {edl_bf}/{NUM_SEEDS}, "
            f"CDL pc {cdl_pc}/{NUM_SEEDS}")


# --- 9: byte-identical re-runs -------------------------------------------------------------------


def _run_pipeline(out):
    out.mkdir(exist_ok=True)
    d = str(out)
    train = f"{d}/train.corpus"
    test = f"{d}/test.corpus"
    assert main(["gen", "--out", d, "--num-classes", "6", "--num-objects", "8",
                 "--feature-dim", "6", "--num-scenes", "60", "--scene-size", "8",
                 "--pairs", "1:4:0.85", "--seed", "3"]) == 0
    assert main(["train-baseline", "--train", train, "--out", f"{d}/base.model",
                 "--epochs", "6"]) == 0
    assert main(["build-lattice", "--model", f"{d}/base.model", "--train", train,
                 "--out", f"{d}/c.lattice", "--top-m", "3"]) == 0
    assert main(["train-fgpl", "--train", train, "--lattice", f"{d}/c.lattice",
                 "--out", f"{d}/fgpl.model", "--epochs", "6", "--top-m", "3"]) == 0
    assert main(["eval", "--model", f"{d}/fgpl.model", "--train", train, "--test", test,
                 "--out", f"{d}/report", "--ring-k", "2"]) == 0
    assert main(["compare", "--train", train, "--test", test, "--out", f"{d}/cmp",
                 "--epochs", "4", "--top-m", "3", "--dp-ks", "1,3"]) == 0


def test_criterion_9_determinism(tmp_path):
    # run twice with identical paths; snapshot the first run's artifacts
    work, snap = tmp_path / "work", tmp_path / "snap"
    _run_pipeline(work)
    shutil.copytree(work, snap)
    _run_pipeline(work)
    files = sorted(p.relative_to(work) for p in work.rglob("*") if p.is_file())
    mismatched = [
        str(f) for f in files if not filecmp.cmp(work / f, snap / f, shallow=False)
    ]
    ok = not mismatched and len(files) >= 10
    _report(9, "byte-identical re-runs", ok,
            f"{len(files)} artifacts" + (f", mismatched: {mismatched}" if mismatched else ""))
