"""Command-line front end for the full pipeline.

Subcommands: gen, train-baseline, build-lattice, train-fgpl, eval, compare.
Parameters resolve as: built-in defaults < JSON config file (--config) <
explicit flags. Exit codes: 0 success, 2 validation, 3 I/O, 4 numeric.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataset, lattice, losses, metrics, model, report
from .errors import FgplError, ValidationError

_GEN_DEFAULTS = {
    "num_classes": 50,
    "num_objects": 30,
    "feature_dim": 16,
    "num_scenes": 800,
    "scene_size": 16,
    "zipf_exponent": 1.5,
    "pairs": "0:30:0.85,1:33:0.85,2:36:0.85,3:39:0.85,4:42:0.85,5:45:0.85,6:47:0.85,7:49:0.85",
    "seed": 0,
}

_TRAIN_DEFAULTS = {
    "learning_rate": 0.01,
    "batch_size": 16,
    "epochs": 20,
    "seed": 0,
    "smoothing": 1.0,
    "no_prior": False,
}

_LOSS_DEFAULTS = {
    "alpha": 1.5,
    "beta": 2.0,
    "xi": 0.9,
    "delta": 0.5,
    "lam": 0.1,
    "top_m": 5,
    "no_cdl_pc": False,
    "no_cdl_rf": False,
    "no_edl_pc": False,
    "no_edl_bf": False,
}

_EVAL_DEFAULTS = {"ks": "", "dp_ks": "1,5,10", "ring_k": 5}


def parse_pairs(text: str) -> list[tuple[int, int, float]]:
    """Parse 'a:b:overlap,...' into confusable pair triples."""
    pairs = []
    if not text:
        return pairs
    for item in text.split(","):
        parts = item.split(":")
        if len(parts) != 3:
            raise ValidationError(f"bad pair spec {item!r}; expected 'a:b:overlap'")
        try:
            pairs.append((int(parts[0]), int(parts[1]), float(parts[2])))
        except ValueError as exc:
            raise ValidationError(f"bad pair spec {item!r}: {exc}") from None
    return pairs


def parse_int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v]


def _resolve(args: argparse.Namespace, defaults: dict) -> dict:
    """Merge defaults, config-file values, and explicit flags."""
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config", "func")}
    resolved = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                file_values = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{config_path}: invalid JSON config: {exc}") from None
        unknown = set(file_values) - set(defaults) - set(given)
        if unknown:
            raise ValidationError(
                f"{config_path}: unknown config keys: {sorted(unknown)}"
            )
        resolved.update(file_values)
    resolved.update(given)
    return resolved


def _loss_config(cfg: dict) -> losses.LossConfig:
    lc = losses.LossConfig(
        alpha=cfg["alpha"],
        beta=cfg["beta"],
        xi=cfg["xi"],
        delta=cfg["delta"],
        lam=cfg["lam"],
        top_m=cfg["top_m"],
        cdl_pc=not cfg["no_cdl_pc"],
        cdl_rf=not cfg["no_cdl_rf"],
        edl_pc=not cfg["no_edl_pc"],
        edl_bf=not cfg["no_edl_bf"],
    )
    lc.validate()
    return lc


def _train_config(cfg: dict, loss_kind: str) -> model.TrainConfig:
    tc = model.TrainConfig(
        learning_rate=cfg["learning_rate"],
        batch_size=cfg["batch_size"],
        epochs=cfg["epochs"],
        seed=cfg["seed"],
        loss_kind=loss_kind,
    )
    tc.validate()
    return tc


def _load_training_corpus(path) -> tuple[dataset.Corpus, dataset.ClassFrequencies]:
    corpus = dataset.load_corpus(path)
    if not corpus.samples:
        raise ValidationError(f"{path}: training corpus is empty")
    freqs = dataset.class_frequencies(corpus.samples, corpus.num_classes)
    freqs.require_all_positive()
    return corpus, freqs


def cmd_gen(args) -> int:
    cfg = _resolve(args, {**_GEN_DEFAULTS, "out": "."})
    spec = dataset.GeneratorSpec(
        num_classes=cfg["num_classes"],
        num_objects=cfg["num_objects"],
        feature_dim=cfg["feature_dim"],
        num_scenes=cfg["num_scenes"],
        scene_size=cfg["scene_size"],
        zipf_exponent=cfg["zipf_exponent"],
        confusable_pairs=parse_pairs(cfg["pairs"]),
        seed=cfg["seed"],
    )
    train_corpus, test_corpus = dataset.generate_corpus(spec)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    dataset.save_corpus(train_corpus, out / "train.corpus")
    dataset.save_corpus(test_corpus, out / "test.corpus")
    print(f"wrote {out / 'train.corpus'} ({len(train_corpus)} samples)")
    print(f"wrote {out / 'test.corpus'} ({len(test_corpus)} samples)")
    return 0


def cmd_train_baseline(args) -> int:
    cfg = _resolve(args, {**_TRAIN_DEFAULTS, "train": None, "out": None})
    corpus, _ = _load_training_corpus(cfg["train"])
    prior = None if cfg["no_prior"] else model.build_frequency_prior(corpus, cfg["smoothing"])
    tc = _train_config(cfg, "CE")
    trained = model.train(corpus, tc, losses.CrossEntropyLoss(), prior)
    model.save_model(trained, cfg["out"])
    print(f"wrote {cfg['out']}")
    return 0


def cmd_build_lattice(args) -> int:
    cfg = _resolve(args, {"model": None, "train": None, "out": None, "top_m": 5})
    corpus, freqs = _load_training_corpus(cfg["train"])
    baseline = model.load_model(cfg["model"])
    counts = lattice.collect_biased_predictions(baseline, corpus)
    lat = lattice.normalize_confusion(counts, freqs, top_m=cfg["top_m"])
    lattice.save_lattice(lat, cfg["out"])
    print(f"wrote {cfg['out']}")
    return 0


def cmd_train_fgpl(args) -> int:
    cfg = _resolve(
        args,
        {**_TRAIN_DEFAULTS, **_LOSS_DEFAULTS, "train": None, "lattice": None,
         "out": None, "loss": "cdl_edl"},
    )
    corpus, freqs = _load_training_corpus(cfg["train"])
    loss_kind = cfg["loss"].upper()
    lc = _loss_config(cfg)
    lat = None
    if cfg["lattice"]:
        lat = lattice.load_lattice(cfg["lattice"])
        if lat.s.shape[0] != corpus.num_classes:
            raise ValidationError(
                f"lattice C={lat.s.shape[0]} does not match corpus C={corpus.num_classes}"
            )
    loss = losses.make_loss(loss_kind, lc, freqs, lat)
    prior = None if cfg["no_prior"] else model.build_frequency_prior(corpus, cfg["smoothing"])
    tc = _train_config(cfg, loss_kind)
    trained = model.train(corpus, tc, loss, prior)
    model.save_model(trained, cfg["out"])
    print(f"wrote {cfg['out']}")
    return 0


def _eval_keys(cfg: dict, test_corpus: dataset.Corpus) -> tuple[list[int], list[int], int, int]:
    """Metric Ks default to {G//2, G, 2G} for the corpus scene size G."""
    scene_ids = test_corpus.scene_ids_array()
    g = int(max(np.bincount(scene_ids - scene_ids.min()))) if len(test_corpus) else 1
    ks = parse_int_list(cfg["ks"]) or sorted({max(1, g // 2), g, 2 * g})
    dp_ks = parse_int_list(cfg["dp_ks"])
    dp_ks = [k for k in dp_ks if k <= test_corpus.num_classes - 1] or [1]
    mr_key = g if g in ks else ks[len(ks) // 2]
    return ks, dp_ks, mr_key, max(dp_ks)


def _evaluate_model(trained, test_corpus, train_freqs, ks, dp_ks, ring_k):
    if test_corpus.feature_dim != trained.weights.shape[1]:
        raise ValidationError(
            f"corpus D={test_corpus.feature_dim} does not match model D={trained.weights.shape[1]}"
        )
    if test_corpus.num_classes != trained.weights.shape[0]:
        raise ValidationError(
            f"corpus C={test_corpus.num_classes} does not match model C={trained.weights.shape[0]}"
        )
    preds, phi = model.predict_batch(trained, test_corpus)
    return metrics.evaluate(test_corpus, preds, phi, train_freqs, ks, dp_ks, ring_k)


def cmd_eval(args) -> int:
    cfg = _resolve(
        args, {**_EVAL_DEFAULTS, "model": None, "train": None, "test": None, "out": None}
    )
    _, train_freqs = _load_training_corpus(cfg["train"])
    test_corpus = dataset.load_corpus(cfg["test"])
    trained = model.load_model(cfg["model"])
    ks, dp_ks, _, _ = _eval_keys(cfg, test_corpus)
    rep = _evaluate_model(trained, test_corpus, train_freqs, ks, dp_ks, cfg["ring_k"])
    meta = report.run_metadata(
        cfg, {"model": cfg["model"], "train": cfg["train"], "test": cfg["test"]}
    )
    for path in report.write_eval_report(rep, cfg["out"], meta):
        print(f"wrote {path}")
    return 0


def cmd_compare(args) -> int:
    cfg = _resolve(
        args,
        {**_TRAIN_DEFAULTS, **_LOSS_DEFAULTS, **_EVAL_DEFAULTS,
         "train": None, "test": None, "out": None, "baseline_epochs": None},
    )
    corpus, freqs = _load_training_corpus(cfg["train"])
    test_corpus = dataset.load_corpus(cfg["test"])
    lc = _loss_config(cfg)
    prior = None if cfg["no_prior"] else model.build_frequency_prior(corpus, cfg["smoothing"])

    baseline_epochs = cfg["baseline_epochs"] or cfg["epochs"]
    tc_base = _train_config({**cfg, "epochs": baseline_epochs}, "CE")
    baseline = model.train(corpus, tc_base, losses.CrossEntropyLoss(), prior)
    counts = lattice.collect_biased_predictions(baseline, corpus)
    lat = lattice.normalize_confusion(counts, freqs, top_m=lc.top_m)

    methods = [("CE", baseline)]
    for name, kind in (("Re-weight", "REWEIGHT"), ("FGPL", "CDL_EDL")):
        tc = _train_config(cfg, kind)
        loss = losses.make_loss(kind, lc, freqs, lat)
        methods.append((name, model.train(corpus, tc, loss, prior)))

    ks, dp_ks, mr_key, dp_key = _eval_keys(cfg, test_corpus)
    rows = [
        (name, _evaluate_model(m, test_corpus, freqs, ks, dp_ks, cfg["ring_k"]))
        for name, m in methods
    ]
    meta = report.run_metadata(cfg, {"train": cfg["train"], "test": cfg["test"]})
    for path in report.write_compare_report(rows, cfg["out"], meta, mr_key, dp_key):
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fgpl",
        description="Confusion-lattice predicate learning pipeline on synthetic corpora.",
    )
    parser.add_argument("--version", action="version", version=f"fgpl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sup = argparse.SUPPRESS

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--seed", type=int, default=sup)

    def add_train_flags(p):
        p.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float, default=sup)
        p.add_argument("--batch-size", type=int, default=sup)
        p.add_argument("--epochs", type=int, default=sup)
        p.add_argument("--smoothing", type=float, default=sup)
        p.add_argument("--no-prior", action="store_true", default=sup)

    def add_loss_flags(p):
        p.add_argument("--alpha", type=float, default=sup)
        p.add_argument("--beta", type=float, default=sup)
        p.add_argument("--xi", type=float, default=sup)
        p.add_argument("--delta", type=float, default=sup)
        p.add_argument("--lam", type=float, default=sup)
        p.add_argument("--top-m", type=int, default=sup)
        for switch in ("cdl-pc", "cdl-rf", "edl-pc", "edl-bf"):
            p.add_argument(f"--no-{switch}", action="store_true", default=sup)

    def add_eval_flags(p):
        p.add_argument("--ks", default=sup, help="comma-separated per-scene K budgets")
        p.add_argument("--dp-ks", default=sup, help="comma-separated k values for DP@k")
        p.add_argument("--ring-k", type=int, default=sup)

    p = sub.add_parser("gen", help="generate a synthetic train/test corpus pair")
    add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--num-classes", type=int, default=sup)
    p.add_argument("--num-objects", type=int, default=sup)
    p.add_argument("--feature-dim", type=int, default=sup)
    p.add_argument("--num-scenes", type=int, default=sup)
    p.add_argument("--scene-size", type=int, default=sup)
    p.add_argument("--zipf-exponent", type=float, default=sup)
    p.add_argument("--pairs", default=sup, help="confusable pairs as 'a:b:overlap,...'")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train-baseline", help="train the cross-entropy baseline")
    add_common(p)
    add_train_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("build-lattice", help="build the confusion lattice from a baseline")
    add_common(p)
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--top-m", type=int, default=sup)
    p.set_defaults(func=cmd_build_lattice)

    p = sub.add_parser("train-fgpl", help="train with a correlation-aware loss")
    add_common(p)
    add_train_flags(p)
    add_loss_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--lattice", default=sup)
    p.add_argument("--out", required=True)
    p.add_argument("--loss", choices=["reweight", "cdl", "cdl_edl"], default=sup)
    p.set_defaults(func=cmd_train_fgpl)

    p = sub.add_parser("eval", help="evaluate a model and emit report files")
    add_common(p)
    add_eval_flags(p)
    p.add_argument("--model", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="report output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train and compare CE, re-weight, and FGPL")
    add_common(p)
    add_train_flags(p)
    add_loss_flags(p)
    add_eval_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="report output directory")
    p.add_argument("--baseline-epochs", type=int, default=sup)
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FgplError as exc:
        record = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        print(json.dumps(record), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        record = {"error": "IOError", "message": str(exc), "exit_code": 3}
        print(json.dumps(record), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
