"""Command-line entry point: ``vessel-bench <subcommand> [options]``.

Exit status: 0 on success, 1 on usage errors, 2 on runtime errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import CacheInvalidError, InvalidArgumentError, NotConvergedError, NumericError
from .image_core import (
    ManifestRow,
    PanchroParams,
    align_chip,
    histogram_specification,
    load_histogram,
    panchromatic_simulate,
    read_manifest,
    write_manifest,
    write_png,
)
from .synthgen import default_jobs

log = logging.getLogger("vessel_bench")

SUBCOMMANDS = ("generate", "preprocess", "extract", "train", "eval", "experiment", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}\n")


def _add_common(p, *, config=True, out=True, seed=False, jobs=False):
    if config:
        p.add_argument("--config", help="JSON config file; flags override its values")
    if out:
        p.add_argument("--out", help="output directory")
    if seed:
        p.add_argument("--seed", type=int, help="master seed")
    if jobs:
        p.add_argument("--jobs", type=int, help="worker processes (default: available cores)")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="vessel-bench", description="Synthetic vessel chips and classical recognition benchmark.")
    parser.add_argument("--version", action="version", version=f"vessel-bench {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="{" + ",".join(SUBCOMMANDS) + "}")

    p = sub.add_parser("generate", help="render a labeled synthetic dataset")
    _add_common(p, seed=True, jobs=True)
    p.add_argument("--per-class", type=int, help="chips per class (default 200)")
    p.add_argument("--size", type=int, help="chip side in pixels (default 128)")
    p.add_argument("--domain-shift", choices=("A", "B"), help="render with a perturbed constant set")
    p.add_argument("--target-histogram", help="histogram file the grayscale chips are matched to")

    p = sub.add_parser("preprocess", help="align and/or histogram-match an existing dataset")
    p.add_argument("manifest")
    _add_common(p)
    p.add_argument("--size", type=int, help="aligned chip side (default: keep)")
    p.add_argument("--align", action="store_true", help="rotate each chip so its principal axis is horizontal")
    p.add_argument("--panchro", action="store_true", help="apply the pseudo-panchromatic conversion to RGB chips")
    p.add_argument("--target-histogram", help="histogram file to match")

    p = sub.add_parser("extract", help="compute per-chip features for a dataset")
    p.add_argument("manifest")
    _add_common(p, jobs=True)
    p.add_argument("--method", default="hog+src", help="feature+classifier pair; only the feature is used")

    p = sub.add_parser("train", help="train one method and save a model bundle")
    p.add_argument("manifest")
    _add_common(p, seed=True)
    p.add_argument("--method", required=True, help="e.g. hmlbp+svm, mpca+svm, hog+src")
    p.add_argument("--fraction", type=float, help="train on shuffle 0 of this split (default: all chips)")

    p = sub.add_parser("eval", help="evaluate a model bundle on a dataset")
    p.add_argument("manifest")
    _add_common(p, config=False, seed=True)
    p.add_argument("--model", required=True, help="bundle written by 'train'")
    p.add_argument("--fraction", type=float, help="evaluate on the test part of shuffle 0 of this split")

    p = sub.add_parser("experiment", help="run a benchmark/adaptation grid from a config")
    _add_common(p, seed=True, jobs=True)
    p.add_argument("--format", choices=("csv", "md"), default="md", help="report printed to stdout")

    p = sub.add_parser("report", help="render a runs CSV")
    p.add_argument("runs")
    _add_common(p, config=False)
    p.add_argument("--format", choices=("csv", "md"), default="md")
    return parser


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{path}: invalid JSON ({exc})") from None


def _require_out(args) -> Path:
    if not args.out:
        raise UsageError(f"vessel-bench {args.command}: error: --out is required\n")
    return Path(args.out)


def _jobs(args) -> int:
    return args.jobs if args.jobs else default_jobs()


def _write_provenance(out: Path, command: str, doc, seed, extra=None):
    from .harness.experiment import provenance, write_provenance

    write_provenance(out, provenance(command, doc, seed, extra))


# --- subcommands ------------------------------------------------------------

def cmd_generate(args) -> int:
    from .harness.experiment import _constants_for

    out = _require_out(args)
    doc = _read_json(args.config) if args.config else {}
    base = Path(args.config).parent if args.config else Path(".")
    gen = {"seed": 0, "per_class": 200, "size": 128, **doc}
    for key, val in (("seed", args.seed), ("per_class", args.per_class), ("size", args.size),
                     ("domain_shift", args.domain_shift), ("target_histogram", args.target_histogram)):
        if val is not None:
            gen[key] = val
    constants = _constants_for(gen, base)
    hist_path = None
    if args.target_histogram:
        hist_path = Path(args.target_histogram)
    elif gen.get("target_histogram"):
        hist_path = base / gen["target_histogram"]
    hist = load_histogram(hist_path) if hist_path else None
    from .synthgen import generate_dataset

    manifest = generate_dataset(int(gen["seed"]), int(gen["per_class"]), int(gen["size"]), out_dir=out,
                                constants=constants, domain=gen.get("domain", "synthetic"),
                                target_histogram=hist, jobs=_jobs(args))
    _write_provenance(out, "generate", gen, int(gen["seed"]), {"render_constants_sha256": constants.sha256()})
    print(manifest)
    return 0


def cmd_preprocess(args) -> int:
    from .harness.dataset import load_dataset

    out = _require_out(args)
    doc = _read_json(args.config) if args.config else {}
    align = args.align or bool(doc.get("align", False))
    size = args.size or doc.get("size")
    panchro = args.panchro or bool(doc.get("panchro"))
    hist_path = args.target_histogram or doc.get("target_histogram")
    params = PanchroParams.from_dict(doc["panchro"]) if isinstance(doc.get("panchro"), dict) else PanchroParams()
    target = load_histogram(hist_path) if hist_path else None

    ds = load_dataset(args.manifest)
    src = read_manifest(args.manifest)
    rows = []
    for chip, row in zip(ds.chips, src.rows):
        if panchro and chip.channels == 3:
            chip = panchromatic_simulate(chip, params)
        if align:
            chip = align_chip(chip, int(size or max(chip.width, chip.height)))
        if target is not None:
            chip = histogram_specification(chip, target)
        (out / row.path).parent.mkdir(parents=True, exist_ok=True)
        write_png(chip, out / row.path)
        rows.append(ManifestRow(row.path, row.label, row.domain, chip.width, chip.height, row.seed))
    comments = list(src.comments) + [f"preprocessed align={align} panchro={panchro} "
                                     f"target_histogram={'none' if target is None else hist_path}"]
    write_manifest(out / "manifest.csv", rows, comments)
    _write_provenance(out, "preprocess", {"align": align, "size": size, "panchro": panchro,
                                          "target_histogram": hist_path, "source": str(args.manifest)}, None)
    print(out / "manifest.csv")
    return 0


def _load_method(args, doc):
    from .harness.experiment import parse_method

    entry = doc.get("method", args.method) if args.method is None else args.method
    return parse_method(entry)


def cmd_extract(args) -> int:
    from .harness.cache import FeatureCache
    from .harness.dataset import load_dataset
    from .harness.evaluation import dataset_features, full_subset
    from .harness.methods import fit_pipeline

    out = _require_out(args)
    doc = _read_json(args.config) if args.config else {}
    method = _load_method(args, doc)
    ds = load_dataset(args.manifest)
    cache = FeatureCache()
    jobs = _jobs(args)
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            feats = dataset_features(ds, method, cache, lambda f, xs: pool.map(f, xs, chunksize=16))
    else:
        feats = dataset_features(ds, method, cache)
    if feats is None:
        # fitted features: the basis is estimated on this dataset
        pipe = fit_pipeline(method, full_subset(ds))
        feats = pipe.raw(full_subset(ds))
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "features.npz", "wb") as fh:
        np.savez(fh, features=feats, labels=ds.labels, paths=np.array(ds.paths))
    _write_provenance(out, "extract", method.to_dict(), None,
                      {"manifest": str(args.manifest), "extractions": cache.extractions})
    print(f"{feats.shape[0]} x {feats.shape[1]} features -> {out / 'features.npz'}")
    return 0


def _split_indices(ds, fraction, seed):
    from .harness.evaluation import shuffle_split
    from .harness.splits import SplitSpec

    spec = SplitSpec(float(fraction), shuffle_seed=int(seed), custom=True)
    split, _ = shuffle_split(ds, spec, 0)
    return split


def cmd_train(args) -> int:
    from .harness.bundle import save_bundle
    from .harness.dataset import load_dataset
    from .harness.evaluation import full_subset, subset
    from .harness.methods import Subset, run_method

    out = _require_out(args)
    doc = _read_json(args.config) if args.config else {}
    method = _load_method(args, doc)
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    ds = load_dataset(args.manifest)
    if args.fraction is not None:
        split = _split_indices(ds, args.fraction, seed)
        train, val = subset(ds, split.train), subset(ds, split.validation)
        test = subset(ds, split.test)
    else:
        train, val, test = full_subset(ds), Subset(np.zeros(0, dtype=np.int64), [], None), full_subset(ds)
    result = run_method(method, train, val, test, ds.class_count, seed % (2**32))
    out.mkdir(parents=True, exist_ok=True)
    save_bundle(out / "model.npz", result.pipeline, result.model)
    _write_provenance(out, "train", method.to_dict(), seed,
                      {"manifest": str(args.manifest), "fraction": args.fraction,
                       "held_out_accuracy": result.accuracy if args.fraction is not None else None})
    print(out / "model.npz")
    return 0


def cmd_eval(args) -> int:
    from .harness.bundle import load_bundle
    from .harness.dataset import load_dataset
    from .harness.evaluation import full_subset, subset
    from .harness.methods import confusion_matrix, predict

    out = _require_out(args)
    pipe, model = load_bundle(args.model)
    ds = load_dataset(args.manifest)
    seed = args.seed if args.seed is not None else 0
    if args.fraction is not None:
        idx = _split_indices(ds, args.fraction, seed).test
        test = subset(ds, idx)
    else:
        idx = np.arange(len(ds))
        test = full_subset(ds)
    pred = predict(model, pipe.transform(test))
    cm = confusion_matrix(test.labels, pred, ds.class_count)
    acc = float(np.trace(cm) / cm.sum())
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["path", "label", "predicted"])
        for i, p in zip(idx, pred):
            w.writerow([ds.paths[i], ds.class_names[ds.labels[i]], ds.class_names[p]])
    (out / "eval.json").write_text(json.dumps({"accuracy": acc, "confusion": cm.tolist()}, indent=2) + "\n")
    _write_provenance(out, "eval", pipe.method.to_dict(), seed,
                      {"manifest": str(args.manifest), "model": str(args.model), "fraction": args.fraction})
    from .harness.report import format_accuracy

    print(f"accuracy {format_accuracy(acc)}")
    return 0


def cmd_experiment(args) -> int:
    from .harness.cache import FeatureCache
    from .harness.experiment import load_config, run_experiment
    from .harness.report import render_report

    if not args.config:
        raise UsageError("vessel-bench experiment: error: --config is required\n")
    out = _require_out(args)
    doc, base = load_config(args.config)
    result = run_experiment(doc, out, base, jobs=_jobs(args), cache=FeatureCache(), master_seed=args.seed)
    sys.stdout.write(render_report(result.report, args.format))
    return 0


def cmd_report(args) -> int:
    from .harness.report import parse_runs_csv, render_report

    report = parse_runs_csv(Path(args.runs).read_text())
    text = render_report(report, args.format)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / ("runs.csv" if args.format == "csv" else "report.md")).write_text(text)
        _write_provenance(out, "report", None, None, {"runs": str(args.runs)})
    sys.stdout.write(text)
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "preprocess": cmd_preprocess,
    "extract": cmd_extract,
    "train": cmd_train,
    "eval": cmd_eval,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        if not argv:
            raise UsageError(parser.format_usage())
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        if getattr(args, "jobs", None) is not None and args.jobs < 1:
            raise UsageError(f"vessel-bench {args.command}: error: --jobs must be at least 1\n")
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                            format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (InvalidArgumentError, NumericError, NotConvergedError, CacheInvalidError, OSError, ValueError,
            KeyError) as exc:
        sys.stderr.write(f"vessel-bench: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
