"""Config-driven benchmark and adaptation grids.

A config is a JSON document::

    {
      "version": 1,
      "master_seed": 42,
      "datasets": {
        "bench": {"generate": {"seed": 42, "per_class": 200, "size": 128}},
        "real": {"manifest": "data/manifest.csv"}
      },
      "benchmark": {"dataset": "bench", "methods": ["hog+src"], "splits": [0.8, 0.01], "shuffles": 5},
      "adaptation": [{"synth": "bench", "real": "real", "methods": ["hog+src"], "splits": [0.8, 0.05],
                      "shuffles": 5, "synth_weight": 1.0, "refit": true, "synth_only": true}],
      "save_models": true
    }

Generated datasets are stored in the feature cache directory keyed by a hash
of everything that determines their pixels, so repeated runs reuse them.
Relative manifest paths resolve against the config file's directory.
"""

from __future__ import annotations

import hashlib
import json
import multiprocessing
import os
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .. import __version__
from ..errors import InvalidArgumentError
from ..image_core import PanchroParams, load_histogram
from ..synthgen import RenderConstants, domain_shift_config, generate_dataset, load_constants
from .bundle import save_bundle
from .cache import FeatureCache
from .dataset import load_dataset
from .evaluation import (
    ADAPTATION_KINDS,
    ADAPTED,
    BASELINE,
    REAL_ONLY,
    SYNTH_ONLY,
    adaptation_shuffle,
    baseline_shuffle,
    check_label_sets,
    dataset_features,
    full_subset,
    pretrain,
    synth_only_predictions,
)
from .methods import MethodSpec
from .report import ExperimentReport, render_report
from .splits import SplitSpec, split_label

CONFIG_VERSION = 1
SHIPPED_CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
PROVENANCE_FILE = "provenance.json"


def canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def config_hash(doc) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


def resolve_config_path(path) -> Path:
    """``path`` itself, or the shipped config of that file name when ``path`` does not exist."""
    p = Path(path)
    if p.exists():
        return p
    shipped = SHIPPED_CONFIG_DIR / p.name
    if shipped.exists():
        return shipped
    raise FileNotFoundError(f"config file not found: {path}")


def load_config(path) -> tuple[dict, Path]:
    p = resolve_config_path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgumentError(f"{p}: invalid JSON ({exc})") from None
    validate_config(doc)
    return doc, p.parent


def _as_list(x):
    return x if isinstance(x, list) else [x]


def parse_method(entry) -> MethodSpec:
    if isinstance(entry, str):
        return MethodSpec.parse(entry)
    if isinstance(entry, dict):
        return MethodSpec(entry["feature"], entry["classifier"], entry.get("feature_params", {}),
                          entry.get("classifier_params", {}), entry.get("reduction"))
    raise InvalidArgumentError(f"method entry must be a string or object, got {entry!r}")


def validate_config(doc: dict) -> None:
    if not isinstance(doc, dict):
        raise InvalidArgumentError("config must be a JSON object")
    if doc.get("version", CONFIG_VERSION) != CONFIG_VERSION:
        raise InvalidArgumentError(f"unsupported config version {doc.get('version')}")
    datasets = doc.get("datasets", {})
    for name, ds in datasets.items():
        if not isinstance(ds, dict) or len({"generate", "manifest"} & set(ds)) != 1:
            raise InvalidArgumentError(f"dataset {name!r} needs exactly one of 'generate' or 'manifest'")
    sections = []
    if "benchmark" in doc:
        sections.append(("benchmark", doc["benchmark"], ("dataset",)))
    for i, ad in enumerate(_as_list(doc.get("adaptation", []))):
        sections.append((f"adaptation[{i}]", ad, ("synth", "real")))
    if not sections:
        raise InvalidArgumentError("config defines neither 'benchmark' nor 'adaptation'")
    for where, sec, refs in sections:
        for key in refs:
            if sec.get(key) not in datasets:
                raise InvalidArgumentError(f"{where}.{key} names unknown dataset {sec.get(key)!r}")
        for m in sec.get("methods", []):
            parse_method(m)
        for f in sec.get("splits", []):
            SplitSpec(float(f), custom=bool(sec.get("custom_splits", False)))
        if int(sec.get("shuffles", 5)) < 1:
            raise InvalidArgumentError(f"{where}.shuffles must be at least 1")
    names = []
    for ad in _as_list(doc.get("adaptation", [])):
        label = ad.get("label", "")
        names += [f"{parse_method(m).name} [{label}]" if label else parse_method(m).name for m in ad["methods"]]
    if len(names) != len(set(names)):
        raise InvalidArgumentError("adaptation sections repeat a method; give each section a distinct 'label'")


# --- datasets -------------------------------------------------------------

def _constants_for(gen: dict, base_dir: Path) -> RenderConstants:
    constants = load_constants(base_dir / gen["constants"]) if gen.get("constants") else RenderConstants()
    if gen.get("domain_shift"):
        constants = domain_shift_config(constants, gen["domain_shift"])
    if gen.get("panchro"):
        constants = replace(constants, panchro=PanchroParams.from_dict(gen["panchro"]))
    return constants


def generation_key(gen: dict, constants: RenderConstants, histogram_text: str | None) -> str:
    doc = {"tool": __version__, "seed": int(gen["seed"]), "per_class": int(gen["per_class"]),
           "size": int(gen.get("size", 128)), "domain": gen.get("domain", "synthetic"),
           "constants": constants.to_dict(), "target_histogram": histogram_text}
    return config_hash(doc)[:20]


def materialize_dataset(name: str, entry: dict, base_dir: Path, cache_root: Path, jobs: int = 1) -> Path:
    """Manifest path for a config dataset entry, generating it into the cache if needed."""
    if "manifest" in entry:
        path = base_dir / entry["manifest"]
        if not path.exists():
            raise FileNotFoundError(f"dataset {name!r}: manifest {path} not found")
        return path
    gen = entry["generate"]
    constants = _constants_for(gen, base_dir)
    hist_text, hist = None, None
    if gen.get("target_histogram"):
        hpath = base_dir / gen["target_histogram"]
        hist_text = hpath.read_text()
        hist = load_histogram(hpath)
    key = generation_key(gen, constants, hist_text)
    target = cache_root / "datasets" / key
    manifest = target / "manifest.csv"
    if manifest.exists():
        return manifest
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=target.parent, prefix=f".{key}-"))
    try:
        generate_dataset(int(gen["seed"]), int(gen["per_class"]), int(gen.get("size", 128)), out_dir=tmp,
                         constants=constants, domain=gen.get("domain", "synthetic"), target_histogram=hist,
                         jobs=jobs)
        try:
            os.replace(tmp, target)
        except OSError:
            # another process finished first; its output is identical
            if not manifest.exists():
                raise
    finally:
        if tmp.exists():
            shutil.rmtree(tmp, ignore_errors=True)
    return manifest


# --- grid ------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    """One grid cell: section index, method index, split index, shuffle index."""

    section: int
    method: int
    split: int
    shuffle: int

    @property
    def key(self):
        return (self.section, self.method, self.split, self.shuffle)


@dataclass
class Section:
    kind: str  # "benchmark" or "adaptation"
    methods: list
    splits: list
    shuffles: int
    dataset: str = ""
    synth: str = ""
    real: str = ""
    synth_weight: float = 1.0
    refit: bool = True
    synth_only: bool = False
    custom_splits: bool = False
    validation_holdout: float = 0.2
    label: str = ""
    pretrained: dict = field(default_factory=dict)  # method index -> Pretrained
    synth_predictions: dict = field(default_factory=dict)

    def spec(self, split_index: int, master_seed: int) -> SplitSpec:
        return SplitSpec(float(self.splits[split_index]), self.validation_holdout, master_seed,
                         custom=self.custom_splits)

    def kinds(self):
        if self.kind == "benchmark":
            return (BASELINE,)
        return ADAPTATION_KINDS if self.synth_only else (REAL_ONLY, ADAPTED)

    def record_name(self, method: MethodSpec) -> str:
        return f"{method.name} [{self.label}]" if self.label else method.name


def build_sections(doc: dict) -> list:
    sections = []
    if "benchmark" in doc:
        b = doc["benchmark"]
        sections.append(Section("benchmark", [parse_method(m) for m in b["methods"]],
                                [float(f) for f in b["splits"]], int(b.get("shuffles", 5)),
                                dataset=b["dataset"], custom_splits=bool(b.get("custom_splits", False)),
                                validation_holdout=float(b.get("validation_holdout", 0.2))))
    for a in _as_list(doc.get("adaptation", [])):
        sections.append(Section("adaptation", [parse_method(m) for m in a["methods"]],
                                [float(f) for f in a["splits"]], int(a.get("shuffles", 5)),
                                synth=a["synth"], real=a["real"], synth_weight=float(a.get("synth_weight", 1.0)),
                                refit=bool(a.get("refit", True)), synth_only=bool(a.get("synth_only", False)),
                                custom_splits=bool(a.get("custom_splits", False)),
                                validation_holdout=float(a.get("validation_holdout", 0.2)),
                                label=str(a.get("label", ""))))
    return sections


def grid(sections) -> list:
    return [Task(si, mi, fi, k)
            for si, sec in enumerate(sections)
            for mi in range(len(sec.methods))
            for fi in range(len(sec.splits))
            for k in range(sec.shuffles)]


@dataclass
class _Context:
    sections: list
    datasets: dict
    features: dict  # (dataset name, method feature key) -> matrix or None
    master_seed: int
    models_dir: Path | None


_CTX: _Context | None = None


def _feature_key(name: str, method: MethodSpec):
    return (name, method.feature, canonical_json(method.feature_params))


def _model_name(kind: str, method: MethodSpec, split: float) -> str:
    return f"{kind}_{method.feature}-{method.classifier}_{split_label(split).replace('/', '-')}.npz"


def _run_task(task: Task) -> tuple:
    ctx = _CTX
    sec = ctx.sections[task.section]
    method = sec.methods[task.method]
    spec = sec.spec(task.split, ctx.master_seed)
    if sec.kind == "benchmark":
        ds = ctx.datasets[sec.dataset]
        rec, res = baseline_shuffle(method, ds, spec, task.shuffle, ctx.features[_feature_key(sec.dataset, method)])
        pairs = [(rec, res)]
    else:
        synth, real = ctx.datasets[sec.synth], ctx.datasets[sec.real]
        pairs = adaptation_shuffle(method, synth, real, spec, task.shuffle,
                                   ctx.features[_feature_key(sec.synth, method)],
                                   ctx.features[_feature_key(sec.real, method)],
                                   sec.synth_weight, sec.refit, sec.kinds(), sec.pretrained[task.method],
                                   sec.synth_predictions.get(task.method), sec.record_name(method))
    if ctx.models_dir is not None and task.shuffle == 0:
        for rec, res in pairs:
            if rec.kind == SYNTH_ONLY or res.model is None:
                continue
            prefix = "" if sec.kind == "benchmark" else f"adaptation{task.section}_"
            save_bundle(ctx.models_dir / (prefix + _model_name(rec.kind, method, sec.splits[task.split])),
                        res.pipeline, res.model)
    return task.key, [rec for rec, _ in pairs]


def _fork_available() -> bool:
    return "fork" in multiprocessing.get_all_start_methods()


def _pool(jobs: int):
    if _fork_available():
        return ProcessPoolExecutor(max_workers=jobs, mp_context=multiprocessing.get_context("fork"))
    return None


@dataclass
class ExperimentResult:
    report: ExperimentReport
    out_dir: Path
    config_hash: str
    master_seed: int
    extractions: int = 0


def provenance(command: str, doc: dict | None, master_seed: int | None, extra: dict | None = None) -> dict:
    out = {"tool": "vessel_bench", "version": __version__, "command": command,
           "config_hash": None if doc is None else config_hash(doc), "master_seed": master_seed}
    if doc is not None:
        out["config"] = doc
    out.update(extra or {})
    return out


def write_provenance(out_dir: Path, prov: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / PROVENANCE_FILE
    path.write_text(json.dumps(prov, indent=2, sort_keys=True) + "\n")
    return path


def run_experiment(doc: dict, out_dir, base_dir=".", jobs: int = 1, cache: FeatureCache | None = None,
                   master_seed: int | None = None) -> ExperimentResult:
    """Run every grid cell of ``doc`` and write runs.csv, report.md, models and provenance to ``out_dir``.

    Results are merged in grid order, so the outputs do not depend on ``jobs``.
    """
    global _CTX
    validate_config(doc)
    doc = dict(doc)
    if master_seed is not None:
        doc["master_seed"] = int(master_seed)
    seed = int(doc.get("master_seed", 0))
    out_dir, base_dir = Path(out_dir), Path(base_dir)
    cache = cache or FeatureCache()
    jobs = max(1, int(jobs))
    sections = build_sections(doc)
    write_provenance(out_dir, provenance("experiment", doc, seed, {"jobs_independent": True}))

    needed = []
    for sec in sections:
        needed += [sec.dataset] if sec.kind == "benchmark" else [sec.synth, sec.real]
    datasets = {}
    for name in dict.fromkeys(needed):
        manifest = materialize_dataset(name, doc["datasets"][name], base_dir, cache.root, jobs)
        datasets[name] = load_dataset(manifest)
    for sec in sections:
        if sec.kind == "adaptation":
            check_label_sets(datasets[sec.synth], datasets[sec.real])

    pool = _pool(jobs) if jobs > 1 else None
    try:
        mapper = (lambda f, xs: pool.map(f, xs, chunksize=16)) if pool is not None else map
        features = {}
        for sec in sections:
            names = [sec.dataset] if sec.kind == "benchmark" else [sec.synth, sec.real]
            for m in sec.methods:
                for name in names:
                    key = _feature_key(name, m)
                    if key not in features:
                        features[key] = dataset_features(datasets[name], m, cache, mapper)
        for sec in sections:
            if sec.kind != "adaptation":
                continue
            for mi, m in enumerate(sec.methods):
                synth, real = datasets[sec.synth], datasets[sec.real]
                sec.pretrained[mi] = pretrain(m, full_subset(synth, features[_feature_key(sec.synth, m)]),
                                              real.class_count)
                if sec.synth_only:
                    sec.synth_predictions[mi] = synth_only_predictions(
                        sec.pretrained[mi], real, features[_feature_key(sec.real, m)])
    finally:
        if pool is not None:
            pool.shutdown()

    models_dir = None
    if doc.get("save_models", True):
        models_dir = out_dir / "models"
        models_dir.mkdir(parents=True, exist_ok=True)
    _CTX = _Context(sections, datasets, features, seed, models_dir)
    tasks = grid(sections)
    try:
        pool = _pool(jobs) if jobs > 1 else None
        if pool is not None:
            with pool:
                results = dict(pool.map(_run_task, tasks))
        else:
            results = dict(map(_run_task, tasks))
    finally:
        _CTX = None

    report = ExperimentReport()
    for t in tasks:
        report.add(results[t.key])
    (out_dir / "runs.csv").write_text(render_report(report, "csv"))
    (out_dir / "report.md").write_text(render_report(report, "md"))
    return ExperimentResult(report, out_dir, config_hash(doc), seed, cache.extractions)
