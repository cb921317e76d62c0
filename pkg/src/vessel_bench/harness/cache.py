"""On-disk cache of per-chip feature vectors.

One ``.npz`` file per (extractor, parameter set). Entries are keyed by a hash
of the chip's pixels; the file header records the parameter hash it was built
for. A header mismatch or an unreadable file invalidates the whole file and
the features are recomputed. Writes go through a temporary file and an
atomic rename, so concurrent readers never see a partial file.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from ..errors import CacheInvalidError

CACHE_VERSION = 1
ENV_VAR = "VESSEL_BENCH_CACHE"


def default_cache_dir() -> Path:
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    return Path.home() / ".cache" / "vessel_bench"


def chip_hash(chip) -> str:
    data = np.ascontiguousarray(chip.data)
    h = hashlib.sha256()
    h.update(str(data.shape).encode())
    h.update(data.tobytes())
    return h.hexdigest()


def params_hash(feature: str, params: dict) -> str:
    doc = json.dumps({"feature": feature, "params": params, "v": CACHE_VERSION}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()


class FeatureCache:
    def __init__(self, root=None):
        self.root = Path(root) if root is not None else default_cache_dir()
        self.extractions = 0
        self.hits = 0

    def path_for(self, feature: str, params: dict) -> Path:
        return self.root / f"{feature}-{params_hash(feature, params)[:16]}.npz"

    def _read(self, path: Path, phash: str) -> dict:
        if not path.exists():
            return {}
        try:
            with np.load(path) as f:
                if str(f["__params__"]) != phash:
                    raise CacheInvalidError(f"{path}: built for different parameters")
                return {k: f[k] for k in f.files if k != "__params__"}
        except (CacheInvalidError, OSError, ValueError, KeyError):
            return {}

    def _write(self, path: Path, phash: str, entries: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=self.root, suffix=".tmp")
        os.close(fd)
        try:
            with open(tmp, "wb") as fh:
                np.savez(fh, __params__=np.array(phash), **{k: entries[k] for k in sorted(entries)})
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def features(self, chips, feature: str, params: dict, extract, mapper=map) -> np.ndarray:
        """Feature matrix for ``chips``, computing only the entries missing from the cache.

        ``extract`` maps one chip to a vector; ``mapper`` lets callers run it in a pool.
        """
        path = self.path_for(feature, params)
        phash = params_hash(feature, params)
        entries = self._read(path, phash)
        keys = [chip_hash(c) for c in chips]
        missing = [i for i, k in enumerate(keys) if k not in entries]
        if missing:
            computed = list(mapper(extract, [chips[i] for i in missing]))
            for i, vec in zip(missing, computed):
                entries[keys[i]] = np.asarray(vec, dtype=np.float64)
            self.extractions += len(missing)
            self._write(path, phash, entries)
        self.hits += len(chips) - len(missing)
        return np.stack([entries[k] for k in keys])


def feature_cache(dataset, method, cache: FeatureCache | None = None) -> Path:
    """Populate the cache for a dataset's per-chip features and return the cache file."""
    from .methods import chip_extractor

    cache = cache or FeatureCache()
    extract, params = chip_extractor(method)
    if extract is None:
        raise CacheInvalidError(f"{method.feature} features are fitted per split and are not cached")
    cache.features(dataset.chips, method.feature, params, extract)
    return cache.path_for(method.feature, params)
