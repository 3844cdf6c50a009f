"""Dataset manifests and content-addressed embedding caching.

Manifests are tab-separated text with a header line and one record per
sample: sample_id, category, split (train|test), path, format. Paths are
resolved relative to the manifest file. All validation problems are
collected and reported together.

Cached feature matrices live at ``cache/<backend_id>/<grid_id>/<hash>.feat``
where the hash covers exactly the pipeline inputs: raw point-cloud bytes,
grid id, projection parameters, backend id. Downstream knobs (gamma,
metric, aggregation) are deliberately outside the key so ablation sweeps
reuse cached features. Writers stage to a temp file and rename, so readers
never observe a torn entry.
"""

from __future__ import annotations

import hashlib
import logging
import os
import struct
import tempfile
import threading
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .encoder import FeatureMatrix, encode_views
from .projection import ProjectionParams, render_all_views
from .viewgrid import ViewGrid

logger = logging.getLogger(__name__)

CACHE_ENV_VAR = "DMP3DAD_CACHE"
SPLITS = ("train", "test")

_MANIFEST_COLUMNS = ("sample_id", "category", "split", "path", "format")
_FEAT_MAGIC = b"DMPF"
_FEAT_VERSION = 1


class ManifestError(ValueError):
    """Raised with every manifest validation problem collected together."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("manifest validation failed:\n  " + "\n  ".join(self.problems))


@dataclass(frozen=True)
class ManifestEntry:
    sample_id: str
    category: str
    split: str
    path: str
    fmt: str


@dataclass(eq=False)
class Manifest:
    entries: list
    categories: tuple = field(init=False)

    def __post_init__(self):
        self.categories = tuple(sorted({e.category for e in self.entries}))

    def split_entries(self, split: str, category: str | None = None) -> list:
        return [e for e in self.entries
                if e.split == split and (category is None or e.category == category)]

    def counts(self) -> dict:
        out = {}
        for e in self.entries:
            per = out.setdefault(e.category, {"train": 0, "test": 0})
            per[e.split] += 1
        return out


def load_manifest(path) -> Manifest:
    """Parse and validate a manifest file."""
    base = os.path.dirname(os.path.abspath(path))
    problems = []
    entries = []
    seen = set()
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if [c.strip() for c in header] != list(_MANIFEST_COLUMNS):
            raise ManifestError(
                [f"bad header {header!r}, expected {list(_MANIFEST_COLUMNS)}"])
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != len(_MANIFEST_COLUMNS):
                problems.append(f"line {lineno}: expected {len(_MANIFEST_COLUMNS)} "
                                f"tab-separated fields, got {len(cols)}")
                continue
            sample_id, category, split, rel_path, fmt = (c.strip() for c in cols)
            if sample_id in seen:
                problems.append(f"line {lineno}: duplicate sample_id {sample_id!r}")
            seen.add(sample_id)
            if split not in SPLITS:
                problems.append(f"line {lineno}: unknown split tag {split!r}")
            if fmt not in geometry.FORMATS:
                problems.append(f"line {lineno}: unknown format {fmt!r}")
            resolved = rel_path if os.path.isabs(rel_path) else os.path.join(base, rel_path)
            if not os.path.isfile(resolved):
                problems.append(f"line {lineno}: unresolvable path {rel_path!r}")
            entries.append(ManifestEntry(sample_id, category, split, resolved, fmt))
    if not entries:
        problems.append("manifest lists no samples")
    if problems:
        raise ManifestError(problems)
    return Manifest(entries=entries)


def write_manifest(entries, path) -> None:
    """Write entries in the on-disk manifest layout (used by tooling/tests)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(_MANIFEST_COLUMNS) + "\n")
        for e in entries:
            fh.write(f"{e.sample_id}\t{e.category}\t{e.split}\t{e.path}\t{e.fmt}\n")


def compute_cache_key(cloud_bytes: bytes, grid_id: str, params: ProjectionParams,
                      backend_id: str) -> str:
    """Content hash over exactly the pipeline inputs of a feature matrix."""
    digest = hashlib.sha256()
    digest.update(cloud_bytes)
    for part in (grid_id, params.key_string(), backend_id):
        digest.update(b"\x00")
        digest.update(part.encode("utf-8"))
    return digest.hexdigest()


def _write_feat(path, fm: FeatureMatrix) -> None:
    rows = np.ascontiguousarray(fm.rows, dtype="<f4")
    backend = fm.backend_id.encode("utf-8")
    grid = fm.grid_id.encode("utf-8")
    header = (_FEAT_MAGIC + struct.pack("<III", _FEAT_VERSION, *rows.shape)
              + struct.pack("<I", len(backend)) + backend
              + struct.pack("<I", len(grid)) + grid)
    directory = os.path.dirname(path)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(header)
            fh.write(rows.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_feat(path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _FEAT_MAGIC:
        raise ValueError("bad magic")
    version, n_views, dim = struct.unpack_from("<III", data, 4)
    if version != _FEAT_VERSION:
        raise ValueError(f"unsupported version {version}")
    offset = 16
    (blen,) = struct.unpack_from("<I", data, offset)
    offset += 4
    backend_id = data[offset:offset + blen].decode("utf-8")
    offset += blen
    (glen,) = struct.unpack_from("<I", data, offset)
    offset += 4
    grid_id = data[offset:offset + glen].decode("utf-8")
    offset += glen
    payload = data[offset:]
    if len(payload) != n_views * dim * 4:
        raise ValueError("truncated payload")
    rows = np.frombuffer(payload, dtype="<f4").reshape(n_views, dim).copy()
    return FeatureMatrix(rows=rows, backend_id=backend_id, grid_id=grid_id)


def compute_embedding(entry: ManifestEntry, grid: ViewGrid, params: ProjectionParams,
                      backend) -> FeatureMatrix:
    """Load, normalize, render and encode one sample (no caching)."""
    cloud = geometry.normalize_to_unit_cube(
        geometry.load_point_cloud(entry.path, entry.fmt))
    fm = encode_views(render_all_views(cloud, grid, params), backend)
    fm.grid_id = grid.grid_id
    return fm


class EmbeddingStore:
    """Embedding cache with an in-memory layer and an optional disk root.

    Results are identical with caching on or off: feature rows are float32
    end to end, so a disk round trip is byte-exact. Concurrent readers are
    safe; concurrent writers of one key both succeed (atomic rename, last
    write wins with identical bytes).
    """

    def __init__(self, root=None):
        if root is None:
            root = os.environ.get(CACHE_ENV_VAR) or None
        self.root = str(root) if root else None
        self._memory = {}
        self._lock = threading.Lock()
        self.stats = {"memory_hits": 0, "disk_hits": 0, "computed": 0}

    def _disk_path(self, backend_id: str, grid_id: str, key: str) -> str:
        return os.path.join(self.root, backend_id, grid_id, f"{key}.feat")

    def get_or_compute(self, entry: ManifestEntry, grid: ViewGrid,
                       params: ProjectionParams, backend) -> FeatureMatrix:
        with open(entry.path, "rb") as fh:
            cloud_bytes = fh.read()
        key = compute_cache_key(cloud_bytes, grid.grid_id, params, backend.backend_id)

        with self._lock:
            if key in self._memory:
                self.stats["memory_hits"] += 1
                return self._memory[key]

        if self.root is not None:
            path = self._disk_path(backend.backend_id, grid.grid_id, key)
            if os.path.isfile(path):
                try:
                    fm = _read_feat(path)
                    with self._lock:
                        self.stats["disk_hits"] += 1
                        self._memory[key] = fm
                    return fm
                except (ValueError, OSError) as exc:
                    logger.warning("corrupt cache entry %s (%s); recomputing", path, exc)

        fm = compute_embedding(entry, grid, params, backend)
        with self._lock:
            self.stats["computed"] += 1
            self._memory[key] = fm
        if self.root is not None:
            path = self._disk_path(backend.backend_id, grid.grid_id, key)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            _write_feat(path, fm)
        return fm
