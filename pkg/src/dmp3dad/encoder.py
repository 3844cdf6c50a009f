"""Frozen image-to-vector encoder backends and view embedding.

A backend turns one depth image into a raw feature vector; `encode_views`
l2-normalizes each vector and stacks them into a per-object feature matrix
(one unit-norm row per view). Backends are frozen: encoding the same image
twice yields identical output. There is deliberately no text tower here;
the interface is image-to-vector only.

Two backends exist: a deterministic mock (mean-pool + fixed random
projection) that makes the whole pipeline testable without any model file,
and a model backend loaded from an interchange file. Interchange files are
TorchScript archives carrying their preprocessing constants in an embedded
``backend.json`` (keys: input_size, mean, std, backbone_name); ``.onnx``
files with the same metadata keys are accepted when onnxruntime is
installed.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass

import numpy as np

from .projection import DepthImage

METADATA_FILE = "backend.json"
METADATA_KEYS = ("input_size", "mean", "std", "backbone_name")

_MOCK_POOL = 16  # mock backends mean-pool to 16x16 before projecting


@dataclass(eq=False)
class FeatureMatrix:
    """V unit-norm view embeddings of one object, row v from view v."""

    rows: np.ndarray  # (V, C) float32
    backend_id: str = ""
    grid_id: str = ""

    @property
    def V(self) -> int:
        return self.rows.shape[0]

    @property
    def C(self) -> int:
        return self.rows.shape[1]


def resize_bilinear(image: np.ndarray, size: int) -> np.ndarray:
    """Bilinear resample to (size, size), half-pixel centers, edge clamp."""
    h, w = image.shape
    if (h, w) == (size, size):
        return image.copy()

    def axis_coords(n_src, n_dst):
        x = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        x0 = np.floor(x).astype(np.int64)
        frac = x - x0
        lo = np.clip(x0, 0, n_src - 1)
        hi = np.clip(x0 + 1, 0, n_src - 1)
        return lo, hi, frac

    ry0, ry1, fy = axis_coords(h, size)
    rx0, rx1, fx = axis_coords(w, size)
    top = image[ry0][:, rx0] * (1 - fx) + image[ry0][:, rx1] * fx
    bot = image[ry1][:, rx0] * (1 - fx) + image[ry1][:, rx1] * fx
    return top * (1 - fy[:, None]) + bot * fy[:, None]


def preprocess(image: DepthImage, backend) -> np.ndarray:
    """Backend-ready (3, S, S) float32 tensor for a depth image.

    Bilinear resize to the backend's declared input size, single channel
    replicated to three, then per-channel (x - mean) / std.
    """
    size = getattr(backend, "input_size", None)
    if not size:
        raise ValueError(f"backend {backend!r} declares no input size")
    plane = resize_bilinear(image.intensities.astype(np.float64), int(size))
    mean = np.asarray(backend.mean, dtype=np.float64).reshape(3, 1, 1)
    std = np.asarray(backend.std, dtype=np.float64).reshape(3, 1, 1)
    stacked = np.broadcast_to(plane, (3, size, size))
    return ((stacked - mean) / std).astype(np.float32)


def encode_views(images, backend) -> FeatureMatrix:
    """Encode each image independently and l2-normalize every row."""
    if not images:
        raise ValueError("encode_views needs at least one image")
    rows = []
    for img in images:
        raw = np.asarray(backend.encode_image(img), dtype=np.float64).reshape(-1)
        norm = np.linalg.norm(raw)
        if norm == 0.0:
            raise ValueError("backend emitted a zero feature vector")
        rows.append(raw / norm)
    return FeatureMatrix(rows=np.asarray(rows, dtype=np.float32),
                         backend_id=backend.backend_id)


def mean_pool(image: np.ndarray, bins: int) -> np.ndarray:
    """Mean-pool an (H, W) image onto a (bins, bins) grid."""
    h, w = image.shape
    ys = (np.arange(bins + 1) * h) // bins
    xs = (np.arange(bins + 1) * w) // bins
    out = np.empty((bins, bins), dtype=np.float64)
    for i in range(bins):
        for j in range(bins):
            out[i, j] = image[ys[i]:ys[i + 1], xs[j]:xs[j + 1]].mean()
    return out


class MockBackend:
    """Deterministic encoder-free stand-in: 16x16 mean-pool, flatten, fixed
    seed-derived random projection. Linear up to normalization, so small
    image perturbations give small feature changes. Concurrency-safe."""

    def __init__(self, seed: int, embed_dim: int):
        if embed_dim < 8:
            raise ValueError("mock backend embedding dimension must be >= 8")
        self.seed = int(seed)
        self.embed_dim = int(embed_dim)
        self.backend_id = f"mock-s{self.seed}-c{self.embed_dim}"
        self.input_size = 224
        self.mean = (0.5, 0.5, 0.5)
        self.std = (0.5, 0.5, 0.5)
        rng = np.random.default_rng(self.seed)
        self._projection = rng.standard_normal((_MOCK_POOL * _MOCK_POOL, self.embed_dim))

    def encode_image(self, image: DepthImage) -> np.ndarray:
        pooled = mean_pool(image.intensities.astype(np.float64), _MOCK_POOL)
        return pooled.reshape(-1) @ self._projection

    def __getstate__(self):
        return {"seed": self.seed, "embed_dim": self.embed_dim}

    def __setstate__(self, state):
        self.__init__(state["seed"], state["embed_dim"])


def make_mock_backend(seed: int = 0, embed_dim: int = 64) -> MockBackend:
    return MockBackend(seed, embed_dim)


def _content_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]


def _parse_metadata(raw: str, path) -> dict:
    try:
        meta = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"invalid model file {path}: bad metadata block: {exc}") from None
    missing = [k for k in METADATA_KEYS if k not in meta]
    if missing:
        raise ValueError(f"invalid model file {path}: metadata missing keys {missing}")
    return meta


class TorchScriptBackend:
    """Frozen backend over a TorchScript module with one image input and
    one vector output. Forward passes are serialized with a lock; the
    pipeline may share one instance across workers."""

    def __init__(self, path):
        try:
            import torch
        except ImportError:
            raise RuntimeError(
                "loading a model backend requires torch (pip install dmp3dad[model])"
            ) from None
        self._torch = torch
        extra = {METADATA_FILE: ""}
        try:
            module = torch.jit.load(str(path), map_location="cpu", _extra_files=extra)
        except Exception as exc:
            raise ValueError(f"invalid model file {path}: {exc}") from None
        meta = _parse_metadata(extra[METADATA_FILE].decode("utf-8")
                               if isinstance(extra[METADATA_FILE], bytes)
                               else extra[METADATA_FILE], path)
        module.eval()
        self._module = module
        self._lock = threading.Lock()
        self.backend_id = _content_hash(path)
        self.input_size = int(meta["input_size"])
        self.mean = tuple(float(v) for v in meta["mean"])
        self.std = tuple(float(v) for v in meta["std"])
        self.backbone_name = str(meta["backbone_name"])
        self.embed_dim = self._probe_output_dim(path)

    def _probe_output_dim(self, path) -> int:
        torch = self._torch
        dummy = torch.zeros(1, 3, self.input_size, self.input_size)
        with torch.inference_mode():
            out = self._module(dummy)
        if out.ndim != 2 or out.shape[0] != 1:
            raise ValueError(f"invalid model file {path}: expected (1, C) output, "
                             f"got shape {tuple(out.shape)}")
        return int(out.shape[1])

    def encode_image(self, image: DepthImage) -> np.ndarray:
        torch = self._torch
        tensor = torch.from_numpy(preprocess(image, self)[None])
        with self._lock, torch.inference_mode():
            out = self._module(tensor)
        return out[0].numpy().astype(np.float64)


class OnnxBackend:
    """Same contract as TorchScriptBackend, over an onnxruntime session."""

    def __init__(self, path):
        try:
            import onnxruntime as ort
        except ImportError:
            raise RuntimeError(
                f"{path} is an ONNX model but onnxruntime is not installed "
                "(pip install dmp3dad[onnx])") from None
        try:
            session = ort.InferenceSession(str(path), providers=["CPUExecutionProvider"])
        except Exception as exc:
            raise ValueError(f"invalid model file {path}: {exc}") from None
        meta_map = session.get_modelmeta().custom_metadata_map
        meta = _parse_metadata(json.dumps({k: json.loads(v) if k != "backbone_name" else v
                                           for k, v in meta_map.items()
                                           if k in METADATA_KEYS}), path)
        outs = session.get_outputs()
        if len(session.get_inputs()) != 1 or len(outs) != 1 or len(outs[0].shape) != 2:
            raise ValueError(f"invalid model file {path}: expected one image input "
                             "and one (N, C) output")
        self._session = session
        self._input_name = session.get_inputs()[0].name
        self._lock = threading.Lock()
        self.backend_id = _content_hash(path)
        self.input_size = int(meta["input_size"])
        self.mean = tuple(float(v) for v in meta["mean"])
        self.std = tuple(float(v) for v in meta["std"])
        self.backbone_name = str(meta["backbone_name"])
        self.embed_dim = int(outs[0].shape[1])

    def encode_image(self, image: DepthImage) -> np.ndarray:
        tensor = preprocess(image, self)[None]
        with self._lock:
            (out,) = self._session.run(None, {self._input_name: tensor})
        return np.asarray(out[0], dtype=np.float64)


_ONNX_MAGIC_SUFFIX = ".onnx"


def load_model_backend(model_path):
    """Load a frozen interchange-format backend from disk.

    backend_id is the file content hash; the embedding dimension is read
    from the model's output shape.
    """
    import os

    if not os.path.isfile(model_path):
        raise FileNotFoundError(f"model file not found: {model_path}")
    if str(model_path).endswith(_ONNX_MAGIC_SUFFIX):
        return OnnxBackend(model_path)
    return TorchScriptBackend(model_path)
