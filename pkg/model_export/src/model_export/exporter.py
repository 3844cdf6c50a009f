"""Export CLIP vision towers to self-describing TorchScript files.

The output is a traced module with one image input and one embedding
output, carrying its preprocessing constants in an embedded
``backend.json`` (keys: input_size, mean, std, backbone_name). The text
tower is never part of the traced graph. Every export is verified by
construction: 16 random images are pushed through the source model and
the reloaded file, and the file is only moved into place when each pair
of outputs agrees to cosine similarity above the threshold.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass

import torch

METADATA_FILE = "backend.json"

# preprocessing constants shared by every released CLIP variant
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


class WeightsUnavailableError(RuntimeError):
    """Pretrained weights could not be loaded in this environment."""


class VerificationError(RuntimeError):
    """Side-by-side check failed; nothing was written."""


@dataclass(frozen=True)
class BackboneInfo:
    source: str  # hub id (vit) or open_clip architecture name (resnet)
    family: str  # "vit" | "resnet"
    input_size: int
    output_dim: int


BACKBONES = {
    "ViT-B/16": BackboneInfo("openai/clip-vit-base-patch16", "vit", 224, 512),
    "ViT-B/32": BackboneInfo("openai/clip-vit-base-patch32", "vit", 224, 512),
    "RN50": BackboneInfo("RN50", "resnet", 224, 1024),
    "RN101": BackboneInfo("RN101", "resnet", 224, 512),
    "RN50x4": BackboneInfo("RN50x4", "resnet", 288, 640),
    "RN50x16": BackboneInfo("RN50x16", "resnet", 384, 768),
}


@dataclass(frozen=True)
class ExportSpec:
    backbone_name: str
    out_path: str
    version_tag: str = "ts1"

    def __post_init__(self):
        if self.backbone_name not in BACKBONES:
            raise ValueError(
                f"unsupported backbone {self.backbone_name!r}; supported: "
                + ", ".join(BACKBONES))


@dataclass(frozen=True)
class ExportResult:
    path: str
    output_dim: int
    content_hash: str  # sha256[:16] of the file, the consumer's backend_id
    worst_similarity: float


class _ImageEmbedder(torch.nn.Module):
    """Pixel tensor in, projected image embedding out; nothing else."""

    def __init__(self, vision_model):
        super().__init__()
        self.vision_model = vision_model

    def forward(self, pixel_values):
        return self.vision_model(pixel_values=pixel_values).image_embeds


def wrap_transformers_clip(vision_model) -> torch.nn.Module:
    """Wrap a transformers CLIP vision-with-projection model for export."""
    return _ImageEmbedder(vision_model.eval())


def acquire_model(backbone_name: str):
    """Load pretrained weights; returns (embedding module, input size)."""
    info = BACKBONES[ExportSpec(backbone_name, out_path="").backbone_name]
    if info.family == "vit":
        from transformers import CLIPVisionModelWithProjection
        try:
            model = CLIPVisionModelWithProjection.from_pretrained(info.source)
        except Exception as exc:
            raise WeightsUnavailableError(
                f"cannot load weights for {backbone_name} from {info.source!r}: "
                f"{exc}") from None
        return wrap_transformers_clip(model), int(model.config.image_size)

    # the ResNet CLIP towers were never ported to transformers
    try:
        import open_clip
    except ImportError:
        raise WeightsUnavailableError(
            f"{backbone_name} needs the open-clip-torch package") from None
    try:
        model = open_clip.create_model(info.source, pretrained="openai")
    except Exception as exc:
        raise WeightsUnavailableError(
            f"cannot load weights for {backbone_name}: {exc}") from None
    return model.visual.eval(), info.input_size


def _content_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]


def export_model(module: torch.nn.Module, input_size: int, spec: ExportSpec,
                 *, verify_images: int = 16, threshold: float = 0.999,
                 seed: int = 0) -> ExportResult:
    """Trace, verify against the source module, then write atomically."""
    module = module.eval()
    example = torch.zeros(1, 3, input_size, input_size)
    with torch.no_grad():
        traced = torch.jit.trace(module, example, strict=False)
        probe = traced(example)
    if probe.ndim != 2 or probe.shape[0] != 1:
        raise VerificationError(
            f"traced module emits shape {tuple(probe.shape)}, expected (1, C)")
    output_dim = int(probe.shape[1])

    metadata = json.dumps({
        "input_size": int(input_size),
        "mean": list(CLIP_MEAN),
        "std": list(CLIP_STD),
        "backbone_name": spec.backbone_name,
        "export_version": spec.version_tag,
    })

    out_path = str(spec.out_path)
    directory = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(directory, exist_ok=True)
    tmp_path = out_path + ".verifying"
    torch.jit.save(traced, tmp_path, _extra_files={METADATA_FILE: metadata})
    try:
        worst = _verify(module, tmp_path, input_size, verify_images, seed)
        if not worst > threshold:
            raise VerificationError(
                f"per-image cosine similarity dropped to {worst:.6f} "
                f"(threshold {threshold}); refusing to write {out_path}")
        os.replace(tmp_path, out_path)
    finally:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
    return ExportResult(path=out_path, output_dim=output_dim,
                        content_hash=_content_hash(out_path),
                        worst_similarity=worst)


def _verify(module, tmp_path, input_size: int, n_images: int, seed: int) -> float:
    """Worst per-image cosine similarity, original vs reloaded file."""
    reloaded = torch.jit.load(tmp_path, map_location="cpu")
    gen = torch.Generator().manual_seed(seed)
    worst = 1.0
    with torch.no_grad():
        for _ in range(n_images):
            image = torch.randn(1, 3, input_size, input_size, generator=gen)
            a = module(image)[0].double()
            b = reloaded(image)[0].double()
            sim = torch.nn.functional.cosine_similarity(a, b, dim=0)
            worst = min(worst, float(sim))
    return worst


def export_backbone(spec: ExportSpec, **verify_kwargs) -> ExportResult:
    """Fetch pretrained weights for the requested backbone and export them."""
    module, input_size = acquire_model(spec.backbone_name)
    return export_model(module, input_size, spec, **verify_kwargs)
