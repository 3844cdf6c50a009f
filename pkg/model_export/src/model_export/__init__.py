"""One-shot conversion of pretrained CLIP vision towers into the
TorchScript interchange files consumed by the detection pipeline."""

from .exporter import (BACKBONES, CLIP_MEAN, CLIP_STD, ExportResult,
                       ExportSpec, VerificationError, WeightsUnavailableError,
                       acquire_model, export_backbone, export_model,
                       wrap_transformers_clip)

__version__ = "0.1.0"

__all__ = [
    "BACKBONES", "CLIP_MEAN", "CLIP_STD", "ExportResult", "ExportSpec",
    "VerificationError", "WeightsUnavailableError", "acquire_model",
    "export_backbone", "export_model", "wrap_transformers_clip",
]
