import hashlib
import importlib.util
import json

import numpy as np
import pytest
import torch

import dmp3dad as dm
from model_export import (BACKBONES, ExportSpec, VerificationError,
                          WeightsUnavailableError, acquire_model,
                          export_backbone, export_model)


def test_backbone_table_covers_the_supported_set():
    assert set(BACKBONES) == {"ViT-B/16", "ViT-B/32", "RN50", "RN101",
                              "RN50x4", "RN50x16"}
    vit32 = BACKBONES["ViT-B/32"]
    assert vit32.output_dim == 512 and vit32.input_size == 224
    for name, info in BACKBONES.items():
        assert info.family in ("vit", "resnet")
        assert info.input_size >= 224 and info.output_dim >= 512


def test_unsupported_backbone_lists_the_options():
    with pytest.raises(ValueError) as err:
        ExportSpec(backbone_name="ViT-L/14", out_path="x.pt")
    message = str(err.value)
    for name in BACKBONES:
        assert name in message


def test_export_writes_verified_file(tiny_clip, tmp_path):
    module, input_size = tiny_clip
    out = tmp_path / "tiny.pt"
    spec = ExportSpec(backbone_name="ViT-B/32", out_path=str(out))
    result = export_model(module, input_size, spec)

    assert out.is_file()
    assert result.path == str(out)
    assert result.output_dim == 24
    assert result.worst_similarity > 0.999
    digest = hashlib.sha256(out.read_bytes()).hexdigest()[:16]
    assert result.content_hash == digest
    assert not list(tmp_path.glob("*.verifying"))  # staging file cleaned up


def test_exported_file_loads_in_the_pipeline(tiny_clip, tmp_path):
    module, input_size = tiny_clip
    out = tmp_path / "tiny.pt"
    spec = ExportSpec(backbone_name="ViT-B/32", out_path=str(out))
    result = export_model(module, input_size, spec)

    backend = dm.load_model_backend(out)
    assert backend.backend_id == result.content_hash
    assert backend.embed_dim == result.output_dim == 24
    assert backend.input_size == input_size
    assert backend.backbone_name == "ViT-B/32"
    assert backend.mean == pytest.approx((0.48145466, 0.4578275, 0.40821073))

    rng = np.random.default_rng(5)
    image = dm.DepthImage(
        intensities=rng.uniform(0, 1, (64, 64)).astype(np.float32))
    a = backend.encode_image(image)
    b = backend.encode_image(image)
    assert a.shape == (24,)
    assert np.isfinite(a).all()
    assert np.array_equal(a, b)


def test_exported_graph_matches_source_outputs(tiny_clip, tmp_path):
    module, input_size = tiny_clip
    out = tmp_path / "tiny.pt"
    export_model(module, input_size,
                 ExportSpec(backbone_name="ViT-B/16", out_path=str(out)))
    reloaded = torch.jit.load(str(out))
    gen = torch.Generator().manual_seed(99)
    with torch.no_grad():
        for _ in range(4):
            x = torch.randn(1, 3, input_size, input_size, generator=gen)
            want = module(x)[0]
            got = reloaded(x)[0]
            assert torch.allclose(want, got, atol=1e-6)


def test_metadata_block_contents(tiny_clip, tmp_path):
    module, input_size = tiny_clip
    out = tmp_path / "tiny.pt"
    export_model(module, input_size,
                 ExportSpec(backbone_name="ViT-B/32", out_path=str(out),
                            version_tag="v9"))
    extra = {"backend.json": ""}
    torch.jit.load(str(out), _extra_files=extra)
    raw = extra["backend.json"]
    meta = json.loads(raw.decode("utf-8") if isinstance(raw, bytes) else raw)
    assert meta["input_size"] == input_size
    assert meta["backbone_name"] == "ViT-B/32"
    assert meta["export_version"] == "v9"
    assert len(meta["mean"]) == len(meta["std"]) == 3


def test_failed_verification_writes_nothing(tiny_clip, tmp_path):
    module, input_size = tiny_clip
    out = tmp_path / "never.pt"
    spec = ExportSpec(backbone_name="ViT-B/32", out_path=str(out))
    # cosine similarity cannot exceed 1, so this threshold must refuse
    with pytest.raises(VerificationError, match="refusing to write"):
        export_model(module, input_size, spec, threshold=1.5)
    assert list(tmp_path.iterdir()) == []


def test_resnet_backbones_need_open_clip():
    if importlib.util.find_spec("open_clip") is not None:
        pytest.skip("open_clip installed; acquisition would be attempted")
    with pytest.raises(WeightsUnavailableError, match="open-clip-torch"):
        acquire_model("RN50")


def test_real_vit_export_when_weights_available(tmp_path):
    try:
        module, input_size = acquire_model("ViT-B/32")
    except WeightsUnavailableError as exc:
        pytest.skip(f"pretrained weights unavailable: {exc}")
    spec = ExportSpec(backbone_name="ViT-B/32",
                      out_path=str(tmp_path / "vit_b32.pt"))
    result = export_model(module, input_size, spec)
    assert result.output_dim == 512
    assert input_size == 224
    backend = dm.load_model_backend(result.path)
    assert backend.embed_dim == 512


def test_export_backbone_end_to_end_or_skip(tmp_path):
    spec = ExportSpec(backbone_name="ViT-B/16",
                      out_path=str(tmp_path / "vit_b16.pt"))
    try:
        result = export_backbone(spec)
    except WeightsUnavailableError as exc:
        pytest.skip(f"pretrained weights unavailable: {exc}")
    assert result.output_dim == 512
