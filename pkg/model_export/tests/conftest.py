import pytest
import torch
from transformers import CLIPVisionConfig, CLIPVisionModelWithProjection

from model_export import wrap_transformers_clip


@pytest.fixture(scope="session")
def tiny_clip():
    """Small randomly initialized CLIP vision tower; same export code path
    as the real checkpoints, no network access needed."""
    config = CLIPVisionConfig(hidden_size=32, intermediate_size=64,
                              num_hidden_layers=2, num_attention_heads=2,
                              image_size=32, patch_size=8, projection_dim=24)
    torch.manual_seed(0)
    model = CLIPVisionModelWithProjection(config).eval()
    return wrap_transformers_clip(model), int(config.image_size)
