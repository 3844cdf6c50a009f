import numpy as np
import pytest

import dmp3dad as dm
from synthetic import build_dataset, sphere_points


@pytest.fixture(scope="session")
def mock_backend():
    return dm.make_mock_backend(seed=0, embed_dim=64)


@pytest.fixture(scope="session")
def toy_manifest(tmp_path_factory):
    """Two categories, small clouds; enough for protocol plumbing tests."""
    root = tmp_path_factory.mktemp("toy")
    path = build_dataset(root, ("sphere", "cube"), n_train=5, n_test=4,
                         n_points=512, seed=20240901)
    return dm.load_manifest(path)


@pytest.fixture(scope="session")
def sphere_cloud():
    rng = np.random.default_rng(42)
    cloud = dm.PointCloud(points=sphere_points(rng, 2048, noise=0.0),
                          source_id="sphere-unit")
    return dm.normalize_to_unit_cube(cloud)
