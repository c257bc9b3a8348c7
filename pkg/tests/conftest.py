import numpy as np
import pytest

from heatmark import default_boundary_scheme, default_flip_pairs
from heatmark.synthetic import synthetic_faces, write_annotation_file


@pytest.fixture(scope="session")
def scheme():
    return default_boundary_scheme()


@pytest.fixture(scope="session")
def flip_table():
    return default_flip_pairs()


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def faces():
    return synthetic_faces(5, seed=11)


@pytest.fixture
def ann_file(tmp_path, faces):
    path = tmp_path / "ann.txt"
    write_annotation_file(path, faces)
    return path
