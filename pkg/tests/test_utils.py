import numpy as np
import pytest

from errors import SingularGram
from Utils import cluster_units_kmeans, gram_condition, sha256_file, solve_gram


def test_solve_gram():
    gram = np.array([[2.0, 1.0], [1.0, 3.0]])
    np.testing.assert_allclose(gram @ solve_gram(gram, np.array([1.0, 2.0]), "beta"), [1.0, 2.0])


def test_zero_gram_is_singular():
    assert np.isinf(gram_condition(np.zeros((2, 2))))
    with pytest.raises(SingularGram, match="A row 3"):
        solve_gram(np.zeros((2, 2)), np.ones(2), "A row 3")


def test_condition_limit():
    with pytest.raises(SingularGram):
        solve_gram(np.diag([1.0, 1e-14]), np.ones(2), "beta[1]")


def test_kmeans_separates_groups():
    rng = np.random.default_rng(0)
    covariates = np.vstack((rng.normal(0.0, 0.1, size=(5, 2)), rng.normal(10.0, 0.1, size=(5, 2))))
    labels = cluster_units_kmeans(covariates, 2, seed=1)
    assert len(set(labels[:5])) == 1 and len(set(labels[5:])) == 1
    assert labels[0] != labels[5]


def test_sha256_file(tmp_path):
    path = tmp_path / "x.txt"
    path.write_bytes(b"abc")
    assert sha256_file(path) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
