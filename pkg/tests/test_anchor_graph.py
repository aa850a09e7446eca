import numpy as np
import pytest
import scipy.sparse as sp

from lpmgh.anchor_graph import AnchorGraphFactor, AnchorSet, build_factor, scatter_matrix, select_anchors
from lpmgh.errors import ConfigError, ShapeError


def hand_factor():
    Z = sp.csr_matrix(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]))
    return AnchorGraphFactor(Z, np.array([2.0, 1.0]), 1, 1.0, np.arange(2))


def test_hand_affinity():
    A = hand_factor().affinity()
    np.testing.assert_allclose(A, [[0.5, 0, 0.5], [0, 1, 0], [0.5, 0, 0.5]], atol=1e-15)


def test_hand_scatter():
    S = scatter_matrix(np.array([[1.0], [-1.0], [1.0]]), hand_factor())
    np.testing.assert_allclose(S, [[3.0]], atol=1e-14)


def test_scatter_row_mismatch():
    with pytest.raises(ShapeError):
        scatter_matrix(np.ones((4, 1)), hand_factor())


def random_factor(rng, n=40, d=5, P=8, s=3):
    x = rng.standard_normal((n, d))
    a = select_anchors(x, P, seed=int(rng.integers(1000)))
    return x, build_factor(x, a, s=s)


def test_rows_stochastic_and_sparse(rng):
    _, f = random_factor(rng)
    Zd = f.Z.toarray()
    np.testing.assert_allclose(Zd.sum(1), 1.0, atol=1e-12)
    assert np.all(Zd >= 0)
    assert np.all((Zd > 0).sum(1) <= 3)
    np.testing.assert_allclose(f.lam, Zd.sum(0), atol=1e-12)
    assert np.all(f.lam > 0)


@pytest.mark.parametrize("trial", range(5))
def test_factored_scatter_matches_dense(trial):
    rng = np.random.default_rng(trial)
    x, f = random_factor(rng, n=int(rng.integers(10, 50)), d=int(rng.integers(1, 7)), P=5)
    dense = x.T @ f.affinity() @ x
    S = scatter_matrix(x, f)
    assert np.abs(S - dense).max() <= 1e-8 * max(1.0, np.abs(dense).max())
    assert np.allclose(S, S.T)
    assert np.linalg.eigvalsh(S).min() >= -1e-10


def test_laplacian_spectrum(rng):
    _, f = random_factor(rng, n=30)
    ev = np.linalg.eigvalsh(f.laplacian())
    assert ev.min() >= -1e-10 and ev.max() <= 1 + 1e-10


def test_two_blobs_disconnected():
    rng = np.random.default_rng(0)
    x = np.vstack([rng.normal(0, 0.01, (10, 2)), rng.normal(10, 0.01, (10, 2))])
    a = select_anchors(x, 2, seed=0)
    f = build_factor(x, a, s=1)
    A = f.affinity()
    assert np.abs(A[:10, 10:]).max() == 0.0
    np.testing.assert_allclose(A[:10, :10], 0.1, atol=1e-12)


def test_every_point_an_anchor():
    x = np.arange(12, dtype=float).reshape(6, 2)
    f = build_factor(x, AnchorSet(x.copy()), s=1)
    np.testing.assert_allclose(f.affinity(), np.eye(6), atol=1e-12)


def test_unused_anchor_dropped():
    x = np.array([[0.0], [0.1], [0.2]])
    anchors = AnchorSet(np.array([[0.0], [100.0]]))
    f = build_factor(x, anchors, s=1)
    assert f.kept.tolist() == [0]
    assert f.Z.shape == (3, 1)


def test_tie_goes_to_lower_index():
    f = build_factor(np.array([[0.0]]), AnchorSet(np.array([[1.0], [-1.0]])), s=1, bandwidth=1.0)
    assert f.kept.tolist() == [0]


def test_anchor_selection_deterministic(rng):
    x = rng.standard_normal((60, 3))
    a = select_anchors(x, 7, seed=4)
    b = select_anchors(x, 7, seed=4)
    assert np.array_equal(a.centers, b.centers)
    assert a.P == 7


def test_duplicate_points_still_give_P_anchors():
    x = np.vstack([np.zeros((5, 2)), np.ones((5, 2))])
    a = select_anchors(x, 4, seed=0)
    assert a.P == 4 and np.all(np.isfinite(a.centers))


@pytest.mark.parametrize("P", [1, 11])
def test_bad_anchor_count(P):
    with pytest.raises(ConfigError):
        select_anchors(np.zeros((10, 2)), P)


def test_bad_s_and_bandwidth():
    x = np.arange(6, dtype=float).reshape(3, 2)
    a = AnchorSet(x[:2].copy())
    with pytest.raises(ConfigError):
        build_factor(x, a, s=3)
    with pytest.raises(ConfigError):
        build_factor(x, a, s=1, bandwidth=-1.0)
    with pytest.raises(ShapeError):
        build_factor(np.zeros((3, 3)), a)
