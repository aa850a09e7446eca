import itertools

import numpy as np
import pytest

from lpmgh import stiefel
from lpmgh.dataset import MultiviewDataset, synth_multiview
from lpmgh.errors import ConfigError, DegenerateError, MissingViewError, ShapeError
from lpmgh.trainer import (
    ProjectionObjective,
    TrainConfig,
    encode,
    init_codes,
    init_projections,
    objective,
    train,
    update_codes,
    update_mu,
    update_projection,
)


@pytest.fixture(scope="module")
def small_run():
    ds = synth_multiview(120, 3, [10, 8], noise=0.1, seed=0)
    model, B, report = train(ds, TrainConfig(bits=4, seed=0))
    return ds, model, B, report


class TestObjective:
    def test_single_view_example(self):
        # -Tr(W^T S W) = -2, ||B - XW||^2 = 0
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        S = 2 * np.eye(2)
        W = np.array([[1.0], [0.0]])
        B = np.array([[1.0], [0.0]])
        assert objective([W], [0.5], [x], [S], B) == -2.0

    def test_quantization_weighted_by_mu(self):
        x = np.zeros((2, 1))
        W = np.ones((1, 1))
        B = np.ones((2, 1))
        assert objective([W], [0.25], [x], [np.zeros((1, 1))], B) == 8.0

    def test_view_count_mismatch(self):
        with pytest.raises(ShapeError):
            objective([np.ones((1, 1))], [0.5, 0.5], [np.ones((1, 1))], [np.ones((1, 1))], np.ones((1, 1)))


class TestInit:
    def test_eigenvector_order_and_sign(self):
        S = np.diag([1.0, 3.0, 2.0])
        W, = init_projections([S], 2)
        np.testing.assert_allclose(W, [[0, 0], [1, 0], [0, 1]], atol=1e-14)

    def test_sign_rule(self):
        S = np.array([[2.0, -1.0], [-1.0, 2.0]])
        W, = init_projections([S], 1)
        # top eigenvector is (1, -1)/sqrt(2); ties in magnitude keep the first entry positive
        np.testing.assert_allclose(W.ravel(), [np.sqrt(0.5), -np.sqrt(0.5)], atol=1e-14)

    def test_too_many_bits(self):
        with pytest.raises(ConfigError):
            init_projections([np.eye(3)], 4)

    def test_codes_all_ones(self):
        assert np.array_equal(init_codes(3, 2), np.ones((3, 2)))


class TestMu:
    @pytest.mark.parametrize("losses,expected", [
        ((1.0, 3.0), (0.25, 0.75)),
        ((7.0, 7.0), (0.5, 0.5)),
        ((2.0, 2.0, 4.0), (0.25, 0.25, 0.5)),
        ((5.0,), (1.0,)),
    ])
    def test_examples(self, losses, expected):
        assert update_mu(losses).tolist() == list(expected)

    def test_zero_loss_floored(self):
        mu = update_mu([0.0, 1.0])
        assert mu[0] > 0 and abs(mu.sum() - 1) < 1e-15

    def test_all_zero(self):
        with pytest.raises(DegenerateError):
            update_mu([0.0, 0.0])


class TestCodes:
    def test_example(self):
        x = [np.array([[1.0, -2.0]]), np.array([[-3.0, 1.0]])]
        W = [np.eye(2), np.eye(2)]
        # (1 - 3, -2 + 1) / 0.5 = (-4, -2)
        assert update_codes(x, W, [0.5, 0.5]).tolist() == [[-1.0, -1.0]]

    def test_zero_maps_to_plus_one(self):
        assert update_codes([np.zeros((1, 2))], [np.eye(2)], [1.0]).tolist() == [[1.0, 1.0]]

    def test_minimizes_over_enumeration(self):
        rng = np.random.default_rng(7)
        n, r, d = 2, 2, 3
        xs = [rng.standard_normal((n, d)) for _ in range(2)]
        Ws = [stiefel.orthonormalize(rng.standard_normal((d, r))) for _ in range(2)]
        mu = [0.3, 0.7]
        cost = lambda B: sum(np.sum((B - x @ W) ** 2) / m for x, W, m in zip(xs, Ws, mu))
        best = min(itertools.product([-1.0, 1.0], repeat=n * r), key=lambda b: cost(np.reshape(b, (n, r))))
        assert np.array_equal(update_codes(xs, Ws, mu), np.reshape(best, (n, r)))


class TestProjection:
    def test_expanded_value_matches_direct(self, rng):
        x = rng.standard_normal((20, 5))
        S = x.T @ x / 20
        B = np.where(rng.standard_normal((20, 2)) >= 0, 1.0, -1.0)
        W = stiefel.orthonormalize(rng.standard_normal((5, 2)))
        direct = -np.sum(W * (S @ W)) + np.sum((B - x @ W) ** 2) / 0.4
        assert abs(ProjectionObjective(x, S, B, 0.4).value(W) - direct) <= 1e-10 * abs(direct)

    def test_gradient_finite_differences(self, rng):
        x = rng.standard_normal((15, 4))
        S = x.T @ x
        B = np.where(rng.standard_normal((15, 2)) >= 0, 1.0, -1.0)
        obj = ProjectionObjective(x, S, B, 0.6)
        W = rng.standard_normal((4, 2))
        G = obj.gradient(W)
        h = 1e-6
        fd = np.zeros_like(W)
        for idx in np.ndindex(W.shape):
            E = np.zeros_like(W)
            E[idx] = h
            fd[idx] = (obj.value(W + E) - obj.value(W - E)) / (2 * h)
        assert np.abs(fd - G).max() <= 1e-4 * np.abs(G).max()

    def test_matches_angle_grid(self):
        # d=2, r=1: W = (cos t, sin t), brute force over a fine grid
        rng = np.random.default_rng(3)
        for _ in range(5):
            x = rng.standard_normal((12, 2))
            S = x.T @ x / 12
            B = np.where(rng.standard_normal((12, 1)) >= 0, 1.0, -1.0)
            obj = ProjectionObjective(x, S, B, 0.5)
            t = np.linspace(0, 2 * np.pi, 1_000_000, endpoint=False)
            Wg = np.stack([np.cos(t), np.sin(t)])
            vals = np.einsum("it,ij,jt->t", Wg, obj.Q, Wg) - obj.L[:, 0] @ Wg + obj.c
            W0 = Wg[:, [int(vals.argmin())]]
            W = update_projection(x, S, B, 0.5, W0, stiefel.StiefelOptions(max_iters=500, grad_tol=1e-10))
            assert obj.value(W) <= vals.min() + 1e-4

    def test_fixed_point(self):
        S = np.diag([4.0, 2.0, 1.0])
        x = np.eye(3)
        W0 = np.eye(3)[:, :2]
        B = x @ W0
        W = update_projection(x, S, B, 0.5, W0)
        np.testing.assert_allclose(W, W0, atol=1e-12)


class TestTrain:
    def test_report_shapes(self, small_run):
        ds, model, B, report = small_run
        assert B.shape == (120, 4) and set(np.unique(B)) <= {-1.0, 1.0}
        assert len(report.objective_per_iter) == report.iters_run + 1
        assert len(report.step_deltas) == report.iters_run
        assert abs(sum(model.mu) - 1) < 1e-12
        assert all(g >= -1e-9 for g in report.mu_gap)

    def test_deterministic(self, small_run):
        ds, model, B, report = small_run
        model2, B2, report2 = train(ds, TrainConfig(bits=4, seed=0))
        assert np.array_equal(B, B2)
        assert all(np.array_equal(a, b) for a, b in zip(model.projections, model2.projections))
        assert report.objective_per_iter == report2.objective_per_iter

    def test_threads_identical(self, small_run):
        ds, model, B, _ = small_run
        _, B2, _ = train(ds, TrainConfig(bits=4, seed=0, threads=2))
        assert np.array_equal(B, B2)

    def test_single_view(self):
        ds = synth_multiview(80, 2, [6], noise=0.1, seed=1)
        model, _, _ = train(ds, TrainConfig(bits=3, max_outer_iters=5))
        assert model.mu.tolist() == [1.0]

    def test_bits_exceed_dimension(self):
        ds = synth_multiview(50, 2, [4, 6], seed=0)
        with pytest.raises(ConfigError):
            train(ds, TrainConfig(bits=5))


class TestEncode:
    def test_reproduces_training_codes(self, small_run):
        ds, model, B, _ = small_run
        assert np.array_equal(encode(model, ds.views), B)

    def test_rows_independent(self, small_run):
        ds, model, B, _ = small_run
        rows = [5, 0, 77]
        assert np.array_equal(encode(model, [v[rows] for v in ds.views]), B[rows])
        dup = encode(model, [np.vstack([v[:1], v[:1]]) for v in ds.views])
        assert np.array_equal(dup[0], dup[1])

    def test_errors(self, small_run):
        ds, model, _, _ = small_run
        with pytest.raises(MissingViewError):
            encode(model, ds.views[:1])
        with pytest.raises(ShapeError):
            encode(model, [ds.views[0], ds.views[0]])
        with pytest.raises(ShapeError):
            encode(model, list(ds.views) + [ds.views[0]])
