import math

import numpy as np
import pytest

from hierfed.tasks import (
    BatchTooLarge,
    InsufficientPool,
    LocalDataset,
    LogisticTask,
    QuadraticTask,
    TinyMLPTask,
    estimate_sigma2,
    flat_global_loss,
    global_loss,
    make_blob_pool,
    make_quadratic_task,
    partition,
)
from hierfed.topology import build_topology

FIG1 = build_topology([11, 4, 2, 1], parents=[[0, 0, 0, 1, 2, 2, 3, 3, 3, 3, 3], [0, 0, 1, 1], [0, 0]])


def point_task(centers, batch_size=1):
    """One sample per device at the given center: F_i(w) = ||w - a_i||^2 / 2."""
    ds = [LocalDataset(features=np.atleast_2d(np.asarray(c, dtype=float))) for c in centers]
    return QuadraticTask(ds, batch_size=batch_size)


class TestQuadratic:
    def test_loss_at_minimum(self):
        task = point_task([[2.0]])
        assert task.local_loss(0, np.array([2.0])) == 0.0

    def test_loss_analytic(self):
        task = point_task([[2.0]])
        assert task.local_loss(0, np.array([0.0])) == 2.0

    def test_full_gradient(self):
        task = point_task([[1.0, -2.0]])
        w = np.array([0.5, 0.5])
        assert np.allclose(task.full_gradient(0, w), w - np.array([1.0, -2.0]))

    def test_full_batch_is_deterministic(self):
        rng = np.random.default_rng(0)
        task = make_quadratic_task(3, 2, rng, samples_per_device=5, batch_size=5)
        w = np.array([0.3, -0.1])
        g1 = task.stochastic_gradient(0, w, np.random.default_rng(1))
        g2 = task.full_gradient(0, w)
        assert np.all(g1 == g2)

    def test_stochastic_unbiased_monte_carlo(self):
        rng = np.random.default_rng(2)
        task = make_quadratic_task(1, 3, rng, sample_spread=0.5, samples_per_device=16, batch_size=4)
        w = np.zeros(3)
        trials = 100_000
        draws = np.empty((trials, 3))
        g_rng = np.random.default_rng(3)
        for k in range(trials):
            draws[k] = task.stochastic_gradient(0, w, g_rng)
        mean = draws.mean(axis=0)
        se = draws.std(axis=0, ddof=1) / math.sqrt(trials)
        assert np.all(np.abs(mean - task.full_gradient(0, w)) <= 4 * se + 1e-12)

    def test_seed_replay_bit_identical(self):
        task = make_quadratic_task(2, 4, np.random.default_rng(4), batch_size=3)
        w = np.ones(4)
        g1 = task.stochastic_gradient(1, w, np.random.default_rng(99))
        g2 = task.stochastic_gradient(1, w, np.random.default_rng(99))
        assert np.all(g1 == g2)

    def test_batch_too_large(self):
        task = point_task([[1.0]])
        with pytest.raises(BatchTooLarge):
            task.stochastic_gradient(0, np.zeros(1), np.random.default_rng(0), batch_size=2)

    def test_optimum_is_stationary(self):
        task = make_quadratic_task(5, 3, np.random.default_rng(5))
        g = task.global_gradient(task.optimum())
        assert np.linalg.norm(g) < 1e-12

    def test_exact_sigma2_matches_empirical(self):
        task = make_quadratic_task(4, 2, np.random.default_rng(6), sample_spread=0.4,
                                   samples_per_device=10, batch_size=3)
        exact = task.gradient_noise_sigma2()
        emp = estimate_sigma2(task, np.zeros(2), np.random.default_rng(7), trials=4000)
        assert abs(emp - exact) / exact < 0.15


class TestLogistic:
    def test_loss_at_zero_is_ln2(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 2.0], [3.0, -1.0]])
        y = np.array([1, -1, 1, -1])
        task = LogisticTask([LocalDataset(features=x, labels=y)], batch_size=4)
        assert abs(task.local_loss(0, np.zeros(2)) - math.log(2.0)) < 1e-15

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(6, 3))
        y = np.where(rng.random(6) < 0.5, -1, 1)
        task = LogisticTask([LocalDataset(features=x, labels=y)], batch_size=6)
        w = rng.normal(size=3)
        g = task.full_gradient(0, w)
        eps = 1e-6
        for k in range(3):
            e = np.zeros(3)
            e[k] = eps
            fd = (task.local_loss(0, w + e) - task.local_loss(0, w - e)) / (2 * eps)
            assert abs(fd - g[k]) < 1e-6


class TestTinyMLP:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(8, 4))
        y = rng.integers(0, 3, size=8)
        task = TinyMLPTask([LocalDataset(features=x, labels=y)], batch_size=8, n_classes=3, hidden=5)
        w = 0.3 * rng.standard_normal(task.dim)
        g = task.full_gradient(0, w)
        eps = 1e-6
        idx = rng.choice(task.dim, size=12, replace=False)
        for k in idx:
            e = np.zeros(task.dim)
            e[k] = eps
            fd = (task.local_loss(0, w + e) - task.local_loss(0, w - e)) / (2 * eps)
            assert abs(fd - g[k]) < 1e-5

    def test_hidden_cap(self):
        with pytest.raises(ValueError):
            TinyMLPTask([LocalDataset(features=np.zeros((2, 2)), labels=np.zeros(2, dtype=int))],
                        batch_size=2, n_classes=2, hidden=64)

    def test_accuracy_reaches_separation(self):
        pool = make_blob_pool(600, 3, 4, np.random.default_rng(10), spread=0.2)
        parts = partition(pool.features, pool.labels, 2, 3, (50, 80), np.random.default_rng(11))
        task = TinyMLPTask(parts, batch_size=16, n_classes=3, hidden=8)
        w = 0.1 * np.random.default_rng(12).standard_normal(task.dim)
        rng = np.random.default_rng(13)
        for _ in range(300):
            g = task.full_gradient(0, w) + task.full_gradient(1, w)
            w = w - 0.5 * g / 2
        assert task.accuracy(w, pool.holdout_features, pool.holdout_labels) > 0.8


class TestGlobalLoss:
    def test_two_devices_unweighted(self):
        task = point_task([[0.0], [4.0]])
        topo = build_topology([2, 1, 1], parents=[[0, 0], [0]])
        w = np.array([0.0])
        # F_1 = 0, F_2 = 8 -> mean 4; with centers 0/4: losses 0 and 8
        assert global_loss(task, topo, w) == pytest.approx(4.0)

    def test_constant_losses_any_weighting(self):
        task = point_task([[1.5]] * 11)
        w = np.array([100.0])
        c = task.local_loss(0, w)
        assert global_loss(task, FIG1, w) == pytest.approx(c)
        assert global_loss(task, FIG1, w, weighted=True) == pytest.approx(c)

    def test_weighted_example(self):
        # D = (1, 3) samples, local losses 0 and 4 at w = 2 -> weighted mean 3
        ds = [
            LocalDataset(features=np.full((1, 1), 2.0)),
            LocalDataset(features=np.full((3, 1), 2.0 - math.sqrt(8.0))),
        ]
        task = QuadraticTask(ds, batch_size=1)
        topo = build_topology([2, 1, 1], parents=[[0, 0], [0]])
        w = np.array([2.0])
        assert task.local_loss(0, w) == pytest.approx(0.0)
        assert task.local_loss(1, w) == pytest.approx(4.0)
        assert global_loss(task, topo, w, weighted=True) == pytest.approx(3.0)
        assert global_loss(task, topo, w, weighted=False) == pytest.approx(2.0)

    @pytest.mark.parametrize("weighted", [False, True])
    def test_hierarchical_equals_flat(self, weighted):
        rng = np.random.default_rng(14)
        ds = [LocalDataset(features=rng.normal(size=(int(rng.integers(1, 6)), 2))) for _ in range(11)]
        task = QuadraticTask(ds, batch_size=1)
        flat = flat_global_loss(task, weighted=weighted)
        for _ in range(10):
            w = rng.normal(size=2)
            h = global_loss(task, FIG1, w, weighted=weighted)
            assert abs(h - flat(w)) <= 1e-12 * max(1.0, abs(h))


class TestPartition:
    def pool(self, seed=15, n=4000):
        return make_blob_pool(n, 10, 3, np.random.default_rng(seed))

    def test_case1_two_classes(self):
        pool = self.pool()
        parts = partition(pool.features, pool.labels, 6, 1, (30, 60), np.random.default_rng(16))
        for p in parts:
            assert len(np.unique(p.labels)) == 2

    def test_case2_six_classes(self):
        pool = self.pool()
        parts = partition(pool.features, pool.labels, 6, 2, (60, 90), np.random.default_rng(17))
        for p in parts:
            assert len(np.unique(p.labels)) == 6

    def test_case3_all_classes(self):
        pool = self.pool()
        parts = partition(pool.features, pool.labels, 6, 3, (60, 90), np.random.default_rng(18))
        for p in parts:
            assert set(np.unique(p.labels)) == set(range(10))

    def test_sizes_in_range(self):
        pool = self.pool()
        parts = partition(pool.features, pool.labels, 8, 3, (50, 70), np.random.default_rng(19))
        assert all(50 <= p.size <= 70 for p in parts)

    def test_insufficient_pool(self):
        pool = self.pool(n=200)
        with pytest.raises(InsufficientPool):
            partition(pool.features, pool.labels, 40, 1, (80, 100), np.random.default_rng(20))

    def test_partitions_disjoint(self):
        pool = self.pool()
        parts = partition(pool.features, pool.labels, 5, 3, (40, 50), np.random.default_rng(21))
        seen = [tuple(row) for p in parts for row in p.features]
        assert len(seen) == len(set(seen))
