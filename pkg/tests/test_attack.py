from __future__ import annotations

import numpy as np
import pytest

from snnrobust.attack import (AttackError, DEConfig, apply_candidate,
                              de_evolve, fgsm, fgsm_eps_search, fgsm_many,
                              init_population, one_pixel, perturbed_batch)
from snnrobust.data import synthetic_dataset
from snnrobust.graph import Dag, layer_dag
from snnrobust.network import build_network, forward, init_weights

from tests.conftest import random_layered_net


@pytest.fixture(scope="module")
def frozen_net():
    """Small trained-ish 784-input model shared across attack tests."""
    rng = np.random.default_rng(777)
    ld = layer_dag(Dag(30, frozenset(
        {(u, v) for u in range(15) for v in range(15, 30) if (u + v) % 3})))
    return init_weights(build_network(ld, 784, 10), "G_N", seed=42)


@pytest.fixture(scope="module")
def sample_image():
    return synthetic_dataset(1, seed=3).images[0]


class TestFGSM:
    def test_eps_zero_keeps_image(self, frozen_net, sample_image):
        out = fgsm(frozen_net, sample_image, 3, eps=0.0)
        assert np.array_equal(out.perturbed_image, sample_image)
        _, probs, _ = forward(frozen_net, sample_image)
        assert out.success == (int(probs.argmax()) != 3)

    def test_sign_perturbation_direction(self, rng):
        net = random_layered_net(rng, input_dim=2, output_dim=2)
        x = np.array([0.5, 0.5])
        _, _, cache = forward(net, x)
        from snnrobust.network import backward
        _, _, g = backward(net, cache, 0)
        out = fgsm(net, x, 0, eps=0.1)
        expected = np.clip(x + 0.1 * np.sign(g), 0, 1)
        assert out.perturbed_image == pytest.approx(expected, abs=1e-12)

    def test_linf_bound(self, frozen_net, sample_image):
        for eps in (0.05, 0.1, 0.3):
            out = fgsm(frozen_net, sample_image, 2, eps=eps)
            assert np.abs(out.perturbed_image - sample_image).max() <= eps + 1e-12
            assert out.perturbed_image.min() >= 0.0
            assert out.perturbed_image.max() <= 1.0

    def test_negative_eps_rejected(self, frozen_net, sample_image):
        with pytest.raises(AttackError):
            fgsm(frozen_net, sample_image, 0, eps=-0.1)

    def test_batch_matches_single(self, frozen_net):
        images = synthetic_dataset(6, seed=8).images
        labels = np.array([0, 1, 2, 3, 4, 5])
        batch = fgsm_many(frozen_net, images, labels, 0.1, keep_images=True)
        for i, out in enumerate(batch):
            single = fgsm(frozen_net, images[i], int(labels[i]), 0.1, index=i)
            assert out.predicted_label == single.predicted_label
            assert out.success == single.success
            assert out.confidence == pytest.approx(single.confidence, abs=1e-12)
            assert np.array_equal(out.perturbed_image, single.perturbed_image)


class TestEpsSearch:
    def _correct_case(self, net):
        ds = synthetic_dataset(40, seed=12)
        for i in range(ds.n):
            _, probs, _ = forward(net, ds.images[i])
            if int(probs.argmax()) == int(ds.labels[i]):
                return ds.images[i], int(ds.labels[i])
        # fall back: relabel an image to the model's prediction
        _, probs, _ = forward(net, ds.images[0])
        return ds.images[0], int(probs.argmax())

    def test_returns_first_flipping_epsilon(self, frozen_net):
        x, y = self._correct_case(frozen_net)
        out = fgsm_eps_search(frozen_net, x, y)
        if out.success:
            k = round((out.epsilon_used - 0.001) / 0.01)
            assert out.epsilon_used == pytest.approx(0.001 + 0.01 * k)
            if k > 0:
                prev = fgsm(frozen_net, x, y, out.epsilon_used - 0.01)
                assert not prev.success

    def test_rejects_misclassified_start(self, frozen_net):
        ds = synthetic_dataset(60, seed=13)
        for i in range(ds.n):
            _, probs, _ = forward(frozen_net, ds.images[i])
            pred = int(probs.argmax())
            if pred != int(ds.labels[i]):
                with pytest.raises(AttackError):
                    fgsm_eps_search(frozen_net, ds.images[i], int(ds.labels[i]))
                return
        pytest.skip("frozen net classified every sample correctly")

    def test_immune_constant_classifier_censored(self):
        # output biases force a constant prediction equal to the label
        ld = layer_dag(Dag(2, frozenset({(0, 1)})))
        net = build_network(ld, 4, 3)
        net.biases[-1][1] = 5.0
        x = np.array([0.2, 0.4, 0.6, 0.8])
        out = fgsm_eps_search(net, x, 1, cap=0.5)
        assert not out.success
        assert out.epsilon_used is None

    def test_constant_classifier_never_flips_below_cap(self):
        ld = layer_dag(Dag(2, frozenset({(0, 1)})))
        net = build_network(ld, 4, 3)
        net.biases[-1][0] = 1.0
        out = fgsm_eps_search(net, np.full(4, 0.5), 0, start=0.001, step=0.01,
                              cap=0.05)
        assert not out.success


class TestOnePixel:
    def test_candidate_application_convention(self):
        x = np.zeros(784)
        out = apply_candidate(x, np.array([5.0, 7.0, 200.0]))
        # (p_x, p_y) = (column 5, row 7), 1-indexed
        flat = (7 - 1) * 28 + (5 - 1)
        assert out[flat] == pytest.approx(200 / 255)
        assert np.count_nonzero(out) == 1

    def test_perturbed_batch_matches_single(self):
        x = synthetic_dataset(1, seed=4).images[0]
        cands = np.array([[1, 1, 0.0], [28, 28, 255.0], [10, 3, 77.0]])
        batch = perturbed_batch(x, cands)
        for i, c in enumerate(cands):
            assert np.array_equal(batch[i], apply_candidate(x, c))

    def test_fitness_is_one_minus_true_prob(self, frozen_net, sample_image):
        y = 4
        cand = np.array([3.0, 3.0, 128.0])
        _, probs, _ = forward(frozen_net, apply_candidate(sample_image, cand))
        assert 1.0 - probs[y] == pytest.approx(
            1.0 - forward(frozen_net, apply_candidate(sample_image, cand))[1][y])

    def test_initial_population_distributions(self):
        cfg = DEConfig(pop_size=4000, max_iter=1, seed=0)
        pop = init_population(cfg, np.random.default_rng(0))
        assert pop.shape == (4000, 3)
        assert pop[:, 0].min() >= 1 and pop[:, 0].max() <= 28
        assert np.array_equal(pop[:, :2], np.rint(pop[:, :2]))
        assert pop[:, 2].min() >= 0 and pop[:, 2].max() <= 255
        # clamped normal keeps its center near 128
        assert abs(pop[:, 2].mean() - 128) < 8

    def test_changes_exactly_one_pixel(self, frozen_net, sample_image):
        out = one_pixel(frozen_net, sample_image, 3,
                        DEConfig(pop_size=10, max_iter=3, seed=5))
        diff = np.flatnonzero(out.perturbed_image != sample_image)
        assert diff.size <= 1

    def test_early_stop_when_initial_population_flips(self, frozen_net):
        # relabel to a class the model will not keep under most perturbations
        ds = synthetic_dataset(5, seed=21)
        x = ds.images[0]
        _, probs, _ = forward(frozen_net, x)
        wrong_label = int(probs.argmin())
        out = one_pixel(frozen_net, x, wrong_label,
                        DEConfig(pop_size=8, max_iter=50, seed=6))
        assert out.success
        assert out.generations_used == 0

    def test_deterministic(self, frozen_net, sample_image):
        cfg = DEConfig(pop_size=12, max_iter=5, seed=77)
        a = one_pixel(frozen_net, sample_image, 2, cfg)
        b = one_pixel(frozen_net, sample_image, 2, cfg)
        assert a.candidate == b.candidate
        assert a.success == b.success


class TestDeEvolve:
    @staticmethod
    def sum_fitness(cands):
        return cands.sum(axis=1)

    def test_identical_population_fixed_point(self):
        cfg = DEConfig(pop_size=6, max_iter=1, seed=0)
        pop = np.tile(np.array([5.0, 9.0, 100.0]), (6, 1))
        nxt, fit = de_evolve(pop.copy(), self.sum_fitness, cfg)
        assert np.array_equal(nxt, pop)

    def test_best_fitness_non_decreasing(self):
        cfg = DEConfig(pop_size=20, max_iter=1, seed=3)
        rng = np.random.default_rng(3)
        pop = init_population(cfg, rng)
        fit = self.sum_fitness(pop)
        best = fit.max()
        for _ in range(25):
            pop, fit = de_evolve(pop, self.sum_fitness, cfg, rng, fit)
            assert fit.max() >= best - 1e-12
            best = fit.max()

    def test_bounds_hold_after_many_generations(self):
        cfg = DEConfig(pop_size=15, max_iter=1, seed=9, F=0.9)
        rng = np.random.default_rng(9)
        pop = init_population(cfg, rng)
        fit = None
        for _ in range(30):
            pop, fit = de_evolve(pop, self.sum_fitness, cfg, rng, fit)
        assert pop[:, 0].min() >= 1 and pop[:, 0].max() <= 28
        assert pop[:, 1].min() >= 1 and pop[:, 1].max() <= 28
        assert pop[:, 2].min() >= 0 and pop[:, 2].max() <= 255
        assert np.array_equal(pop[:, :2], np.rint(pop[:, :2]))

    def test_population_size_constant(self):
        cfg = DEConfig(pop_size=10, max_iter=1, seed=1)
        pop = init_population(cfg, np.random.default_rng(1))
        nxt, _ = de_evolve(pop, self.sum_fitness, cfg)
        assert nxt.shape == pop.shape

    def test_small_population_rejected(self):
        cfg = DEConfig(pop_size=4, max_iter=1, seed=0)
        with pytest.raises(AttackError):
            de_evolve(np.zeros((3, 3)), self.sum_fitness, cfg)

    def test_config_validation(self):
        with pytest.raises(AttackError):
            DEConfig(pop_size=3)
        with pytest.raises(AttackError):
            DEConfig(F=0.0)
        with pytest.raises(AttackError):
            DEConfig(CR=1.5)
