"""Objectives: closed forms, brute-force oracles, tie rules, weighted sums."""

import math

import numpy as np
import pytest

from emoloop import losses
from emoloop import tensor as T
from emoloop.losses import LossWeights

from _gradcheck import assert_grads_match


def unit_rows(k, d, seed):
    m = np.random.default_rng(seed).normal(size=(k, d))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


class TestPoolQuery:
    def test_single_token_normalized(self):
        bank = T.DiffTensor([[3.0, 4.0]])
        out = losses.pool_query(bank)
        assert np.allclose(out.data, [0.6, 0.8], atol=1e-12)

    def test_identical_tokens_match_single(self):
        row = np.array([1.0, -2.0, 0.5])
        bank = T.DiffTensor(np.tile(row, (4, 1)))
        single = losses.pool_query(T.DiffTensor(row[None]))
        assert np.allclose(losses.pool_query(bank).data, single.data, atol=1e-12)

    def test_unit_norm(self):
        bank = T.DiffTensor(np.random.default_rng(0).normal(size=(5, 7)))
        assert abs(np.linalg.norm(losses.pool_query(bank).data) - 1.0) < 1e-9

    def test_batched(self):
        banks = T.DiffTensor(np.random.default_rng(1).normal(size=(3, 4, 6)))
        out = losses.pool_query(banks)
        assert out.shape == (3, 6)
        assert np.allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-9)


class TestInfoNce:
    def test_k1_is_zero(self):
        q = T.DiffTensor(unit_rows(1, 4, 2))
        assert losses.info_nce(q, q, 0.07).item() == 0.0

    def test_orthonormal_closed_form(self):
        z = np.eye(8)[:2, :]  # two orthonormal targets
        loss = losses.info_nce(T.DiffTensor(z), T.DiffTensor(z), 0.07).item()
        expected = math.log(1.0 + math.exp(-1.0 / 0.07))
        assert abs(loss - expected) < 1e-12
        assert loss < 1e-5

    def test_matches_brute_force(self):
        rng = np.random.default_rng(3)
        for trial in range(20):
            k, d, tau = 8, 6, 0.07
            q, z = rng.normal(size=(k, d)), rng.normal(size=(k, d))
            loss = losses.info_nce(T.DiffTensor(q), T.DiffTensor(z), tau).item()
            acc = 0.0
            for i in range(k):
                num = math.exp(float(q[i] @ z[i]) / tau)
                den = sum(math.exp(float(q[i] @ z[j]) / tau) for j in range(k))
                acc -= math.log(num / den)
            assert abs(loss - acc / k) < 1e-10

    def test_batch_permutation_invariant(self):
        rng = np.random.default_rng(4)
        q, z = rng.normal(size=(6, 5)), rng.normal(size=(6, 5))
        perm = rng.permutation(6)
        a = losses.info_nce(T.DiffTensor(q), T.DiffTensor(z), 0.1).item()
        b = losses.info_nce(T.DiffTensor(q[perm]), T.DiffTensor(z[perm]), 0.1).item()
        assert abs(a - b) < 1e-12

    def test_grad(self):
        q = T.DiffTensor(unit_rows(3, 4, 5), requires_grad=True)
        z = T.DiffTensor(unit_rows(3, 4, 6), requires_grad=True)
        assert_grads_match(lambda: losses.info_nce(q, z, 0.2), [q, z])


class TestClassification:
    def test_uniform_logits(self):
        loss = losses.classification_loss(T.DiffTensor(np.zeros(8)), 3)
        assert abs(loss.item() - math.log(8)) < 1e-12

    def test_confident_logit_drives_loss_to_zero(self):
        logits = np.zeros(8)
        logits[2] = 50.0
        assert losses.classification_loss(T.DiffTensor(logits), 2).item() < 1e-12

    def test_matches_log_sum_exp_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            logits = rng.normal(size=8) * 3
            label = int(rng.integers(8))
            loss = losses.classification_loss(T.DiffTensor(logits), label).item()
            oracle = math.log(np.exp(logits).sum()) - logits[label]
            assert abs(loss - oracle) < 1e-12

    def test_batched_mean(self):
        rng = np.random.default_rng(8)
        logits = rng.normal(size=(4, 8))
        labels = [0, 3, 7, 1]
        loss = losses.cross_entropy(T.DiffTensor(logits), labels).item()
        per = [losses.classification_loss(T.DiffTensor(l), y).item() for l, y in zip(logits, labels)]
        assert abs(loss - np.mean(per)) < 1e-12


class TestSelectNegative:
    def test_correct_prediction_takes_runner_up(self):
        probs = np.array([0.5, 0.3, 0.05, 0.05, 0.025, 0.025, 0.025, 0.025])
        assert losses.select_negative(probs, 0) == 1

    def test_misclassified_takes_top(self):
        probs = np.array([0.3, 0.5, 0.05, 0.05, 0.025, 0.025, 0.025, 0.025])
        assert losses.select_negative(probs, 0) == 1

    def test_tie_at_top(self):
        # exact tie between classes 2 and 5; argmax breaks to 2 == true,
        # so the runner-up 5 is the negative
        probs = np.zeros(8)
        probs[2] = probs[5] = 0.4
        probs[[0, 1, 3, 4, 6, 7]] = 0.2 / 6
        assert losses.select_negative(probs, 2) == 5

    def test_never_returns_true_label(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            p = rng.dirichlet(np.ones(8))
            true = int(rng.integers(8))
            assert losses.select_negative(p, true) != true

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            p = np.round(rng.dirichlet(np.ones(8)), 2)  # rounded to force ties
            true = int(rng.integers(8))
            got = losses.select_negative(p, true)
            best = min(range(8), key=lambda i: (-p[i], i))
            if best == true:
                want = min((i for i in range(8) if i != best), key=lambda i: (-p[i], i))
            else:
                want = best
            assert got == want


class TestConditionLoss:
    def test_perfect_prediction_zero(self):
        e_p = T.DiffTensor(np.eye(8)[2])
        loss = losses.condition_loss(e_p, np.eye(8)[2], np.eye(8)[5], xi=0.1)
        assert loss.item() == 0.0

    def test_uniform_gives_margin(self):
        e_p = T.DiffTensor(np.full(8, 1.0 / 8.0))
        loss = losses.condition_loss(e_p, np.eye(8)[0], np.eye(8)[1], xi=0.1)
        assert abs(loss.item() - 0.1) < 1e-12

    def test_hand_cosine_oracle(self):
        e_p = np.zeros(8)
        e_p[0], e_p[1] = 0.7, 0.3
        loss = losses.condition_loss(T.DiffTensor(e_p), np.eye(8)[0], np.eye(8)[1], xi=0.1)
        n = math.sqrt(0.7**2 + 0.3**2)
        expected = max(0.0, (1 - 0.7 / n) - (1 - 0.3 / n) + 0.1)
        assert abs(loss.item() - expected) < 1e-12
        assert expected == 0.0  # margin comfortably satisfied here

    def test_active_hinge_value(self):
        e_p = np.zeros(8)
        e_p[0], e_p[1] = 0.4, 0.6
        loss = losses.condition_loss(T.DiffTensor(e_p), np.eye(8)[0], np.eye(8)[1], xi=0.1)
        n = math.sqrt(0.4**2 + 0.6**2)
        assert abs(loss.item() - ((0.6 - 0.4) / n + 0.1)) < 1e-12

    def test_bounds_on_probability_vectors(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            p = rng.dirichlet(np.ones(8) * 0.3)
            i, j = rng.choice(8, size=2, replace=False)
            v = losses.condition_loss(T.DiffTensor(p), np.eye(8)[i], np.eye(8)[j], 0.1).item()
            assert 0.0 <= v <= 2.1

    def test_equal_onehots_rejected(self):
        with pytest.raises(ValueError):
            losses.condition_loss(T.DiffTensor(np.ones(8)), np.eye(8)[1], np.eye(8)[1], 0.1)

    def test_zero_norm_rejected(self):
        with pytest.raises(ValueError):
            losses.condition_loss(T.DiffTensor(np.zeros(8)), np.eye(8)[0], np.eye(8)[1], 0.1)

    def test_batch_matches_singles(self):
        rng = np.random.default_rng(12)
        ps = rng.dirichlet(np.ones(8), size=5)
        plus = [0, 1, 2, 3, 4]
        minus = [5, 6, 7, 0, 1]
        batch = losses.condition_loss_batch(T.DiffTensor(ps), plus, minus, 0.1).item()
        singles = [
            losses.condition_loss(T.DiffTensor(p), np.eye(8)[i], np.eye(8)[j], 0.1).item()
            for p, i, j in zip(ps, plus, minus)
        ]
        assert abs(batch - np.mean(singles)) < 1e-12

    def test_grad(self):
        p = np.random.default_rng(13).dirichlet(np.ones(8) * 0.5)
        e_p = T.DiffTensor(p, requires_grad=True)
        assert_grads_match(
            lambda: losses.condition_loss(e_p, np.eye(8)[0], np.eye(8)[4], 0.5), [e_p]
        )


class TestStageCombos:
    def test_defaults(self):
        w = LossWeights()
        assert (w.lambda1, w.lambda2, w.lambda3) == (0.25, 0.25, 0.5)
        assert (w.gamma1, w.gamma2, w.gamma3) == (0.3, 0.3, 0.4)
        assert (w.tau, w.xi) == (0.07, 0.1)

    def test_nonpositive_rejected(self):
        with pytest.raises(ValueError):
            LossWeights(lambda1=0.0)

    def test_unit_components(self):
        one = T.DiffTensor(np.array(1.0))
        w = LossWeights()
        assert abs(losses.stage1_loss(one, one, one, w).item() - 1.0) < 1e-15
        assert abs(losses.joint_loss(one, one, one, w).item() - 1.0) < 1e-15

    def test_partial_zeros(self):
        zero, l = T.DiffTensor(np.array(0.0)), T.DiffTensor(np.array(3.0))
        w = LossWeights()
        assert abs(losses.stage1_loss(zero, zero, l, w).item() - 1.5) < 1e-15
        assert abs(losses.joint_loss(l, zero, zero, w).item() - 0.9) < 1e-15

    def test_weighted_gradient(self):
        w = LossWeights()
        ls = T.DiffTensor(np.array(0.7), requires_grad=True)
        lo = T.DiffTensor(np.array(0.2), requires_grad=True)
        lc = T.DiffTensor(np.array(1.4), requires_grad=True)
        assert_grads_match(lambda: losses.stage1_loss(ls, lo, lc, w), [ls, lo, lc])
        for t in (ls, lo, lc):
            t.grad = None
        T.backward(losses.stage1_loss(ls, lo, lc, w))
        assert np.allclose([ls.grad, lo.grad, lc.grad], [0.25, 0.25, 0.5])
