import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afmvc.bounds import (
    JointDistribution,
    kl_joint,
    mutual_information,
    product_joint,
    read_report,
    remainder_scale,
    sample_near_independent,
    sweep,
    theorem_bound,
    total_variation,
    write_report,
)
from afmvc.errors import ContractError, DomainError


def _random_joint(rng, k, g):
    t = rng.dirichlet(np.ones(k * g)).reshape(k, g)
    return JointDistribution(t / t.sum())


class TestProductJoint:
    def test_uniform(self):
        np.testing.assert_allclose(product_joint([0.5, 0.5], [0.5, 0.5]).table, 0.25)

    def test_marginals_and_independence(self):
        a, b = np.array([0.2, 0.3, 0.5]), np.array([0.6, 0.4])
        j = product_joint(a, b)
        np.testing.assert_allclose(j.cluster_marginal, a)
        np.testing.assert_allclose(j.group_marginal, b)
        assert mutual_information(j) <= 1e-12

    def test_rejects_unnormalized(self):
        with pytest.raises(ContractError):
            product_joint([0.5, 0.6], [1.0])


class TestKL:
    def test_identity(self):
        j = product_joint([0.3, 0.7], [0.5, 0.5])
        assert kl_joint(j, j) == 0.0

    def test_scalar_value(self):
        q = JointDistribution([[0.6, 0.4]])
        p = JointDistribution([[0.5, 0.5]])
        assert abs(kl_joint(q, p) - (0.6 * math.log(1.2) + 0.4 * math.log(0.8))) < 1e-15
        assert abs(kl_joint(q, p) - 0.020135513) < 1e-9

    def test_infinite_signal(self):
        assert kl_joint(JointDistribution([[0.5, 0.5]]), JointDistribution([[1.0, 0.0]])) == math.inf

    def test_gibbs_on_many_pairs(self):
        rng = np.random.default_rng(0)
        vals = [kl_joint(_random_joint(rng, 3, 2), _random_joint(rng, 3, 2)) for _ in range(10_000)]
        assert min(vals) >= 0


class TestTV:
    def test_identity(self):
        j = product_joint([1.0], [0.5, 0.5])
        assert total_variation(j, j) == 0

    def test_disjoint(self):
        assert total_variation(JointDistribution([[1.0, 0.0]]), JointDistribution([[0.0, 1.0]])) == 1.0

    def test_scalar(self):
        assert abs(total_variation(JointDistribution([[0.6, 0.4]]), JointDistribution([[0.5, 0.5]])) - 0.1) < 1e-15


class TestMutualInformation:
    def test_perfect_correlation(self):
        assert abs(mutual_information(JointDistribution([[0.5, 0.0], [0.0, 0.5]])) - math.log(2)) < 1e-15

    def test_entropy_bound(self):
        rng = np.random.default_rng(1)
        for _ in range(10_000):
            k, g = rng.integers(1, 5), rng.integers(1, 4)
            if k * g < 2:
                continue
            assert mutual_information(_random_joint(rng, k, g)) <= min(math.log(k), math.log(g)) + 1e-12

    @settings(max_examples=50)
    @given(st.integers(0, 10_000))
    def test_permutation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        j = _random_joint(rng, 4, 3)
        permuted = JointDistribution(j.table[rng.permutation(4)][:, rng.permutation(3)])
        assert abs(mutual_information(permuted) - mutual_information(j)) < 1e-12


class TestTheoremBound:
    def test_reference_anchor(self):
        assert abs(theorem_bound(0.1) - 0.1674) <= 0.0002

    def test_eps_002(self):
        assert abs(theorem_bound(0.02) - 0.5 * 0.05 * math.log(100)) < 1e-15
        assert abs(theorem_bound(0.02) - 0.11513) < 1e-5

    def test_limit(self):
        assert theorem_bound(1e-12) < 1e-5

    @pytest.mark.parametrize("eps", [0.0, -1.0, 2.0])
    def test_domain(self, eps):
        with pytest.raises(DomainError):
            theorem_bound(eps)

    def test_remainder_scale(self):
        assert remainder_scale(0.1) == math.sqrt(0.05)


class TestSampling:
    base = product_joint([0.5, 0.5], [0.5, 0.5])

    def test_within_ball(self):
        for s in sample_near_independent(self.base, 0.05, 500, seed=3):
            assert kl_joint(s, self.base) <= 0.05

    def test_tiny_epsilon_close_in_tv(self):
        for s in sample_near_independent(self.base, 1e-8, 200, seed=1):
            assert total_variation(s, self.base) <= 1e-3

    def test_deterministic(self):
        a = sample_near_independent(self.base, 0.1, 50, seed=7)
        b = sample_near_independent(self.base, 0.1, 50, seed=7)
        assert all(np.array_equal(x.table, y.table) for x, y in zip(a, b))

    def test_trial_count_does_not_change_prefix(self):
        a = sample_near_independent(self.base, 0.1, 10, seed=7)
        b = sample_near_independent(self.base, 0.1, 30, seed=7)
        assert all(np.array_equal(x.table, y.table) for x, y in zip(a, b[:10]))

    def test_requires_product_base(self):
        with pytest.raises(ContractError):
            sample_near_independent(JointDistribution([[0.4, 0.1], [0.1, 0.4]]), 0.1, 5)

    def test_pinsker(self):
        for s in sample_near_independent(product_joint([0.2, 0.3, 0.5], [0.7, 0.3]), 0.2, 1000, seed=2):
            base = product_joint([0.2, 0.3, 0.5], [0.7, 0.3])
            assert total_variation(s, base) <= math.sqrt(kl_joint(s, base) / 2) + 1e-15


def test_sweep_report_round_trip(tmp_path):
    rows = sweep(2, 2, [0.2, 0.1, 0.05], trials=300, seed=0)
    assert [r["epsilon"] for r in rows] == [0.2, 0.1, 0.05]
    for r in rows:
        assert r["pinsker_pass_rate"] == 1.0
        assert r["leading_term"] == theorem_bound(r["epsilon"])
        assert r["max_I"] >= r["mean_I"] >= 0
    path = tmp_path / "bound_report.csv"
    write_report(rows, path)
    assert read_report(path) == rows
