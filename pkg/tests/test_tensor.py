import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ticert.chain import ReversibleChain, dirichlet_form, fisher_information, relative_entropy
from ticert.errors import BudgetExceeded, DimensionMismatch, IndexOutOfRange, InvariantViolation
from ticert.fixtures import load_fixture, random_reversible_chain
from ticert.spectral import fk_lograte, fk_lograte_product
from ticert.tensor import (
    Functional,
    ProductChain,
    Variant,
    chain_rule_decomposition,
    empirical_measure,
    empirical_measures,
    fisher_information_product,
    gibbs_value,
    leave_one_out,
    product_measure,
    relative_entropy_product,
    rho_conjugate,
    sequential,
    tensorize,
    tensorize_gradient,
)


def dense_fisher(pc, nu):
    # oracle: Dirichlet form of sqrt(dnu/dmu^n) for the dense product generator
    pi = pc.pi
    dense = ReversibleChain.from_rates(pc.generator(), mu=pi)
    return dirichlet_form(dense, np.sqrt(np.asarray(nu) / pi))


class TestProductChain:
    def test_encode_decode(self, birth_death):
        pc = ProductChain(birth_death, 3)
        for i in range(pc.size):
            assert pc.encode(pc.decode(i)) == i
        assert pc.encode((1, 0, 2)) == 9 + 2

    def test_index_errors(self, two_state):
        pc = ProductChain(two_state, 2)
        with pytest.raises(IndexOutOfRange):
            pc.encode((0, 2))
        with pytest.raises(IndexOutOfRange):
            pc.decode(4)
        with pytest.raises(DimensionMismatch):
            pc.encode((0,))
        with pytest.raises(ValueError):
            ProductChain(two_state, 0)

    def test_generator(self, cycle):
        pc = ProductChain(cycle, 2)
        q = pc.generator()
        np.testing.assert_allclose(q.sum(axis=1), 0.0, atol=1e-12)
        assert np.abs(pc.pi @ q).max() <= 1e-14
        assert pc.check_detailed_balance() <= 1e-12
        # a jump moves exactly one coordinate
        t = pc.tuples()
        moved = (t[:, None, :] != t[None, :, :]).sum(axis=2)
        assert np.all(q[moved > 1] == 0)

    def test_dense_budget(self, two_state):
        with pytest.raises(BudgetExceeded):
            ProductChain(two_state, 13).generator()


class TestEmpirical:
    def test_single(self):
        np.testing.assert_array_equal(empirical_measure((0, 2, 2, 1), 3).weights, [0.25, 0.25, 0.5])

    def test_errors(self):
        with pytest.raises(IndexOutOfRange):
            empirical_measure((0, 3), 3)
        with pytest.raises(DimensionMismatch):
            empirical_measure((), 3)

    def test_all_rows(self):
        emp = empirical_measures(3, 2)
        assert emp.shape == (9, 3)
        np.testing.assert_array_equal(emp[5], [0, 0.5, 0.5])
        np.testing.assert_allclose(emp.sum(axis=1), 1.0)


class TestFisherProduct:
    def test_dense_oracle(self, rng):
        for name in ("two_state", "birth_death3", "cycle4"):
            ch = load_fixture(name)
            for n in (1, 2, 3):
                pc = ProductChain(ch, n)
                nu = rng.dirichlet(np.ones(pc.size))
                assert fisher_information_product(pc, nu) == pytest.approx(dense_fisher(pc, nu), abs=1e-12)

    def test_chain_rule(self, rng):
        ch = random_reversible_chain(rng, 3)
        for n in (2, 3):
            pc = ProductChain(ch, n)
            for _ in range(10):
                nu = rng.dirichlet(np.full(pc.size, 0.5))
                assert chain_rule_decomposition(pc, nu) == pytest.approx(fisher_information_product(pc, nu), abs=1e-12)

    def test_product_measure(self, cycle, rng):
        base = rng.dirichlet(np.ones(4))
        for n in (1, 2, 3):
            pc = ProductChain(cycle, n)
            assert fisher_information_product(pc, product_measure(base, n)) == pytest.approx(
                n * fisher_information(cycle, base), abs=1e-12)

    def test_size_checked(self, two_state):
        with pytest.raises(DimensionMismatch):
            fisher_information_product(ProductChain(two_state, 2), np.full(3, 1 / 3))


class TestConditionals:
    def test_zero_marginal_uses_mu(self):
        mu = np.array([0.3, 0.7])
        arr = np.array([[0.5, 0.5], [0.0, 0.0]])
        m, c = leave_one_out(arr, 1, mu)
        np.testing.assert_allclose(m, [1.0, 0.0])
        np.testing.assert_allclose(c[1], mu)

    def test_sequential_first_is_marginal(self, rng):
        arr = rng.dirichlet(np.ones(9)).reshape(3, 3)
        m, c = sequential(arr, 0, np.full(3, 1 / 3))
        np.testing.assert_allclose(np.asarray(m).reshape(-1) @ c, arr.sum(axis=1), atol=1e-15)


class TestTensorize:
    def test_unordered_fisher_is_product_fisher(self, birth_death, rng):
        for n in (1, 2, 3):
            nu = rng.dirichlet(np.ones(3**n))
            pc = ProductChain(birth_death, n)
            assert tensorize("fisher", "unordered", n, nu, chain=birth_death) == pytest.approx(
                fisher_information_product(pc, nu), abs=1e-12)

    def test_ordered_entropy_is_relative_entropy(self, rng):
        mu = rng.dirichlet(np.ones(3))
        for n in (1, 2, 3):
            nu = rng.dirichlet(np.ones(3**n))
            val = tensorize(Functional.entropy(mu), Variant.ORDERED, n, nu)
            assert val == pytest.approx(relative_entropy(nu, product_measure(mu, n)), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.sampled_from([2, 3]))
    def test_ordered_below_unordered(self, seed, n):
        rng = np.random.default_rng(seed)
        ch = random_reversible_chain(rng, 3)
        nu = rng.dirichlet(np.full(3**n, 0.6))
        for func in (Functional.fisher(ch), Functional.entropy(ch.pi)):
            assert tensorize(func, Variant.ORDERED, n, nu) <= tensorize(func, Variant.UNORDERED, n, nu) + 1e-10

    def test_product_measure_gives_n_alpha(self, cycle, rng):
        base = rng.dirichlet(np.ones(4))
        fi = Functional.fisher(cycle)
        for variant in Variant:
            assert tensorize(fi, variant, 2, product_measure(base, 2)) == pytest.approx(
                2 * fisher_information(cycle, base), abs=1e-12)

    def test_gradient_matches_differences(self, birth_death, rng):
        nu = rng.dirichlet(np.full(9, 3.0))
        eps = 1e-6
        for func in (Functional.fisher(birth_death), Functional.entropy(birth_death.pi)):
            for variant in Variant:
                g = tensorize_gradient(func, variant, 2, nu)
                num = [(tensorize(func, variant, 2, nu + eps * e) - tensorize(func, variant, 2, nu - eps * e)) / (2 * eps)
                       for e in np.eye(9)]
                np.testing.assert_allclose(g, num, atol=1e-6)

    def test_tag_needs_chain(self):
        with pytest.raises(ValueError):
            tensorize("fisher", Variant.ORDERED, 1, [0.5, 0.5])

    def test_size_checked(self, two_state):
        with pytest.raises(DimensionMismatch):
            tensorize("entropy", Variant.ORDERED, 2, [0.5, 0.5], chain=two_state)

    def test_custom(self):
        mu = np.array([0.5, 0.5])
        quad = Functional.custom(mu, lambda v: float(np.sum((v - mu) ** 2)), lambda v: 2 * (v - mu))
        assert tensorize(quad, Variant.ORDERED, 1, [1.0, 0.0]) == pytest.approx(0.5)
        with pytest.raises(InvariantViolation):
            Functional.custom(mu, lambda v: np.inf, lambda v: v)


class TestConjugate:
    def test_n1_is_lograte(self, birth_death, rng):
        f = rng.normal(size=3)
        for variant in Variant:
            val = rho_conjugate("fisher", variant, 1, f, chain=birth_death)
            assert val == pytest.approx(fk_lograte(birth_death, f), abs=1e-8)

    def test_unordered_fisher_is_product_lograte(self, two_state, rng):
        f = rng.normal(size=8)
        assert rho_conjugate("fisher", "unordered", 3, f, chain=two_state) == pytest.approx(
            fk_lograte_product(two_state, 3, f), abs=1e-7)

    def test_ordered_dominates(self, two_state, rng):
        f = rng.normal(size=4)
        r = rho_conjugate("fisher", Variant.UNORDERED, 2, f, chain=two_state)
        rh = rho_conjugate("fisher", Variant.ORDERED, 2, f, chain=two_state)
        assert rh >= r - 1e-10

    def test_gibbs(self, birth_death, rng):
        for n in (1, 2):
            f = rng.uniform(-2, 2, 3**n)
            res = rho_conjugate("entropy", Variant.ORDERED, n, f, chain=birth_death, full=True)
            assert res.method == "ascent"
            assert res.value == pytest.approx(gibbs_value(birth_death.pi, n, f), abs=1e-8)

    def test_large_products(self, two_state, rng):
        f = rng.normal(size=512)
        res = rho_conjugate("entropy", Variant.ORDERED, 9, f, chain=two_state, full=True)
        assert res.method == "log-sum-exp"
        res = rho_conjugate("fisher", Variant.UNORDERED, 9, f, chain=two_state, full=True)
        assert res.method == "eigensolve"
        with pytest.raises(BudgetExceeded):
            rho_conjugate("fisher", Variant.ORDERED, 9, f, chain=two_state)

    def test_size_checked(self, two_state):
        with pytest.raises(DimensionMismatch):
            rho_conjugate("fisher", Variant.ORDERED, 2, [0.0, 1.0], chain=two_state)


def test_relative_entropy_product_additive(rng):
    mu, nu = rng.dirichlet(np.ones(3), size=2)
    assert relative_entropy_product(product_measure(nu, 3), mu, 3) == pytest.approx(
        3 * relative_entropy(nu, mu), abs=1e-12)
