import math

import numpy as np
import pytest
from scipy.special import logsumexp

from ticert.chain import fisher_information, relative_entropy
from ticert.errors import InvariantViolation
from ticert.sanov import (
    LaplaceFunctional,
    builtin_functional,
    clipped_w2,
    convergence_experiment,
    laplace_lhs,
    laplace_rhs,
    lattice_values,
    linear,
    lower_bound_gap,
    quadratic,
    sanov_lhs,
    sanov_rhs,
    zero_functional,
)
from ticert.spectral import fk_lograte
from ticert.tensor import empirical_measures
from ticert.transport import wasserstein_dist

GRID = np.linspace(0.0, 1.0, 20_001)


def grid_sup(F, rate):
    # 1-d oracle on the two-point simplex
    return max(F(np.array([p, 1 - p])) - rate(np.array([p, 1 - p])) for p in GRID)


class TestFunctionals:
    def test_bounds_required(self):
        with pytest.raises(InvariantViolation):
            LaplaceFunctional("bad", lambda nu: 0.0, (0.0, math.inf))

    def test_bounds_enforced(self):
        F = LaplaceFunctional("liar", lambda nu: 5.0, (0.0, 1.0))
        with pytest.raises(InvariantViolation):
            F.rows(np.array([[0.5, 0.5]]))

    def test_quadratic_bounds(self):
        assert quadratic([1.0, 3.0]).bounds == (1.0, 9.0)
        assert quadratic([-1.0, 2.0]).bounds == (0.0, 4.0)

    def test_clipped(self, two_state):
        F = clipped_w2(two_state.space.dist, two_state.pi, 0.3)
        assert F([1.0, 0.0]) == 0.3
        assert F([0.55, 0.45]) == pytest.approx(math.sqrt(0.05))
        with pytest.raises(ValueError):
            clipped_w2(two_state.space.dist, two_state.pi, 0.0)

    def test_builtin(self, birth_death):
        np.testing.assert_array_equal(builtin_functional("linear", birth_death).grad(np.ones(3) / 3), [0, 2, 4])
        assert builtin_functional("zero", birth_death)([1, 0, 0]) == 0.0
        with pytest.raises(ValueError):
            builtin_functional("cubic", birth_death)

    def test_lattice_values(self, birth_death):
        F = quadratic([0.0, 1.0, 3.0])
        direct = [F(m) for m in empirical_measures(3, 3)]
        np.testing.assert_allclose(lattice_values(F, 3, 3), direct, atol=1e-15)


class TestLaplace:
    def test_linear_exact_for_every_n(self, birth_death):
        F = linear([0.0, 1.0, -2.0])
        lam = fk_lograte(birth_death, [0.0, 1.0, -2.0])
        for n in (1, 2, 3, 4):
            assert laplace_lhs(birth_death, F, n) == pytest.approx(lam, abs=1e-8)
        assert laplace_rhs(birth_death, F)[0] == pytest.approx(lam, abs=1e-8)

    def test_zero(self, two_state):
        assert laplace_lhs(two_state, zero_functional(), 3) == pytest.approx(0.0, abs=1e-10)
        assert laplace_rhs(two_state, zero_functional())[0] == pytest.approx(0.0, abs=1e-12)

    def test_quadratic_rhs_grid(self, two_state):
        F = quadratic([0.0, 2.0])
        val, arg = laplace_rhs(two_state, F)
        assert val == pytest.approx(grid_sup(F, lambda v: fisher_information(two_state, v)), abs=1e-6)
        assert F(arg.weights) - fisher_information(two_state, arg.weights) == pytest.approx(val, abs=1e-12)

    def test_clipped_rhs_grid(self, two_state):
        F = builtin_functional("clipw2", two_state)
        val, _ = laplace_rhs(two_state, F)
        assert val == pytest.approx(grid_sup(F, lambda v: fisher_information(two_state, v)), abs=1e-6)

    def test_lower_bound_mechanism(self, two_state, rng):
        for kind in ("quadratic", "clipw2"):
            F = builtin_functional(kind, two_state)
            for n in (1, 2, 4):
                lhs = laplace_lhs(two_state, F, n)
                for nu in rng.dirichlet(np.ones(2), size=20):
                    assert lower_bound_gap(two_state, F, n, nu, lhs=lhs) >= -1e-10

    def test_gap_shrinks(self, two_state):
        exp = convergence_experiment(two_state, quadratic([0.0, 2.0]), [2, 4, 6])
        g = np.abs(exp.gaps)
        assert g[2] < g[0]
        assert exp.gap_shrinks()
        assert exp.lower_trend_ok()

    def test_csv_without_timing(self, two_state, tmp_path):
        exp = convergence_experiment(two_state, linear([0.0, 1.0]), [1, 2])
        exp.to_csv(tmp_path / "a.csv")
        lines = (tmp_path / "a.csv").read_text().splitlines()
        assert lines[0] == "n,lhs,rhs,gap,wall_time_ms"
        assert all(line.endswith(",0") for line in lines[1:])

    def test_bad_rate(self, two_state):
        with pytest.raises(ValueError):
            convergence_experiment(two_state, linear([0.0, 1.0]), [1], rate="other")


class TestSanov:
    def test_linear_is_gibbs(self, birth_death):
        f = np.array([0.5, -1.0, 2.0])
        F = linear(f)
        gibbs = float(logsumexp(f, b=birth_death.pi))
        for n in (1, 2, 3):
            assert sanov_lhs(birth_death.pi, F, n) == pytest.approx(gibbs, abs=1e-12)
        assert sanov_rhs(birth_death.pi, F)[0] == pytest.approx(gibbs, abs=1e-9)

    def test_quadratic_grid(self, two_state):
        F = quadratic([0.0, 2.0])
        val, _ = sanov_rhs(two_state.pi, F)
        assert val == pytest.approx(grid_sup(F, lambda v: relative_entropy(v, two_state.pi)), abs=1e-6)

    def test_binomial_oracle(self, two_state):
        # with F(nu) = nu_1^2 the left side is a binomial sum
        F = quadratic([0.0, 1.0])
        n = 7
        k = np.arange(n + 1)
        logw = np.array([math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1) for i in k]) - n * math.log(2)
        expected = float(logsumexp(logw + n * (k / n) ** 2)) / n
        assert sanov_lhs(two_state.pi, F, n) == pytest.approx(expected, abs=1e-12)

    def test_converges(self, two_state):
        exp = convergence_experiment(two_state, quadratic([0.0, 2.0]), [1, 3, 6], rate="entropy")
        assert exp.gap_shrinks()


def test_clipped_uses_w2(two_state):
    nu = np.array([0.8, 0.2])
    F = clipped_w2(two_state.space.dist, two_state.pi, 10.0)
    assert F(nu) == pytest.approx(wasserstein_dist(two_state.space.dist, 2, nu, two_state.pi)[0])
