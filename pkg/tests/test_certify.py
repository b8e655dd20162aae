import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ticert.certify import (
    RatioProblem,
    best_constant,
    check_w1_dual,
    check_w1h_dual,
    diverges,
    dual_ledger,
    lipschitz_probes,
    mcshane,
    spread,
    unit_direction,
    w1i_limit_ratio,
)
from ticert.chain import fisher_information, relative_entropy
from ticert.errors import NotLipschitz
from ticert.fixtures import load_fixture
from ticert.spectral import fk_lograte_product
from ticert.tensor import ProductChain
from ticert.transport import ProductMetric, wasserstein


def closed_slack(lam, C):
    # f = (0, 1) on the symmetric two-state chain
    return lam / 2 + C * lam**2 / 4 - ((lam - 2) + math.sqrt(lam * lam + 4)) / 2


@pytest.fixture(scope="module")
def two_state_w1i():
    return best_constant(load_fixture("two_state"), "W1I", probes=100)


class TestTwoState:
    def test_grid_oracle(self, two_state_w1i):
        p = np.linspace(0, 1, 100_001)
        p = p[np.abs(p - 0.5) > 1e-9]
        grid = np.max((p - 0.5) ** 2 / (1 - 2 * np.sqrt(p * (1 - p))))
        assert two_state_w1i.constant_estimate == pytest.approx(0.5, abs=1e-4)
        assert two_state_w1i.constant_lower <= two_state_w1i.constant_estimate
        assert two_state_w1i.constant_estimate == pytest.approx(grid, abs=1e-4)

    def test_ledger_nonnegative(self, two_state_w1i):
        assert two_state_w1i.min_slack >= -1e-8
        assert len(two_state_w1i.dual_ledger) == 100

    def test_limit_ratio(self, two_state):
        assert w1i_limit_ratio(two_state, [0.3, -0.3]) == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("lam", [-10.0, -2.0, -0.1, 0.5, 3.0, 10.0])
    def test_dual_closed_form(self, two_state, lam):
        assert check_w1_dual(two_state, 0.5, [0.0, 1.0], lam) == pytest.approx(closed_slack(lam, 0.5), abs=1e-12)
        assert closed_slack(lam, 0.5) >= 0

    def test_smaller_constant_fails(self, two_state):
        assert check_w1_dual(two_state, 0.45, [0.0, 1.0], 0.5) < 0

    def test_not_lipschitz(self, two_state):
        with pytest.raises(NotLipschitz):
            check_w1_dual(two_state, 0.5, [0.0, 2.0], 1.0)

    def test_w1h_hoeffding(self, two_state):
        # log E e^{lam f} <= lam E f + lam^2/8 for f with range 1
        for lam in np.linspace(-10, 10, 41):
            assert check_w1h_dual(two_state.pi, 0.5, [0.0, 1.0], lam) >= -1e-12
        assert check_w1h_dual(two_state.pi, 0.4, [0.0, 1.0], 1.0) < 0

    def test_w1h_constant(self, two_state):
        cert = best_constant(two_state, "W1H", probes=50)
        assert cert.constant_estimate == pytest.approx(0.5, abs=1e-4)
        assert cert.min_slack >= -1e-8

    def test_w2i_diverges(self, two_state):
        cert = best_constant(two_state, "W2I", probes=0)
        assert cert.diverged
        assert math.isinf(cert.constant_estimate)
        assert cert.to_dict()["constant_estimate"] is None
        assert cert.dual_ledger == []


class TestLargerFixtures:
    @pytest.mark.parametrize("name", ["birth_death3", "cycle4"])
    def test_dominates_sampled_ratios(self, name):
        ch = load_fixture(name)
        cert = best_constant(ch, "W1I", probes=50)
        rng = np.random.default_rng(0)
        for _ in range(200):
            nu = rng.dirichlet(np.full(ch.size, 0.7))
            r = wasserstein(ch.space, 1, nu, ch.pi)[0] ** 2 / fisher_information(ch, nu)
            assert r <= cert.constant_estimate + 1e-9
        # exact near-mu limits are lower bounds too
        for _ in range(50):
            h = rng.normal(size=ch.size)
            h -= h.mean()
            assert w1i_limit_ratio(ch, h) <= cert.constant_estimate + 1e-6
        assert cert.min_slack >= -1e-8

    def test_w1h_sampled(self, cycle):
        cert = best_constant(cycle, "W1H", probes=0)
        rng = np.random.default_rng(1)
        for nu in rng.dirichlet(np.ones(4), size=200):
            r = wasserstein(cycle.space, 1, nu, cycle.pi)[0] ** 2 / relative_entropy(nu, cycle.pi)
            assert r <= cert.constant_estimate + 1e-9


class TestRatioProblem:
    def test_matches_direct(self, birth_death, rng):
        nu = rng.dirichlet(np.ones(3))
        for name, p, alpha in (("W1I", 1, fisher_information(birth_death, nu)),
                               ("W2H", 2, relative_entropy(nu, birth_death.pi))):
            prob = RatioProblem(birth_death, name, 1, "l2", None)
            direct = wasserstein(birth_death.space, p, nu, birth_death.pi)[0] ** 2 / alpha
            assert prob.ratio(nu) == pytest.approx(direct, rel=1e-10)

    def test_log_ratio_gradient(self, cycle, rng):
        prob = RatioProblem(cycle, "W1I", 1, "l2", None)
        nu = rng.dirichlet(np.full(4, 4.0))
        val, g = prob.log_ratio_and_grad(nu)
        h = rng.normal(size=4)
        h -= h.mean()
        eps = 1e-6
        num = (prob.log_ratio_and_grad(nu + eps * h)[0] - prob.log_ratio_and_grad(nu - eps * h)[0]) / (2 * eps)
        assert float(g @ h) == pytest.approx(num, abs=1e-5)

    def test_unknown_name(self, two_state):
        with pytest.raises(ValueError):
            RatioProblem(two_state, "W3I", 1, "l2", None)


class TestHelpers:
    def test_diverges(self):
        assert diverges([1, 10, 100, 1000, 10000])
        assert not diverges([1, 1.1, 1.2, 1.3])
        assert not diverges([1, 10, 100, 150])
        assert not diverges([1, 10])

    def test_unit_direction(self):
        pi = np.array([0.25, 0.75])
        h, reach = unit_direction([1.0, 0.0], pi)
        np.testing.assert_allclose(h, [0.5, -0.5])
        assert reach == pytest.approx(1.5)
        assert unit_direction(pi, pi) == (None, 0.0)

    def test_spread(self):
        pi = np.full(3, 1 / 3)
        out = spread([1.0, 0.0, 0.0], pi, 0.2)
        assert np.abs(out - pi).sum() == pytest.approx(0.2)
        far = spread([1.0, 0.0, 0.0], pi, 5.0)
        assert far.min() >= 0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_mcshane(self, seed):
        rng = np.random.default_rng(seed)
        pts = rng.normal(size=(6, 2))
        d = np.linalg.norm(pts[:, None] - pts[None, :], axis=2)
        v = rng.normal(size=6) * 3
        g = mcshane(v, d)
        assert np.all(g <= v + 1e-12)
        assert np.all(np.abs(g[:, None] - g[None, :]) <= d + 1e-12)
        np.testing.assert_allclose(mcshane(g, d), g, atol=1e-12)

    def test_probes_lipschitz(self, cycle):
        d = cycle.space.dist
        for f in lipschitz_probes(d, 50, seed=3):
            assert np.all(np.abs(f[:, None] - f[None, :]) <= d + 1e-12)


class TestProducts:
    def test_product_dual_uses_product_rate(self, two_state, rng):
        pc = ProductChain(two_state, 2)
        d = ProductMetric(two_state.space, 2, "l2").matrix()
        f = mcshane(rng.normal(size=4), d)
        lam = 1.7
        expected = lam * float(pc.pi @ f) + 0.6 * lam**2 / 4 - fk_lograte_product(two_state, 2, lam * f)
        assert check_w1_dual(pc, 0.6, f, lam) == pytest.approx(expected, abs=1e-10)

    def test_dense_ledger_matches_lanczos(self, cycle):
        led = dual_ledger(cycle, "I", 2, 1.2, probes=5, seed=4)
        for r in led:
            assert r.lhs == pytest.approx(fk_lograte_product(cycle, 2, r.lam * r.f), abs=1e-8)

    def test_n2_l1_at_most_twice(self, two_state):
        c1 = best_constant(two_state, "W1I", 1, probes=0).constant_estimate
        c2 = best_constant(two_state, "W1I", 2, mode="l1", probes=0).constant_estimate
        assert c2 <= 2 * c1 + 1e-6


def test_certificate_json(two_state_w1i):
    data = json.loads(two_state_w1i.to_json())
    assert data["name"] == "W1I"
    assert data["ledger_summary"]["min_slack"] == pytest.approx(two_state_w1i.min_slack)
    assert len(data["near_mu_probes"]) == 8
    assert data["witness"] == pytest.approx(list(two_state_w1i.witness))
