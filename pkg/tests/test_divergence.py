import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from srot.core import DiscreteMeasure, cost_matrix
from srot.divergence import (divergence, eot_functional, shifted, sinkhorn_divergence, srot_divergence,
                             srot_functional)
from srot.exact import solve_exact
from srot.sinkhorn import SolverConfig
from srot.sliced import SlicedConfig

SLICED = SlicedConfig(projections=20)


def pair(seed, n=None, m=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(4, 12))
    m = m or int(rng.integers(4, 12))
    return (DiscreteMeasure.uniform(rng.normal(size=(n, 2))),
            DiscreteMeasure.uniform(rng.normal(size=(m, 2)) + [0.5, 0.0]))


class TestIdentity:
    @pytest.mark.parametrize("kind", ["srot", "sinkhorn"])
    @pytest.mark.parametrize("eps", [0.01, 0.1])
    def test_self_divergence_vanishes(self, kind, eps):
        mu, _ = pair(1)
        res = divergence(kind, mu, mu, SolverConfig(epsilon=eps), SLICED)
        assert abs(res.value) <= 1e-8

    def test_distinct_pair_is_positive(self):
        mu, nu = pair(2)
        assert srot_divergence(mu, nu, SLICED, SolverConfig(epsilon=0.1)).value > 0


class TestSymmetry:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([0.01, 0.1]))
    def test_srot_swap(self, seed, eps):
        mu, nu = pair(seed)
        cfg = SolverConfig(epsilon=eps)
        sl = SlicedConfig(projections=20, seed=seed % 1000)
        assert srot_divergence(mu, nu, sl, cfg).value == srot_divergence(nu, mu, sl, cfg).value

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**31))
    def test_sinkhorn_swap(self, seed):
        mu, nu = pair(seed)
        cfg = SolverConfig(epsilon=0.1)
        assert abs(sinkhorn_divergence(mu, nu, cfg).value - sinkhorn_divergence(nu, mu, cfg).value) <= 1e-10


class TestStructure:
    def test_decomposition_is_exact(self):
        mu, nu = pair(3)
        res = srot_divergence(mu, nu, SLICED, SolverConfig(epsilon=0.1))
        assert res.value == res.cross - 0.5 * (res.self_source + res.self_target)

    def test_point_masses(self):
        # One atom each: every coupling is the trivial one, so OT_eps = C and the self terms vanish.
        x = DiscreteMeasure.uniform([[0.0, 0.0]])
        y = DiscreteMeasure.uniform([[1.0, 0.0]])
        cfg = SolverConfig(epsilon=0.1)
        res = sinkhorn_divergence(x, y, cfg)
        recomputed = (eot_functional(x, y, cost_matrix(x, y), cfg)
                      - 0.5 * eot_functional(x, x, cost_matrix(x, x), cfg)
                      - 0.5 * eot_functional(y, y, cost_matrix(y, y), cfg))
        assert res.value > 0
        assert res.value == pytest.approx(recomputed, abs=1e-15)
        assert res.value == pytest.approx(1.0, abs=1e-12)

    def test_unknown_kind(self):
        mu, nu = pair(4)
        with pytest.raises(ValueError):
            divergence("mmd", mu, nu, SolverConfig())


class TestFunctional:
    def test_zero_cost(self):
        mu, nu = pair(5)
        C = np.zeros((mu.n, nu.n))
        assert srot_functional(mu, nu, C, SLICED, SolverConfig(epsilon=0.1)) == pytest.approx(0.0, abs=1e-12)

    def test_small_epsilon_approaches_exact(self):
        mu, nu = pair(6, 20, 20)
        C = cost_matrix(mu, nu)
        exact = solve_exact(C, mu, nu).cost
        val = srot_functional(mu, nu, C, SlicedConfig(), SolverConfig(epsilon=1e-4, max_iter=100_000, tol=1e-10))
        assert abs(val - exact) <= 1e-3

    def test_monotone_in_epsilon(self):
        mu, nu = pair(7)
        C = cost_matrix(mu, nu)
        vals = [srot_functional(mu, nu, C, SLICED, SolverConfig(epsilon=e, max_iter=50_000, tol=1e-10))
                for e in (1e-3, 1e-2, 1e-1)]
        assert vals[0] <= vals[1] + 1e-9 and vals[1] <= vals[2] + 1e-9


class TestShiftSequence:
    @pytest.mark.parametrize("kind", ["srot", "sinkhorn"])
    def test_decreases_to_zero(self, kind):
        mu, _ = pair(8, 15)
        vals = np.array([divergence(kind, shifted(mu, [1.0 / k, 0.0]), mu, SolverConfig(epsilon=0.1), SLICED).value
                         for k in range(1, 21)])
        assert np.all(np.diff(vals) <= 0.05 * vals[:-1])
        assert vals[-1] < 0.1 * vals[0]

    def test_translation_keeps_the_sliced_plan_diagonal(self):
        # Every projection order survives a translation, so the reference is the identity matching
        # and the divergence equals the shift length.
        mu, _ = pair(9, 12)
        for k in (1, 4, 10):
            val = srot_divergence(shifted(mu, [1.0 / k, 0.0]), mu, SLICED, SolverConfig(epsilon=0.1)).value
            assert val == pytest.approx(1.0 / k, rel=1e-6)
