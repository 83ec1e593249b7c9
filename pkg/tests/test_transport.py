from __future__ import annotations

import math

import numpy as np
import pytest

from oracles import shannon, transport_spanning_trees
from scaling_entropy.metrics import Arc, IteratedMetric, arc_metric, cut_semimetric, distance_matrix
from scaling_entropy.systems import SystemSpec, sample_invariant
from scaling_entropy.transport import (
    DiscreteMeasure,
    InvalidMeasure,
    NotACover,
    SizeCap,
    discrete_entropy,
    kantorovich,
    lemma3_plan,
    solve_transport,
    transport_bruteforce,
)
from scaling_entropy.entropy import greedy_net

ARC = arc_metric()


def test_entropy_examples():
    assert discrete_entropy(DiscreteMeasure.uniform(np.arange(4.0))) == pytest.approx(math.log(4))
    assert discrete_entropy(DiscreteMeasure.dirac(0.3)) == 0.0
    nu = DiscreteMeasure(np.array([0.1, 0.2, 0.3]), [0.5, 0.25, 0.25])
    assert discrete_entropy(nu) == pytest.approx(1.5 * math.log(2))


def test_entropy_merges_duplicates():
    nu = DiscreteMeasure(np.array([0.1, 0.1, 0.3, 0.3]), [0.25] * 4)
    assert discrete_entropy(nu) == pytest.approx(math.log(2))
    assert discrete_entropy(DiscreteMeasure(np.array([0.1, 0.2]), [1.0, 0.0])) == 0.0


def test_invalid_measures():
    with pytest.raises(InvalidMeasure):
        DiscreteMeasure(np.array([0.1, 0.2]), [0.5, 0.6])
    with pytest.raises(InvalidMeasure):
        DiscreteMeasure(np.array([0.1, 0.2]), [1.5, -0.5])
    with pytest.raises(InvalidMeasure):
        DiscreteMeasure(np.array([0.1, 0.2]), [1.0])


def test_kantorovich_examples():
    val, _ = kantorovich(DiscreteMeasure.dirac(0.1), DiscreteMeasure.dirac(0.7), ARC)
    assert val == pytest.approx(0.4)
    mu = DiscreteMeasure(np.array([0.1, 0.5, 0.8]), [0.2, 0.3, 0.5])
    assert kantorovich(mu, mu, ARC)[0] == pytest.approx(0.0, abs=1e-12)
    val, plan = kantorovich(DiscreteMeasure.uniform(np.array([0.0, 0.5])), DiscreteMeasure.dirac(0.0), ARC)
    assert val == pytest.approx(0.25)
    assert plan.coupling.shape == (2, 1)


def test_kantorovich_size_cap():
    mu = DiscreteMeasure.uniform(np.linspace(0, 0.9, 10))
    with pytest.raises(SizeCap):
        kantorovich(mu, mu, ARC, cap=15)


def _random_measure(rng, k):
    return DiscreteMeasure(rng.random(k), rng.dirichlet(np.ones(k)))


def test_solver_matches_tree_enumeration():
    rng = np.random.default_rng(11)
    for _ in range(150):
        a, b = rng.dirichlet(np.ones(rng.integers(1, 5))), rng.dirichlet(np.ones(rng.integers(1, 5)))
        C = rng.random((len(a), len(b)))
        plan = solve_transport(a, b, C)
        ref = transport_spanning_trees(a, b, C)
        assert plan.cost == pytest.approx(ref, abs=1e-9)
        assert transport_bruteforce(a, b, C) == pytest.approx(ref, abs=1e-9)
        assert plan.dual_gap <= 1e-9
        assert plan.marginal_error(a, b) <= 1e-9


def test_kantorovich_symmetry_and_identity():
    rng = np.random.default_rng(12)
    for _ in range(30):
        mu, nu = _random_measure(rng, 6), _random_measure(rng, 5)
        assert kantorovich(mu, nu, ARC)[0] == pytest.approx(kantorovich(nu, mu, ARC)[0], abs=1e-9)
        split = DiscreteMeasure(np.concatenate([mu.atoms, mu.atoms]), np.concatenate([mu.weights, mu.weights]) / 2)
        assert kantorovich(mu, split, ARC)[0] == pytest.approx(0.0, abs=1e-9)
        w = mu.weights.copy()
        w[0], w[1] = w[0] + 0.05 * w[1], 0.95 * w[1]
        assert kantorovich(mu, DiscreteMeasure(mu.atoms, w), ARC)[0] > 1e-6

def test_kantorovich_triangle_inequality():
    rng = np.random.default_rng(13)
    for _ in range(40):
        a, b, c = (_random_measure(rng, int(rng.integers(1, 11))) for _ in range(3))
        ab, bc, ac = (kantorovich(x, y, ARC)[0] for x, y in ((a, b), (b, c), (a, c)))
        assert ac <= ab + bc + 1e-9


def test_kantorovich_with_iterated_metric():
    sys_ = SystemSpec.rotation()
    rho = IteratedMetric(cut_semimetric([Arc(0, 0.5), Arc(0.5, 1)]), sys_, 8)
    mu = DiscreteMeasure.dirac(0.1)
    nu = DiscreteMeasure.dirac(0.45)
    assert kantorovich(mu, nu, rho)[0] == pytest.approx(rho(0.1, 0.45))


# net transport -------------------------------------------------------------


def test_net_plan_full_net_costs_nothing():
    s = sample_invariant(SystemSpec.rotation(), 12, seed=1)
    nu, plan, bound = lemma3_plan(s, list(range(12)), 0.1, ARC)
    assert plan.cost == 0.0
    assert np.allclose(nu.weights[:12], 1 / 12) and nu.weights[12] == 0.0
    assert discrete_entropy(nu) == pytest.approx(math.log(12))
    assert bound == pytest.approx(0.1 * 0.9 + 0.1)


def test_net_plan_two_point_example():
    from scaling_entropy.systems import EmpiricalSample

    s = EmpiricalSample(np.array([0.0, 0.5]), 0, SystemSpec.rotation())
    nu, plan, bound = lemma3_plan(s, [0], 0.6, ARC)
    assert plan.cost == pytest.approx(0.25)
    assert bound == pytest.approx(0.6 * 0.4 + 0.6)
    assert plan.cost < 1.2


def test_net_plan_random_cover_respects_bound():
    sys_ = SystemSpec.rotation()
    rho = IteratedMetric(cut_semimetric([Arc(0, 0.5), Arc(0.5, 1)]), sys_, 16)
    s = sample_invariant(sys_, 400, seed=7)
    D = distance_matrix(rho, s)
    net = greedy_net(D, 0.1)
    nu, plan, bound = lemma3_plan(s, net.centers, 0.1, rho, distances=D)
    assert net.covered_mass > 0.9
    assert bound < 0.2 and plan.cost <= bound
    assert plan.marginal_error(s.weights, nu.weights) <= 1e-12
    assert discrete_entropy(nu) <= math.log(net.k + 1) + 1e-12
    # the explicit plan can only overestimate the optimal cost
    assert kantorovich(DiscreteMeasure.empirical(s), nu, rho)[0] <= plan.cost + 1e-9


def test_net_plan_rejects_a_non_cover():
    s = sample_invariant(SystemSpec.rotation(), 50, seed=2)
    with pytest.raises(NotACover):
        lemma3_plan(s, [0], 0.05, ARC)
    with pytest.raises(NotACover):
        lemma3_plan(s, [], 0.05, ARC)


def test_shannon_oracle_agrees():
    rng = np.random.default_rng(0)
    w = rng.dirichlet(np.ones(9))
    assert discrete_entropy(DiscreteMeasure(np.arange(9.0), w)) == pytest.approx(shannon(w))
