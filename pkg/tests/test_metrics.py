from __future__ import annotations

from itertools import product

import numpy as np
import pytest

from oracles import arc_distance, dyadic_distance, hamming_distance, symmetric_difference_mc
from scaling_entropy.metrics import (
    Arc,
    Cylinder,
    IteratedMetric,
    LengthMismatch,
    Semimetric,
    admissibility_probe,
    arc_metric,
    constant_metric,
    cut_semimetric,
    distance_matrix,
    dyadic_metric,
    hamming_window_metric,
    indicator_semimetric,
    iterate,
    iterated_pairwise,
    lipschitz_probe,
    metric_axiom_check,
    rotation_average_closed_form,
    rotation_average_profile,
    semicontinuity_probe,
)
from scaling_entropy.systems import BitWord, SystemSpec, orbit, sample_invariant, sample_orbits

HALF = cut_semimetric([Arc(0.0, 0.5), Arc(0.5, 1.0)])


def w(s: str) -> BitWord:
    return BitWord.from_string(s)


# catalog examples ----------------------------------------------------------


def test_cut_examples():
    assert HALF(0.1, 0.3) == 0.0
    assert HALF(0.1, 0.7) == 1.0
    assert HALF(0.42, 0.42) == 0.0
    assert not HALF.is_metric


def test_cut_rejects_points_outside_partition():
    rho = cut_semimetric([Arc(0.0, 0.3), Arc(0.5, 1.0)])
    with pytest.raises(ValueError):
        rho(0.4, 0.1)


def test_indicator_examples():
    rho = indicator_semimetric(Arc(0.0, 0.5))
    assert rho(0.2, 0.9) == 1.0
    assert rho(0.6, 0.9) == 0.0
    assert rho(0.3, 0.3) == 0.0


def test_arc_examples():
    rho = arc_metric()
    assert rho(0.1, 0.9) == pytest.approx(0.2, abs=1e-15)
    assert rho(0.25, 0.75) == 0.5
    assert rho(0.3, 0.3) == 0.0


def test_dyadic_examples():
    rho = dyadic_metric()
    assert rho(w("0110"), w("0100")) == 0.125
    assert rho(w("0110"), w("0110")) == 0.0
    assert rho(w("1000"), w("0000")) == 0.5
    with pytest.raises(LengthMismatch):
        rho(w("010"), w("0100"))


def test_hamming_examples():
    rho = hamming_window_metric(4)
    assert rho(w("0110"), w("0101")) == 0.5
    assert rho(w("0110"), w("0110")) == 0.0
    assert rho(w("0000"), w("1111")) == 1.0
    with pytest.raises(LengthMismatch):
        rho(w("011"), w("010"))


def test_cylinder_cut_on_words():
    rho = cut_semimetric([Cylinder("0"), Cylinder("1")])
    assert rho(w("0110"), w("0011")) == 0.0
    assert rho(w("1110"), w("0011")) == 1.0


def test_catalog_matches_scalar_oracles():
    rng = np.random.default_rng(0)
    words = ["".join(rng.choice(["0", "1"], 12)) for _ in range(40)]
    dy, hm = dyadic_metric(), hamming_window_metric(7)
    for u, v in product(words[:20], words[20:]):
        assert dy(w(u), w(v)) == dyadic_distance(u, v)
        assert hm(w(u), w(v)) == pytest.approx(hamming_distance(u, v, 7), abs=1e-15)
    xs = rng.random(200)
    arc = arc_metric()
    for x, y in zip(xs[:100], xs[100:]):
        assert arc(x, y) == pytest.approx(arc_distance(x, y), abs=1e-15)


def test_normalized_rescales_to_unit_diameter():
    for rho in (arc_metric(), dyadic_metric(), hamming_window_metric(5), HALF):
        assert rho.normalized().diameter == pytest.approx(1.0)
    assert arc_metric().normalized()(0.25, 0.75) == 1.0


# iterated metrics ----------------------------------------------------------

ROT_QUARTER = SystemSpec.rotation(0.25, rational=True)


def test_iterate_hand_orbit_examples():
    assert iterate(HALF, ROT_QUARTER, 4, "average")(0.1, 0.4) == 0.5
    assert iterate(HALF, ROT_QUARTER, 4, "sup")(0.1, 0.4) == 1.0


@pytest.mark.parametrize("mode", ["average", "sup", "lp"])
def test_iterate_n1_equals_base(mode):
    sys_ = SystemSpec.pascal(depth=16)
    s = sample_invariant(sys_, 30, seed=2)
    for rho in (dyadic_metric(), hamming_window_metric(8)):
        it = iterate(rho, sys_, 1, mode, p=3.0)
        assert np.array_equal(it.evaluate(s.points[:15], s.points[15:]), rho.evaluate(s.points[:15], s.points[15:]))
    assert iterate(arc_metric(), ROT_QUARTER, 1, mode)(0.1, 0.7) == arc_metric()(0.1, 0.7)


def test_iterated_scalar_matches_hand_sum():
    sys_ = SystemSpec.rotation()
    for x, y in [(0.1, 0.33), (0.8, 0.05)]:
        xs, ys = orbit(sys_, x, 30), orbit(sys_, y, 30)
        d = [arc_distance(a, b) for a, b in zip(xs, ys)]
        assert iterate(arc_metric(), sys_, 30, "average")(x, y) == pytest.approx(np.mean(d), abs=1e-13)
        assert iterate(arc_metric(), sys_, 30, "sup")(x, y) == pytest.approx(max(d), abs=1e-13)
        assert iterate(arc_metric(), sys_, 30, "lp", 2.0)(x, y) == pytest.approx(
            np.sqrt(np.mean(np.square(d))), abs=1e-13)


CASES = [
    (HALF, SystemSpec.rotation()),
    (arc_metric(), SystemSpec.rotation()),
    (indicator_semimetric(Arc(0.2, 0.7)), SystemSpec.rotation()),
    (dyadic_metric(), SystemSpec.pascal()),
    (hamming_window_metric(6), SystemSpec.pascal()),
    (dyadic_metric().normalized(), SystemSpec.bernoulli_shift(depth=20)),
    (cut_semimetric([Cylinder("0"), Cylinder("1")]), SystemSpec.bernoulli_shift(depth=20)),
]


@pytest.mark.parametrize("rho, sys_", CASES, ids=lambda v: getattr(v, "name", ""))
def test_iterated_pairwise_matches_elementwise(rho, sys_):
    sample, states = sample_orbits(sys_, 40, seed=4, n=33)
    mats = dict(iterated_pairwise(rho, states, [1, 5, 33], ("average", "sup", "lp"), p=2.0))
    i, j = np.triu_indices(40, 1)
    for n, by_mode in mats.items():
        for mode, D in by_mode.items():
            it = IteratedMetric(rho, sys_, n, mode, 2.0)
            ref = it.evaluate(sample.points[i], sample.points[j])
            assert np.allclose(D[i, j], ref, atol=1e-12, rtol=0)
            assert np.allclose(D, D.T) and np.all(np.diag(D) == 0)


@pytest.mark.parametrize("rho", [arc_metric(), dyadic_metric(), hamming_window_metric(9)], ids=lambda r: r.name)
def test_compiled_kernels_match_numpy_loop(rho):
    sys_ = SystemSpec.rotation() if rho.domain == "circle" else SystemSpec.pascal()
    _, states = sample_orbits(sys_, 60, seed=9, n=20)
    plain = Semimetric(rho.evaluator, "plain", True)
    fast = dict(iterated_pairwise(rho, states, [3, 20], ("average", "sup", "lp"), 1.5))
    slow = dict(iterated_pairwise(plain, states, [3, 20], ("average", "sup", "lp"), 1.5))
    for n in fast:
        for mode in fast[n]:
            assert np.allclose(fast[n][mode], slow[n][mode], atol=1e-14, rtol=0)


@pytest.mark.parametrize("rho, sys_", CASES[:5], ids=lambda v: getattr(v, "name", ""))
def test_average_lp_sup_ordering(rho, sys_):
    sample, states = sample_orbits(sys_, 50, seed=5, n=64)
    for n, mats in iterated_pairwise(rho, states, [1, 8, 64], ("average", "sup", "lp"), p=2.0):
        assert np.all(mats["average"] <= mats["lp"] + 1e-12)
        assert np.all(mats["lp"] <= mats["sup"] + 1e-12)
        assert np.all(mats["sup"] <= rho.diameter + 1e-12)


def test_average_nearly_invariant_under_the_map():
    sys_ = SystemSpec.rotation()
    n = 50
    sample, states = sample_orbits(sys_, 30, seed=1, n=n + 1)
    it = IteratedMetric(HALF, sys_, n)
    i, j = np.triu_indices(30, 1)
    now = it.evaluate(states[0][i], states[0][j])
    later = it.evaluate(states[1][i], states[1][j])
    assert np.max(np.abs(now - later)) <= 2 * HALF.diameter / n


# closed form ---------------------------------------------------------------


@pytest.mark.parametrize("a, r, expected", [(0.5, 0.25, 0.5), (0.3, 0.5, 0.6), (0.4, 0.0, 0.0)])
def test_closed_form_examples(a, r, expected):
    assert rotation_average_closed_form(a, r) == pytest.approx(expected, abs=1e-15)
    if r:
        assert abs(symmetric_difference_mc(a, r) - expected) < 0.002


def test_closed_form_against_monte_carlo_grid():
    for a, r in [(0.5, 0.1), (0.2, 0.15), (0.7, 0.45), (0.35, 0.9)]:
        assert abs(rotation_average_closed_form(a, r) - symmetric_difference_mc(a, r, seed=3)) < 0.002


def test_closed_form_is_an_invariant_metric_profile():
    for a in (0.1, 0.5, 0.8):
        assert rotation_average_profile(a).check()["ok"] == 1.0


# probes --------------------------------------------------------------------


def test_axiom_check_clean_metrics():
    s = sample_invariant(SystemSpec.rotation(), 200, seed=3)
    assert metric_axiom_check(arc_metric(), s, 5000).total == 0
    ws = sample_invariant(SystemSpec.pascal(), 200, seed=3)
    assert metric_axiom_check(dyadic_metric(), ws, 5000).total == 0


def test_dyadic_is_ultrametric_on_all_triples():
    words = ["".join(bits) for bits in product("01", repeat=4)]
    for x, y, z in product(words, repeat=3):
        assert dyadic_distance(x, z) <= max(dyadic_distance(x, y), dyadic_distance(y, z))
        assert dyadic_metric()(w(x), w(z)) <= max(dyadic_metric()(w(x), w(y)), dyadic_metric()(w(y), w(z)))


def test_axiom_check_catches_broken_kernel():
    broken = Semimetric(lambda x, y: np.asarray(x) - y, "signed", is_metric=True)
    s = sample_invariant(SystemSpec.rotation(), 100, seed=0)
    rep = metric_axiom_check(broken, s, 1000)
    assert rep.symmetry > 0 and rep.nonnegativity > 0 and rep.witnesses


def test_admissibility_probe_examples():
    s = sample_invariant(SystemSpec.rotation(), 1000, seed=1)
    [row] = admissibility_probe(constant_metric(), s, [0.5])
    assert row.fraction == 0.0
    [row] = admissibility_probe(arc_metric(), s, [0.1])
    assert row.fraction == 1.0
    rows = admissibility_probe(arc_metric(), s, [0.5, 0.7])
    assert all(r.fraction == 1.0 and r.min_ball_mass == 1.0 for r in rows)
    with pytest.raises(ValueError):
        admissibility_probe(arc_metric(), sample_invariant(SystemSpec.rotation(), 50, seed=1), [0.1])


def test_semicontinuity_probe_examples():
    prof = semicontinuity_probe(arc_metric(), [0.0, 0.001, 0.01, 0.05, 0.25])
    assert prof.phi[0] == 0.0
    assert prof.inf_small == pytest.approx(0.001, abs=1e-9)
    ind = semicontinuity_probe(indicator_semimetric(Arc(0.0, 0.5)), [0.25], samples=1_000_000)
    assert abs(ind.phi[0] - 0.5) < 0.002


def test_lipschitz_probe_examples():
    rot = SystemSpec.rotation()
    s = sample_invariant(rot, 500, seed=0)
    rep = lipschitz_probe(arc_metric(), rot, s, 1000)
    assert rep.max_ratio == pytest.approx(1.0, abs=1e-9)
    ident = SystemSpec.rotation(0.0, rational=True)
    assert lipschitz_probe(arc_metric(), ident, s, 200).max_ratio == 1.0
    pas = SystemSpec.pascal()
    rep = lipschitz_probe(dyadic_metric(), pas, sample_invariant(pas, 2000, seed=1), 10_000)
    assert np.isfinite(rep.max_ratio) and rep.pairs_used > 9000
    assert rep.quantiles[0.5] <= rep.quantiles[1.0] == rep.max_ratio


def test_distance_matrix_uses_visible_word_for_shift_samples():
    sys_ = SystemSpec.bernoulli_shift(depth=10)
    s = sample_invariant(sys_, 20, seed=0, horizon=5)
    D = distance_matrix(hamming_window_metric(10), s)
    u = ["".join(map(str, row[:10])) for row in s.points]
    assert D[3, 7] == pytest.approx(hamming_distance(u[3], u[7], 10))


def test_admissibility_sample_size_sensitivity_is_reported():
    """Reported quantity: minimal eps-ball mass of the arc metric as m grows."""
    masses = {}
    for m in (100, 400, 1600):
        [row] = admissibility_probe(arc_metric(), sample_invariant(SystemSpec.rotation(), m, seed=0), [0.05])
        masses[m] = row.min_ball_mass
    print("min ball mass at eps=0.05:", masses)
    assert all(0.0 < v <= 1.0 for v in masses.values())
