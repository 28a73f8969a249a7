import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hyperpot.geometry import Ball, Box, Ordering, RadiiSchedule
from hyperpot.models import ModelError, TimeEvolvedWRM, WrmParams
from hyperpot.resum import (
    Grader,
    HyperedgePotential,
    Variant,
    abs_sum_partial,
    boundary_term,
    chain_probe,
    density_gate,
    density_statistic,
    grade,
    hamiltonian_equivalence_check,
    hyperedge_potential_wrm,
    kappa_bound,
    kappa_modulus,
    packing_constant,
    radii_schedule_wrm,
    wrm_decay_constant,
    wrm_kappa_inputs,
    wrm_modulus,
)
from hyperpot.sampling import MINUS, PLUS, MarkedConfiguration, sample_marked_ppp
from hyperpot.vacuum import VacuumPotential, hamiltonian

PARAMS = WrmParams(0.3, 0.1, 0.5, 1.0)


def _config(rng, n, lo=-3.0, hi=3.0):
    return MarkedConfiguration(rng.uniform(lo, hi, (n, 2)), rng.choice([PLUS, MINUS], n))


def test_variant_parse():
    assert Variant.parse("ti") is Variant.TRANSLATION_INVARIANT
    assert Variant.parse(Variant.CYCLIC) is Variant.CYCLIC
    with pytest.raises(ValueError):
        Variant.parse("spiral")


def test_singletons_have_their_own_cell():
    pts = np.array([[0.0, 0.0], [0.3, 0.0], [5.0, 0.0]])
    cells = grade(pts, Ordering.CYCLIC, RadiiSchedule.linear(1.0))
    assert {(c.anchor, c.m) for c in cells if c.m == 1} == {(0, 1), (1, 1), (2, 1)}
    first = next(c for c in cells if c.anchor == 0 and c.m == 1)
    assert first.members == (0, 1)


@pytest.mark.parametrize("ordering", list(Ordering))
def test_grading_is_a_partition_of_subsets(rng, ordering):
    pts = rng.uniform(-2, 2, (6, 2))
    grader = Grader(ordering, RadiiSchedule.linear(0.7))
    cells = {(c.anchor, c.m): c for c in grader.grade(pts)}
    ranks = grader.ranks(pts)
    seen = 0
    for k in range(1, 7):
        for eta in itertools.combinations(range(6), k):
            key = grader.classify(pts, eta, ranks)
            assert key in cells
            members = cells[key].members
            assert members[0] == min(eta, key=ranks.__getitem__)
            assert max(eta, key=ranks.__getitem__) in members
            seen += 1
    assert seen == 63


def test_ties_in_the_ordering_are_rejected():
    grader = Grader(Ordering.CYCLIC, RadiiSchedule.linear(1.0))
    with pytest.raises(ValueError):
        grader.ranks(np.array([[1.0, 0.0], [1.0, 0.0]]))
    with pytest.raises(ValueError):
        grader.classify(np.zeros((1, 2)), [])


def test_schedule_values_and_condition():
    assert packing_constant(0.5, 2) == 16
    sched = radii_schedule_wrm(PARAMS)
    assert list(sched.radii[:4]) == [5.0, 6.0, 7.0, 8.0]
    assert radii_schedule_wrm(PARAMS, K=8, c=0.5).radii[0] == 4.0
    c, K = wrm_decay_constant(PARAMS), 16
    radii = list(sched.radii)
    assert all(b > a for a, b in zip(radii, radii[1:]))
    for m, rad in enumerate(radii[:20], start=1):
        assert wrm_modulus(rad, c, PARAMS.r, K) < m**-2
        prev = radii[m - 2] if m > 1 else 0.0
        if rad - 1.0 > prev:
            assert wrm_modulus(rad - 1.0, c, PARAMS.r, K) >= m**-2


def test_no_schedule_below_critical_time():
    with pytest.raises(ModelError):
        wrm_decay_constant(WrmParams(0.3, 0.1, 0.5, 0.2))
    with pytest.raises(ModelError):
        radii_schedule_wrm(PARAMS, c=1.0)
    with pytest.raises(ValueError):
        HyperedgePotential(VacuumPotential(TimeEvolvedWRM(PARAMS)), "cyclic")


def _by_anchor(psi, config):
    pts = config.points
    return {(tuple(pts[a]), m): cv.value for (a, m), cv in psi.evaluate(config).items()}


def test_horizon_locality(rng):
    psi = hyperedge_potential_wrm(WrmParams(2.0, 1.0, 0.5, 1.0), "cyclic", K=1, step=0.5)
    for _ in range(5):
        base = _config(rng, 9, -1.5, 1.5)
        values = _by_anchor(psi, base)
        for cell in psi.grade(base)[:6]:
            hz = psi.horizon(base, cell)
            far = rng.uniform(-6, 6, (20, 2))
            far = far[~hz.contains(far)][:4]
            if not len(far):
                continue
            bigger = base.union(MarkedConfiguration(far, [PLUS] * len(far)))
            key = (tuple(base.points[cell.anchor]), cell.m)
            assert _by_anchor(psi, bigger)[key] == pytest.approx(values[key], abs=1e-12)


grid = st.integers(-24, 24).map(lambda k: k / 8.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.tuples(grid, grid), min_size=1, max_size=7, unique=True),
       st.tuples(st.integers(-40, 40), st.integers(-40, 40)), st.integers(0, 2**16))
def test_ti_variant_is_translation_invariant(pts, shift, seed):
    rng = np.random.default_rng(seed)
    marks = rng.choice([PLUS, MINUS], len(pts))
    c = MarkedConfiguration(pts, marks)
    d = c.translate(np.array(shift, dtype=float) / 4.0)
    psi = HyperedgePotential(VacuumPotential(TimeEvolvedWRM(WrmParams(2.0, 1.0, 0.5, 1.0))), "ti")
    a = sorted(round(v.value, 12) for v in psi.evaluate(c).values())
    b = sorted(round(v.value, 12) for v in psi.evaluate(d).values())
    assert a == b


def test_cluster_support_matches_all_subsets(rng):
    phi = VacuumPotential(TimeEvolvedWRM(WrmParams(2.0, 1.0, 0.5, 1.0)))
    fast = HyperedgePotential(phi, "ti")
    full = HyperedgePotential(phi, "ti", support="all")
    for _ in range(5):
        c = _config(rng, 7, 0, 2.5)
        a, b = fast.evaluate(c), full.evaluate(c)
        assert a.keys() == b.keys()
        for k in a:
            assert a[k].value == pytest.approx(b[k].value, abs=1e-12)


def test_psi_sums_phi_over_all_hyperedges(rng):
    psi = hyperedge_potential_wrm(WrmParams(2.0, 1.0, 0.5, 1.0), "ti")
    c = _config(rng, 8, 0, 3.0)
    total = math.fsum(cv.value for cv in psi.evaluate(c).values())
    whole = Box((-1.0, -1.0), (4.0, 4.0))
    assert total == pytest.approx(hamiltonian(psi.phi, whole, c).value, abs=1e-10)


@pytest.mark.parametrize("variant", ["cyclic", "ti"])
def test_boundary_identity(rng, variant):
    psi = hyperedge_potential_wrm(PARAMS, variant, K=1, step=0.5)
    lam = Box((-1.0, -1.0), (1.0, 1.0))
    for _ in range(6):
        c = _config(rng, 14, -2.5, 2.5)
        diff = psi.hamiltonian(lam, c).value - hamiltonian(psi.phi, lam, c).value
        assert boundary_term(psi, lam, c).value == pytest.approx(diff, abs=1e-12)


def test_initial_segment_windows_give_zero_difference(rng):
    psi = hyperedge_potential_wrm(PARAMS, "cyclic")
    lam = Ball((0.0, 0.0), 1.5)
    for _ in range(3):
        ext = sample_marked_ppp(Ball((0.0, 0.0), 4.0), PARAMS.intensities, rng).outside(lam)
        interiors = [sample_marked_ppp(lam, PARAMS.intensities, rng) for _ in range(4)]
        rep = hamiltonian_equivalence_check(psi.phi, psi, lam, ext, interiors)
        assert rep.passed
        assert max(abs(d) for d in rep.differences) < 1e-9


def test_empty_exterior_and_empty_config():
    psi = hyperedge_potential_wrm(PARAMS, "cyclic")
    lam = Box((-1.0, -1.0), (1.0, 1.0))
    empty = MarkedConfiguration.empty(2)
    assert psi.hamiltonian(lam, empty).value == 0.0
    assert boundary_term(psi, lam, empty).value == 0.0
    rep = abs_sum_partial(psi, lam, empty, [Box((-2.0, -2.0), (2.0, 2.0))])
    assert rep.partial_sums == [0.0] and rep.cells == []


def test_abs_sum_partial_is_monotone(rng):
    params = WrmParams(2.0, 1.0, 0.5, 1.0)
    psi = hyperedge_potential_wrm(params, "ti")
    lam = Box((-0.5, -0.5), (0.5, 0.5))
    c = _config(rng, 30, -3.0, 3.0)
    deltas = [Box((-k, -k), (k, k)) for k in (0.5, 1.0, 2.0, 3.0)]
    rep = abs_sum_partial(psi, lam, c, deltas, wrm_kappa_inputs(params))
    assert rep.monotone
    assert all(inc >= 0 for inc in rep.increments)
    assert all(rec.m >= 2 for rec in rep.cells)


def test_bounds():
    psi = hyperedge_potential_wrm(PARAMS, "cyclic")
    assert psi.bound(1) == math.inf
    assert psi.bound(3) == pytest.approx(2 / 9)
    ti = hyperedge_potential_wrm(PARAMS, "ti")
    with pytest.raises(ValueError):
        ti.bound(3)
    kw = wrm_kappa_inputs(PARAMS)
    assert ti.bound(3, **kw) == pytest.approx(2 * kappa_bound(PARAMS, 2.0))


def test_density_statistic_and_gate():
    c = MarkedConfiguration([[0.0, 0.0], [0.5, 0.5], [1.5, 0.0]], [PLUS, MINUS, PLUS])
    value, per_n = density_statistic(c, 2)
    assert per_n == [2.0, 0.75] and value == 2.0
    assert density_gate(1.0, 2) == 20.0


def test_kappa_modulus_below_bound_and_vanishing():
    params = WrmParams(2.0, 1.0, 0.5, 1.0)
    model = TimeEvolvedWRM(params, absorbed=False)
    values = []
    for n in (1, 2, 4, 8, 16):
        probes = [chain_probe(n, 0.9, mark) for mark in (PLUS, MINUS)]
        value = kappa_modulus(model, n, probes)
        assert value <= kappa_bound(params, n)
        values.append(value)
    assert values[0] > 0
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert values[-1] < 1e-3 * values[0]


def test_chain_probe_beats_sparse_probe():
    params = WrmParams(2.0, 1.0, 0.5, 1.0)
    model = TimeEvolvedWRM(params, absorbed=False)
    chain = kappa_modulus(model, 2, [chain_probe(2, 0.9)])
    sparse = kappa_modulus(model, 2, [chain_probe(2, 1.5)])
    assert chain > sparse == 0.0
    with pytest.raises(ValueError):
        chain_probe(2, 0.0)
