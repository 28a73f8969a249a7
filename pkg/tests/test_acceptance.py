"""Acceptance criteria 1-12, each printing one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -s``; the lines are also
collected into the terminal summary of any run that includes this file.
"""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import record_acceptance
from hyperpot.geometry import Box, cluster_labels
from hyperpot.kernel import cluster_count, dlr_consistency_check, point_count, premod_swap_check
from hyperpot.models import (
    BrokenModel,
    HardcoreWRM,
    PoissonModel,
    TimeEvolvedWRM,
    WrmParams,
    critical_time,
    critical_time_closed_form,
    wrm_b,
)
from hyperpot.resum import (
    HyperedgePotential,
    abs_sum_partial,
    density_gate,
    density_statistic,
    hamiltonian_equivalence_check,
    hyperedge_potential_wrm,
    wrm_kappa_inputs,
)
from hyperpot.sampling import MINUS, PLUS, MarkedConfiguration, sample_marked_ppp
from hyperpot.vacuum import (
    VacuumPotential,
    hamiltonian,
    mobius_reconstruct,
    phi_n,
    vacuum_log_ratio,
)

TWRM_PARAMS = WrmParams(2.0, 1.0, 0.5, 1.0)
LOW_PARAMS = WrmParams(0.3, 0.1, 0.5, 1.0)


def _random_eta(rng, n, side):
    return MarkedConfiguration(rng.uniform(0, side, (n, 2)), rng.choice([PLUS, MINUS], n))


def _n_clusters(config, r):
    return len(np.unique(cluster_labels(config.points, r))) if len(config) else 0


def _diameter(config):
    p = config.points
    return max(np.linalg.norm(a - b) for a, b in itertools.combinations(p, 2))


def test_criterion_01_swap_identity():
    start = time.perf_counter()
    rep = premod_swap_check(TimeEvolvedWRM(TWRM_PARAMS), 500, Box((0.0, 0.0), (10.0, 10.0)),
                            intensities=TWRM_PARAMS.intensities.as_dict(), seed=1)
    elapsed = time.perf_counter() - start
    ok = rep.structural_failures == 0 and rep.max_error < 1e-10 and elapsed < 10
    record_acceptance(1, ok, f"swap identity: 500 trials, max log error {rep.max_error:.2e}, "
                             f"{elapsed:.1f} s")
    assert ok


def test_criterion_02_normalization_and_volume_independence():
    rng = np.random.default_rng(2)
    model = TimeEvolvedWRM(TWRM_PARAMS)
    phi = VacuumPotential(model)
    # volume checks take every weight from log_h on the named window
    small, large = Box((-1.0, -1.0), (3.0, 3.0)), Box((-10.0, -10.0), (12.0, 12.0))
    on_small = VacuumPotential(model, small, fast=False)
    on_large = VacuumPotential(model, large, fast=False)
    start = time.perf_counter()
    worst_norm = worst_vol = 0.0
    for _ in range(1000):
        eta = _random_eta(rng, int(rng.integers(1, 7)), 2.0)
        n = len(eta)
        for k in range(n):
            for keep in itertools.combinations(range(n), k):
                worst_norm = max(worst_norm, abs(phi.in_context(eta, eta.subset(list(keep)))))
        a, b = on_small(eta), on_large(eta)
        worst_vol = max(worst_vol, abs(a - b), abs(a - phi(eta)))
    elapsed = time.perf_counter() - start
    ok = worst_norm <= 1e-10 and worst_vol <= 1e-10 and elapsed < 30
    record_acceptance(2, ok, f"normalization error {worst_norm:.1e}, volume dependence "
                             f"{worst_vol:.1e}, 1000 eta, {elapsed:.1f} s")
    assert ok


def test_criterion_03_mobius_reconstruction():
    rng = np.random.default_rng(3)
    model = TimeEvolvedWRM(TWRM_PARAMS)
    phi = VacuumPotential(model)
    lam = Box((0.0, 0.0), (2.0, 2.0))
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        inner = _random_eta(rng, int(rng.integers(0, 11)), 2.0)
        outer = _random_eta(rng, 4, 2.0).translate([2.5, 0.0])
        omega = inner.union(outer)
        worst = max(worst, abs(mobius_reconstruct(phi, lam, omega)
                               - vacuum_log_ratio(model, lam, omega)))
    elapsed = time.perf_counter() - start
    ok = worst < 1e-8 and elapsed < 60
    record_acceptance(3, ok, f"Mobius reconstruction: 200 configs, max error {worst:.1e}, "
                             f"{elapsed:.1f} s")
    assert ok


def test_criterion_04_closed_form_hamiltonian():
    rng = np.random.default_rng(4)
    phi = VacuumPotential(TimeEvolvedWRM(TWRM_PARAMS))
    lam, delta = Box((0.0, 0.0), (2.0, 2.0)), Box((-1.5, -1.5), (3.5, 3.5))
    worst = 0.0
    for _ in range(200):
        omega = _random_eta(rng, int(rng.integers(1, 14)), 6.0).translate([-2.0, -2.0])
        rep = hamiltonian(phi, lam, omega, delta)
        worst = max(worst, abs(rep.value - rep.closed_form) / max(1.0, abs(rep.closed_form)))
    ok = worst < 1e-8
    record_acceptance(4, ok, f"closed-form Hamiltonian: 200 trials, max relative error "
                             f"{worst:.1e}")
    assert ok


def test_criterion_05_finite_range():
    rng = np.random.default_rng(5)
    model = HardcoreWRM(TWRM_PARAMS)
    phi = VacuumPotential(model)
    etas = []
    while len(etas) < 500:
        eta = _random_eta(rng, int(rng.integers(2, 7)), 2.5)
        if _diameter(eta) > 2 * TWRM_PARAMS.r and model.admissible(eta):
            etas.append(eta)
    worst = max(abs(phi(eta)) for eta in etas)
    ok = worst <= 1e-10
    record_acceptance(5, ok, f"finite range (hard-core WRM): 500 admissible eta beyond 2r, "
                             f"max |Phi| {worst:.1e}")
    assert ok


def test_criterion_06_vanishing_on_split_hyperedges():
    rng = np.random.default_rng(6)
    phi = VacuumPotential(TimeEvolvedWRM(TWRM_PARAMS, absorbed=True))
    worst, count = 0.0, 0
    while count < 1000:
        eta = _random_eta(rng, int(rng.integers(2, 7)), 3.0)
        if _n_clusters(eta, TWRM_PARAMS.r) < 2:
            continue
        count += 1
        worst = max(worst, abs(phi(eta)))
    ok = worst <= 1e-8
    record_acceptance(6, ok, f"Phi on 1000 multi-cluster eta: max |Phi| {worst:.1e}")
    assert ok


def test_criterion_07_critical_time():
    rng = np.random.default_rng(7)
    err_tg = abs(critical_time(2.0, 1.0) - 0.5 * math.log(3.0))
    err_cf = abs(critical_time_closed_form(2.0, 1.0) - 0.5 * math.log(3.0))
    worst_b = 0.0
    for _ in range(100):
        lm = float(rng.uniform(0.05, 5.0))
        lp = lm * float(rng.uniform(1.05, 20.0))
        worst_b = max(worst_b, abs(wrm_b(lp, lm, critical_time(lp, lm)) - 1.0))
    ok = err_tg <= 1e-10 and err_cf <= 1e-10 and worst_b <= 1e-10
    record_acceptance(7, ok, f"t_G(2,1) error {err_tg:.1e}; max |b(t_G)-1| {worst_b:.1e} "
                             f"over 100 draws")
    assert ok


def test_criterion_08_phi_decay():
    start = time.perf_counter()
    bound = 2 * math.log(4.0) + 1
    rows = [(n, *phi_n(n, 0.25, tol=1e-12)) for n in (10, 100, 1000, 10000)]
    elapsed = time.perf_counter() - start
    ok = all(abs(v) * math.log(n) <= bound and tail < 1e-12 for n, v, tail in rows)
    ok = ok and elapsed < 5
    worst = max(abs(v) * math.log(n) for n, v, _ in rows)
    record_acceptance(8, ok, f"max |phi(n)| ln n = {worst:.3f} <= {bound:.3f}, "
                             f"max tail {max(t for *_, t in rows):.1e}, {elapsed:.2f} s")
    assert ok


@pytest.mark.xfail(strict=True, reason="H^Psi - H^Phi depends on the interior for boxes that "
                   "are not initial segments of the ordering; see the decisions ledger")
def test_criterion_09_resummation_equivalence():
    rng = np.random.default_rng(9)
    psi = hyperedge_potential_wrm(LOW_PARAMS, "cyclic")
    lam, frame = Box.centered(8.0), Box.centered(12.0)
    spreads = []
    for _ in range(20):
        ext = sample_marked_ppp(frame, LOW_PARAMS.intensities, rng).outside(lam)
        interiors = [sample_marked_ppp(lam, LOW_PARAMS.intensities, rng) for _ in range(5)]
        rep = hamiltonian_equivalence_check(psi.phi, psi, lam, ext, interiors)
        spreads.append(rep.spread)
    ok = max(spreads) < 1e-6
    record_acceptance(9, ok, f"resummation equivalence on 8x8 box: max spread "
                             f"{max(spreads):.2e}, {sum(s < 1e-6 for s in spreads)}/20 exteriors "
                             f"within 1e-6")
    assert ok


def _brute_classes(psi, config):
    """Grading classes from the definition: least point and annulus of the greatest."""
    pts = psi._points(config)
    ranks = psi.grader.ranks(pts)
    classes = {}
    n = len(config)
    for k in range(1, n + 1):
        for eta in itertools.combinations(range(n), k):
            left = min(eta, key=ranks.__getitem__)
            right = max(eta, key=ranks.__getitem__)
            m = 1 if k == 1 else psi.schedule.index(psi.grader.norm(pts[right] - pts[left]))
            classes.setdefault((left, m), []).append(eta)
    return classes


def test_criterion_10_translation_invariance_and_exhaustiveness():
    rng = np.random.default_rng(10)
    phi = VacuumPotential(TimeEvolvedWRM(LOW_PARAMS))
    ti = HyperedgePotential(phi, "ti")
    base = sample_marked_ppp(Box.centered(8.0), LOW_PARAMS.intensities, rng)
    ref = ti.evaluate(base)
    worst = 0.0
    for _ in range(50):
        moved = base.translate(rng.uniform(-50, 50, 2))
        vals = ti.evaluate(moved)
        if vals.keys() != ref.keys():
            worst = math.inf
            break
        worst = max(worst, max((abs(vals[k].value - ref[k].value) for k in ref), default=0.0))
    exhaustive = True
    cyclic = hyperedge_potential_wrm(TWRM_PARAMS, "cyclic", K=1, step=0.5)
    ti_dense = HyperedgePotential(VacuumPotential(TimeEvolvedWRM(TWRM_PARAMS)), "ti",
                                  support="all")
    for psi in (cyclic, ti_dense):
        for n in range(1, 9):
            for _ in range(3):
                config = _random_eta(rng, n, 2.5)
                classes = _brute_classes(psi, config)
                covered = sorted(eta for etas in classes.values() for eta in etas)
                exhaustive &= len(covered) == 2**n - 1 == len(set(covered))
                cells = {(c.anchor, c.m) for c in psi.grade(config)}
                exhaustive &= set(classes) <= cells
                values = psi.evaluate(config)
                for key, etas in classes.items():
                    direct = math.fsum(psi.phi(config.subset(e)) for e in etas)
                    exhaustive &= abs(values[key].value - direct) < 1e-10
    ok = worst < 1e-12 and exhaustive
    record_acceptance(10, ok, f"TI Psi under 50 shifts: max change {worst:.1e}; grading "
                              f"exhaustive up to 8 points: {exhaustive}")
    assert ok


def test_criterion_11_absolute_summability():
    rng = np.random.default_rng(11)
    params = LOW_PARAMS
    gate = density_gate(params.intensities.total, 2)
    lam = Box.centered(2.0)
    deltas = [Box.centered(s) for s in (2.0, 4.0, 8.0, 12.0, 16.0)]
    cyclic = hyperedge_potential_wrm(params, "cyclic")
    ti = hyperedge_potential_wrm(params, "ti")
    kw = wrm_kappa_inputs(params)
    used = rejected = violations = nonmonotone = cells = 0
    while used < 50:
        config = sample_marked_ppp(Box.centered(16.0), params.intensities, rng)
        if density_statistic(config, 8)[0] > gate:
            rejected += 1
            continue
        used += 1
        for psi, bound_kw in ((cyclic, {}), (ti, kw)):
            rep = abs_sum_partial(psi, lam, config, deltas, bound_kw)
            violations += len(rep.bound_violations)
            nonmonotone += not rep.monotone
            cells += len(rep.cells)
    ok = violations == 0 and nonmonotone == 0
    record_acceptance(11, ok, f"summability: 50 configs ({rejected} gated out), {cells} cells "
                              f"with m>=2, {violations} bound violations")
    assert ok


def test_criterion_12_dlr_consistency():
    params = TWRM_PARAMS
    lam, delta = Box.centered(1.0), Box.centered(2.0)
    ext = MarkedConfiguration([[1.5, 0.0], [0.0, -1.4], [-1.6, 0.3]], [PLUS, PLUS, MINUS])
    start = time.perf_counter()
    poisson = dlr_consistency_check(PoissonModel(params.intensities.as_dict()), lam, delta, ext,
                                    point_count(lam), 100_000, seed=12)
    twrm = dlr_consistency_check(TimeEvolvedWRM(params), lam, delta, ext,
                                 cluster_count(params.r, lam), 100_000, seed=13)
    broken = dlr_consistency_check(BrokenModel(TimeEvolvedWRM(params), 0.1), lam, delta, ext,
                                   point_count(lam), 100_000, seed=14)
    elapsed = time.perf_counter() - start
    ok = abs(poisson.z) < 2 and abs(twrm.z) < 4 and broken.z > 10 and elapsed < 300
    record_acceptance(12, ok, f"DLR z: Poisson {poisson.z:+.2f}, TWRM {twrm.z:+.2f}, broken "
                              f"{broken.z:+.2f}; N=1e5 each, {elapsed:.0f} s")
    assert ok
