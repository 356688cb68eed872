"""End-to-end acceptance checks, one test and one verdict line per criterion.

Run ``pytest tests/test_acceptance.py -s`` to see the lines inline; they are
also repeated in the terminal summary.
"""
import itertools
import time

import numpy as np
import pytest

import oracles
from acceptance_log import report
from coagemit import exact, markov
from coagemit.classes import collision_numbers, compute_classes
from coagemit.kinetics import ClusterDistribution, EmissionParams, Kind, catalan_bound_sequence
from coagemit.solver import IntegratorConfig, integrate, small_time_slope
from reference_table import COEFFS

DIMER = ClusterDistribution.kmer(1, 2)
THREE = ClusterDistribution(3, np.array([0.5, 0.3, 0.2]))


@pytest.fixture(scope="module")
def fam10():
    return exact.polynomial_family(10)


def test_criterion_1_exact_conservation():
    t0 = time.perf_counter()
    N = 10_000
    tr = markov.simulate(N, ClusterDistribution.kmer(2, 5), 1.0, 1 / N, seed=0)
    k = tr.steps
    ok = bool(np.array_equal(tr.clusters, N - k) and np.array_equal(tr.particles, 5 * N - 2 * k)
              and np.array_equal(k, np.arange(k.size)))
    dt = time.perf_counter() - t0
    ok = ok and dt < 1.0
    report(1, ok, f"{k.size} consecutive steps, clusters = N-k and particles = 5N-2k exactly, "
                  f"last step {k[-1]}", dt)
    assert ok


def test_criterion_2_coefficient_table(fam10):
    t0 = time.perf_counter()
    fam = exact.polynomial_family(10)
    worst = 0.0
    same_support = True
    for n, row in COEFFS.items():
        rounded = fam[n].rounded(6)
        same_support &= set(rounded) == set(row)
        worst = max(worst, max(abs(rounded[p] - c) for p, c in row.items()))
    from fractions import Fraction as F
    hand = fam[4].coeffs == {8: F(3, 128), 9: F(-3, 128), 10: F(3, 512)}
    dt = time.perf_counter() - t0
    ok = same_support and worst <= 5e-7 and hand and dt < 1.0
    report(2, ok, f"max |rounded - listed| = {worst:.1e}, u_4 = (3/128, -3/128, 3/512) exact: "
                  f"{hand}", dt)
    assert ok


def test_criterion_3_simulator_vs_exact(fam10):
    t0 = time.perf_counter()
    tr = markov.simulate(1_000_000, DIMER, 0.6, 0.005, seed=1, track=range(2, 7))
    m = 2 - tr.t
    err = max(np.abs(tr.u(n) - fam10[n](m)).max() for n in range(2, 7))
    dt = time.perf_counter() - t0
    ok = err <= 5e-3 and dt < 60
    report(3, ok, f"N=1e6 seed 1, sup |u_n^N - u_n| over n=2..6, t<=0.6: {err:.2e} "
                  f"(tol 5e-3)", dt)
    assert ok


def test_criterion_4_moments():
    t0 = time.perf_counter()
    ts = np.linspace(0, 0.6, 61)
    h = exact.moment_hierarchy([1.0, 2.0, 4.0, 8.0], 1, 3, 0.6, record_times=ts)
    r2 = np.abs(h.m(2) / exact.closed_m2(2, 1, ts) - 1).max()
    r3 = np.abs(h.m(3) / exact.closed_m3(2, 1, ts) - 1).max()
    runs = markov.run_ensemble(1_000_000, DIMER, list(range(16)), 0.66, 0.01, workers=4,
                               track=[2])
    t = runs[0].t
    sel = t <= 0.6 + 1e-12
    mean_m2 = np.mean([r.m(2) for r in runs], axis=0)
    ens = np.abs(mean_m2[sel] / exact.closed_m2(2, 1, t[sel]) - 1).max()
    single = np.abs(runs[0].m(2)[sel] / exact.closed_m2(2, 1, t[sel]) - 1).max()
    i66, i30 = runs[0].at(0.66), runs[0].at(0.3)
    ratios = [r.m(2)[i66] / r.m(2)[i30] for r in runs]
    dt = time.perf_counter() - t0
    ok = r2 <= 1e-8 and r3 <= 1e-8 and ens <= 0.02 and min(ratios) > 10
    report(4, ok, f"hierarchy rel err m2 {r2:.1e}, m3 {r3:.1e}; 16-run mean m2 rel err "
                  f"{ens:.2%} (single run seed 0: {single:.2%}); "
                  f"min m2(0.66)/m2(0.3) = {min(ratios):.1f}", dt)
    assert ok


def test_criterion_5_three_species():
    t0 = time.perf_counter()
    res = integrate(THREE, EmissionParams(3, Kind.SMALL), 1.0,
                    record_times=np.linspace(0, 1, 1001))
    t_ex = res.t_ex
    sim = markov.simulate(100_000, THREE, 0.9 * t_ex, 0.001, seed=1, track=[1, 2, 3])
    ode = res.trajectory
    err = 0.0
    for n in (1, 2, 3):
        ref = np.interp(sim.t, ode.t, ode.u(n))
        err = max(err, np.abs(sim.u(n) - ref).max())
    bnd = 0.0
    for p in (0.1, 0.4, 0.7):
        a = integrate(ClusterDistribution(3, np.array([p, 1 - p, 0.0])),
                      EmissionParams(3, Kind.SMALL), 1.0).t_ex
        b = integrate(ClusterDistribution(3, np.array([p, 0.0, 1 - p])),
                      EmissionParams(3, Kind.SMALL), 1.0).t_ex
        bnd = max(bnd, abs(a - (1 - p) / 2), abs(b - (1 - p)))
    dt = time.perf_counter() - t0
    ok = err <= 5e-3 and bnd <= 1e-6
    report(5, ok, f"t_ex = {t_ex:.6f}, sup |sim - ode| on [0, 0.9 t_ex] = {err:.2e} (tol 5e-3); "
                  f"boundary t_ex max error {bnd:.1e} (tol 1e-6)", dt)
    assert ok


def test_criterion_6_reaction_classes():
    t0 = time.perf_counter()
    cases = bad = 0
    for ell in range(1, 6):
        for size in (1, 2, 3):
            for sup in itertools.combinations(range(1, 13), size):
                cases += 1
                if compute_classes(sup, ell, 60).s != oracles.reaction_numbers(sup, ell, 60):
                    bad += 1
    dt = time.perf_counter() - t0
    ok = bad == 0 and dt < 10
    report(6, ok, f"{cases} (ell, support) cases, {bad} mismatches against the closure oracle",
           dt)
    assert ok


def _dimer_slopes():
    ts = np.geomspace(1e-4, 1e-3, 16)
    tr = integrate(DIMER, EmissionParams(1), 1e-3,
                   record_times=np.concatenate(([0.0], ts))).trajectory
    return {n: small_time_slope(tr.t, tr.u(n), (1e-4, 1e-3)) for n in (3, 4, 5)}


@pytest.mark.xfail(strict=True, reason="u_5 grows like t^3 exactly; the class level s_5 is 2")
def test_criterion_7_short_time_slopes():
    t0 = time.perf_counter()
    slopes = _dimer_slopes()
    s = compute_classes({2}, 1, 20).s
    c = collision_numbers({2}, 1, 20)
    ok = all(abs(slopes[n] - s[n]) <= 0.1 * s[n] for n in (3, 4, 5))
    by_collisions = all(abs(slopes[n] - c[n]) <= 0.1 * c[n] for n in (3, 4, 5))
    dt = time.perf_counter() - t0
    got = ", ".join(f"{slopes[n]:.3f}" for n in (3, 4, 5))
    report(7, ok, f"slopes of u_3, u_4, u_5 = {got}; class levels s_n = "
                  f"{s[3]}, {s[4]}, {s[5]} -> {'match' if ok else 'u_5 off'}; "
                  f"collision numbers {c[3]}, {c[4]}, {c[5]} -> "
                  f"{'match' if by_collisions else 'off'}", dt)
    assert ok


def test_criterion_7_slopes_follow_collision_numbers():
    slopes = _dimer_slopes()
    c = collision_numbers({2}, 1, 20)
    assert all(slopes[n] == pytest.approx(c[n], rel=0.1) for n in (3, 4, 5))
    assert slopes[3] == pytest.approx(1, rel=0.1) and slopes[4] == pytest.approx(2, rel=0.1)


def test_criterion_8_rational_closed_forms():
    t0 = time.perf_counter()
    ts = np.linspace(0, 1.2, 121)
    res = integrate(ClusterDistribution(1, np.array([0.5, 0.5])), EmissionParams(1, Kind.FULL),
                    1.2, record_times=ts)
    tr = res.trajectory
    closed = exact.mixed_monomer_dimer_closed_forms(tr.t)
    err = max(np.abs(tr.u(n + 1) - closed[n]).max() for n in range(3))
    dt = time.perf_counter() - t0
    ok = err <= 1e-6 and tr.t[-1] == pytest.approx(1.2)
    report(8, ok, f"Full system on [0, 1.2], max |u_n - closed| for n=1..3 = {err:.1e} "
                  f"(tol 1e-6)", dt)
    assert ok


def test_criterion_9_truncated_invariants():
    t0 = time.perf_counter()
    cfg = IntegratorConfig()
    worst_mom = 0.0
    min_M = np.inf
    catalan_ok = True
    ts = np.linspace(0, 0.25, 101)
    for N in (10, 20, 40):
        tr = integrate(DIMER, EmissionParams.truncated(1, N, 2), 0.25, cfg, record_times=ts,
                       track=range(1, N + 1)).trajectory
        worst_mom = max(worst_mom, np.abs(tr.m(0) - (1 - tr.t)).max(),
                        np.abs(tr.m(1) - (2 - tr.t)).max())
        min_M = min(min_M, tr.interaction_mass.min())
        A = catalan_bound_sequence(2, 1, N)
        t = tr.t[1:]
        for i in range(5, N + 1):
            catalan_ok &= bool(np.all(tr.u(i)[1:] <= A[i] / i * t ** ((i - 1) / 4 - 1)))
    dt = time.perf_counter() - t0
    ok = worst_mom <= 10 * cfg.rtol and min_M >= 1 and catalan_ok
    report(9, ok, f"N in (10, 20, 40): moment error {worst_mom:.1e} (tol {10 * cfg.rtol:.0e}), "
                  f"min M = {min_M:.4f}, Catalan bound for i >= 5: {catalan_ok}", dt)
    assert ok


def test_criterion_10_gelation_signature():
    t0 = time.perf_counter()
    zs = markov.simulate(1_000_000, DIMER, 0.8, 0.05, seed=1, track=[2])
    st = markov.simulate(1_000_000, DIMER, 0.8, 0.05, seed=1, track=[2],
                         policy=markov.GelPolicy.stockmayer(10_000))

    def G(tr, t):
        return tr.gel_fraction[tr.at(t)]

    z55, z80, s55, s80 = G(zs, 0.55), G(zs, 0.8), G(st, 0.55), G(st, 0.8)
    ok = (z55 < 1e-2 and z80 > 5e-2 and s55 < s80 and s55 < 1e-2 and s80 > 5e-3)
    dt = time.perf_counter() - t0
    report(10, ok, f"Ziff-Stell G(0.55) = {z55:.2e}, G(0.8) = {z80:.3f}; Stockmayer (1e4) "
                   f"G(0.55) = {s55:.2e}, G(0.8) = {s80:.3f}, ordering kept", dt)
    assert ok


def test_criterion_11_cross_engine(fam10):
    t0 = time.perf_counter()
    ts = np.linspace(0, 0.6, 61)
    m = 2 - ts
    poly = {n: fam10[n](m) for n in range(2, 11)}
    nf = exact.numeric_family(DIMER, 10, 0.6)
    num = {n: nf[n](ts) for n in range(2, 11)}
    # direct quadrature (no interpolation) at a coarser grid for the top level
    direct = {2: lambda t: fam10[2](2 - t), 3: lambda t: fam10[3](2 - t)}
    for n in range(4, 10):
        direct[n] = lambda t, n=n: fam10[n](2 - t)
    u10 = exact.iterate_numeric(direct, 0.0, 1, 2.0, 10)
    d10 = np.abs(u10(ts[::6]) - poly[10][::6]).max()
    ode = integrate(DIMER, EmissionParams.truncated(1, 512, 2), 0.6, record_times=ts,
                    track=range(2, 11)).trajectory
    odev = {n: ode.u(n) for n in range(2, 11)}
    e_pn = max(np.abs(poly[n] - num[n]).max() for n in poly)
    e_po = max(np.abs(poly[n] - odev[n]).max() for n in poly)
    e_no = max(np.abs(num[n] - odev[n]).max() for n in poly)
    dt = time.perf_counter() - t0
    ok = max(e_pn, e_po, e_no, d10) <= 1e-6
    report(11, ok, f"n <= 10 on [0, 0.6]: poly-recursion {e_pn:.1e}, poly-ode(N=512) {e_po:.1e}, "
                   f"recursion-ode {e_no:.1e}, direct quadrature u_10 {d10:.1e} (tol 1e-6)", dt)
    assert ok
