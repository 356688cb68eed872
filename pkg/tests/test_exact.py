from fractions import Fraction

import numpy as np
import pytest

from coagemit import exact
from coagemit.errors import DomainError, GelationReached, QuadratureFailure
from coagemit.kinetics import ClusterDistribution, EmissionParams
from coagemit.solver import integrate
from reference_table import COEFFS


@pytest.fixture(scope="module")
def fam20():
    return exact.polynomial_family(20)


# -- smallest large cluster ----------------------------------------------------------

def test_min_cluster_dimers():
    t = np.linspace(0, 1.5, 7)
    assert exact.min_cluster_closed_form(1.0, 2.0, 1, t) == pytest.approx((2 - t) ** 4 / 16)


def test_min_cluster_tetramers_ell3():
    t = np.array([0.0, 0.3, 1.0])
    m = 4 - 3 * t
    assert exact.min_cluster_closed_form(1.0, 4.0, 3, t) == pytest.approx((m / 4) ** (8 / 3))
    assert exact.min_cluster_closed_form(0.7, 4.0, 3, 0.0) == 0.7


def test_min_cluster_domain():
    with pytest.raises(DomainError):
        exact.min_cluster_closed_form(1.0, 2.0, 1, 2.0)


def test_min_cluster_matches_solver():
    u0 = ClusterDistribution.kmer(3, 4)
    tr = integrate(u0, EmissionParams(3), 0.6, record_times=np.linspace(0, 0.6, 7)).trajectory
    m = 4 - 3 * tr.t
    assert np.abs(tr.u(4) - (m / 4) ** (8 / 3)).max() <= 1e-9


# -- polynomial family -------------------------------------------------------------------

def test_family_low_orders(fam20):
    assert fam20[2].coeffs == {4: Fraction(1, 16)}
    assert fam20[3].coeffs == {6: Fraction(1, 32), 7: Fraction(-1, 64)}
    assert fam20[4].coeffs == {8: Fraction(3, 128), 9: Fraction(-3, 128), 10: Fraction(3, 512)}


def test_u4_factorisation(fam20):
    # u_4 = (3/512) t^2 m^8 with t = 2 - m
    for m in (Fraction(1, 3), Fraction(7, 5), Fraction(2)):
        assert fam20[4].exact(m) == Fraction(3, 512) * (2 - m) ** 2 * m ** 8


def test_family_matches_reference_listing(fam20):
    for n, row in COEFFS.items():
        got = fam20[n].rounded(6)
        assert set(got) == set(row), n
        for p, c in row.items():
            assert abs(float(fam20[n].coefficient(p)) - c) <= 5e-7 + 1e-12, (n, p)
            assert got[p] == c, (n, p)


@pytest.mark.parametrize("n", range(2, 21))
def test_sign_and_exponent_invariants(fam20, n):
    P = fam20[n]
    assert min(P.exponents) >= 2 * n and max(P.exponents) <= 3 * n - 2
    assert P.coefficient(2 * n) > 0
    assert (-1) ** n * P.coefficient(3 * n - 2) > 0


def test_family_initial_values(fam20):
    assert fam20[2].exact(2) == 1
    assert all(fam20[n].exact(2) == 0 for n in range(3, 21))
    assert all(fam20[n].exact(0) == 0 for n in range(2, 21))


def test_family_conserves_mass_and_count(fam20):
    # sum n u_n = m and sum u_n = m - 1 hold exactly in the limit n_max -> inf;
    # truncated at 20 the tail is tiny for small t
    m = Fraction(19, 10)
    s0 = sum(fam20[n].exact(m) for n in fam20)
    s1 = sum(n * fam20[n].exact(m) for n in fam20)
    assert float(s0) == pytest.approx(0.9, abs=1e-10)
    assert float(s1) == pytest.approx(1.9, abs=1e-10)


def test_float_evaluation_is_accurate_near_start(fam20):
    v = fam20[8](2 - 1e-3)
    assert v > 0
    assert v == pytest.approx(float(fam20[8].exact(Fraction(2 - 1e-3))), rel=1e-12)


def test_eval_family(fam20):
    d = exact.eval_family(fam20, 0.0)
    assert d.u[1] == 1.0 and np.abs(d.u[2:]).max() <= 1e-15
    assert exact.eval_family(fam20, 0.5).u[1] == pytest.approx(0.31640625, abs=1e-15)
    assert not exact.eval_family(fam20, 2.0).u.any()
    assert d.ell == 1 and d.is_large()


def test_family_json(fam20):
    j = fam20[3].as_json()
    assert j["7"] == {"num": "-1", "den": "64", "value": -0.015625}


def test_family_rejects_small_n():
    with pytest.raises(ValueError):
        exact.polynomial_family(1)


def test_second_moment_matches_closed_form():
    fam = exact.polynomial_family(80)
    head = {n: fam[n] for n in range(2, 41)}
    for t in np.linspace(0, 0.45, 10):
        d = exact.eval_family(head, t)
        assert np.dot(d.sizes ** 2, d.u) == pytest.approx(exact.closed_m2(2, 1, t), rel=1e-2)
    # at t = 0.5 forty sizes miss about 5% in the tail; the missing mass times
    # 41 is a lower bound for it, and eighty sizes are within 1%
    t = 0.5
    d = exact.eval_family(head, t)
    partial = np.dot(d.sizes ** 2, d.u)
    tail_mass = (2 - t) - np.dot(d.sizes, d.u)
    assert partial + 41 * tail_mass <= exact.closed_m2(2, 1, t)
    d = exact.eval_family(fam, t)
    assert np.dot(d.sizes ** 2, d.u) == pytest.approx(exact.closed_m2(2, 1, t), rel=1e-2)


# -- numeric recursion --------------------------------------------------------------------

def test_iterate_numeric_base_is_closed_form():
    f = exact.iterate_numeric({}, 1.0, 3, 4.0, 4)
    for t in (0.0, 0.4, 1.2):
        assert f(t) == pytest.approx(exact.min_cluster_closed_form(1.0, 4.0, 3, t), rel=1e-13)


def test_iterate_numeric_dimer_u4(fam20):
    fam = {2: lambda t: fam20[2](2 - t), 3: lambda t: fam20[3](2 - t)}
    u4 = exact.iterate_numeric(fam, 0.0, 1, 2.0, 4)
    t = np.linspace(0, 0.6, 13)
    assert np.abs(u4(t) - fam20[4](2 - t)).max() <= 1e-9


def test_numeric_family_matches_polynomials(fam20):
    nf = exact.numeric_family(ClusterDistribution.kmer(1, 2), 10, 0.6)
    t = np.linspace(0, 0.6, 25)
    for n in range(2, 11):
        assert np.abs(nf[n](t) - fam20[n](2 - t)).max() <= 1e-9, n


def test_iterate_numeric_mixed_system_u3():
    def u1(t):
        return exact.mixed_monomer_dimer_closed_forms(t)[0]

    def u2(t):
        return exact.mixed_monomer_dimer_closed_forms(t)[1]

    u3 = exact.iterate_numeric({2: u2}, 0.0, 1, 1.5, 3, small={1: u1})
    for t in (0.1, 0.5, 1.0, 1.3):
        assert u3(t) == pytest.approx(exact.mixed_monomer_dimer_closed_forms(t)[2], abs=1e-8)


def test_iterate_numeric_ell3_branch_against_solver():
    # u_5 for ell = 3 from tetramers: the birth sum is u_4 u_4 only
    u0 = ClusterDistribution.kmer(3, 4)
    nf = exact.numeric_family(u0, 7, 1.0)
    tr = integrate(u0, EmissionParams(3), 1.0, record_times=np.linspace(0, 1, 11),
                   track=[4, 5, 6, 7]).trajectory
    for n in (5, 6, 7):
        assert np.abs(nf[n](tr.t) - tr.u(n)).max() <= 1e-8


def test_iterate_numeric_errors():
    f = exact.iterate_numeric({}, 1.0, 1, 2.0, 2)
    with pytest.raises(DomainError):
        f(2.0)
    with pytest.raises(ValueError):
        exact.iterate_numeric({}, 0.0, 1, 2.0, 4)
    with pytest.raises(ValueError):
        exact.iterate_numeric({}, 0.0, 1, 2.0, 1)
    with pytest.raises(ValueError):
        exact.iterate_numeric({4: lambda t: 0.0}, 0.0, 3, 4.0, 5, small={1: lambda t: 0.0})


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_quadrature_failure_is_reported():
    with pytest.raises(QuadratureFailure):
        exact._quad(lambda s: 1.0 / abs(s - 0.5) ** 1.2 if s != 0.5 else 0.0, 0.0, 1.0)


def test_numeric_family_domain():
    with pytest.raises(DomainError):
        exact.numeric_family(ClusterDistribution.kmer(1, 2), 5, 2.0)
    with pytest.raises(ValueError):
        exact.numeric_family(ClusterDistribution(1, np.array([0.5, 0.5])), 5, 0.5)


# -- mixture closed forms -------------------------------------------------------------------

def test_mixed_closed_form_values():
    assert exact.mixed_monomer_dimer_closed_forms(0.0) == pytest.approx((0.5, 0.5, 0.0))
    u1, u2, u3 = exact.mixed_monomer_dimer_closed_forms(0.5)
    assert (u1, u2) == pytest.approx((0.25, 81 / 512))
    assert u3 == pytest.approx(3 ** 8 / (9 * 4 ** 7))
    assert max(exact.mixed_monomer_dimer_closed_forms(1.5 - 1e-9)) < 1e-8
    with pytest.raises(DomainError):
        exact.mixed_monomer_dimer_closed_forms(1.5)


def test_mixed_closed_forms_match_solver():
    t = np.linspace(0, 1.2, 25)
    tr = integrate(ClusterDistribution(1, np.array([0.5, 0.5])), EmissionParams(1), 1.2,
                   record_times=t).trajectory
    for k, u in enumerate(exact.mixed_monomer_dimer_closed_forms(tr.t)):
        assert np.abs(tr.u(k + 1) - u).max() <= 1e-6


# -- moments -----------------------------------------------------------------------------------

def test_closed_moments_examples():
    assert exact.closed_m2(2, 1, 0.0) == 4
    assert exact.closed_m2(2, 1, 0.5) == pytest.approx(7.5)
    for k, ell in [(2, 1), (3, 2), (5, 3)]:
        assert exact.closed_m2(k, ell, 0.0) == pytest.approx(k ** 2)
        assert exact.closed_m3(k, ell, 0.0) == pytest.approx(k ** 3)
    t = np.linspace(0, 0.6, 7)
    ref = (2 - t) * (-27 * t ** 3 + 84 * t ** 2 - 84 * t + 32) / (2 - 3 * t) ** 3
    assert exact.closed_m3(2, 1, t) == pytest.approx(ref)
    assert exact.closed_m2(2, 1, 2 / 3 - 1e-9) > 1e8


def test_gelation_and_exhaustion_times():
    assert exact.gelation_time(2, 1) == pytest.approx(2 / 3)
    assert exact.gelation_time(4, 3) == pytest.approx(4 / 5)
    assert exact.exhaustion_time(2, 1) == 2
    with pytest.raises(ValueError):
        exact.gelation_time(1, 2)


def test_hierarchy_second_moment_equation():
    # k = 2: dm2/dt = (2 m2^2 - 4 ell m2 m1 + ell^2 m1^2) / m1^2
    terms = exact._hierarchy_terms(2, 3)
    got = {(a, b): c for c, a, b in terms[2]}
    sym = {}
    for (a, b), c in got.items():
        key = tuple(sorted((a, b)))
        sym[key] = sym.get(key, 0) + c
    assert sym == {(2, 2): 2, (1, 2): -4 * 3, (1, 1): 9}


@pytest.mark.parametrize("k,ell", [(2, 1), (3, 2), (4, 3)])
def test_hierarchy_matches_closed_forms(k, ell):
    t_end = 0.9 * exact.gelation_time(k, ell)
    m_init = [1.0, k, k ** 2, k ** 3]
    tr = exact.moment_hierarchy(m_init, ell, 3, t_end)
    assert np.abs(tr.m(2) / exact.closed_m2(k, ell, tr.t) - 1).max() <= 1e-8
    assert np.abs(tr.m(3) / exact.closed_m3(k, ell, tr.t) - 1).max() <= 1e-8
    assert tr.m(1) == pytest.approx(k - ell * tr.t)


def test_hierarchy_without_emission_conserves():
    tr = exact.moment_hierarchy([1.0, 2.0, 4.0, 8.0], 0, 3, 0.3)
    assert np.all(tr.m(1) == 2.0)
    # with ell = 0, m2' = 2 m2^2 / m1^2
    assert tr.m(2)[-1] == pytest.approx(1 / (1 / 4 - 2 * 0.3 / 4), rel=1e-8)


def test_hierarchy_reports_gelation():
    with pytest.raises(GelationReached) as err:
        exact.moment_hierarchy([1.0, 2.0, 4.0, 8.0], 1, 3, 0.7)
    assert err.value.t == pytest.approx(2 / 3, abs=1e-6)
    with pytest.raises(ValueError):
        exact.moment_hierarchy([1.0, 2.0], 1, 1, 0.1)
