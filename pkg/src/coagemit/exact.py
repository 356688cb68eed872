"""Exact and semi-exact solutions.

* closed form for the smallest large cluster ``u_{ell+1}``;
* exact-rational polynomial family for dimer data with ``ell = 1``;
* numeric recursion for large systems (quadrature level by level);
* closed forms for the monomer/dimer mixture and for k-mer moments;
* the moment hierarchy, integrated with ``m_1`` substituted exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from numpy.polynomial import Chebyshev
from scipy import integrate as spi

from .errors import DomainError, GelationReached, QuadratureFailure
from .kinetics import ClusterDistribution
from .trajectory import Trajectory

QUAD_TOL = 1e-10


def _m1(m1_0: float, ell: float, t):
    return m1_0 - ell * np.asarray(t, dtype=float)


def min_cluster_closed_form(u0_min: float, m1_0: float, ell: int, t):
    """``u_{ell+1}(t) = u_{ell+1}(0) (m_1(t)/m_1(0))^{2(ell+1)/ell}`` for large systems."""
    m = _m1(m1_0, ell, t)
    if np.any(m <= 0):
        raise DomainError(f"m_1(t) <= 0 for t >= {m1_0 / ell}")
    out = u0_min * (m / m1_0) ** (2.0 * (ell + 1) / ell)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# exact polynomial family (ell = 1, pure dimers)

@dataclass(frozen=True)
class RationalPoly:
    """Polynomial in the mass variable ``m`` with exact rational coefficients."""

    coeffs: Mapping[int, Fraction]

    def __post_init__(self):
        clean = {int(p): Fraction(c) for p, c in self.coeffs.items() if c != 0}
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @property
    def exponents(self) -> list[int]:
        return list(self.coeffs)

    def coefficient(self, p: int) -> Fraction:
        return self.coeffs.get(p, Fraction(0))

    def __mul__(self, other: "RationalPoly") -> "RationalPoly":
        out: dict[int, Fraction] = {}
        for p, a in self.coeffs.items():
            for q, b in other.coeffs.items():
                out[p + q] = out.get(p + q, Fraction(0)) + a * b
        return RationalPoly(out)

    def __add__(self, other: "RationalPoly") -> "RationalPoly":
        out = dict(self.coeffs)
        for p, b in other.coeffs.items():
            out[p] = out.get(p, Fraction(0)) + b
        return RationalPoly(out)

    def scale(self, c) -> "RationalPoly":
        c = Fraction(c)
        return RationalPoly({p: a * c for p, a in self.coeffs.items()})

    def __call__(self, m):
        # exact evaluation at the float argument: the coefficients alternate in
        # sign and nearly cancel for small t, so float sums lose every digit
        m = np.asarray(m, dtype=float)
        out = np.array([float(self.exact(x)) for x in m.ravel()]).reshape(m.shape)
        return float(out) if out.ndim == 0 else out

    def exact(self, m) -> Fraction:
        m = Fraction(m)
        acc, prev = Fraction(0), None
        for p in reversed(self.coeffs):          # Horner over the sparse exponents
            if prev is not None:
                acc *= m ** (prev - p)
            acc += self.coeffs[p]
            prev = p
        return acc * m ** prev if prev is not None else acc

    def rounded(self, digits: int = 6) -> dict[int, float]:
        """Coefficients rounded half away from zero, done exactly (3/128 -> 0.023438)."""
        scale = 10 ** digits
        out = {}
        for p, a in self.coeffs.items():
            q = math.floor(abs(a) * scale + Fraction(1, 2))
            out[p] = math.copysign(q / scale, a)
        return out

    def as_json(self) -> dict:
        return {str(p): {"num": str(a.numerator), "den": str(a.denominator),
                         "value": float(a)} for p, a in self.coeffs.items()}

    def __str__(self):
        return " + ".join(f"({a})*m^{p}" for p, a in self.coeffs.items()) or "0"


def _t1(fam: dict[int, RationalPoly], n: int) -> RationalPoly:
    """Birth sum sum_{j=2}^{n-1} j (n-j+1) u_j u_{n-j+1} as a polynomial in m."""
    out = RationalPoly({})
    for j in range(2, n):
        out = out + (fam[j] * fam[n - j + 1]).scale(j * (n - j + 1))
    return out


def _t2(S: RationalPoly, n: int, un0: Fraction, m0: Fraction) -> RationalPoly:
    """Solve du_n/dm = 2n u_n / m - S(m) / m^2 with u_n(m0) = un0."""
    c_top = un0 / m0 ** (2 * n)
    out: dict[int, Fraction] = {}
    for p, c in S.coeffs.items():
        d = p - 2 * n - 1
        assert d != 0, "monomial m^(2n+1) cannot occur in the birth sum"
        c_top += c * m0 ** d / d
        out[p - 1] = out.get(p - 1, Fraction(0)) - c / d
    out[2 * n] = out.get(2 * n, Fraction(0)) + c_top
    return RationalPoly(out)


def polynomial_family(n_max: int) -> dict[int, RationalPoly]:
    """Exact ``u_n`` as polynomials in ``m = 2 - t`` for n = 2..n_max (ell = 1, dimers)."""
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    m0 = Fraction(2)
    fam = {2: RationalPoly({4: Fraction(1, 16)})}
    for n in range(3, n_max + 1):
        fam[n] = _t2(_t1(fam, n), n, Fraction(0), m0)
    return fam


def eval_family(polys: Mapping[int, RationalPoly], t: float) -> ClusterDistribution:
    """Large-kind distribution (ell = 1) at time ``t`` from the polynomial family."""
    m = 2.0 - t
    if m < 0:
        raise DomainError("t beyond exhaustion (m_1 < 0)")
    top = max(polys)
    u = np.zeros(top)
    for n, poly in polys.items():
        u[n - 1] = poly(m)
    return ClusterDistribution(1, u)


# --------------------------------------------------------------------------
# numeric recursion for large systems

def _quad(f, a, b):
    if b <= a:
        return 0.0
    val, err = spi.quad(f, a, b, epsabs=QUAD_TOL * 1e-2, epsrel=1e-13, limit=500)
    if not np.isfinite(val) or err > QUAD_TOL:
        raise QuadratureFailure(f"quadrature error {err:.2e} exceeds {QUAD_TOL:.0e}")
    return val


def iterate_numeric(family: Mapping[int, Callable], u_n0: float, ell: int, m1_0: float,
                    n: int, small: Mapping[int, Callable] | None = None) -> Callable:
    """``u_n(t)`` from the already known ``u_{ell+1}, ..., u_{n-1}``.

    Large systems satisfy, with ``m = m_1(t)`` and ``S`` the birth sum
    ``sum_{i=ell+1}^{n-1} i (n+ell-i) u_i u_{n+ell-i}``,

        u_n(t) = u_n(0) (m(t)/m(0))^{2n/ell} + int_0^t (m(t)/m(s))^{2n/ell} S(s)/m(s)^2 ds.

    With ``ell = 1`` monomers may be supplied through ``small = {1: u_1}``;
    they react with every size, which replaces the power factor by
    ``exp(-A(t) + A(s))`` with ``A' = 2n (m - u_1)/m^2``.
    """
    if n < ell + 1:
        raise ValueError("n must exceed ell")
    missing = [i for i in range(ell + 1, n) if i not in family]
    if missing:
        raise ValueError(f"family is missing sizes {missing}")
    if small and (ell != 1 or set(small) != {1}):
        raise ValueError("small-cluster input is supported for ell = 1 monomers only")
    t_lim = m1_0 / ell
    pairs = [(i, i * (n + ell - i)) for i in range(ell + 1, n)]

    def birth(s):
        return sum(c * family[i](s) * family[n + ell - i](s) for i, c in pairs)

    if not small:
        expo = 2.0 * n / ell

        def u_n(t):
            if t >= t_lim:
                raise DomainError(f"t={t} beyond m_1 = 0")
            mt = m1_0 - ell * t
            free = u_n0 * (mt / m1_0) ** expo
            if not pairs:
                return free
            return free + _quad(
                lambda s: (mt / (m1_0 - ell * s)) ** expo * birth(s) / (m1_0 - ell * s) ** 2,
                0.0, t)
    else:
        u1 = small[1]

        def rate(s):
            m = m1_0 - s
            return 2.0 * n * (m - u1(s)) / (m * m)

        def A(a, b):
            return _quad(rate, a, b)

        def u_n(t):
            if t >= t_lim:
                raise DomainError(f"t={t} beyond m_1 = 0")
            free = u_n0 * math.exp(-A(0.0, t))
            if not pairs:
                return free
            return free + _quad(
                lambda s: math.exp(-A(s, t)) * birth(s) / (m1_0 - s) ** 2, 0.0, t)

    def call(t):
        if np.ndim(t) == 0:
            return u_n(float(t))
        return np.array([u_n(float(x)) for x in np.ravel(t)]).reshape(np.shape(t))

    return call


def numeric_family(u0: ClusterDistribution, n_max: int, t_max: float,
                   degree: int = 64) -> dict[int, Callable]:
    """``u_{ell+1}..u_{n_max}`` for a large-kind initial condition.

    Each level is evaluated by ``iterate_numeric`` at Chebyshev points of
    ``[0, t_max]`` and replaced by its interpolant, so deeper levels cost
    one quadrature per node instead of nested quadratures.
    """
    ell = u0.ell
    if not u0.is_large():
        raise ValueError("numeric_family needs large-cluster initial data")
    m1_0 = float(np.dot(u0.sizes, u0.u))
    if t_max >= m1_0 / ell:
        raise DomainError("t_max must lie before m_1 vanishes")
    fam: dict[int, Callable] = {}
    u0d = u0.as_dict()
    for n in range(ell + 1, n_max + 1):
        f = iterate_numeric(fam, u0d.get(n, 0.0), ell, m1_0, n)
        fam[n] = Chebyshev.interpolate(lambda x, f=f: f(x), degree, domain=[0.0, t_max])
    return fam


# --------------------------------------------------------------------------
# monomer/dimer mixture, ell = 1, u_1(0) = u_2(0) = 1/2

def mixed_monomer_dimer_closed_forms(t):
    """``(u_1, u_2, u_3)`` with ``m = 3/2 - t``."""
    m = 1.5 - np.asarray(t, dtype=float)
    if np.any(m <= 0):
        raise DomainError("closed forms hold for t < 3/2")
    u1 = m * m / (m + 3)
    u2 = 40.5 * (m / (m + 3)) ** 4
    u3 = 3.0 ** 8 * m ** 6 * (3 - 2 * m) / (9 * (m + 3) ** 7)
    if u1.ndim == 0:
        return float(u1), float(u2), float(u3)
    return u1, u2, u3


# --------------------------------------------------------------------------
# k-mer moments

def gelation_time(k: int, ell: int) -> float:
    """Blow-up time of m_2 for monodisperse k-mer data, ``k / (2k - ell)``."""
    if 2 * k - ell <= 0:
        raise ValueError("needs 2k > ell")
    return k / (2 * k - ell)


def exhaustion_time(k: int, ell: int) -> float:
    """``k / ell``, when the mass of a k-mer system is used up."""
    if ell <= 0:
        raise ValueError("ell must be positive")
    return k / ell


def closed_m2(k: int, ell: int, t):
    t = np.asarray(t, dtype=float)
    out = (k - ell * t) * (k * k - 2 * k * ell * t + ell * ell * t) / (k - 2 * k * t + ell * t)
    return float(out) if out.ndim == 0 else out


def closed_m3(k: int, ell: int, t):
    t = np.asarray(t, dtype=float)
    poly = (ell ** 2 * (ell - 2 * k) ** 3 * t ** 3
            + k * ell * (2 * ell ** 3 - 6 * k * ell ** 2 + k * k * ell + 6 * k ** 3) * t ** 2
            - k * k * ell * (ell - 2 * k) * (ell - 4 * k) * t
            + k ** 5)
    out = (k - ell * t) / (k - 2 * k * t + ell * t) ** 3 * poly
    return float(out) if out.ndim == 0 else out


def _hierarchy_terms(k_max: int, ell: float):
    """For each k >= 2, terms (coef, a, b) of sum coef * m_a m_b / m_1^2 with a, b <= k."""
    terms = {}
    for k in range(2, k_max + 1):
        acc: dict[tuple[int, int], float] = {}
        for q in range(k + 1):
            for r in range(k - q + 1):
                s = k - q - r
                if (q, r, s) in ((0, k, 0), (0, 0, k)):
                    continue            # cancels the -2 m_{k+1}/m_1 death term
                c = math.factorial(k) // (math.factorial(q) * math.factorial(r)
                                          * math.factorial(s)) * (-ell) ** q
                if c:
                    key = (r + 1, s + 1)
                    acc[key] = acc.get(key, 0.0) + c
        terms[k] = [(c, a, b) for (a, b), c in acc.items()]
    return terms


def moment_hierarchy(m_init: Sequence[float], ell: float, k_max: int, t_end: float,
                     cfg=None, record_times=None, blowup: float = 1e8) -> Trajectory:
    """Integrate ``m_2..m_kmax`` of a large system; ``m_0``, ``m_1`` are exact.

    ``m_init`` holds ``m_0(0), ..., m_kmax(0)``.  Raises ``GelationReached``
    when the integration stalls or ``m_2`` exceeds ``blowup``.
    """
    from .solver import IntegratorConfig

    if k_max < 2:
        raise ValueError("k_max must be >= 2")
    m_init = [float(x) for x in m_init]
    if len(m_init) < k_max + 1:
        raise ValueError("m_init must hold m_0..m_kmax")
    if ell < 0:
        raise ValueError("ell must be nonnegative")
    cfg = cfg or IntegratorConfig(rtol=1e-12, atol=1e-14)
    m0_0, m1_0 = m_init[0], m_init[1]
    if ell > 0 and t_end >= m1_0 / ell:
        raise GelationReached("t_end beyond m_1 = 0", m1_0 / ell)
    terms = _hierarchy_terms(k_max, ell)
    K = k_max - 1                       # state: m_2..m_kmax

    def full(t, y):
        return np.concatenate(([m1_0 - ell * t], y))     # index a-1 -> m_a

    def f(t, y):
        mm = full(t, y)
        inv = 1.0 / (mm[0] * mm[0])
        return np.array([sum(c * mm[a - 1] * mm[b - 1] for c, a, b in terms[k]) * inv
                         for k in range(2, k_max + 1)])

    def jac(t, y):
        mm = full(t, y)
        inv = 1.0 / (mm[0] * mm[0])
        J = np.zeros((K, K))
        for row, k in enumerate(range(2, k_max + 1)):
            for c, a, b in terms[k]:
                if a >= 2:
                    J[row, a - 2] += c * mm[b - 1] * inv
                if b >= 2:
                    J[row, b - 2] += c * mm[a - 1] * inv
        return J

    if record_times is None:
        record_times = np.linspace(0.0, t_end, 101)
    record_times = np.asarray(record_times, dtype=float)

    def blown(t, y):
        return blowup - y[0]
    blown.terminal = True

    sol = spi.solve_ivp(f, (0.0, t_end), m_init[2: k_max + 1], method="Radau", jac=jac,
                        rtol=cfg.rtol, atol=cfg.atol, events=blown, dense_output=True)
    if sol.status == -1:
        raise GelationReached(f"moment hierarchy stalled: {sol.message}", float(sol.t[-1]))
    if sol.status == 1:
        raise GelationReached("m_2 blew up", float(sol.t_events[0][0]))
    t = record_times
    y = sol.sol(t) if t.size else np.zeros((K, 0))
    mom = np.column_stack([m0_0 - t, m1_0 - ell * t] + [y[i] for i in range(K)])
    return Trajectory(t=t, moments=mom, interaction_mass=(m1_0 - ell * t) ** 2,
                      fractions={}, meta={"ell": ell, "k_max": k_max, "source": "hierarchy"})
