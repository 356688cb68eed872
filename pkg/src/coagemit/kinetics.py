"""Kinetic equations for coagulation with emission, S_i + S_j -> S_{i+j-ell}.

Cluster fractions are stored as dense float arrays indexed by ``size - 1``
(``u[0]`` is the monomer fraction).  Every function here is pure.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import DivisionByExhaustion, InvalidInitialDistribution

#: absolute threshold below which the interaction mass counts as exhausted
EPS_M = 1e-12
#: negative entries above -CLAMP_TOL are clamped to zero, below it they are errors
CLAMP_TOL = 1e-9


class Kind(enum.Enum):
    FULL = "full"
    SMALL = "small"
    LARGE = "large"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class EmissionParams:
    """Emission size and the form of the kinetic equations.

    ``n_trunc`` is only meaningful for ``Kind.TRUNCATED``: products larger
    than ``n_trunc`` are not permitted.
    """

    ell: int
    kind: Kind = Kind.FULL
    n_trunc: int | None = None

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError(f"emission size must be a positive integer, got {self.ell}")
        if self.kind is Kind.TRUNCATED:
            if self.n_trunc is None:
                raise ValueError("Truncated kind needs n_trunc")
        elif self.n_trunc is not None:
            raise ValueError("n_trunc is only valid for the Truncated kind")

    @classmethod
    def truncated(cls, ell: int, n_trunc: int, largest_initial: int) -> "EmissionParams":
        """Truncated system; checks ``n_trunc >= 2L + ell``."""
        if n_trunc < 2 * largest_initial + ell:
            raise ValueError(
                f"truncation N={n_trunc} must be >= 2L+ell = {2 * largest_initial + ell}")
        return cls(ell, Kind.TRUNCATED, n_trunc)


@dataclass(frozen=True, eq=False)
class ClusterDistribution:
    """Cluster fractions ``u_n`` for sizes ``1..len(u)``.

    Entries in ``[-CLAMP_TOL, 0)`` are clamped to zero and counted in
    ``clamped``; anything more negative raises ``ValueError``.
    """

    ell: int
    u: np.ndarray
    clamped: int = field(default=0, compare=False)

    def __post_init__(self):
        if int(self.ell) != self.ell or self.ell < 1:
            raise ValueError(f"emission size must be a positive integer, got {self.ell}")
        u = np.array(self.u, dtype=float).ravel()
        if not np.all(np.isfinite(u)):
            raise ValueError("cluster fractions must be finite")
        neg = u < 0
        if neg.any():
            if u.min() < -CLAMP_TOL:
                raise ValueError(f"negative cluster fraction {u.min():.3e}")
            object.__setattr__(self, "clamped", self.clamped + int(neg.sum()))
            u[neg] = 0.0
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @classmethod
    def from_mapping(cls, ell: int, fractions: Mapping[int, float], size: int | None = None):
        if not fractions:
            return cls(ell, np.zeros(size or 0))
        top = max(fractions)
        if min(fractions) < 1:
            raise ValueError("cluster sizes start at 1")
        u = np.zeros(max(top, size or 0))
        for n, val in fractions.items():
            u[n - 1] = val
        return cls(ell, u)

    @classmethod
    def initial(cls, ell: int, fractions: Mapping[int, float] | np.ndarray):
        """Initial condition: nonnegative, nonempty, summing to one within 1e-12."""
        if isinstance(fractions, Mapping):
            vals = list(fractions.values())
            if any(v < 0 for v in vals):
                raise InvalidInitialDistribution("negative initial fraction")
            dist = cls.from_mapping(ell, fractions)
        else:
            arr = np.asarray(fractions, dtype=float)
            if (arr < 0).any():
                raise InvalidInitialDistribution("negative initial fraction")
            dist = cls(ell, arr)
        if not dist.u.any():
            raise InvalidInitialDistribution("empty support")
        if abs(dist.u.sum() - 1.0) > 1e-12:
            raise InvalidInitialDistribution(f"fractions sum to {dist.u.sum()!r}, not 1")
        return dist

    @classmethod
    def kmer(cls, ell: int, k: int):
        u = np.zeros(k)
        u[k - 1] = 1.0
        return cls(ell, u)

    @property
    def s_max(self) -> int:
        """Largest occupied size (0 for the empty distribution)."""
        nz = np.flatnonzero(self.u)
        return int(nz[-1]) + 1 if nz.size else 0

    @property
    def sizes(self) -> np.ndarray:
        return np.arange(1, self.u.size + 1)

    def as_dict(self) -> dict[int, float]:
        return {int(n) + 1: float(self.u[n]) for n in np.flatnonzero(self.u)}

    def padded(self, length: int) -> np.ndarray:
        out = np.zeros(max(length, self.u.size))
        out[: self.u.size] = self.u
        return out

    def is_small(self) -> bool:
        return not self.u[self.ell:].any()

    def is_large(self) -> bool:
        return not self.u[: self.ell].any()


@dataclass(frozen=True)
class MomentVector:
    m: tuple

    def __getitem__(self, k):
        return self.m[k]

    def __len__(self):
        return len(self.m)


def check_kind(u: ClusterDistribution, params: EmissionParams) -> None:
    if u.ell != params.ell:
        raise ValueError(f"distribution has ell={u.ell}, params have ell={params.ell}")
    if params.kind is Kind.SMALL and not u.is_small():
        raise ValueError("Small kind requires u_n = 0 for n > ell")
    if params.kind is Kind.LARGE and not u.is_large():
        raise ValueError("Large kind requires u_n = 0 for n <= ell")
    if params.kind is Kind.TRUNCATED:
        if not u.is_large():
            raise ValueError("Truncated kind is defined for large-cluster data")
        if u.s_max > params.n_trunc:
            raise ValueError("support exceeds the truncation size")


# --------------------------------------------------------------------------
# moments

def moment(u: ClusterDistribution, k: int) -> float:
    n = u.sizes.astype(float)
    return float(np.dot(n ** k, u.u))


def moments(u: ClusterDistribution, kmax: int = 3) -> MomentVector:
    return MomentVector(tuple(moment(u, k) for k in range(kmax + 1)))


def split_moments(u: ClusterDistribution) -> tuple[float, float, float, float]:
    """Cluster and particle totals split into small (<= ell) and large sizes."""
    ell = u.ell
    n = u.sizes
    small = n <= ell
    m0s = float(u.u[small].sum())
    m0b = float(u.u[~small].sum())
    m1s = float(np.dot(n[small], u.u[small]))
    m1b = float(np.dot(n[~small], u.u[~small]))
    return m0s, m0b, m1s, m1b


# --------------------------------------------------------------------------
# interaction mass and right-hand sides

def _forbidden_block(v: np.ndarray, ell: int) -> float:
    """sum of v_i v_j over ordered pairs with i + j <= ell."""
    total = 0.0
    top = min(ell - 1, v.size)
    for i in range(1, top + 1):
        jmax = min(ell - i, v.size)
        total += v[i - 1] * v[:jmax].sum()
    return total


def interaction_mass(u: ClusterDistribution, n_trunc: int | None = None) -> float:
    """Total weight ``M`` of permissible ordered reactant pairs.

    ``M = sum_{i+j >= ell+1} i j u_i u_j``.  With ``n_trunc`` the pairs whose
    product exceeds ``n_trunc`` are excluded as well (the truncated system).
    """
    ell = u.ell
    v = u.sizes * u.u
    if n_trunc is not None:
        return float(np.dot(v, _reach(v, ell, n_trunc)))
    if u.is_small():
        return float(np.dot(v, _reach(v, ell, max(v.size, 1))))
    m1 = v.sum()
    return float(max(m1 * m1 - _forbidden_block(v, ell), 0.0))


def _reach(v: np.ndarray, ell: int, n_cap: int) -> np.ndarray:
    """R_n = sum of v_j over partners j with 1 <= n + j - ell <= n_cap."""
    W = v.size
    c = np.concatenate(([0.0], np.cumsum(v)))
    n = np.arange(1, W + 1)
    lo = np.clip(ell - n, 0, W)             # j >= ell + 1 - n
    hi = np.clip(n_cap + ell - n, 0, W)     # j <= n_cap + ell - n
    return np.where(hi > lo, c[hi] - c[lo], 0.0)


def window_rhs(u: np.ndarray, ell: int, eps: float | None = EPS_M):
    """Right-hand side on the window ``1..len(u)`` with products > len(u) forbidden.

    Returns ``(du, M)``.  ``eps=None`` skips the exhaustion guard (used by the
    integrator, which handles exhaustion through its own event).
    """
    W = u.size
    v = np.arange(1, W + 1) * u
    R = _reach(v, ell, W)
    M = float(np.dot(v, R))
    if eps is not None and M < eps:
        raise DivisionByExhaustion(f"interaction mass {M:.3e} below {eps:.1e}")
    conv = np.convolve(v, v)                # conv[s - 2] = sum_{i+j=s} v_i v_j
    birth = np.zeros(W)
    s = np.arange(1, W + 1) + ell           # birth of n needs i + j = n + ell
    ok = s - 2 < conv.size
    birth[ok] = conv[s[ok] - 2]
    du = (birth - 2.0 * v * R) / (M if M > 0 else np.finfo(float).tiny)
    return du, M


def rhs(u: ClusterDistribution, params: EmissionParams) -> np.ndarray:
    """Time derivative of the cluster fractions.

    The result is indexed by ``size - 1``.  For the Full and Large kinds it
    extends to ``2 * s_max - ell`` so the flux into newly created sizes is
    included; for the Small kind it covers sizes ``1..ell``; for the
    Truncated kind it covers ``1..n_trunc``.
    """
    check_kind(u, params)
    ell = params.ell
    if params.kind is Kind.SMALL:
        window = u.padded(ell)[:ell]
    elif params.kind is Kind.TRUNCATED:
        window = u.padded(params.n_trunc)
    else:
        window = u.padded(max(2 * u.s_max - ell, u.s_max, 1))
    if params.kind is Kind.LARGE:
        m1 = moment(u, 1)
        if m1 * m1 < EPS_M:
            raise DivisionByExhaustion(f"m_1^2 = {m1 * m1:.3e} below {EPS_M:.1e}")
    du, _ = window_rhs(window, ell)
    return du


def split_moment_rates(u: ClusterDistribution) -> tuple[float, float, float, float]:
    """Rates of change of ``split_moments`` (small/large cluster and particle totals)."""
    ell = u.ell
    v = u.sizes * u.u
    M = interaction_mass(u)
    if M < EPS_M:
        raise DivisionByExhaustion(f"interaction mass {M:.3e} below {EPS_M:.1e}")
    vs = np.zeros(ell)
    vs[: min(ell, v.size)] = v[:ell]
    js = np.arange(1, ell + 1)
    # permissible small-small pairs (j + k >= ell + 1)
    ss = float(np.dot(vs, _reach(vs, ell, ell)))
    vb_total = float(v[ell:].sum())

    c0s = c0b = c1s = c1b = 0.0
    for k in range(ell + 1, v.size + 1):
        vk = v[k - 1]
        if vk == 0.0:
            continue
        if k >= 2 * ell:
            # product always large: small loses a cluster of size j
            c0s += vk * vs.sum()
            c1s += vk * np.dot(js, vs)
            c1b += vk * np.dot(ell - js, vs)
        else:
            cut = 2 * ell - k               # j <= cut gives a small product
            lo, hi = vs[:cut], vs[cut:]
            jl, jh = js[:cut], js[cut:]
            c0b += vk * lo.sum()
            c1s += vk * np.dot(ell - k, lo.sum()) + vk * np.dot(jh, hi)
            c1b += vk * k * lo.sum() + vk * np.dot(ell - jh, hi)
            c0s += vk * hi.sum()
    dm0s = -(ss + 2.0 * c0s) / M
    dm0b = -(vb_total ** 2 + 2.0 * c0b) / M
    dm1s = -(ell * ss + 2.0 * c1s) / M
    dm1b = -(ell * vb_total ** 2 + 2.0 * c1b) / M
    return dm0s, dm0b, dm1s, dm1b


# --------------------------------------------------------------------------
# q-coordinates

def to_q(u: ClusterDistribution) -> ClusterDistribution:
    m1 = moment(u, 1)
    if m1 <= 0:
        raise DivisionByExhaustion("q-coordinates need m_1 > 0")
    return ClusterDistribution(u.ell, u.u / m1)


def from_q(q: ClusterDistribution, m1: float) -> ClusterDistribution:
    if m1 <= 0:
        raise ValueError("m_1 must be positive")
    return ClusterDistribution(q.ell, q.u * m1)


# --------------------------------------------------------------------------
# growth-bound sequence for truncated large systems

def catalan_bound_sequence(L: int, ell: int, n_max: int,
                           below_base: str = "linear") -> dict[int, float]:
    """Catalan-like majorant ``A_n`` for ``ell + 1 <= n <= n_max``.

    ``A_{2L+ell} = 2L + ell`` and, for ``n >= 2L + ell``,

        A_{n+1} = (n+1) * 2L / (n + 1 - ell - 2L) * sum_{k=ell+1}^{n} A_k A_{n-k+ell+1}.

    The recursion reaches below the base index.  ``below_base="linear"``
    seeds ``A_n = n`` there (valid because fractions never exceed one, and
    needed for the fraction bound to hold at every size); ``"zero"`` drops
    those terms, which is the reading under which the geometric growth
    bound ``A_n <= (2L+ell)^3 gamma^((n-ell)/2L - 1) / n^2`` holds, at the
    price of zero entries.
    """
    base = 2 * L + ell
    if n_max < base:
        raise ValueError(f"n_max must be >= 2L + ell = {base}")
    if below_base not in ("linear", "zero"):
        raise ValueError("below_base must be 'linear' or 'zero'")
    A = {n: (float(n) if below_base == "linear" else 0.0) for n in range(ell + 1, base)}
    A[base] = float(base)
    for n in range(base, n_max):
        conv = sum(A[k] * A[n - k + ell + 1] for k in range(ell + 1, n + 1))
        A[n + 1] = (n + 1) * 2 * L / (n + 1 - ell - 2 * L) * conv
    return A


def catalan_gamma(L: int, ell: int) -> float:
    b = 2 * L + ell
    return 14.0 * (b + 2) * b ** 3
