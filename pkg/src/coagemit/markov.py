"""Finite-N Markov jump process for coagulation with emission.

One reaction happens per step, so after ``k`` steps the extent of reaction
is ``t = k / N0``.  Reactants are drawn in order and without replacement,
each with probability proportional to its size, conditioned on a nonempty
product (``i + j >= ell + 1``).  The conditioning is done by rejection with
restore-on-reject.

The hot loop lives in the selected kernel (see ``_backend``); this module
owns the state, its index, recording and bookkeeping.
"""
from __future__ import annotations

import math
from array import array
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from . import _backend
from .errors import Exhausted, InvalidInitialDistribution
from .kinetics import ClusterDistribution
from .rng import RNG_VERSION, SplitMix64
from .trajectory import Trajectory, TrajectoryBuilder

MAX_RETRIES = 1_000_000
_OK, _EXHAUSTED, _GROW = 0, 1, 2


@dataclass(frozen=True)
class GelPolicy:
    """How the gel interacts with the sol.

    ``ziff-stell``: unmodified sampler, the gel keeps reacting.
    ``stockmayer``: clusters of size ``>= threshold`` are excluded from both draws.
    """

    name: str = "ziff-stell"
    threshold: int | None = None

    def __post_init__(self):
        if self.name not in ("ziff-stell", "stockmayer"):
            raise ValueError(f"unknown gel policy {self.name!r}")
        if self.name == "stockmayer" and (self.threshold is None or self.threshold < 2):
            raise ValueError("Stockmayer policy needs an integer threshold")
        if self.name == "ziff-stell" and self.threshold is not None:
            raise ValueError("Ziff-Stell policy takes no threshold")

    @classmethod
    def ziff_stell(cls):
        return cls("ziff-stell")

    @classmethod
    def stockmayer(cls, threshold: int):
        return cls("stockmayer", int(threshold))

    def kernel_threshold(self, ell: int) -> int:
        if self.name == "ziff-stell":
            return 0
        if self.threshold < ell + 1:
            raise ValueError(f"Stockmayer threshold must be >= ell + 1 = {ell + 1}")
        return self.threshold

    def describe(self) -> str:
        return self.name if self.threshold is None else f"{self.name}({self.threshold})"


ZIFF_STELL = GelPolicy.ziff_stell()


class WeightedSizeIndex:
    """Binary-indexed (Fenwick) tree over size slots ``1..cap``.

    Slot ``n`` holds the sampling weight of size ``n``.  ``cap`` is kept a
    power of two so ``find`` can descend bit by bit.
    """

    def __init__(self, cap: int):
        if cap < 1 or cap & (cap - 1):
            raise ValueError("capacity must be a power of two")
        self.cap = cap
        self.tree = array("q", bytes(8 * (cap + 1)))

    @classmethod
    def from_weights(cls, weights: np.ndarray, cap: int) -> "WeightedSizeIndex":
        """Build in O(cap) from ``weights[n]`` (index 0 ignored)."""
        idx = cls(cap)
        w = np.zeros(cap + 1, dtype=np.int64)
        w[1: min(len(weights), cap + 1)] = weights[1: cap + 1]
        c = np.cumsum(w)
        i = np.arange(1, cap + 1)
        tree = np.zeros(cap + 1, dtype=np.int64)
        tree[1:] = c[i] - c[i - (i & -i)]
        idx.tree = array("q", tree.tobytes())
        return idx

    def add(self, n: int, delta: int) -> None:
        tree, cap = self.tree, self.cap
        while n <= cap:
            tree[n] += delta
            n += n & -n

    def prefix(self, n: int) -> int:
        tree = self.tree
        n = min(n, self.cap)
        s = 0
        while n > 0:
            s += tree[n]
            n -= n & -n
        return s

    @property
    def total(self) -> int:
        return self.prefix(self.cap)

    def point(self, n: int) -> int:
        return self.prefix(n) - self.prefix(n - 1)

    def find(self, r: int) -> int:
        """Smallest slot ``n`` with ``prefix(n) > r``."""
        if not 0 <= r < self.total:
            raise ValueError("r outside [0, total)")
        pos, step, tree = 0, self.cap, self.tree
        while step:
            nxt = pos + step
            if nxt <= self.cap and tree[nxt] <= r:
                pos = nxt
                r -= tree[nxt]
            step >>= 1
        return pos + 1


def _pow2_at_least(n: int) -> int:
    return 1 << max(0, (max(n, 1) - 1).bit_length())


class ParticleState:
    """Integer cluster counts with a weighted size index.

    Mutated in place by ``step``/``run``.  ``weight_total`` is the total
    eligible weight in the index; under the Ziff-Stell policy it equals
    ``total_particles``.
    """

    def __init__(self, ell: int, counts: dict[int, int], seed: int = 0,
                 policy: GelPolicy = ZIFF_STELL):
        if ell < 1:
            raise ValueError("ell must be >= 1")
        self.ell = int(ell)
        top = max(counts) if counts else 1
        self.cap = _pow2_at_least(2 * top)
        self.counts = array("q", bytes(8 * (self.cap + 1)))
        for n, c in counts.items():
            if c < 0:
                raise ValueError("negative count")
            self.counts[n] = c
        self.total_clusters = sum(counts.values())
        self.total_particles = sum(n * c for n, c in counts.items())
        self.N0 = self.total_clusters
        self.P0 = self.total_particles
        self.step_count = 0
        self.seed = seed
        self.rng = SplitMix64(seed)
        self.exhausted = False
        self.policy = policy
        self.threshold = policy.kernel_threshold(self.ell)
        self._rebuild_index()

    # -- index maintenance --------------------------------------------------

    def _weights(self) -> np.ndarray:
        c = np.frombuffer(self.counts, dtype=np.int64)
        w = c * np.arange(c.size, dtype=np.int64)
        if self.threshold:
            w[self.threshold:] = 0
        return w

    def _rebuild_index(self) -> None:
        w = self._weights()
        self.index = WeightedSizeIndex.from_weights(w, self.cap)
        self.weight_total = int(w.sum())

    def _eligible(self, n: int) -> bool:
        return self.threshold == 0 or n < self.threshold

    def grow(self, min_size: int) -> None:
        """Double the capacity until ``min_size`` fits; rebuilds the index."""
        cap = self.cap
        while cap < min_size:
            cap *= 2
        if cap == self.cap:
            return
        new = array("q", bytes(8 * (cap + 1)))
        new[: self.cap + 1] = self.counts
        self.counts = new
        self.cap = cap
        self._rebuild_index()

    def set_policy(self, policy: GelPolicy) -> None:
        thr = policy.kernel_threshold(self.ell)
        self.policy = policy
        if thr != self.threshold:
            self.threshold = thr
            self._rebuild_index()

    def apply(self, i: int, j: int) -> None:
        """Apply ``S_i + S_j -> S_{i+j-ell}`` (pair assumed permissible)."""
        p = i + j - self.ell
        if p > self.cap:
            self.grow(p)
        if self.counts[i] < 1 or self.counts[j] < 1 + (i == j):
            raise ValueError(f"pair ({i}, {j}) not available")
        for n in (i, j):
            self.counts[n] -= 1
            if self._eligible(n):
                self.index.add(n, -n)
                self.weight_total -= n
        self.counts[p] += 1
        if self._eligible(p):
            self.index.add(p, p)
            self.weight_total += p
        self.total_clusters -= 1
        self.total_particles -= self.ell
        self.step_count += 1

    # -- views ----------------------------------------------------------------

    def count(self, n: int) -> int:
        return self.counts[n] if 1 <= n <= self.cap else 0

    def as_dict(self) -> dict[int, int]:
        c = np.frombuffer(self.counts, dtype=np.int64)
        nz = np.flatnonzero(c)
        return {int(n): int(c[n]) for n in nz}

    def largest_size(self) -> int:
        c = np.frombuffer(self.counts, dtype=np.int64)
        nz = np.flatnonzero(c)
        return int(nz[-1]) if nz.size else 0

    @property
    def t(self) -> float:
        return self.step_count / self.N0

    def audit(self) -> None:
        """Recheck every maintained total against the counts (raises AssertionError)."""
        c = np.frombuffer(self.counts, dtype=np.int64)
        n = np.arange(c.size, dtype=np.int64)
        assert int(c.sum()) == self.total_clusters, "cluster total drifted"
        assert int((n * c).sum()) == self.total_particles, "particle total drifted"
        assert self.total_clusters == self.N0 - self.step_count
        assert self.total_particles == self.P0 - self.ell * self.step_count
        w = self._weights()
        assert int(w.sum()) == self.weight_total == self.index.total, "index total drifted"
        rebuilt = WeightedSizeIndex.from_weights(w, self.cap)
        assert rebuilt.tree == self.index.tree, "index slots drifted"


def largest_remainder(N: int, u0: ClusterDistribution) -> dict[int, int]:
    """Integer counts summing to N; ties in the remainder go to smaller sizes."""
    fr = {n: Fraction(x) for n, x in u0.as_dict().items()}
    base = {n: math.floor(x * N) for n, x in fr.items()}
    short = N - sum(base.values())
    order = sorted(fr, key=lambda n: (-(fr[n] * N - base[n]), n))
    for n in order[:max(short, 0)]:
        base[n] += 1
    return {n: c for n, c in base.items() if c > 0}


def init_state(N: int, u0: ClusterDistribution, seed: int = 0,
               policy: GelPolicy = ZIFF_STELL) -> ParticleState:
    """Round ``N * u0`` to integer counts and build the sampling index."""
    if N < 2:
        raise ValueError("need at least two clusters")
    if (u0.u < 0).any():
        raise InvalidInitialDistribution("negative initial fraction")
    if not u0.u.any():
        raise InvalidInitialDistribution("empty support")
    if abs(u0.u.sum() - 1.0) > 1e-9:
        raise InvalidInitialDistribution("initial fractions must sum to 1")
    state = ParticleState(u0.ell, largest_remainder(N, u0), seed=seed, policy=policy)
    return state


# ---------------------------------------------------------------------------
# single-step operations

def feasibility_check(state: ParticleState, backend: str | None = None) -> bool:
    """True iff some ordered pair of distinct eligible clusters is permissible."""
    k = _backend.get(backend)
    return bool(k.feasible(state.counts, state.index.tree, state.cap, state.ell,
                           state.weight_total))


def sample_pair(state: ParticleState, rng: SplitMix64 | None = None,
                backend: str | None = None):
    """Draw an ordered permissible pair ``(i, j)``, or ``None`` when exhausted.

    The state is left unchanged; only the generator advances.
    """
    rng = state.rng if rng is None else rng
    k = _backend.get(backend)
    status, i, j, rng.counter = k.draw_pair(
        state.counts, state.index.tree, state.cap, state.ell, state.threshold,
        rng.counter, state.weight_total, MAX_RETRIES)
    if status != _OK:
        return None
    return int(i), int(j)


def _advance(state: ParticleState, n_steps: int, rng: SplitMix64, kernel) -> int:
    """Run up to n_steps reactions; returns the number done (stops when exhausted)."""
    done_total = 0
    while done_total < n_steps and not state.exhausted:
        done, status, rng.counter, state.total_clusters, state.total_particles, \
            state.weight_total, pi, pj = kernel.advance(
                state.counts, state.index.tree, state.cap, state.ell, state.threshold,
                n_steps - done_total, rng.counter, state.total_clusters,
                state.total_particles, state.weight_total, MAX_RETRIES)
        state.step_count += done
        done_total += done
        if status == _EXHAUSTED:
            state.exhausted = True
        elif status == _GROW:
            state.grow(pi + pj - state.ell)
            state.apply(pi, pj)
            done_total += 1
    return done_total


def step(state: ParticleState, rng: SplitMix64 | None = None,
         policy: GelPolicy | None = None, backend: str | None = None) -> ParticleState:
    """Perform one reaction in place; raises ``Exhausted`` if none is possible."""
    if policy is not None:
        state.set_policy(policy)
    rng = state.rng if rng is None else rng
    if _advance(state, 1, rng, _backend.get(backend)) != 1:
        raise Exhausted(f"no permissible pair at t={state.t}")
    return state


def gel_fraction(state: ParticleState) -> float:
    """Largest occupied size over total particles (0 for an empty state)."""
    if state.total_particles <= 0:
        return 0.0
    return state.largest_size() / state.total_particles


# ---------------------------------------------------------------------------
# recording

def _record(state: ParticleState, builder: TrajectoryBuilder) -> None:
    c = np.frombuffer(state.counts, dtype=np.int64)
    nz = np.flatnonzero(c)
    U = c[nz].astype(float)
    sz = nz.astype(float)
    N0 = state.N0
    m2 = float(np.dot(sz * sz, U))
    m3 = float(np.dot(sz * sz * sz, U))
    P = state.total_particles
    block = 0
    ell = state.ell
    for a in range(1, ell):
        for b in range(1, ell - a + 1):
            block += a * b * state.count(a) * state.count(b)
    M = (P * P - block) / (N0 * N0)
    largest = int(nz[-1]) if nz.size else 0
    gel = largest / P if P > 0 else 0.0
    builder.add(state.step_count / N0,
                (state.total_clusters / N0, P / N0, m2 / N0, m3 / N0), M,
                [state.count(n) / N0 for n in builder.track],
                step=state.step_count, clusters=state.total_clusters, particles=P,
                gel_fraction=gel, largest=largest)


def record_steps(N0: int, t_end: float, record_dt: float) -> list[int]:
    """Step indices of the record points: round(j * record_dt * N0) up to t_end."""
    if t_end <= 0 or record_dt <= 0:
        raise ValueError("t_end and record_dt must be positive")
    k_end = math.ceil(t_end * N0 - 1e-9)
    out = []
    j = 0
    while True:
        k = round(j * record_dt * N0)
        if k >= k_end:
            break
        if not out or k > out[-1]:
            out.append(k)
        j += 1
    out.append(k_end)
    return out


def run(state: ParticleState, t_end: float, record_dt: float,
        policy: GelPolicy | None = None, track: Iterable[int] | None = None,
        backend: str | None = None) -> Trajectory:
    """Advance until ``t_end`` (or exhaustion), recording every ``record_dt``."""
    if policy is not None:
        state.set_policy(policy)
    kernel = _backend.get(backend)
    track = list(range(1, 11)) if track is None else sorted(set(int(n) for n in track))
    builder = TrajectoryBuilder(track)
    targets = [k for k in record_steps(state.N0, t_end, record_dt) if k >= state.step_count]
    if not targets or targets[0] > state.step_count:
        _record(state, builder)
    for k in targets:
        _advance(state, k - state.step_count, state.rng, kernel)
        if not builder.rows or builder.extra_rows[-1]["step"] != state.step_count:
            _record(state, builder)
        if state.exhausted:
            break
    meta = {
        "seed": state.seed, "N0": state.N0, "P0": state.P0, "ell": state.ell,
        "policy": state.policy.describe(), "rng": RNG_VERSION,
        "backend": "python" if kernel is _backend.get("python") else "cython",
        "t_end": t_end, "record_dt": record_dt,
        "exhausted": state.exhausted,
        "t_ex": state.t if state.exhausted else None,
    }
    ex = builder.extra_rows
    traj = builder.build(
        meta,
        gel_fraction=np.array([e["gel_fraction"] for e in ex]),
        steps=np.array([e["step"] for e in ex], dtype=np.int64),
        clusters=np.array([e["clusters"] for e in ex], dtype=np.int64),
        particles=np.array([e["particles"] for e in ex], dtype=np.int64),
    )
    traj.extra = {"largest": traj.extra["largest"]}
    return traj


def simulate(N: int, u0: ClusterDistribution, t_end: float, record_dt: float,
             seed: int = 0, policy: GelPolicy = ZIFF_STELL,
             track: Iterable[int] | None = None, backend: str | None = None) -> Trajectory:
    """``init_state`` followed by ``run``."""
    state = init_state(N, u0, seed=seed, policy=policy)
    traj = run(state, t_end, record_dt, track=track, backend=backend)
    traj.meta["m1_rounding_offset"] = state.P0 / state.N0 - float(u0.sizes @ u0.u)
    return traj


def _simulate_job(args):
    return simulate(*args[:4], **args[4])


def run_ensemble(N: int, u0: ClusterDistribution, seeds: Sequence[int], t_end: float,
                 record_dt: float, policy: GelPolicy = ZIFF_STELL,
                 track: Iterable[int] | None = None, workers: int = 1) -> list[Trajectory]:
    """Independent replicas, one per seed, returned in seed order."""
    track = None if track is None else list(track)
    jobs = [(N, u0, t_end, record_dt,
             dict(seed=s, policy=policy, track=track)) for s in seeds]
    if workers <= 1 or len(jobs) <= 1:
        return [_simulate_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_job, jobs))
