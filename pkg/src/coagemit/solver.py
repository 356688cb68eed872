"""Deterministic integration of the kinetic equations.

Small and Truncated systems are finite as stated.  Full and Large systems
are integrated on an explicit window of sizes ``1..W`` plus one overflow
compartment holding the count ``g0`` and particle mass ``g1`` of every
cluster larger than ``W``.  Overflow clusters react with everything (they
are always permissible partners) and their products stay in the overflow.
For ``ell = 1`` or large-only data the window equations are then exact for
every size ``<= W``; in general the closure only approximates the rare
reaction of an overflow cluster with a small cluster whose product drops
back below ``W``.

Time stepping uses the 3-stage Radau IIA method (order 5, L-stable) with
an analytic dense Jacobian, advanced one step at a time so exhaustion can be
caught and refined on the dense output.
"""
from __future__ import annotations

import enum
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import Radau

from .errors import DivisionByExhaustion
from .kinetics import (CLAMP_TOL, ClusterDistribution, EmissionParams, Kind, _reach,
                       check_kind)
from .trajectory import Trajectory, TrajectoryBuilder


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-10
    atol: float = 1e-13
    h0: float | None = None
    h_min: float = 1e-14
    max_steps: int = 200_000
    event_tol: float = 1e-9
    eps_event: float = 1e-13
    window: int | None = None       # explicit sizes for Full/Large systems

    def __post_init__(self):
        if self.rtol < 1e-13:
            raise ValueError("rtol must be >= 1e-13")
        if self.atol <= 0 or self.h_min <= 0 or self.event_tol <= 0 or self.eps_event <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.window is not None and self.window < 2:
            raise ValueError("window must be >= 2")


class Terminal(enum.Enum):
    REACHED_T_END = "reached_t_end"
    EXHAUSTED = "exhausted"
    STEP_FAILURE = "step_failure"


@dataclass
class SolveResult:
    trajectory: Trajectory
    terminal: Terminal
    t_ex: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def exhausted(self) -> bool:
        return self.terminal is Terminal.EXHAUSTED


class KineticSystem:
    """Right-hand side and Jacobian of one of the finite systems.

    ``overflow`` adds the two closure variables ``(g0, g1)`` after the
    window; without it products larger than ``W`` are forbidden.  After
    gelation ``g1`` carries the gel mass, so ``m_1`` stays exact; ``g0`` then
    stops being a meaningful count.
    """

    def __init__(self, ell: int, W: int, overflow: bool):
        self.ell, self.W, self.overflow = ell, W, overflow
        n = np.arange(1, W + 1)
        self.n = n.astype(float)
        cap = 2 * W if overflow else W
        self.cap = cap
        # P[n, k] = 1 when the pair (n, k) is permissible and tracked
        s = n[:, None] + n[None, :]
        self.P = ((s >= ell + 1) & (s - ell <= cap)).astype(float)
        # birth partner index: v[n + ell - k] for the Jacobian
        idx = n[:, None] + ell - n[None, :]
        self.bmask = (idx >= 1) & (idx <= W)
        self.bidx = np.where(self.bmask, idx - 1, 0)
        # components that must stay nonnegative; the overflow count is exempt
        # because after gelation it also books gel-gel encounters of a
        # single macroscopic cluster and can go below zero
        self.signed = np.ones(self.size, dtype=bool)
        if overflow:
            self.signed[W] = False
            self.hi = (s > W + ell).astype(float)     # pair product lands in the overflow
            self.hi_mass = self.hi * (s - ell)

    @property
    def size(self) -> int:
        return self.W + (2 if self.overflow else 0)

    def split(self, y):
        if self.overflow:
            return y[: self.W], y[self.W], y[self.W + 1]
        return y, 0.0, 0.0

    def mass(self, y) -> float:
        u, _, g1 = self.split(y)
        v = self.n * u
        R = _reach(v, self.ell, self.cap)
        return float(np.dot(v, R) + 2.0 * g1 * v.sum() + g1 * g1)

    def _parts(self, y):
        u, g0, g1 = self.split(y)
        v = self.n * u
        R = _reach(v, self.ell, self.cap)
        M = float(np.dot(v, R) + 2.0 * g1 * v.sum() + g1 * g1)
        conv = np.convolve(v, v)             # conv[s - 2] = sum_{i+j=s} v_i v_j
        return u, g0, g1, v, R, M, conv

    def numerators(self, y):
        ell, W = self.ell, self.W
        u, g0, g1, v, R, M, conv = self._parts(y)
        s = np.arange(1, W + 1) + ell
        birth = np.zeros(W)
        ok = s - 2 < conv.size
        birth[ok] = conv[s[ok] - 2]
        F = birth - 2.0 * v * (R + g1)
        if not self.overflow:
            return F, M
        sizes = np.arange(2, conv.size + 2)
        over = sizes > W + ell
        G0 = conv[over].sum() - g1 * g1
        G1 = np.dot(sizes[over] - ell, conv[over]) \
            + 2.0 * g1 * np.dot(self.n - ell, v) - ell * g1 * g1
        return np.concatenate((F, [G0, G1])), M

    def __call__(self, t, y):
        F, M = self.numerators(y)
        return F / (M if M > 0 else np.finfo(float).tiny)

    def jac(self, t, y):
        W, n = self.W, self.n
        u, g0, g1, v, R, M, conv = self._parts(y)
        Mi = 1.0 / (M if M > 0 else np.finfo(float).tiny)
        F, _ = self.numerators(y)
        f = F * Mi
        # derivatives of the window numerators with respect to v_k
        dF = np.where(self.bmask, 2.0 * v[self.bidx], 0.0)
        dF -= 2.0 * v[:, None] * self.P
        dF[np.diag_indices(W)] -= 2.0 * (R + g1)
        dM = 2.0 * (R + g1)
        J = np.zeros((self.size, self.size))
        J[:W, :W] = dF - np.outer(f[:W], dM)
        if self.overflow:
            dMg1 = 2.0 * v.sum() + 2.0 * g1
            J[:W, W + 1] = -2.0 * v - f[:W] * dMg1
            dG0 = 2.0 * self.hi @ v
            dG1 = 2.0 * self.hi_mass @ v + 2.0 * g1 * (n - self.ell)
            J[W, :W] = dG0 - f[W] * dM
            J[W + 1, :W] = dG1 - f[W + 1] * dM
            J[W, W + 1] = -2.0 * g1 - f[W] * dMg1
            J[W + 1, W + 1] = 2.0 * np.dot(n - self.ell, v) - 2.0 * self.ell * g1 \
                - f[W + 1] * dMg1
        J[:, :W] *= n                         # chain rule v_k = k u_k
        return J * Mi

    def moments(self, y):
        u, g0, g1 = self.split(y)
        n = self.n
        return (float(u.sum() + g0), float(np.dot(n, u) + g1),
                float(np.dot(n * n, u)), float(np.dot(n ** 3, u)))


def default_window(u0: ClusterDistribution) -> int:
    L = max(u0.s_max, 1)
    return max(4 * L + 2 * u0.ell, 64)


def build_system(u0: ClusterDistribution, params: EmissionParams,
                 cfg: IntegratorConfig) -> tuple[KineticSystem, np.ndarray]:
    check_kind(u0, params)
    ell = params.ell
    if params.kind is Kind.SMALL:
        sysm = KineticSystem(ell, ell, overflow=False)
    elif params.kind is Kind.TRUNCATED:
        sysm = KineticSystem(ell, params.n_trunc, overflow=False)
    else:
        W = cfg.window or default_window(u0)
        if W < u0.s_max:
            raise ValueError("window smaller than the initial support")
        sysm = KineticSystem(ell, W, overflow=True)
    y0 = np.zeros(sysm.size)
    y0[: u0.s_max] = u0.u[: u0.s_max]
    return sysm, y0


def _clamp(sysm, y, counter):
    neg = (y < 0) & sysm.signed
    if neg.any():
        if y[neg].min() < -CLAMP_TOL:
            return None
        counter[0] += int(neg.sum())
        y = np.where(neg, 0.0, y)
    return y


def integrate(u0: ClusterDistribution, params: EmissionParams, t_end: float,
              cfg: IntegratorConfig | None = None, record_times=None,
              track=None) -> SolveResult:
    """Integrate from ``t = 0`` to ``t_end`` or to exhaustion.

    ``record_times`` defaults to 101 evenly spaced points.  Recorded states
    are clamped (entries in ``[-1e-9, 0)`` set to zero and counted).
    """
    cfg = cfg or IntegratorConfig()
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    sysm, y0 = build_system(u0, params, cfg)
    if record_times is None:
        record_times = np.linspace(0.0, t_end, 101)
    record_times = np.unique(np.asarray(record_times, dtype=float))
    if record_times[0] < 0 or record_times[-1] > t_end * (1 + 1e-12):
        raise ValueError("record times must lie in [0, t_end]")
    record_times = np.unique(np.minimum(record_times, t_end))
    W = sysm.W
    track = list(range(1, min(W, 10) + 1)) if track is None else [int(n) for n in track]
    builder = TrajectoryBuilder(track)
    clamps = [0]
    meta = {"ell": params.ell, "kind": params.kind.value, "n_trunc": params.n_trunc,
            "window": W, "overflow": sysm.overflow, "rtol": cfg.rtol, "atol": cfg.atol,
            "eps_event": cfg.eps_event}

    def record(t, y):
        yc = _clamp(sysm, y, clamps)
        if yc is None:
            return False
        m = sysm.moments(yc)
        u, g0, g1 = sysm.split(yc)
        builder.add(t, m, sysm.mass(yc), [u[n - 1] if n <= W else 0.0 for n in track],
                    overflow_count=g0, overflow_mass=g1)
        return True

    def finish(terminal, t_ex=None, **diag):
        traj = builder.build(dict(meta, terminal=terminal.value, t_ex=t_ex))
        if not sysm.overflow:
            traj.extra = {}
        diag.update(clamped=clamps[0])
        return SolveResult(traj, terminal, t_ex, diag)

    if sysm.mass(y0) < cfg.eps_event:
        record(0.0, y0)
        return finish(Terminal.EXHAUSTED, 0.0, steps=0)

    kw = {} if cfg.h0 is None else {"first_step": cfg.h0}
    solver = Radau(sysm, 0.0, y0, t_end, rtol=cfg.rtol, atol=cfg.atol,
                   jac=sysm.jac, **kw)
    ri = 0
    while ri < record_times.size and record_times[ri] <= 0.0:
        record(0.0, y0)
        ri += 1
    steps = 0

    def diag():
        return dict(steps=steps, nfev=solver.nfev, njev=solver.njev, nlu=solver.nlu)

    while solver.status == "running":
        if steps >= cfg.max_steps:
            return finish(Terminal.STEP_FAILURE, message="max_steps exceeded", **diag())
        t_old = solver.t
        # trial Newton iterates can leave the physical region near exhaustion;
        # Radau rejects those steps itself, so the float warnings are noise
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            msg = solver.step()
        steps += 1
        if solver.status == "failed":
            return finish(Terminal.STEP_FAILURE, message=str(msg), **diag())
        if solver.status == "running" and solver.step_size is not None \
                and solver.step_size < cfg.h_min:
            return finish(Terminal.STEP_FAILURE, message="step below h_min", **diag())
        dense = solver.dense_output()
        if _past_event(sysm, solver.y, cfg):
            t_ex = _bisect_event(dense, sysm, t_old, solver.t, cfg)
            while ri < record_times.size and record_times[ri] < t_ex:
                if not record(record_times[ri], dense(record_times[ri])):
                    return finish(Terminal.STEP_FAILURE, message="negative fraction", **diag())
                ri += 1
            record(t_ex, dense(t_ex))
            return finish(Terminal.EXHAUSTED, t_ex, **diag())
        while ri < record_times.size and record_times[ri] <= solver.t:
            if not record(record_times[ri], dense(record_times[ri])):
                return finish(Terminal.STEP_FAILURE, message="negative fraction", **diag())
            ri += 1
    return finish(Terminal.REACHED_T_END, **diag())


def _past_event(sysm, y, cfg) -> bool:
    # a step may carry the state straight through M = 0 into negative fractions
    return sysm.mass(y) < cfg.eps_event or y[sysm.signed].min() < -CLAMP_TOL


def _bisect_event(dense, sysm, a, b, cfg) -> float:
    """First time in [a, b] where M drops below eps_event (M(a) is above it)."""
    while b - a > cfg.event_tol:
        mid = 0.5 * (a + b)
        if _past_event(sysm, dense(mid), cfg):
            b = mid
        else:
            a = mid
    return b


def detect_exhaustion(u0: ClusterDistribution, params: EmissionParams,
                      t_max: float = 1.0, cfg: IntegratorConfig | None = None) -> float | None:
    """Exhaustion time of the deterministic system, or None if not reached by ``t_max``."""
    res = integrate(u0, params, t_max, cfg, record_times=[0.0])
    if res.terminal is Terminal.STEP_FAILURE:
        raise DivisionByExhaustion(res.diagnostics.get("message", "step failure"))
    return res.t_ex


# --------------------------------------------------------------------------
# exhaustion heat map for the three-species small system (ell = 3)

def _heat_cell(args):
    p, q, ell, cfg = args
    r = max(1.0 - p - q, 0.0)
    u0 = ClusterDistribution(ell, np.array([p, q, r]))
    t = detect_exhaustion(u0, EmissionParams(ell, Kind.SMALL), 1.0, cfg)
    return np.nan if t is None else t


def exhaustion_heatmap(ell: int = 3, grid_n: int = 21, cfg: IntegratorConfig | None = None,
                       workers: int | None = None):
    """Exhaustion times over ``p = i/(grid_n-1)``, ``q = j/(grid_n-1)``.

    Returns ``(p, q, T)`` with ``T[i, j]`` the exhaustion time of the small
    system with ``u(0) = (p, q, 1-p-q)``, NaN outside ``p + q <= 1``.
    """
    if ell != 3:
        raise ValueError("the heat map is defined for the three-species system (ell = 3)")
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    cfg = cfg or IntegratorConfig()
    axis = np.linspace(0.0, 1.0, grid_n)
    cells = [(i, j) for i in range(grid_n) for j in range(grid_n - i)]
    jobs = [(axis[i], axis[j], ell, cfg) for i, j in cells]
    workers = workers or int(os.environ.get("COAGEMIT_WORKERS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            vals = list(pool.map(_heat_cell, jobs, chunksize=8))
    else:
        vals = [_heat_cell(j) for j in jobs]
    T = np.full((grid_n, grid_n), np.nan)
    for (i, j), v in zip(cells, vals):
        T[i, j] = v
    return axis, axis.copy(), T


def small_time_slope(t, u, window) -> float:
    """Least-squares slope of log u against log t restricted to ``window``."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    a, b = window
    sel = (t >= a) & (t <= b) & (u > 0)
    if sel.sum() < 2:
        raise ValueError("need at least two positive samples in the window")
    slope, _ = np.polyfit(np.log(t[sel]), np.log(u[sel]), 1)
    return float(slope)
