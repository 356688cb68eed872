"""Time-stamped records shared by the simulator and the solvers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trajectory:
    """Recorded states along a run.

    ``moments[:, k]`` holds ``m_k`` for k = 0..3.  ``fractions`` maps a size
    to its recorded fraction series.  Simulator runs also fill ``steps``,
    ``clusters``, ``particles`` and ``gel_fraction``; solver runs leave them
    ``None``.  ``extra`` holds any further named columns.
    """

    t: np.ndarray
    moments: np.ndarray
    interaction_mass: np.ndarray
    fractions: dict[int, np.ndarray]
    meta: dict = field(default_factory=dict)
    gel_fraction: np.ndarray | None = None
    steps: np.ndarray | None = None
    clusters: np.ndarray | None = None
    particles: np.ndarray | None = None
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    def __len__(self):
        return self.t.size

    def m(self, k: int) -> np.ndarray:
        return self.moments[:, k]

    def u(self, n: int) -> np.ndarray:
        return self.fractions[n]

    def columns(self) -> dict[str, np.ndarray]:
        """Ordered wide-format columns: t, m0..m3, [gel_fraction], M, u_<n>, extras."""
        cols = {"t": self.t}
        for k in range(self.moments.shape[1]):
            cols[f"m{k}"] = self.moments[:, k]
        if self.gel_fraction is not None:
            cols["gel_fraction"] = self.gel_fraction
        cols["M"] = self.interaction_mass
        for n in sorted(self.fractions):
            cols[f"u_{n}"] = self.fractions[n]
        cols.update(self.extra)
        return cols

    def at(self, t: float) -> int:
        """Index of the last record with time <= t."""
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        if i < 0:
            raise ValueError(f"no record at or before t={t}")
        return i


class TrajectoryBuilder:
    """Accumulates rows, then freezes them into a ``Trajectory``."""

    def __init__(self, track):
        self.track = list(track)
        self.rows: list[tuple] = []
        self.fracs: list[list[float]] = []
        self.extra_rows: list[dict] = []

    def add(self, t, moments, M, fracs, **extra):
        self.rows.append((t, tuple(moments), M))
        self.fracs.append(list(fracs))
        self.extra_rows.append(extra)

    def build(self, meta: dict, **series) -> Trajectory:
        t = np.array([r[0] for r in self.rows], dtype=float)
        mom = np.array([r[1] for r in self.rows], dtype=float).reshape(len(self.rows), -1)
        M = np.array([r[2] for r in self.rows], dtype=float)
        fr = np.array(self.fracs, dtype=float).reshape(len(self.rows), len(self.track))
        fractions = {n: fr[:, k].copy() for k, n in enumerate(self.track)}
        keys = self.extra_rows[0].keys() if self.extra_rows else ()
        extra = {key: np.array([e[key] for e in self.extra_rows]) for key in keys}
        return Trajectory(t=t, moments=mom, interaction_mass=M, fractions=fractions,
                          meta=meta, extra=extra, **series)
