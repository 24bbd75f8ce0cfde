"""Empirical spectral measures and goodness-of-fit distances."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAX_MOMENT = 12


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Uniform probability measure on ``atoms`` (each of weight ``1/N``)."""

    atoms: np.ndarray
    time_label: float = 0.0

    def __post_init__(self):
        a = np.sort(np.asarray(self.atoms, dtype=float).ravel())
        if a.size == 0:
            raise ValueError("an empirical measure needs at least one atom")
        a.setflags(write=False)
        object.__setattr__(self, "atoms", a)

    @property
    def n(self) -> int:
        return self.atoms.size

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    @classmethod
    def from_state(cls, state) -> "EmpiricalMeasure":
        if not state.alive:
            raise ValueError(f"state exited ({state.exit_reason.value}) at t={state.exit_time}")
        return cls(state.positions, state.time)

    @classmethod
    def pooled(cls, measures) -> "EmpiricalMeasure":
        """Pool the atoms of several measures into one."""
        measures = list(measures)
        return cls(np.concatenate([m.atoms for m in measures]), measures[0].time_label)

    def cdf(self, x):
        """Right-continuous CDF ``#{atoms <= x} / N``."""
        return np.searchsorted(self.atoms, x, side="right") / self.n

    def stieltjes(self, z):
        return stieltjes(self, z)

    def moment(self, k: int) -> float:
        return moment(self, k)

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["atom", "weight"])
            wt = repr(1.0 / self.n)
            for a in self.atoms:
                w.writerow([repr(float(a)), wt])

    @classmethod
    def from_csv(cls, path, time_label: float = 0.0) -> "EmpiricalMeasure":
        with open(Path(path), newline="") as fh:
            return cls([float(r["atom"]) for r in csv.DictReader(fh)], time_label)


def from_state(state) -> EmpiricalMeasure:
    return EmpiricalMeasure.from_state(state)


def stieltjes(measure: EmpiricalMeasure, z):
    """``(1/N) sum_i 1/(z - atom_i)``; ``z`` must be off the real axis."""
    z = np.asarray(z, dtype=complex)
    if np.any(z.imag == 0):
        raise ValueError("stieltjes transform needs Im z != 0")
    flat = z.ravel()
    out = np.empty(flat.shape, dtype=complex)
    # chunk to bound the size of the (z, atom) table
    step = max(1, 2**20 // measure.n)
    for s in range(0, flat.size, step):
        out[s : s + step] = np.mean(1.0 / (flat[s : s + step, None] - measure.atoms[None, :]), axis=1)
    out = out.reshape(z.shape)
    return out[()] if out.ndim == 0 else out


def moment(measure: EmpiricalMeasure, k: int) -> float:
    if int(k) != k or k < 0:
        raise ValueError("moment order must be a nonnegative integer")
    if k > MAX_MOMENT:
        raise ValueError(f"moment order {k} exceeds the limit {MAX_MOMENT}")
    return float(np.mean(measure.atoms ** int(k)))


def ks_statistic(sorted_x: np.ndarray, cdf_values: np.ndarray) -> float:
    """One-sample KS from sorted data and the model CDF at each point."""
    n = sorted_x.size
    i = np.arange(1, n + 1)
    # compare against the empirical CDF just after (i/N) and just before ((i-1)/N)
    return float(max(np.max(i / n - cdf_values), np.max(cdf_values - (i - 1) / n), 0.0))


def ks_distance(measure: EmpiricalMeasure, law, t: float = 1.0) -> float:
    """Kolmogorov-Smirnov distance between ``measure`` and ``law`` at time ``t``.

    ``law`` is anything with a ``cdf(x, t)`` method.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    return ks_statistic(measure.atoms, np.asarray(law.cdf(measure.atoms, t), dtype=float))


def ks_two_sample(a, b) -> float:
    """Two-sample KS statistic ``sup_x |F_a(x) - F_b(x)|``."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def stieltjes_table(measure: EmpiricalMeasure, z_grid) -> np.ndarray:
    """Rows ``(Re z, Im z, Re G, Im G)``."""
    z = np.asarray(z_grid, dtype=complex).ravel()
    g = np.atleast_1d(stieltjes(measure, z))
    return np.column_stack([z.real, z.imag, g.real, g.imag])


def write_stieltjes_csv(path, measure: EmpiricalMeasure, z_grid) -> None:
    rows = stieltjes_table(measure, z_grid)
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ReZ", "ImZ", "ReG", "ImG"])
        for r in rows:
            w.writerow([repr(float(v)) for v in r])
