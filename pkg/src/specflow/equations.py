"""Residuals of the limit equations, the self-similar static equation and the
Hilbert-transform density relation.

Conventions: ``G(z) = \\int mu(dx) / (z - x)`` and
``H(f)(u) = (1/pi) PV \\int f(x) / (u - x) dx``.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .measures import EmpiricalMeasure

# central-difference step for d/dz of closed-form transforms
DZ_STEP = 1e-6
# default sub-step for time quadrature of the closed-form equations
PDE_DS = 2.5e-4


@dataclass(frozen=True)
class ResidualReport:
    """``residual_abs[k, j]`` is ``|LHS - RHS|`` at ``times[k]`` and ``z_grid[j]``."""

    z_grid: np.ndarray
    times: np.ndarray
    residual_abs: np.ndarray
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z_grid, dtype=complex))
        t = np.atleast_1d(np.asarray(self.times, dtype=float))
        r = np.asarray(self.residual_abs, dtype=float).reshape(t.size, z.size)
        object.__setattr__(self, "z_grid", z)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "residual_abs", r)

    @property
    def max(self) -> float:
        return float(np.max(self.residual_abs))

    @property
    def mean(self) -> float:
        return float(np.mean(self.residual_abs))

    @property
    def final(self) -> np.ndarray:
        return self.residual_abs[-1]

    def summary(self) -> dict:
        return {"max": self.max, "mean": self.mean, "config": self.config}

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["ReZ", "ImZ", "t", "residual"])
            for k, t in enumerate(self.times):
                for j, z in enumerate(self.z_grid):
                    w.writerow([repr(float(z.real)), repr(float(z.imag)), repr(float(t)),
                                repr(float(self.residual_abs[k, j]))])

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")


def _z_off_axis(z_grid):
    z = np.atleast_1d(np.asarray(z_grid, dtype=complex))
    if np.any(z.imag == 0):
        raise ValueError("z grid must avoid the real axis")
    return z


def _cumtrapz(values, times):
    # cumulative trapezoid along axis 0, starting at 0
    out = np.zeros_like(values)
    if len(times) > 1:
        dt = np.diff(times)[:, None]
        out[1:] = np.cumsum(0.5 * dt * (values[1:] + values[:-1]), axis=0)
    return out


def _generator_term(atoms, limits, z):
    """``int b/(z-x)^2 + iint G(x,y)/((z-x)(z-y)^2) + int sigma^2/(z-x)^3`` under L_N."""
    x = atoms
    n = x.size
    u = 1.0 / (z[:, None] - x[None, :])  # (nz, n)
    b = np.broadcast_to(limits.b_limit(x), x.shape)
    s2 = np.broadcast_to(limits.sigma_limit(x), x.shape) ** 2
    pair = np.broadcast_to(limits.pair_limit(x[:, None], x[None, :]), (n, n))
    # the double integral keeps the diagonal x = y
    double = np.einsum("zi,ij,zj->z", u, pair, u * u) / n**2
    return (u * u) @ b / n + double + (u**3) @ s2 / n


def limit_equation_residual(measures, limits, z_grid) -> ResidualReport:
    """Residual of the integrated Stieltjes-transform limit equation along a trajectory.

    For each snapshot time ``t_k`` compares ``G_{t_k}(z)`` with
    ``G_{t_0}(z) + int_{t_0}^{t_k} A(mu_s, z) ds``, the time integral by the
    trapezoid rule over the snapshots.
    """
    measures = list(measures)
    if not measures:
        raise ValueError("need at least one measure")
    z = _z_off_axis(z_grid)
    times = np.array([m.time_label for m in measures], dtype=float)
    if np.any(np.diff(times) <= 0):
        raise ValueError("measure times must be strictly increasing")
    g = np.array([np.atleast_1d(m.stieltjes(z)) for m in measures])
    rate = np.array([_generator_term(m.atoms, limits, z) for m in measures])
    resid = np.abs(g - g[0] - _cumtrapz(rate, times))
    return ResidualReport(z, times, resid, {"equation": "limit", "n": measures[0].n})


def self_similar_residual(measure: EmpiricalMeasure, alpha: float, limits, t: float, z_grid) -> ResidualReport:
    """``|(alpha/t) int x/(z-x) - int b/(z-x) - int g2/(z-x) * int h2/(z-x)|``.

    ``limits`` must provide ``g2_limit`` and ``h2_limit`` with
    ``pair_limit(x, y) = g2(x) h2(y) + g2(y) h2(x)``.
    """
    if limits.g2_limit is None or limits.h2_limit is None:
        raise ValueError("self-similar residual needs the g2/h2 split of the pair limit")
    if t <= 0:
        raise ValueError("t must be positive")
    z = _z_off_axis(z_grid)
    x = measure.atoms
    u = 1.0 / (z[:, None] - x[None, :])

    def integral(vals):
        return u @ np.broadcast_to(vals, x.shape) / x.size

    lhs = (alpha / t) * integral(x)
    rhs = integral(limits.b_limit(x)) + integral(limits.g2_limit(x)) * integral(limits.h2_limit(x))
    return ResidualReport(z, [t], np.abs(lhs - rhs), {"equation": "self_similar", "alpha": alpha})


def _dz(G, z, t, h=DZ_STEP):
    return (G(z + h, t) - G(z - h, t)) / (2.0 * h)


def _closed_form_rate(G, z, s, family, c, beta):
    # integrand of the time integral at time s; s = 0 uses G_0 = 1/z
    if s == 0.0:
        g, dg = 1.0 / z, -1.0 / z**2
    else:
        g, dg = G(z, s), _dz(G, z, s)
    if family == "semicircle":
        return -g * dg
    return -beta * (c - 1.0) * dg - beta * (g * g + 2.0 * z * g * dg)


def pde_residual(G, t_grid, z_grid, family: str = "semicircle", c: float = 1.0,
                 beta: float = 1.0, ds: float = PDE_DS) -> ResidualReport:
    """Residual of the integrated transport equation solved by a closed-form ``G(z, t)``.

    ``semicircle``: ``G_t = G_0 - int_0^t G_s dG_s/dz ds``.
    ``wishart``: ``G_t = G_0 - beta (c-1) int dG_s/dz - beta int (G_s^2 + 2 z G_s dG_s/dz)``.
    ``G_0 = 1/z``; the time integral is a trapezoid rule with steps at most ``ds``.
    """
    if family not in ("semicircle", "wishart"):
        raise ValueError("family must be 'semicircle' or 'wishart'")
    z = _z_off_axis(z_grid)
    t_grid = np.atleast_1d(np.asarray(t_grid, dtype=float))
    if np.any(t_grid < 0) or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t grid must be nonnegative and increasing")
    knots = np.concatenate([[0.0], t_grid[t_grid > 0]])
    pieces = [np.array([0.0])]
    for a, b in zip(knots[:-1], knots[1:]):
        m = max(1, int(np.ceil((b - a) / ds)))
        pieces.append(np.linspace(a, b, m + 1)[1:])
    fine = np.concatenate(pieces)
    rate = np.array([_closed_form_rate(G, z, s, family, c, beta) for s in fine])
    integral = _cumtrapz(rate, fine)
    at = np.searchsorted(fine, t_grid)
    g_t = np.array([1.0 / z if t == 0 else G(z, t) for t in t_grid])
    resid = np.abs(g_t - 1.0 / z - integral[at])
    cfg = {"equation": "pde", "family": family, "c": c, "beta": beta, "ds": ds}
    return ResidualReport(z, t_grid, resid, cfg)


def dyson_pde_residual(G, t_grid, z_grid, ds: float = PDE_DS) -> ResidualReport:
    return pde_residual(G, t_grid, z_grid, "semicircle", ds=ds)


def wishart_pde_residual(G, t_grid, z_grid, c: float, beta: float = 1.0, ds: float = PDE_DS) -> ResidualReport:
    return pde_residual(G, t_grid, z_grid, "wishart", c=c, beta=beta, ds=ds)


def check_uniform(x_grid, rtol: float = 1e-9) -> float:
    """Return the spacing of a uniform grid, rejecting anything else."""
    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("grid needs at least two points")
    d = np.diff(x)
    dx = (x[-1] - x[0]) / (x.size - 1)
    if dx <= 0 or np.max(np.abs(d - dx)) > rtol * max(abs(dx), np.max(np.abs(x))):
        raise ValueError("grid must be uniform and increasing")
    return float(dx)


def hilbert_transform(f_samples, dx: float, x_grid=None, decay_tol: float = 1e-6):
    """Discrete ``(1/pi) PV int f(y) / (u - y) dy`` at every grid node.

    Skipping the singular node turns the sum into a trapezoid rule for
    ``(f(y) - f(u)) / (u - y)`` short by one cell; that cell is worth
    ``-dx f'(u)`` and is added back with a centred finite difference.
    """
    f = np.asarray(f_samples, dtype=float)
    if x_grid is not None:
        got = check_uniform(x_grid)
        if not np.isclose(got, dx, rtol=1e-9, atol=0.0):
            raise ValueError("dx does not match the grid spacing")
    if dx <= 0:
        raise ValueError("dx must be positive")
    if f.ndim != 1 or f.size < 3:
        raise ValueError("need a 1-d sample vector with at least three points")
    top = np.max(np.abs(f))
    if top == 0.0:
        return np.zeros_like(f)
    if max(abs(f[0]), abs(f[-1])) > decay_tol * top:
        raise ValueError("samples must decay at the ends of the grid")
    m = f.size
    k = np.arange(-(m - 1), m, dtype=float)
    kernel = np.divide(1.0, k, out=np.zeros_like(k), where=k != 0)
    skip = np.convolve(f, kernel)[m - 1 : 2 * m - 1]
    return (skip - dx * np.gradient(f, dx)) / np.pi


def density_equation_residual(p_samples, x_grid, alpha: float, t: float, b, g2, h2):
    """Pointwise ``|(alpha/t x - b) p - pi g2 p H(h2 p) - pi h2 p H(g2 p)|``."""
    p = np.asarray(p_samples, dtype=float)
    x = np.asarray(x_grid, dtype=float)
    dx = check_uniform(x)
    if p.shape != x.shape:
        raise ValueError("density and grid must have the same length")
    if np.any(p < 0):
        raise ValueError("density must be nonnegative")
    if not np.any(p):
        return np.zeros_like(p)
    bx = np.broadcast_to(b(x), x.shape)
    g2x = np.broadcast_to(g2(x), x.shape)
    h2x = np.broadcast_to(h2(x), x.shape)
    lhs = (alpha / t * x - bx) * p
    rhs = np.pi * g2x * p * hilbert_transform(h2x * p, dx) + np.pi * h2x * p * hilbert_transform(g2x * p, dx)
    return np.abs(lhs - rhs)
