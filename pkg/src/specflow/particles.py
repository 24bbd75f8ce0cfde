"""Euler-Maruyama integration of ordered particle systems with singular repulsion.

The stepper never lets two particles swap.  A proposal that breaks the
ordering, leaves the domain or overflows is discarded and the step is
retried as two half steps with fresh Gaussians, recursively, down to
``dt * 2**-max_halvings``.  Proposals whose drift displacement exceeds
``drift_cap`` times the spread of the configuration are treated the same
way; this only bites while the system expands out of a near-point start.
If even the smallest step fails, the state is marked exited at the time
of the last accepted position.  The dynamics are only defined up to that
exit time and nothing is integrated past it.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .models import CoefficientModel

GAP_FLOOR = 1e-10
# a start-up from a jitter of width 1e-4 needs substeps near dt * 2**-34
DEFAULT_MAX_HALVINGS = 40
JITTER_EPS = 1e-4
DRIFT_CAP = 0.5

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(10)


class ExitReason(str, enum.Enum):
    COLLISION = "collision"
    BOUNDARY = "boundary"
    EXPLOSION = "explosion"


@dataclass(frozen=True)
class ParticleState:
    positions: np.ndarray
    time: float = 0.0
    exit_reason: ExitReason | None = None
    exit_time: float | None = None

    def __post_init__(self):
        pos = np.array(self.positions, dtype=float)
        pos.setflags(write=False)
        object.__setattr__(self, "positions", pos)

    @property
    def alive(self) -> bool:
        return self.exit_reason is None

    @property
    def n(self) -> int:
        return self.positions.size

    def exited(self, reason: ExitReason, at_time: float) -> "ParticleState":
        return replace(self, exit_reason=ExitReason(reason), exit_time=float(at_time))


def jittered_start(n: int, eps: float = JITTER_EPS, offset: float = 0.0) -> ParticleState:
    """Ordered stand-in for a point mass at ``offset``: ``x_i = offset + eps * i / n``."""
    return ParticleState(offset + eps * np.arange(1, n + 1) / n)


def equally_spaced(n: int, lo: float, hi: float) -> ParticleState:
    return ParticleState(np.linspace(lo, hi, n))


def ordering_violated(x: np.ndarray) -> bool:
    if x.size < 2:
        return False
    floor = GAP_FLOOR * (1.0 + np.abs(x[:-1]) + np.abs(x[1:]))
    return bool(np.any(np.diff(x) <= floor))


def _drift(x: np.ndarray, model: CoefficientModel, work: np.ndarray | None = None) -> np.ndarray:
    # ``work`` is an optional (N, N) scratch array reused across calls
    out = np.array(np.broadcast_to(model.b(x), x.shape), dtype=float)
    if x.size > 1:
        # 1 / (x_i - x_j) with a zero diagonal, built in place
        if work is None:
            inv = np.subtract.outer(x, x)
        else:
            # filling rows then subtracting in place beats subtract.outer
            inv = work
            inv[:] = x
            np.subtract(x[:, None], inv, out=inv)
        diag = inv.reshape(-1)[:: x.size + 1]
        diag[:] = 1.0
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            np.reciprocal(inv, out=inv)
            diag[:] = 0.0
            if model.pair_terms is not None:
                left, right = model.pair_terms(x)
                out += np.einsum("ik,ki->i", inv @ right.T, left)
            else:
                num = np.broadcast_to(model.pair(x[:, None], x[None, :]), inv.shape)
                out += (num * inv).sum(axis=1)
    return out


def drift(state: ParticleState, model: CoefficientModel) -> np.ndarray:
    """``b(x_i) + sum_{j != i} pair(x_i, x_j) / (x_i - x_j)`` for each particle."""
    if not state.alive:
        raise ValueError("drift of an exited state")
    return _drift(state.positions, model)


def _classify(x: np.ndarray, model: CoefficientModel) -> ExitReason | None:
    # the cheap sum test passes for all finite input short of overflow
    if not np.isfinite(x.sum()) and not np.isfinite(x).all():
        return ExitReason.EXPLOSION
    if x.min() <= model.domain_lo or x.max() >= model.domain_hi:
        return ExitReason.BOUNDARY
    if ordering_violated(x):
        return ExitReason.COLLISION
    return None


class CoordinateMap:
    """Monotone map ``f`` with ``f' = 1/sigma`` and its inverse.

    ``f`` is exact up to 10-point Gauss-Legendre quadrature from the nearest
    grid node; the inverse starts from a cubic Hermite interpolant through
    ``(f(node), node)`` with slopes ``sigma(node)`` and is polished by Newton.
    """

    def __init__(self, sigma, grid: np.ndarray, anchor: float):
        self.sigma = sigma
        self.grid = np.asarray(grid, dtype=float)
        if self.grid.ndim != 1 or self.grid.size < 2 or np.any(np.diff(self.grid) <= 0):
            raise ValueError("quadrature grid must be strictly increasing")
        s = sigma(self.grid)
        if not np.all(np.isfinite(s)) or np.any(s <= 0):
            raise ValueError("sigma must be strictly positive on the quadrature grid")
        steps = self._integral(self.grid[:-1], self.grid[1:])
        nodes_f = np.concatenate([[0.0], np.cumsum(steps)])
        self._node_f = nodes_f
        self.anchor = float(anchor)
        self._node_f = nodes_f - self._from_nodes(np.array([self.anchor]))[0]
        self._guess = CubicHermiteSpline(self._node_f, self.grid, s)

    def _integral(self, a, b):
        half = 0.5 * (b - a)
        pts = (0.5 * (a + b))[..., None] + half[..., None] * _GL_NODES
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = 1.0 / self.sigma(pts)
        return half * (vals @ _GL_WEIGHTS)

    def _from_nodes(self, x):
        k = np.clip(np.searchsorted(self.grid, x) - 1, 0, self.grid.size - 2)
        # integrate from whichever end of the cell is closer
        k = np.where(x - self.grid[k] > self.grid[k + 1] - x, k + 1, k)
        return self._node_f[k] + self._integral(self.grid[k], x)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        return self._from_nodes(x)

    def inverse(self, y, iterations: int = 3):
        y = np.asarray(y, dtype=float)
        yc = np.clip(y, self._node_f[0], self._node_f[-1])
        x = self._guess(yc)
        for _ in range(iterations):
            with np.errstate(invalid="ignore", over="ignore"):
                x = x - (self.forward(x) - y) * self.sigma(x)
        return x


@dataclass(frozen=True)
class LampertiTransform:
    """Unit-diffusion coordinates ``y_i = f_i(x_i)``.

    Drift in the new coordinates::

        (b(x_i) + sum_j pair(x_i, x_j)/(x_i - x_j)) / sigma_i(x_i) - sigma_i'(x_i) / 2
    """

    model: CoefficientModel
    maps: tuple

    def _map(self, i):
        return self.maps[0] if len(self.maps) == 1 else self.maps[i]

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if len(self.maps) == 1:
            return self.maps[0].forward(x)
        return np.array([self.maps[i].forward(x[i]) for i in range(x.size)])

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if len(self.maps) == 1:
            return self.maps[0].inverse(y)
        return np.array([self.maps[i].inverse(y[i]) for i in range(y.size)])

    def sigma_prime(self, x):
        m = self.model
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        idx = np.arange(x.size)
        lo_ok = x - h > m.domain_lo
        left = np.where(lo_ok, x - h, x)
        right = x + h
        with np.errstate(invalid="ignore"):
            ds = m.sigma(idx, right) - m.sigma(idx, left)
        return ds / (right - left)

    def drift(self, x, work=None):
        """Transformed drift evaluated at original positions ``x``."""
        sig = self.model.sigma_at(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            return _drift(x, self.model, work) / sig - 0.5 * self.sigma_prime(x)


def lamperti_transform(model: CoefficientModel, quadrature_grid, anchor: float | None = None):
    """Build the unit-diffusion coordinate change for ``model``.

    ``anchor`` fixes ``f(anchor) = 0`` and defaults to the first grid node.
    """
    grid = np.asarray(quadrature_grid, dtype=float)
    anchor = grid[0] if anchor is None else anchor
    if model.uniform_sigma:
        sig0 = lambda x: model.sigma(np.zeros(np.shape(x), dtype=int), x)  # noqa: E731
        maps = (CoordinateMap(sig0, grid, anchor),)
    else:
        maps = tuple(
            CoordinateMap(lambda x, i=i: model.sigma(np.full(np.shape(x), i), x), grid, anchor)
            for i in range(model.n_particles)
        )
    return LampertiTransform(model, maps)


def default_quadrature_grid(model: CoefficientModel, x0: np.ndarray, size: int = 4000):
    lo, hi = model.domain_lo, model.domain_hi
    scale = max(50.0, 10.0 * float(np.max(np.abs(x0))))
    if np.isfinite(lo):
        top = (hi if np.isfinite(hi) else lo + scale) - lo
        return lo + np.geomspace(1e-10 * max(1.0, top), top * (1 - 1e-12), size)
    top = hi if np.isfinite(hi) else scale
    return np.linspace(-scale, top, size)


def _workspace(n):
    return np.empty((n, n)) if n > 1 else None


class _DirectScheme:
    def __init__(self, model):
        self.model = model
        self.work = _workspace(model.n_particles)

    def internal(self, x):
        return x

    def drift_at(self, u, x):
        # drift and diffusion scale at the current point
        return _drift(x, self.model, self.work), self.model.sigma_at(x)

    def propose(self, u, x, mu, scale, h, xi):
        new = u + mu * h + scale * (np.sqrt(h) * xi)
        return new, new


class _LampertiScheme:
    def __init__(self, transform: LampertiTransform):
        self.transform = transform
        self.work = _workspace(transform.model.n_particles)

    def internal(self, x):
        return self.transform.forward(x)

    def drift_at(self, u, x):
        return self.transform.drift(x, self.work), 1.0

    def propose(self, u, x, mu, scale, h, xi):
        new = u + mu * h + np.sqrt(h) * xi
        return new, self.transform.inverse(new)


def _drift_excess(u, mu, kappa):
    # proposals with h * excess > 1 overshoot: the drift displacement net of
    # the common translation may not exceed kappa times the current spread
    if kappa is None or u.size < 2:
        return 0.0
    m = mu.mean()
    return max(mu.max() - m, m - mu.min()) / (kappa * (u[-1] - u[0]))


def _advance(scheme, model, x, u, t0, dt, rng, max_halvings, drift_cap=DRIFT_CAP):
    """One outer step with recursive halving.  Returns ``(x, u, reason, t)``."""
    h_min = dt * 2.0**-max_halvings
    pending = [dt]
    t = t0
    mu = None
    while pending:
        h = pending.pop()
        if mu is None:
            mu, scale = scheme.drift_at(u, x)
            if not np.isfinite(mu).all():
                return x, u, ExitReason.EXPLOSION, t
            excess = _drift_excess(u, mu, drift_cap)
        xi = rng.standard_normal(x.size)
        with np.errstate(over="ignore", invalid="ignore"):
            u_new, x_new = scheme.propose(u, x, mu, scale, h, xi)
        reason = _classify(x_new, model)
        if reason is None and h * excess > 1.0:
            reason = ExitReason.COLLISION
        if reason is None:
            x, u, t, mu = x_new, u_new, t + h, None
            continue
        if h * 0.5 < h_min:
            return x, u, reason, t
        pending.extend((0.5 * h, 0.5 * h))
    return x, u, None, t0 + dt


def step_em(
    state: ParticleState,
    model: CoefficientModel,
    dt: float,
    rng: np.random.Generator,
    *,
    max_halvings: int = DEFAULT_MAX_HALVINGS,
    drift_cap: float | None = DRIFT_CAP,
) -> ParticleState:
    """Advance by ``dt`` (possibly through accepted substeps)."""
    if not state.alive:
        raise ValueError("cannot step an exited state")
    if dt <= 0:
        raise ValueError("dt must be positive")
    scheme = _DirectScheme(model)
    x = state.positions
    x, _, reason, t = _advance(scheme, model, x, x, state.time, dt, rng, max_halvings, drift_cap)
    if reason is None:
        return ParticleState(x, t)
    return ParticleState(x, t, reason, t)


@dataclass(frozen=True)
class ParticleTrajectory:
    times: np.ndarray
    snapshots: list
    model_name: str
    seed: int | None = None
    dt: float | None = None
    final_state: ParticleState | None = None
    meta: dict = field(default_factory=dict)

    @property
    def alive(self) -> bool:
        return self.final_state is None or self.final_state.alive

    @property
    def status(self) -> str:
        return "alive" if self.alive else f"exited({self.final_state.exit_reason.value})"

    def positions(self) -> np.ndarray:
        """Array of shape ``(len(times), N)``."""
        return np.stack([s.positions for s in self.snapshots])


def simulate(
    model: CoefficientModel,
    initial: ParticleState,
    t_end: float,
    dt: float,
    save_every: int,
    rng: np.random.Generator,
    mode: str = "direct",
    *,
    seed: int | None = None,
    quadrature_grid=None,
    transform: LampertiTransform | None = None,
    max_halvings: int = DEFAULT_MAX_HALVINGS,
    drift_cap: float | None = DRIFT_CAP,
) -> ParticleTrajectory:
    """Integrate to ``t_end``, saving every ``save_every`` outer steps and at the end.

    Initial labels are sorted first so that any permutation of the same
    positions yields the same trajectory.  In ``"lamperti"`` mode the
    integration runs in unit-diffusion coordinates and snapshots are mapped
    back to the original ones; ``transform`` reuses a prebuilt
    :class:`LampertiTransform` (otherwise one is built on ``quadrature_grid``).
    """
    if dt <= 0 or t_end < 0 or save_every < 1:
        raise ValueError("need dt > 0, t_end >= 0, save_every >= 1")
    x = np.sort(np.asarray(initial.positions, dtype=float))
    if x.size != model.n_particles:
        raise ValueError(f"initial state has {x.size} particles, model expects {model.n_particles}")
    if _classify(x, model) is not None:
        raise ValueError("initial state must be strictly ordered and inside the domain")
    if mode == "direct":
        scheme = _DirectScheme(model)
    elif mode == "lamperti":
        if transform is None:
            grid = default_quadrature_grid(model, x) if quadrature_grid is None else quadrature_grid
            transform = lamperti_transform(model, grid)
        scheme = _LampertiScheme(transform)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    t0 = float(initial.time)
    n_full = int(np.floor(t_end / dt + 1e-9))
    remainder = t_end - n_full * dt
    steps = [dt] * n_full
    if remainder > 1e-9 * max(dt, t_end):
        steps.append(remainder)

    u = scheme.internal(x)
    times = [t0]
    snaps = [ParticleState(x, t0)]
    final = None
    t = t0
    for k, h in enumerate(steps, start=1):
        x, u, reason, t_reached = _advance(scheme, model, x, u, t, h, rng, max_halvings, drift_cap)
        if reason is not None:
            final = ParticleState(x, t_reached, reason, t_reached)
            break
        t = t0 + (k * dt if k <= n_full else t_end)
        if k % save_every == 0 or k == len(steps):
            times.append(t)
            snaps.append(ParticleState(x, t))
    if final is None:
        final = snaps[-1]
    return ParticleTrajectory(
        np.array(times), snaps, model.name, seed=seed, dt=dt, final_state=final,
        meta={"mode": mode, "t_end": t_end, "save_every": save_every},
    )
