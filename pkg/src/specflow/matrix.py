"""Matrix-valued processes and a self-contained symmetric eigensolver.

Covers the symmetric Brownian motion, the normalised Wishart construction
``B^T B / n`` and Euler-Maruyama steps of

    dX = g(X) dB h(X) + h(X) dB^T g(X) + b(X) dt

where scalar functions act on the spectrum, ``f(X) = Q f(L) Q^T``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .models import CoefficientModel, ModelKind

JACOBI_TOL = 1e-13
MAX_SWEEPS = 100


class EigenConvergenceError(RuntimeError):
    """Jacobi iteration did not reach the off-diagonal tolerance."""


@dataclass(frozen=True)
class SymmetricMatrixState:
    entries: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError("entries must be a non-empty square matrix")
        # the upper triangle is authoritative; mirror it so symmetry is exact
        iu = np.triu_indices(a.shape[0], 1)
        a[(iu[1], iu[0])] = a[iu]
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def to_csv(self, path) -> None:
        """Row-major dump with header ``i,j,value``."""
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "value"])
            n = self.dim
            for i in range(n):
                for j in range(n):
                    w.writerow([i, j, repr(float(self.entries[i, j]))])

    @classmethod
    def from_csv(cls, path, time: float = 0.0) -> "SymmetricMatrixState":
        with open(Path(path), newline="") as fh:
            rows = list(csv.DictReader(fh))
        n = 1 + max(int(r["i"]) for r in rows)
        a = np.zeros((n, n))
        for r in rows:
            a[int(r["i"]), int(r["j"])] = float(r["value"])
        return cls(a, time)


@dataclass(frozen=True)
class SpectralDecomposition:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        q = self.eigenvectors
        return (q * self.eigenvalues) @ q.T

    def apply(self, f) -> np.ndarray:
        """Functional calculus ``Q f(L) Q^T``."""
        q = self.eigenvectors
        vals = np.broadcast_to(f(self.eigenvalues), self.eigenvalues.shape)
        return (q * vals) @ q.T


def _round_robin(m: int):
    # m even; each round pairs every index exactly once (circle method)
    idx = list(range(m))
    rounds = []
    for _ in range(m - 1):
        p = np.array(idx[: m // 2])
        q = np.array(idx[m // 2 :][::-1])
        rounds.append((np.minimum(p, q), np.maximum(p, q)))
        idx = [idx[0]] + [idx[-1]] + idx[1:-1]
    return rounds


def jacobi_eigh(a, tol: float = JACOBI_TOL, max_sweeps: int = MAX_SWEEPS):
    """Cyclic Jacobi with parallel (round-robin) ordering.

    Each round applies ``n/2`` disjoint rotations at once.  Stops when the
    off-diagonal Frobenius norm is at most ``tol * ||A||_F``.
    Returns unsorted ``(diag, V)`` with ``A = V diag V^T``.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    v = np.eye(n)
    if n == 1:
        return a.diagonal().copy(), v
    m = n + (n % 2)
    rounds = [(p[q < n], q[q < n]) for p, q in _round_robin(m)]
    target = tol * np.linalg.norm(a)

    def off(a):
        # direct sum; the difference of squared norms cancels catastrophically
        d = a.copy()
        np.fill_diagonal(d, 0.0)
        return np.linalg.norm(d)

    sweeps = 0
    while off(a) > target:
        if sweeps >= max_sweeps:
            raise EigenConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
        sweeps += 1
        for p, q in rounds:
            apq = a[p, q]
            live = apq != 0.0
            if not np.any(live):
                continue
            p, q, apq = p[live], q[live], apq[live]
            app, aqq = a[p, p], a[q, q]
            theta = (aqq - app) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(1.0, theta))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            ap, aq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = c * ap - s * aq
            a[:, q] = s * ap + c * aq
            ap, aq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * ap - s[:, None] * aq
            a[q, :] = s[:, None] * ap + c[:, None] * aq
            a[p, q] = 0.0
            a[q, p] = 0.0
            a[p, p] = app - t * apq
            a[q, q] = aqq + t * apq
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = c * vp - s * vq
            v[:, q] = s * vp + c * vq
    return a.diagonal().copy(), v


def eigendecompose(state) -> SpectralDecomposition:
    """Ascending eigenvalues with matching orthonormal eigenvector columns."""
    a = state.entries if isinstance(state, SymmetricMatrixState) else np.asarray(state, float)
    w, v = jacobi_eigh(a)
    order = np.argsort(w, kind="stable")
    return SpectralDecomposition(w[order], v[:, order])


def eigenvalues(state) -> np.ndarray:
    return eigendecompose(state).eigenvalues


def sample_symmetric_brownian(n: int, t: float, rng: np.random.Generator) -> SymmetricMatrixState:
    """Off-diagonal entries ``N(0, t/n)``, diagonal ``N(0, 2t/n)``."""
    if n < 1 or t <= 0:
        raise ValueError("need n >= 1 and t > 0")
    z = rng.standard_normal((n, n)) * np.sqrt(t / n)
    a = np.triu(z, 1)
    a = a + a.T
    a[np.diag_indices(n)] = np.diag(z) * np.sqrt(2.0)
    return SymmetricMatrixState(a, t)


def sample_wishart(n: int, p: int, t: float, rng: np.random.Generator) -> SymmetricMatrixState:
    """``B^T B / n`` with ``B`` a ``p x n`` matrix of ``N(0, t)`` entries."""
    if n < 1 or p < 1 or t <= 0:
        raise ValueError("need n, p >= 1 and t > 0")
    b = rng.standard_normal((p, n)) * np.sqrt(t)
    x = b.T @ b / n
    return SymmetricMatrixState(0.5 * (x + x.T), t)


def step_matrix_sde(
    state: SymmetricMatrixState, model: CoefficientModel, dt: float, rng: np.random.Generator
) -> SymmetricMatrixState:
    """One Euler-Maruyama step with functional calculus and a full ``dB``."""
    if model.kind != ModelKind.MATRIX_EIGENVALUE:
        raise ValueError("step_matrix_sde needs a matrix_eigenvalue model")
    if dt <= 0:
        raise ValueError("dt must be positive")
    dec = eigendecompose(state)
    gx, hx, bx = dec.apply(model.g), dec.apply(model.h), dec.apply(model.b)
    n = state.dim
    db = rng.standard_normal((n, n)) * np.sqrt(dt)
    noise = gx @ db @ hx
    x = state.entries + noise + noise.T + bx * dt
    return SymmetricMatrixState(0.5 * (x + x.T), state.time + dt)


@dataclass(frozen=True)
class MatrixTrajectory:
    times: np.ndarray
    spectra: list
    final_state: SymmetricMatrixState
    model_name: str


def simulate_matrix(
    model: CoefficientModel,
    initial: SymmetricMatrixState,
    t_end: float,
    dt: float,
    rng: np.random.Generator,
    save_every: int = 10,
) -> MatrixTrajectory:
    """Repeated :func:`step_matrix_sde`, keeping the spectrum every ``save_every`` steps."""
    if t_end < 0 or dt <= 0 or save_every < 1:
        raise ValueError("need t_end >= 0, dt > 0, save_every >= 1")
    state = initial
    times, spectra = [initial.time], [eigenvalues(initial)]
    n_steps = int(np.floor(t_end / dt + 1e-9))
    rem = t_end - n_steps * dt
    for k in range(1, n_steps + 1):
        state = step_matrix_sde(state, model, dt, rng)
        if k % save_every == 0 or (k == n_steps and rem <= 1e-12 * max(dt, 1.0)):
            times.append(state.time)
            spectra.append(eigenvalues(state))
    if rem > 1e-12 * max(dt, 1.0):
        state = step_matrix_sde(state, model, rem, rng)
        times.append(state.time)
        spectra.append(eigenvalues(state))
    return MatrixTrajectory(np.array(times), spectra, state, model.name)
