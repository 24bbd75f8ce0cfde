"""Closed-form limit laws: semicircle, Marchenko-Pastur and beta-Marchenko-Pastur.

All transforms use the convention ``G(z) = \\int mu(dx) / (z - x)`` so that
``Im G < 0`` on the upper half plane and ``z G(z) -> 1`` at infinity.

The square root in each closed form is evaluated as
``sqrt(z - lo) * sqrt(z - hi)`` with principal roots, where ``lo < hi`` are
the zeros of the discriminant (the support edges).  On the upper half plane
each factor lies in the first quadrant, so the product lies in the upper half
plane and behaves like ``z`` at infinity; the resulting function is analytic
off ``[lo, hi]``.  ``G`` itself is then computed from the rationalised form
``2 / (w + sqrt(...))`` which avoids the cancellation in ``w - sqrt(...)``
for large ``|z|``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import integrate

SEMICIRCLE = "semicircle"
MARCHENKO_PASTUR = "marchenko_pastur"
BETA_MARCHENKO_PASTUR = "beta_marchenko_pastur"
FAMILIES = (SEMICIRCLE, MARCHENKO_PASTUR, BETA_MARCHENKO_PASTUR)

# quadrature tolerance for CDFs built from the density
CDF_TOL = 1e-12


# cells and Gauss-Legendre order of the angle-variable CDF rule
CDF_CELLS = 64
CDF_ORDER = 24
_CDF_NODES, _CDF_WEIGHTS = np.polynomial.legendre.leggauss(CDF_ORDER)


def _shape_out(out, x):
    out = out.reshape(np.shape(x))
    return out[()] if out.ndim == 0 else out


def angular_cdf(density, lo: float, hi: float, x):
    """``int_lo^x density`` for a density supported on ``[lo, hi]``.

    Substituting ``x = lo + (hi - lo) sin^2(theta/2)`` turns square-root
    edges (and the ``1/sqrt`` edge of the ratio-one Marchenko-Pastur law)
    into smooth integrands, so a fixed Gauss-Legendre rule on uniform
    ``theta`` cells is accurate to rounding.
    """
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    width = hi - lo

    def integrand(theta):
        return density(lo + width * np.sin(0.5 * theta) ** 2) * 0.5 * width * np.sin(theta)

    def piece(a, b):
        # integral over [a, b] elementwise
        mid, rad = 0.5 * (a + b), 0.5 * (b - a)
        pts = mid[:, None] + rad[:, None] * _CDF_NODES
        vals = np.asarray(integrand(pts.ravel())).reshape(pts.shape)
        return rad * (vals @ _CDF_WEIGHTS)

    edges = np.linspace(0.0, np.pi, CDF_CELLS + 1)
    table = np.concatenate([[0.0], np.cumsum(piece(edges[:-1], edges[1:]))])
    inside = (flat > lo) & (flat < hi)
    u = (flat[inside] - lo) / width
    # half-angle forms keep theta accurate next to either edge
    theta = np.where(u <= 0.5, 2.0 * np.arcsin(np.sqrt(u)), np.pi - 2.0 * np.arcsin(np.sqrt(1.0 - u)))
    k = np.minimum((theta / (np.pi / CDF_CELLS)).astype(int), CDF_CELLS - 1)
    out = np.where(flat >= hi, 1.0, 0.0)
    out[inside] = np.clip(table[k] + piece(edges[k], theta), 0.0, 1.0)
    return _shape_out(out, x)


def adaptive_cdf(density, lo: float, hi: float, x):
    """``int_lo^x density`` by adaptive quadrature between sorted evaluation points."""
    x = np.asarray(x, dtype=float)
    flat = x.ravel()
    out = np.empty_like(flat)
    acc, prev = 0.0, lo
    for k in np.argsort(flat, kind="stable"):
        v = min(max(flat[k], lo), hi)
        if v > prev:
            acc += integrate.quad(density, prev, v, epsabs=CDF_TOL, epsrel=CDF_TOL, limit=200)[0]
            prev = v
        out[k] = 1.0 if flat[k] >= hi else (0.0 if flat[k] <= lo else min(acc, 1.0))
    return _shape_out(out, x)


def _upper(z):
    # fold onto the closed upper half plane; +0 imaginary part picks the
    # boundary value from above on the real axis
    z = np.asarray(z, dtype=complex)
    return z.real + 1j * np.abs(z.imag), z.imag < 0


def _root(z, lo, hi):
    return np.sqrt(z - lo) * np.sqrt(z - hi)


def _finish(g, flipped):
    g = np.where(flipped, np.conj(g), g)
    return g[()] if g.ndim == 0 else g


def semicircle_G(z, t: float = 1.0):
    """Stieltjes transform of the semicircle law of variance ``t``.

    ``(z - sqrt(z**2 - 4t)) / (2t)``, radius ``2 sqrt(t)``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    zz, flipped = _upper(z)
    r = 2.0 * np.sqrt(t)
    s = _root(zz, -r, r)
    return _finish(2.0 / (zz + s), flipped)


def mp_edges(t: float, c: float) -> tuple[float, float]:
    return t * (np.sqrt(c) - 1.0) ** 2, t * (np.sqrt(c) + 1.0) ** 2


def mp_G(z, t: float = 1.0, c: float = 1.0):
    """Marchenko-Pastur transform for ``X = B^T B / N`` with ``p/N -> c >= 1``.

    ``((z + t(1-c)) - sqrt((z + t(1-c))**2 - 4tz)) / (2tz)``.
    """
    if t <= 0:
        raise ValueError("t must be positive")
    if c < 1:
        raise ValueError("mp_G requires c >= 1")
    zz, flipped = _upper(z)
    lo, hi = mp_edges(t, c)
    w = zz + t * (1.0 - c)
    s = _root(zz, lo, hi)
    return _finish(2.0 / (w + s), flipped)


def beta_mp_edges(t: float, c: float, beta: float) -> tuple[float, float]:
    return mp_edges(beta * t, c)


def beta_mp_G(z, t: float = 1.0, c: float = 1.0, beta: float = 1.0):
    """Limit transform of the squared beta-Bessel (beta-Laguerre) system.

    ``(z - bt(c-1) - sqrt((bt(c-1) - z)**2 - 4btz)) / (2btz)`` with ``b = beta``;
    this is the Marchenko-Pastur law with ratio ``1/c`` and scale ``c beta t``.
    """
    if t <= 0 or beta <= 0:
        raise ValueError("t and beta must be positive")
    if c <= 0:
        raise ValueError("c must be positive")
    zz, flipped = _upper(z)
    lo, hi = beta_mp_edges(t, c, beta)
    w = zz - beta * t * (c - 1.0)
    s = _root(zz, lo, hi)
    return _finish(2.0 / (w + s), flipped)


@dataclass(frozen=True)
class LimitLaw:
    """A limit spectral law at arbitrary time ``t``.

    ``family`` is one of ``semicircle``, ``marchenko_pastur`` (parameter ``c``)
    or ``beta_marchenko_pastur`` (parameters ``c`` and ``beta``).
    """

    family: str
    c: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown limit law family {self.family!r}")
        if self.family == MARCHENKO_PASTUR:
            if self.c is None or self.c < 1:
                raise ValueError("marchenko_pastur requires c >= 1")
        if self.family == BETA_MARCHENKO_PASTUR:
            if self.c is None or self.c <= 0 or self.beta is None or self.beta <= 0:
                raise ValueError("beta_marchenko_pastur requires c > 0 and beta > 0")

    @classmethod
    def semicircle(cls) -> "LimitLaw":
        return cls(SEMICIRCLE)

    @classmethod
    def marchenko_pastur(cls, c: float) -> "LimitLaw":
        return cls(MARCHENKO_PASTUR, c=float(c))

    @classmethod
    def beta_marchenko_pastur(cls, c: float, beta: float) -> "LimitLaw":
        return cls(BETA_MARCHENKO_PASTUR, c=float(c), beta=float(beta))

    def G(self, z, t: float = 1.0):
        if self.family == SEMICIRCLE:
            return semicircle_G(z, t)
        if self.family == MARCHENKO_PASTUR:
            return mp_G(z, t, self.c)
        return beta_mp_G(z, t, self.c, self.beta)

    def support(self, t: float = 1.0) -> tuple[float, float]:
        if self.family == SEMICIRCLE:
            r = 2.0 * np.sqrt(t)
            return -r, r
        if self.family == MARCHENKO_PASTUR:
            return mp_edges(t, self.c)
        return beta_mp_edges(t, self.c, self.beta)

    def density(self, x, t: float = 1.0):
        """Boundary value ``-Im G(x + i0) / pi``."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.support(t)
        inside = (x > lo) & (x < hi)
        # the imaginary part is exactly zero off the support; skip the
        # 0/0 at x = 0 for the Marchenko-Pastur families
        xs = np.where(inside, x, 0.5 * (lo + hi))
        p = -np.imag(self.G(xs + 0j, t)) / np.pi
        out = np.where(inside, np.maximum(p, 0.0), 0.0)
        return out[()] if out.ndim == 0 else out

    def cdf(self, x, t: float = 1.0):
        """CDF by Gauss-Legendre quadrature of :meth:`density` in the angle variable."""
        lo, hi = self.support(t)
        return angular_cdf(lambda v: self.density(v, t), lo, hi, x)

    def cdf_adaptive(self, x, t: float = 1.0):
        """Same CDF by adaptive ``scipy.integrate.quad`` (abs./rel. tol ``CDF_TOL``); slow."""
        lo, hi = self.support(t)
        return adaptive_cdf(lambda v: self.density(v, t), lo, hi, x)

    def _quantile_table(self, t: float, nodes: int = 4097):
        lo, hi = self.support(t)
        theta = np.linspace(0.0, np.pi, nodes)
        xs = lo + (hi - lo) * 0.5 * (1.0 - np.cos(theta))
        return xs, self.cdf(xs, t)

    def quantile(self, q, t: float = 1.0):
        """Approximate inverse CDF (interpolated on an edge-clustered table)."""
        xs, fs = self._quantile_table(t)
        return np.interp(q, fs, xs)

    def sample(self, n: int, t: float, rng: np.random.Generator):
        """``n`` i.i.d. draws from the law at time ``t``."""
        if self.family == SEMICIRCLE:
            r = 2.0 * np.sqrt(t)
            return r * (2.0 * rng.beta(1.5, 1.5, size=n) - 1.0)
        return self.quantile(rng.random(n), t)

    @property
    def label(self) -> str:
        if self.family == SEMICIRCLE:
            return SEMICIRCLE
        if self.family == MARCHENKO_PASTUR:
            return f"{MARCHENKO_PASTUR}(c={self.c:g})"
        return f"{BETA_MARCHENKO_PASTUR}(c={self.c:g},beta={self.beta:g})"


def invert_to_density(law: LimitLaw, t: float, x_grid, eta: float = 1e-6):
    """Stieltjes inversion ``-Im G(x + i eta) / pi`` with a Richardson step.

    The smoothed density has an ``O(eta)`` bias; combining ``eta`` and
    ``eta / 2`` cancels it to second order.  Negative values are clamped.
    """
    if eta <= 0:
        raise ValueError("eta must be positive")
    x = np.asarray(x_grid, dtype=float)
    p1 = -np.imag(law.G(x + 1j * eta, t)) / np.pi
    p2 = -np.imag(law.G(x + 0.5j * eta, t)) / np.pi
    return np.maximum(2.0 * p2 - p1, 0.0)


@dataclass(frozen=True)
class StandardMarchenkoPastur:
    """Marchenko-Pastur law in the ``(ratio, scale)`` parametrisation, ``0 < ratio <= 1``.

    Density ``sqrt((b - x)(x - a)) / (2 pi scale ratio x)`` on
    ``[scale (1 - sqrt(ratio))^2, scale (1 + sqrt(ratio))^2]``.  The limit of
    the squared beta-Bessel system at time ``t`` is this law with
    ``ratio = 1/c`` and ``scale = c beta t``.  Evaluated from the density
    directly, independently of any Stieltjes transform.
    """

    ratio: float
    scale: float

    def __post_init__(self):
        if not 0 < self.ratio <= 1 or self.scale <= 0:
            raise ValueError("need 0 < ratio <= 1 and scale > 0")

    @classmethod
    def from_beta_laguerre(cls, c: float, beta: float, t: float = 1.0) -> "StandardMarchenkoPastur":
        return cls(1.0 / c, c * beta * t)

    def support(self, t=None) -> tuple[float, float]:
        r = np.sqrt(self.ratio)
        return self.scale * (1 - r) ** 2, self.scale * (1 + r) ** 2

    def density(self, x, t=None):
        x = np.asarray(x, dtype=float)
        a, b = self.support()
        inside = (x > a) & (x < b)
        xs = np.where(inside, x, 0.5 * (a + b))
        p = np.sqrt((b - xs) * (xs - a)) / (2 * np.pi * self.scale * self.ratio * xs)
        out = np.where(inside, p, 0.0)
        return out[()] if out.ndim == 0 else out

    def cdf(self, x, t=None):
        """CDF by adaptive quadrature of the density; ``t`` is ignored."""
        a, b = self.support()
        return adaptive_cdf(self.density, a, b, x)
