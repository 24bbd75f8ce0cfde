"""Coefficient models for matrix SDEs and interacting particle systems.

A model bundles the scalar functions that drive the particle system

    dx_i = sigma(i, x_i) dW_i + (b(x_i) + sum_{j != i} pair(x_i, x_j) / (x_i - x_j)) dt

on the ordered domain ``domain_lo < x_1 < ... < x_N < domain_hi``.  For the
eigenvalue process of the matrix SDE

    dX = g(X) dB h(X) + h(X) dB^T g(X) + b(X) dt

the diffusion and the interaction are not free: ``sigma = 2 g h`` and
``pair(x, y) = g(x)^2 h(y)^2 + g(y)^2 h(x)^2``.

All functions are vectorised over numpy arrays.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .laws import LimitLaw

Scalar = Callable[[np.ndarray], np.ndarray]
Indexed = Callable[[np.ndarray, np.ndarray], np.ndarray]
Pair = Callable[[np.ndarray, np.ndarray], np.ndarray]
# x -> (left, right), both (k, N), with pair(x_i, x_j) = sum_k left[k, i] * right[k, j]
PairTerms = Callable[[np.ndarray], tuple]


class ModelKind(str, enum.Enum):
    MATRIX_EIGENVALUE = "matrix_eigenvalue"
    GENERAL_PARTICLE = "general_particle"


def _const(value: float) -> Scalar:
    def f(x):
        return np.full(np.shape(x), float(value))

    return f


def _const_pair(value: float) -> Pair:
    def f(x, y):
        return np.full(np.broadcast_shapes(np.shape(x), np.shape(y)), float(value))

    return f


def _sqrt_pos(x):
    return np.sqrt(np.maximum(x, 0.0))


@dataclass(frozen=True)
class LimitCoefficients:
    """Limits of ``b_N``, ``N * pair_N`` and ``sigma_N`` as ``N -> inf``.

    ``g2_limit``/``h2_limit`` optionally give a factorisation
    ``pair_limit(x, y) = g2(x) h2(y) + g2(y) h2(x)``; together with
    ``self_similar_exponent`` they feed the reduced static equation.
    """

    b_limit: Scalar
    pair_limit: Pair
    sigma_limit: Scalar = field(default_factory=lambda: _const(0.0))
    g2_limit: Scalar | None = None
    h2_limit: Scalar | None = None
    self_similar_exponent: float | None = None


@dataclass(frozen=True)
class CoefficientModel:
    name: str
    kind: ModelKind
    b: Scalar
    sigma: Indexed
    pair: Pair
    n_particles: int
    domain_lo: float = -np.inf
    domain_hi: float = np.inf
    g: Scalar | None = None
    h: Scalar | None = None
    limits: LimitCoefficients | None = None
    limit_law_hint: LimitLaw | None = None
    params: dict = field(default_factory=dict)
    # sigma(i, .) does not depend on i
    uniform_sigma: bool = True
    # optional separable form of ``pair``; lets the drift use matrix-vector
    # products instead of an N x N evaluation of ``pair``
    pair_terms: PairTerms | None = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if not self.domain_lo < self.domain_hi:
            raise ValueError("domain_lo must be < domain_hi")
        if self.kind == ModelKind.MATRIX_EIGENVALUE and (self.g is None or self.h is None):
            raise ValueError("matrix_eigenvalue models need g and h")

    @classmethod
    def from_matrix(cls, name: str, g: Scalar, h: Scalar, b: Scalar, n: int,
                    g2: Scalar | None = None, h2: Scalar | None = None, **kwargs):
        """Eigenvalue model of the matrix SDE; sigma and pair are derived.

        ``g2``/``h2`` optionally give ``g**2``/``h**2`` directly, so that
        constants like ``1/(2n)`` enter the pair term without a rounded square.
        """
        g2 = g2 if g2 is not None else (lambda x: g(x) ** 2)
        h2 = h2 if h2 is not None else (lambda x: h(x) ** 2)

        def sigma(i, x):
            return 2.0 * g(x) * h(x)

        def pair(x, y):
            return g2(x) * h2(y) + g2(y) * h2(x)

        def pair_terms(x):
            gx = np.broadcast_to(g2(x), np.shape(x))
            hx = np.broadcast_to(h2(x), np.shape(x))
            return np.stack((gx, hx)), np.stack((hx, gx))

        kwargs.setdefault("pair_terms", pair_terms)
        return cls(name, ModelKind.MATRIX_EIGENVALUE, b, sigma, pair, n, g=g, h=h, **kwargs)

    @classmethod
    def from_particles(cls, name: str, sigma: Indexed, b: Scalar, pair: Pair, n: int, **kwargs):
        return cls(name, ModelKind.GENERAL_PARTICLE, b, sigma, pair, n, **kwargs)

    def sigma_at(self, x: np.ndarray) -> np.ndarray:
        """Per-particle diffusion ``sigma(i, x_i)`` for a position vector."""
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.sigma(np.arange(x.size), x), x.shape)

    def in_domain(self, x: np.ndarray) -> bool:
        return bool(np.all(x > self.domain_lo) and np.all(x < self.domain_hi))


def make_dyson(n: int) -> CoefficientModel:
    """Dyson Brownian motion: ``g = (2n)^{-1/2}``, ``h = 1``, ``b = 0``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    gamma = (2.0 * n) ** -0.5
    limits = LimitCoefficients(
        b_limit=_const(0.0),
        pair_limit=_const_pair(1.0),
        g2_limit=_const(0.5),
        h2_limit=_const(1.0),
        self_similar_exponent=0.5,
    )
    return CoefficientModel.from_matrix(
        "dyson",
        g=_const(gamma),
        h=_const(1.0),
        b=_const(0.0),
        n=n,
        g2=_const(0.5 / n),
        h2=_const(1.0),
        limits=limits,
        limit_law_hint=LimitLaw.semicircle(),
        params={"n": n},
    )


def make_wishart(n: int, p: int) -> CoefficientModel:
    """Normalised Wishart process ``B^T B / n`` with ``B`` a ``p x n`` Brownian matrix.

    ``g = sqrt(x)``, ``h = 1/sqrt(n)``, ``b = p/n``; requires ``p > n - 1``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if p <= n - 1:
        raise ValueError(f"wishart requires p > n - 1 (got n={n}, p={p})")
    c = p / n
    limits = LimitCoefficients(
        b_limit=_const(c),
        pair_limit=lambda x, y: x + y,
        g2_limit=lambda x: np.asarray(x, dtype=float),
        h2_limit=_const(1.0),
        self_similar_exponent=1.0,
    )
    law = LimitLaw.marchenko_pastur(c) if c >= 1 else None
    return CoefficientModel.from_matrix(
        "wishart",
        g=_sqrt_pos,
        h=_const(n ** -0.5),
        b=_const(c),
        n=n,
        g2=lambda x: np.maximum(np.asarray(x, dtype=float), 0.0),
        h2=_const(1.0 / n),
        domain_lo=0.0,
        limits=limits,
        limit_law_hint=law,
        params={"n": n, "p": p},
    )


def make_beta_laguerre(n: int, beta: float, alpha_param: float) -> CoefficientModel:
    """Normalised squared beta-Bessel system.

    ``sigma = 2 sqrt(x/n)``, ``b = beta * alpha / n``,
    ``pair = beta (x + y) / n``.  Collisions are avoided for
    ``alpha_param >= n``; only positivity is enforced here.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if beta <= 0:
        raise ValueError("beta must be positive")
    if alpha_param <= 0:
        raise ValueError("alpha_param must be positive")
    c = alpha_param / n

    def sigma(i, x):
        return 2.0 * _sqrt_pos(np.asarray(x, dtype=float) / n)

    def pair(x, y):
        return beta * (x + y) / n

    def pair_terms(x):
        x = np.asarray(x, dtype=float)
        one = np.ones(x.shape)
        return np.stack((x * (beta / n), one * (beta / n))), np.stack((one, x))

    limits = LimitCoefficients(
        b_limit=_const(beta * c),
        pair_limit=lambda x, y: beta * (x + y),
        g2_limit=lambda x: beta * np.asarray(x, dtype=float),
        h2_limit=_const(1.0),
        self_similar_exponent=1.0,
    )
    return CoefficientModel.from_particles(
        "beta_laguerre",
        sigma=sigma,
        b=_const(beta * alpha_param / n),
        pair=pair,
        n=n,
        domain_lo=0.0,
        limits=limits,
        limit_law_hint=LimitLaw.beta_marchenko_pastur(c, beta),
        params={"n": n, "beta": beta, "alpha_param": alpha_param},
        pair_terms=pair_terms,
    )


@dataclass(frozen=True)
class RawCoefficients:
    """Unnormalised coefficients of a system in the original scale ``y = N x``.

    Give either ``g`` and ``h`` (matrix form) or ``sigma`` and ``G``
    (particle form), plus the drift ``a``.
    """

    name: str
    a: Scalar
    sigma: Indexed | None = None
    G: Pair | None = None
    g: Scalar | None = None
    h: Scalar | None = None
    domain_lo: float = -np.inf
    domain_hi: float = np.inf


def normalize_model(raw: RawCoefficients, n: int) -> CoefficientModel:
    """Rescale to ``x = y / n``.

    ``sigma_n(x) = sigma(n x) / n``, ``b_n(x) = a(n x) / n`` and
    ``pair_n(x, y) = G(n x, n y) / n**2``; in matrix form
    ``g_n(x) h_n(y) = g(n x) h(n y) / n``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = raw.domain_lo / n, raw.domain_hi / n

    def b(x):
        return raw.a(n * np.asarray(x, dtype=float)) / n

    if raw.g is not None and raw.h is not None:
        root = np.sqrt(n)

        def g(x):
            return raw.g(n * np.asarray(x, dtype=float)) / root

        def h(x):
            return raw.h(n * np.asarray(x, dtype=float)) / root

        return CoefficientModel.from_matrix(
            raw.name, g=g, h=h, b=b, n=n, domain_lo=lo, domain_hi=hi, params={"n": n}
        )
    if raw.sigma is None or raw.G is None:
        raise ValueError("raw coefficients need (g, h) or (sigma, G)")

    def sigma(i, x):
        return raw.sigma(i, n * np.asarray(x, dtype=float)) / n

    def pair(x, y):
        return raw.G(n * np.asarray(x, dtype=float), n * np.asarray(y, dtype=float)) / n**2

    return CoefficientModel.from_particles(
        raw.name, sigma=sigma, b=b, pair=pair, n=n, domain_lo=lo, domain_hi=hi,
        params={"n": n}, uniform_sigma=False,
    )


CATALOG = {
    "dyson": make_dyson,
    "wishart": make_wishart,
    "beta_laguerre": make_beta_laguerre,
}

# parameters each catalog entry takes, in call order
CATALOG_PARAMS = {
    "dyson": ("n",),
    "wishart": ("n", "p"),
    "beta_laguerre": ("n", "beta", "alpha_param"),
}


def build_model(name: str, **params) -> CoefficientModel:
    """Catalog lookup by name, e.g. ``build_model("wishart", n=50, p=100)``."""
    try:
        factory = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown model {name!r}; expected one of {sorted(CATALOG)}") from None
    missing = [k for k in CATALOG_PARAMS[name] if params.get(k) is None]
    if missing:
        raise ValueError(f"{name} requires {', '.join(missing)}")
    return factory(*(params[k] for k in CATALOG_PARAMS[name]))
