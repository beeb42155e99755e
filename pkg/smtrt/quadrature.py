"""Angular Gauss-Legendre Sn sets for slab geometry and the reference-element rules."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


@dataclass(frozen=True, eq=False)
class AngularQuadrature:
    """Slab quadrature: direction cosines sorted ascending, weights summing to 2."""
    mu: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        w = np.asarray(self.w, dtype=float).ravel()
        if mu.shape != w.shape or mu.size == 0:
            raise ValueError("mu and w must be nonempty and of equal length")
        if np.any(w <= 0.0) or np.any(np.abs(mu) >= 1.0):
            raise ValueError("weights must be positive and directions inside (-1, 1)")
        order = np.argsort(mu, kind="stable")
        object.__setattr__(self, "mu", mu[order])
        object.__setattr__(self, "w", w[order])

    @property
    def n_directions(self) -> int:
        return self.mu.size

    @property
    def alpha(self) -> float:
        return alpha(self)

    def moment(self, k: int) -> float:
        """sum_d w_d mu_d^k"""
        return float(np.sum(self.w * self.mu**k))


def gauss_legendre_sn(n: int) -> AngularQuadrature:
    """Gauss-Legendre S_n set on [-1, 1], symmetrized and normalized to sum(w) = 2."""
    if not isinstance(n, (int, np.integer)) or n < 2 or n % 2:
        raise ValueError(f"Sn order must be a positive even integer, got {n!r}")
    mu, w = np.polynomial.legendre.leggauss(int(n))
    # leggauss is symmetric to rounding; enforce it so odd moments vanish.
    mu = 0.5 * (mu - mu[::-1])
    w = 0.5 * (w + w[::-1])
    w *= 2.0 / w.sum()
    return AngularQuadrature(mu, w)


def alpha(quad: AngularQuadrature) -> float:
    """Half-range boundary coefficient sum(w|mu|)/sum(w)."""
    return float(np.sum(quad.w * np.abs(quad.mu)) / np.sum(quad.w))


@dataclass(frozen=True, eq=False)
class SpatialRule:
    """Quadrature on the reference interval [0, 1]."""
    points: np.ndarray
    weights: np.ndarray

    def integrate(self, f: Callable[[np.ndarray], np.ndarray], a: float = 0.0, b: float = 1.0) -> float:
        x = a + (b - a) * self.points
        return float((b - a) * np.sum(self.weights * f(x)))


def lobatto2() -> SpatialRule:
    """Trapezoid rule; the lumping rule of every bilinear form."""
    return SpatialRule(np.array([0.0, 1.0]), np.array([0.5, 0.5]))


def gauss3() -> SpatialRule:
    """Three-point Gauss-Legendre mapped to [0, 1], exact to degree 5."""
    r = 0.5 * np.sqrt(3.0 / 5.0)
    return SpatialRule(np.array([0.5 - r, 0.5, 0.5 + r]),
                       np.array([5.0, 8.0, 5.0]) / 18.0)
