"""
Planck machinery: normalized Planck and Rosseland band fractions, gray
emission and its temperature derivative.

Units are erg, cm, eV and ns throughout. Frequencies are photon energies in
eV, so the scaled frequency is simply x = nu / T.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
import scipy.special as sp

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# Radiation constant in erg cm^-3 eV^-4 and speed of light in cm/ns.
A_RAD = 137.0
C_LIGHT = 29.9792458

_PLANCK_NORM = 15.0 / np.pi**4
_ROSSELAND_NORM = 15.0 / (4.0 * np.pi**4)

# Below the split the Bernoulli expansion of t^3/(e^t - 1) is used, above it
# the exponential series of the complementary integral. Both are summed to a
# fixed length that is below 1e-16 relative at the split point.
_SERIES_SPLIT = 2.0
_TAYLOR_TERMS = 48
_TAIL_TERMS = 32
_UNDERFLOW_X = 800.0


def _taylor_coefficients(n_terms: int) -> np.ndarray:
    """Coefficients c_k of  int_0^x t^3/(e^t-1) dt = x^3 sum_k c_k x^k."""
    k = np.arange(n_terms + 1)
    bern = sp.bernoulli(n_terms)
    return bern / ((k + 3) * sp.factorial(k))


_TAYLOR_COEFFS = _taylor_coefficients(_TAYLOR_TERMS)


@dataclass(frozen=True)
class SpectralConstants:
    """Physical constants used by emission and moment definitions."""
    a: float = A_RAD
    c: float = C_LIGHT

    def __post_init__(self):
        if not (self.a > 0 and self.c > 0):
            raise ValueError(f"radiation constants must be positive, got a={self.a}, c={self.c}")


DEFAULT_CONSTANTS = SpectralConstants()


@dataclass(frozen=True, eq=False)
class GroupStructure:
    """Frequency group boundaries nu_0 < nu_1 < ... < nu_G in eV.

    The top bound may be ``np.inf``. The bottom group's spectral integrals
    start at zero frequency, so only the mass above ``bounds[-1]`` can be
    missing from the band fractions.
    """
    bounds: np.ndarray

    def __post_init__(self):
        bounds = np.asarray(self.bounds, dtype=float).ravel()
        if bounds.size < 2:
            raise ValueError("a group structure needs at least two bounds")
        if np.isnan(bounds).any() or bounds[0] < 0.0:
            raise ValueError(f"group bounds must be nonnegative, got {bounds[0]}")
        if np.any(np.diff(bounds) <= 0.0):
            raise ValueError("group bounds must be strictly increasing")
        object.__setattr__(self, "bounds", bounds)

    @property
    def n_groups(self) -> int:
        return self.bounds.size - 1

    @classmethod
    def gray(cls) -> "GroupStructure":
        """Single group covering the whole spectrum."""
        return cls(np.array([0.0, np.inf]))

    @classmethod
    def logarithmic(cls, low: float, high: float, n_groups: int) -> "GroupStructure":
        """``n_groups`` logarithmically spaced groups between ``low`` and ``high``."""
        if n_groups < 1 or not (0.0 < low < high):
            raise ValueError(f"invalid logarithmic groups: low={low}, high={high}, G={n_groups}")
        return cls(np.geomspace(low, high, n_groups + 1))

    def __eq__(self, other) -> bool:
        if not isinstance(other, GroupStructure):
            return NotImplemented
        return np.array_equal(self.bounds, other.bounds)

    def __hash__(self) -> int:
        return hash(self.bounds.tobytes())


def _as_scaled_frequency(x: ArrayLike) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.isnan(x).any() or (x < 0.0).any():
        raise ValueError(f"scaled frequency must be nonnegative, got min {np.nanmin(x) if x.size else x}")
    return x


def _lower_integral(x: np.ndarray) -> np.ndarray:
    return x**3 * np.polynomial.polynomial.polyval(x, _TAYLOR_COEFFS)


def _upper_integral(x: np.ndarray) -> np.ndarray:
    """int_x^inf t^3/(e^t-1) dt for finite x >= 2."""
    n = np.arange(1, _TAIL_TERMS + 1, dtype=float)[:, None]
    xs = x[None, :]
    terms = np.exp(-n * xs) * (xs**3 / n + 3.0 * xs**2 / n**2 + 6.0 * xs / n**3 + 6.0 / n**4)
    return terms.sum(axis=0)


def _cdf_and_tail(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return (P(x), 1 - P(x)), each evaluated on the side where it is accurate."""
    cdf = np.empty_like(x)
    tail = np.empty_like(x)

    low = x < _SERIES_SPLIT
    cdf[low] = _PLANCK_NORM * _lower_integral(x[low])
    tail[low] = 1.0 - cdf[low]

    high = ~low
    beyond = high & (x > _UNDERFLOW_X)
    series = high & ~beyond
    tail[series] = _PLANCK_NORM * _upper_integral(x[series])
    tail[beyond] = 0.0
    cdf[high] = 1.0 - tail[high]
    return cdf, tail


def _x4_over_expm1(x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(x)
    live = (x > 0.0) & (x < _UNDERFLOW_X)
    out[live] = x[live] ** 4 / np.expm1(x[live])
    return out


def _restore_scalar(values: np.ndarray, like: ArrayLike):
    return float(values) if np.ndim(like) == 0 else values


def planck_cdf(x: ArrayLike):
    """Normalized Planck integral P(x) = (15/pi^4) int_0^x t^3/(e^t-1) dt."""
    xa = _as_scaled_frequency(x)
    cdf, _ = _cdf_and_tail(np.atleast_1d(xa))
    return _restore_scalar(cdf.reshape(xa.shape), x)


def planck_tail(x: ArrayLike):
    """Complement 1 - P(x), accurate for large x."""
    xa = _as_scaled_frequency(x)
    _, tail = _cdf_and_tail(np.atleast_1d(xa))
    return _restore_scalar(tail.reshape(xa.shape), x)


def rosseland_cdf(x: ArrayLike):
    """Normalized Rosseland integral (15/(4 pi^4)) int_0^x t^4 e^t/(e^t-1)^2 dt.

    Integration by parts gives R(x) = P(x) - (15/(4 pi^4)) x^4/(e^x - 1).
    """
    xa = np.atleast_1d(_as_scaled_frequency(x))
    cdf, _ = _cdf_and_tail(xa)
    out = cdf - _ROSSELAND_NORM * _x4_over_expm1(xa)
    return _restore_scalar(out.reshape(np.shape(x)), x)


def _as_temperature(T: ArrayLike) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if not np.all(np.isfinite(T)) or (T <= 0.0).any():
        raise ValueError("temperature must be positive and finite")
    return T


def _scaled_bounds(T: np.ndarray, groups: GroupStructure) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = groups.bounds[None, :] / T.reshape(-1, 1)
    x[:, 0] = 0.0
    return x


def _band_fractions(T: ArrayLike, groups: GroupStructure, rosseland: bool) -> np.ndarray:
    Ta = _as_temperature(T)
    x = _scaled_bounds(Ta, groups)
    cdf, tail = _cdf_and_tail(x.ravel())
    cdf = cdf.reshape(x.shape)
    tail = tail.reshape(x.shape)
    if rosseland:
        correction = _ROSSELAND_NORM * _x4_over_expm1(x.ravel()).reshape(x.shape)
        cdf = cdf - correction
        tail = tail + correction
    lo, hi = slice(None, -1), slice(1, None)
    fractions = np.where(x[:, lo] >= _SERIES_SPLIT,
                         tail[:, lo] - tail[:, hi],
                         cdf[:, hi] - cdf[:, lo])
    fractions = np.clip(fractions, 0.0, 1.0)
    return fractions[0] if Ta.ndim == 0 else fractions.reshape(Ta.shape + (groups.n_groups,))


def b_g(T: ArrayLike, groups: GroupStructure) -> np.ndarray:
    """Planck band fractions; shape (G,) for scalar T, T.shape + (G,) otherwise."""
    return _band_fractions(T, groups, rosseland=False)


def r_g(T: ArrayLike, groups: GroupStructure) -> np.ndarray:
    """Rosseland band fractions, normalized so the full spectrum sums to 1."""
    return _band_fractions(T, groups, rosseland=True)


def planck_tail_mass(T: ArrayLike, groups: GroupStructure):
    """Planck mass above the top group bound, which b_g does not cover."""
    Ta = _as_temperature(T)
    with np.errstate(over="ignore"):
        return planck_tail(groups.bounds[-1] / Ta)


def planck_total(T: ArrayLike, constants: SpectralConstants = DEFAULT_CONSTANTS):
    """Gray emission B(T) = a c T^4."""
    Ta = np.asarray(T, dtype=float)
    if (Ta < 0.0).any():
        raise ValueError("temperature must be nonnegative")
    out = constants.a * constants.c * Ta**4
    return _restore_scalar(out, T)


def planck_dT(T: ArrayLike, constants: SpectralConstants = DEFAULT_CONSTANTS):
    """dB/dT = 4 a c T^3."""
    Ta = np.asarray(T, dtype=float)
    if (Ta < 0.0).any():
        raise ValueError("temperature must be nonnegative")
    out = 4.0 * constants.a * constants.c * Ta**3
    return _restore_scalar(out, T)


def group_emission(T: ArrayLike, groups: GroupStructure,
                   constants: SpectralConstants = DEFAULT_CONSTANTS) -> np.ndarray:
    """B_g(T) = B(T) b_g(T)."""
    total = np.asarray(planck_total(T, constants))
    return total[..., None] * b_g(T, groups)
