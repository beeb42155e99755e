"""
Material models, multigroup opacities and the gray collapse.

Multigroup opacities are constant per element and frozen at the previous
time level. Gray opacities are collapsed node by node with the current
iterate's spectrum, which gives piecewise-linear gray fields.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Literal, Optional, Sequence

import numpy as np

from .fem1d import Mesh1D
from .spectral import DEFAULT_CONSTANTS, GroupStructure, SpectralConstants, b_g, r_g

logger = logging.getLogger(__name__)

MaterialKind = Literal["power_law", "larsen", "constant"]

_GROUP_POINTS, _GROUP_WEIGHTS = np.polynomial.legendre.leggauss(16)
_ZERO_ENERGY_FLOOR = 1e-30


@dataclass(frozen=True, eq=False)
class MaterialModel:
    """Absorption opacity law plus heat capacity (erg cm^-3 eV^-1)."""
    name: str
    kind: MaterialKind
    cv: float
    coefficient: float = 0.0
    exponent: float = 0.0
    table: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        if not self.cv > 0.0:
            raise ValueError(f"material {self.name!r}: heat capacity must be positive")
        if self.kind in ("power_law", "larsen") and not self.coefficient > 0.0:
            raise ValueError(f"material {self.name!r}: opacity coefficient must be positive")
        if self.kind == "constant":
            table = np.asarray(self.table, dtype=float).ravel()
            if table.size == 0 or np.any(table < 0.0):
                raise ValueError(f"material {self.name!r}: constant opacities must be nonnegative")
            object.__setattr__(self, "table", table)
        elif self.kind not in ("power_law", "larsen"):
            raise ValueError(f"unknown material kind {self.kind!r}")

    @classmethod
    def power_law(cls, coefficient: float, exponent: float, cv: float, name: str = "power_law"):
        """sigma = coefficient * T**exponent, identical in every group."""
        return cls(name, "power_law", cv, coefficient=coefficient, exponent=exponent)

    @classmethod
    def larsen(cls, alpha: float, cv: float, name: str = "larsen"):
        """sigma(nu, T) = alpha / nu^3 (1 - exp(-nu/T)), Planck-averaged per group."""
        return cls(name, "larsen", cv, coefficient=alpha)

    @classmethod
    def constant(cls, sigma: Sequence[float], cv: float, name: str = "constant"):
        return cls(name, "constant", cv, table=np.asarray(sigma, dtype=float))

    def group_opacity(self, T: np.ndarray, groups: GroupStructure) -> np.ndarray:
        """Opacities of shape (len(T), G) at temperatures T."""
        T = np.atleast_1d(np.asarray(T, dtype=float))
        if not np.all(np.isfinite(T)) or np.any(T <= 0.0):
            raise ValueError("opacity evaluation needs positive temperatures")
        G = groups.n_groups
        if self.kind == "power_law":
            sigma = self.coefficient * T**self.exponent
            return np.repeat(sigma[:, None], G, axis=1)
        if self.kind == "constant":
            if self.table.size != G:
                raise ValueError(f"material {self.name!r} has {self.table.size} groups, expected {G}")
            return np.tile(self.table, (T.size, 1))
        return _larsen_group_average(self.coefficient, T, groups)


def _larsen_group_average(alpha: float, T: np.ndarray, groups: GroupStructure) -> np.ndarray:
    """Planck-weighted group averages by 16-point Gauss-Legendre per group.

    The weight nu^3/(e^x - 1) is rescaled by e^(x_low) inside each group so
    that cold groups far in the Wien tail do not underflow.
    """
    lo = groups.bounds[:-1]
    hi = groups.bounds[1:]
    if not np.all(np.isfinite(hi)):
        raise ValueError("frequency-dependent opacities need finite group bounds")
    half = 0.5 * (hi - lo)
    nu = (0.5 * (hi + lo))[:, None] + half[:, None] * _GROUP_POINTS[None, :]   # (G, q)
    x = nu[None, :, :] / T[:, None, None]                                      # (n, G, q)
    x_low = lo[None, :, None] / T[:, None, None]
    one_minus = -np.expm1(-x)
    weight = nu[None] ** 3 * np.exp(-(x - x_low)) / one_minus
    sigma_nu = alpha / nu[None] ** 3 * one_minus
    num = np.sum(_GROUP_WEIGHTS * sigma_nu * weight, axis=-1)
    den = np.sum(_GROUP_WEIGHTS * weight, axis=-1)
    # Deep Wien tail: the weight collapses onto the lower group edge.
    edge = alpha / lo[None, :] ** 3 * -np.expm1(-x_low[..., 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0.0, num / den, edge)


@dataclass(eq=False)
class MultigroupOpacity:
    """sigma[e, g] in cm^-1, constant per element."""
    sigma: np.ndarray

    def __post_init__(self):
        self.sigma = np.asarray(self.sigma, dtype=float)
        if self.sigma.ndim != 2 or np.any(self.sigma < 0.0) or not np.all(np.isfinite(self.sigma)):
            raise ValueError("multigroup opacity must be a finite nonnegative (elements, groups) array")

    @property
    def n_groups(self) -> int:
        return self.sigma.shape[1]

    def at_dofs(self, mesh: Mesh1D) -> np.ndarray:
        """Per-dof view, shape (n_dof, G)."""
        return self.sigma[mesh.dof_element]


def eval_multigroup(materials: Sequence[MaterialModel], mesh: Mesh1D,
                    T_prev_avg: np.ndarray, groups: GroupStructure) -> MultigroupOpacity:
    """Evaluate every element's material at its previous-step average temperature."""
    T_prev_avg = np.asarray(T_prev_avg, dtype=float)
    if T_prev_avg.shape != (mesh.n_elements,):
        raise ValueError("one temperature per element is required")
    if np.any(T_prev_avg <= 0.0):
        raise ValueError("element temperatures must be positive")
    sigma = np.empty((mesh.n_elements, groups.n_groups))
    for mid in np.unique(mesh.material_ids):
        cells = mesh.material_ids == mid
        sigma[cells] = materials[mid].group_opacity(T_prev_avg[cells], groups)
    return MultigroupOpacity(sigma)


def _ratio_of_sums(weights: np.ndarray, sigma_dof: np.ndarray) -> np.ndarray:
    return np.sum(weights * sigma_dof, axis=1) / np.sum(weights, axis=1)


def collapse_E(E_g: np.ndarray, sigma: MultigroupOpacity, mesh: Mesh1D,
               T: Optional[np.ndarray] = None, groups: Optional[GroupStructure] = None) -> np.ndarray:
    """Energy-weighted gray opacity at every dof.

    ``E_g`` has shape (G, n_dof). Nodes whose total energy is negligible fall
    back to Planck weights at ``T`` (or to equal weights without T).
    """
    weights = np.clip(np.asarray(E_g, dtype=float).T, 0.0, None)
    sigma_dof = sigma.at_dofs(mesh)
    total = weights.sum(axis=1)
    cold = total <= _ZERO_ENERGY_FLOOR * max(float(total.max(initial=0.0)), 0.0)
    if np.any(cold):
        if T is not None and groups is not None:
            weights[cold] = b_g(np.asarray(T)[cold], groups)
        else:
            weights[cold] = 1.0
        # b_g can vanish for every group at extreme temperatures.
        weights[cold & (weights.sum(axis=1) <= 0.0)] = 1.0
    return _ratio_of_sums(weights, sigma_dof)


def _spectral_collapse(T: np.ndarray, sigma: MultigroupOpacity, mesh: Mesh1D,
                       groups: GroupStructure, rosseland: bool) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0.0):
        raise ValueError("gray collapse needs positive nodal temperatures")
    weights = r_g(T, groups) if rosseland else b_g(T, groups)
    weights = np.where(weights.sum(axis=1, keepdims=True) > 0.0, weights, 1.0)
    return _ratio_of_sums(weights, sigma.at_dofs(mesh))


def collapse_F(T: np.ndarray, sigma: MultigroupOpacity, mesh: Mesh1D, groups: GroupStructure) -> np.ndarray:
    """Rosseland-weighted gray opacity at every dof."""
    return _spectral_collapse(T, sigma, mesh, groups, rosseland=True)


def collapse_P(T: np.ndarray, sigma: MultigroupOpacity, mesh: Mesh1D, groups: GroupStructure) -> np.ndarray:
    """Planck-weighted gray opacity; sigma_P B(T) = sum_g sigma_g B_g(T) nodally."""
    return _spectral_collapse(T, sigma, mesh, groups, rosseland=False)


def tilde(sigma_values: np.ndarray, dt: float, c: float = DEFAULT_CONSTANTS.c) -> np.ndarray:
    """Add the backward-Euler pseudo-absorption 1/(c dt)."""
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    return np.asarray(sigma_values, dtype=float) + 1.0 / (c * dt)


@dataclass(eq=False)
class GrayOpacityFields:
    """Nodal gray opacities (Y1 coefficient vectors)."""
    sigma_E: np.ndarray
    sigma_F: np.ndarray
    sigma_P: np.ndarray

    def tilde_E(self, dt: float, constants: SpectralConstants = DEFAULT_CONSTANTS) -> np.ndarray:
        return tilde(self.sigma_E, dt, constants.c)

    def tilde_F(self, dt: float, constants: SpectralConstants = DEFAULT_CONSTANTS) -> np.ndarray:
        return tilde(self.sigma_F, dt, constants.c)


def _element_constant(values: np.ndarray) -> np.ndarray:
    return np.repeat(0.5 * (values[0::2] + values[1::2]), 2)


def gray_opacities(E_g: np.ndarray, T: np.ndarray, sigma: MultigroupOpacity, mesh: Mesh1D,
                   groups: GroupStructure, representation: str = "linear") -> GrayOpacityFields:
    """Collapse all three gray opacities for the current iterate."""
    fields = GrayOpacityFields(
        sigma_E=collapse_E(E_g, sigma, mesh, T, groups),
        sigma_F=collapse_F(T, sigma, mesh, groups),
        sigma_P=collapse_P(T, sigma, mesh, groups),
    )
    if representation == "constant":
        fields = GrayOpacityFields(*(_element_constant(v) for v in
                                     (fields.sigma_E, fields.sigma_F, fields.sigma_P)))
    elif representation != "linear":
        raise ValueError(f"unknown gray opacity representation {representation!r}")
    return fields
