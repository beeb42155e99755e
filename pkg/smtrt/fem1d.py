"""
1D mesh and the piecewise-linear discontinuous space Y1.

Degrees of freedom are element endpoint values stored element by element:
dof 2e is the left value of element e and dof 2e+1 its right value.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple, Union

import numpy as np

from .quadrature import gauss3


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Strictly increasing nodes with one material id per element."""
    nodes: np.ndarray
    material_ids: Optional[np.ndarray] = None

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).ravel()
        if nodes.size < 2:
            raise ValueError("a mesh needs at least one element")
        if not np.all(np.isfinite(nodes)) or np.any(np.diff(nodes) <= 0.0):
            raise ValueError("mesh nodes must be finite and strictly increasing")
        ids = np.zeros(nodes.size - 1, dtype=int) if self.material_ids is None \
            else np.asarray(self.material_ids, dtype=int).ravel()
        if ids.size != nodes.size - 1:
            raise ValueError(f"expected {nodes.size - 1} material ids, got {ids.size}")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "material_ids", ids)

    @classmethod
    def uniform(cls, x0: float, x1: float, n_elements: int,
                material_ids: Optional[Sequence[int]] = None) -> "Mesh1D":
        if n_elements < 1:
            raise ValueError(f"n_elements must be positive, got {n_elements}")
        return cls(np.linspace(x0, x1, n_elements + 1), material_ids)

    @property
    def n_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def n_dof(self) -> int:
        return 2 * self.n_elements

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def length(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])

    @property
    def dof_positions(self) -> np.ndarray:
        return np.column_stack([self.nodes[:-1], self.nodes[1:]]).ravel()

    @property
    def dof_element(self) -> np.ndarray:
        """Element index owning each dof."""
        return np.repeat(np.arange(self.n_elements), 2)

    @property
    def face_dofs(self) -> Tuple[np.ndarray, np.ndarray]:
        """(left trace dof, right trace dof) of every interior face."""
        left = np.arange(1, self.n_dof - 1, 2)
        return left, left + 1

    @property
    def lumped_weights(self) -> np.ndarray:
        """Trapezoid weight h/2 of every dof."""
        return self.lumped_diagonal(1.0)

    def lumped_diagonal(self, coeff) -> np.ndarray:
        """Diagonal of the assembled lumped mass matrix with nodal coefficients ``coeff``."""
        coeff = np.asarray(coeff, dtype=float)
        if coeff.ndim:
            coeff = coeff.reshape(self.n_elements, 2)
        return np.diagonal(lumped_mass(self.h, coeff), axis1=-2, axis2=-1).ravel()

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (x >= self.nodes[0]) & (x <= self.nodes[-1])

    def element_of(self, x: np.ndarray) -> np.ndarray:
        """Element containing each point; points on a shared node go left."""
        x = np.asarray(x, dtype=float)
        if not np.all(self.contains(x)):
            raise ValueError(f"points outside the mesh [{self.nodes[0]}, {self.nodes[-1]}]")
        idx = np.searchsorted(self.nodes, x, side="left") - 1
        return np.clip(idx, 0, self.n_elements - 1)

    def evaluate(self, values: np.ndarray, x: np.ndarray) -> np.ndarray:
        """Point values of a Y1 coefficient vector."""
        x = np.asarray(x, dtype=float)
        e = self.element_of(x)
        xl, xr = self.nodes[e], self.nodes[e + 1]
        s = (x - xl) / (xr - xl)
        return values[2 * e] * (1.0 - s) + values[2 * e + 1] * s


@dataclass(eq=False)
class DGField:
    """Coefficients of a Y1 function on a mesh."""
    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).ravel()
        if self.values.size != self.mesh.n_dof:
            raise ValueError(f"expected {self.mesh.n_dof} coefficients, got {self.values.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("DG field values must be finite")

    @property
    def left(self) -> np.ndarray:
        return self.values[0::2]

    @property
    def right(self) -> np.ndarray:
        return self.values[1::2]

    def element_averages(self) -> np.ndarray:
        return 0.5 * (self.left + self.right)

    def __call__(self, x) -> np.ndarray:
        return self.mesh.evaluate(self.values, x)

    def integral(self) -> float:
        return float(np.sum(self.mesh.lumped_weights * self.values))

    def copy(self) -> "DGField":
        return DGField(self.mesh, self.values.copy())


@dataclass(frozen=True)
class FaceValues:
    """Jump and average at interior faces, normal pointing from element 1 to 2.

    Scalars for a single face, arrays over faces 1 .. N_e - 1 otherwise.
    """
    jump: Union[float, np.ndarray]
    avg: Union[float, np.ndarray]


def lumped_mass(h, coeff) -> np.ndarray:
    """Trapezoid-lumped 2x2 mass block with nodal coefficients.

    ``h`` is one element size or an array of sizes; ``coeff`` is a scalar, a
    (left, right) pair or one pair per element. The result has shape
    ``h.shape + (2, 2)``.
    """
    h = np.asarray(h, dtype=float)
    if not np.all(h > 0.0):
        raise ValueError(f"element size must be positive, got {h}")
    c = np.broadcast_to(np.asarray(coeff, dtype=float), h.shape + (2,))
    blocks = np.zeros(h.shape + (2, 2))
    blocks[..., 0, 0] = 0.5 * h * c[..., 0]
    blocks[..., 1, 1] = 0.5 * h * c[..., 1]
    return blocks


def interior_traces(values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(left-element trace, right-element trace) at every interior node."""
    return values[1:-1:2], values[2::2]


def jump_avg(u: DGField, face: Optional[int] = None) -> FaceValues:
    """Jump u1 - u2 and average at interior node ``face`` (1 .. N_e - 1), or at all of them."""
    u1, u2 = interior_traces(u.values)
    if face is None:
        return FaceValues(jump=u1 - u2, avg=0.5 * (u1 + u2))
    if not 0 < face < u.mesh.n_elements:
        raise ValueError(f"face {face} is not an interior face; use the element trace instead")
    a, b = u1[face - 1], u2[face - 1]
    return FaceValues(jump=float(a - b), avg=float(0.5 * (a + b)))


def project(f: Callable[[np.ndarray], np.ndarray], mesh: Mesh1D) -> DGField:
    """Lumped L2 projection onto Y1, which is endpoint interpolation."""
    return DGField(mesh, np.asarray(f(mesh.dof_positions), dtype=float))


def _coarser_first(a: DGField, b: DGField) -> Tuple[Mesh1D, Mesh1D]:
    return (a.mesh, b.mesh) if a.mesh.n_elements <= b.mesh.n_elements else (b.mesh, a.mesh)


def l2_error(u: DGField, ref: DGField) -> float:
    """Relative L2 distance ||u - ref|| / ||ref|| by 3-point Gauss on the coarser mesh."""
    tol = 1e-12 * max(u.mesh.length, ref.mesh.length)
    if abs(u.mesh.nodes[0] - ref.mesh.nodes[0]) > tol or abs(u.mesh.nodes[-1] - ref.mesh.nodes[-1]) > tol:
        raise ValueError("fields live on different domains")
    coarse, _ = _coarser_first(u, ref)
    rule = gauss3()
    h = coarse.h
    x = (coarse.nodes[:-1, None] + h[:, None] * rule.points[None, :]).ravel()
    wq = (h[:, None] * rule.weights[None, :]).ravel()
    diff = u(x) - ref(x)
    ref_norm = np.sqrt(np.sum(wq * ref(x) ** 2))
    err = np.sqrt(np.sum(wq * diff**2))
    if ref_norm == 0.0:
        return float(err)
    return float(err / ref_norm)
