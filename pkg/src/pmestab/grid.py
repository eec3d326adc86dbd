"""Uniform cell-centred finite-volume meshes.

Both mesh types expose the same geometric data used by the solver and the
estimate code:

``centers``, ``volumes``
    cell centres and cell measures,
``face_trans``
    transmissibilities area/distance of the interior faces (length cells-1),
``boundary_cells``, ``boundary_trans``, ``boundary_points``
    the cells touching a Dirichlet face, the transmissibility area/(h/2) of
    that face and the face coordinate.

A ``RadialGrid`` discretises the ball |x| < r_max in R^n for radial
functions; the face at r = 0 carries no flux. For n = 1 it represents the
symmetric interval [-r_max, r_max] by even reflection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import gamma, pi

import numpy as np


class InvalidGrid(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


def unit_ball_volume(n: int) -> float:
    return pi ** (n / 2) / gamma(n / 2 + 1)


def _frozen(a):
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RadialGrid:
    n: int
    r_max: float
    cells: int
    cell_centers: np.ndarray = field(init=False, repr=False)
    cell_volumes: np.ndarray = field(init=False, repr=False)
    faces: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.n < 1 or int(self.n) != self.n:
            raise InvalidGrid(f"dimension must be a positive integer, got {self.n}")
        if not self.r_max > 0:
            raise InvalidGrid(f"r_max must be positive, got {self.r_max}")
        if int(self.cells) != self.cells or self.cells < 1:
            raise InvalidGrid(f"cells must be a positive integer, got {self.cells}")
        faces = np.linspace(0.0, self.r_max, self.cells + 1)
        w = unit_ball_volume(self.n)
        object.__setattr__(self, "faces", _frozen(faces))
        object.__setattr__(self, "cell_centers", _frozen(0.5 * (faces[1:] + faces[:-1])))
        object.__setattr__(self, "cell_volumes", _frozen(w * np.diff(faces**self.n)))

    @property
    def spacing(self) -> float:
        return self.r_max / self.cells

    @property
    def centers(self) -> np.ndarray:
        return self.cell_centers

    @property
    def volumes(self) -> np.ndarray:
        return self.cell_volumes

    @property
    def measure(self) -> float:
        return unit_ball_volume(self.n) * self.r_max**self.n

    def face_area(self, r):
        """Surface measure of the sphere |x| = r (2 for n = 1: the points +-r)."""
        return self.n * unit_ball_volume(self.n) * np.asarray(r, dtype=float) ** (self.n - 1)

    @property
    def face_trans(self) -> np.ndarray:
        return self.face_area(self.faces[1:-1]) / self.spacing

    @property
    def boundary_cells(self) -> np.ndarray:
        return np.array([self.cells - 1])

    @property
    def boundary_trans(self) -> np.ndarray:
        return np.array([self.face_area(self.r_max) / (0.5 * self.spacing)])

    @property
    def boundary_points(self) -> np.ndarray:
        return np.array([self.r_max])

    def distance(self, center: float = 0.0) -> np.ndarray:
        return self.cell_centers

    def refined(self, factor: int = 2) -> "RadialGrid":
        return RadialGrid(self.n, self.r_max, self.cells * factor)


@dataclass(frozen=True, eq=False)
class IntervalGrid:
    a: float
    b: float
    cells: int
    spacing: float = field(init=False)

    def __post_init__(self):
        if not self.a < self.b:
            raise InvalidGrid(f"need a < b, got [{self.a}, {self.b}]")
        if int(self.cells) != self.cells or self.cells < 1:
            raise InvalidGrid(f"cells must be a positive integer, got {self.cells}")
        object.__setattr__(self, "spacing", (self.b - self.a) / self.cells)

    n = 1

    @property
    def faces(self) -> np.ndarray:
        return np.linspace(self.a, self.b, self.cells + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.a + (np.arange(self.cells) + 0.5) * self.spacing

    @property
    def volumes(self) -> np.ndarray:
        return np.full(self.cells, self.spacing)

    @property
    def measure(self) -> float:
        return self.b - self.a

    @property
    def face_trans(self) -> np.ndarray:
        return np.full(self.cells - 1, 1.0 / self.spacing)

    @property
    def boundary_cells(self) -> np.ndarray:
        return np.array([0, self.cells - 1])

    @property
    def boundary_trans(self) -> np.ndarray:
        return np.full(2, 2.0 / self.spacing)

    @property
    def boundary_points(self) -> np.ndarray:
        return np.array([self.a, self.b])

    def distance(self, center: float = 0.0) -> np.ndarray:
        return np.abs(self.centers - center)

    def refined(self, factor: int = 2) -> "IntervalGrid":
        return IntervalGrid(self.a, self.b, self.cells * factor)


def make_radial(n: int, r_max: float, cells: int) -> RadialGrid:
    return RadialGrid(n, r_max, cells)


def make_interval(a: float, b: float, cells: int) -> IntervalGrid:
    return IntervalGrid(a, b, cells)


def integrate(g, f) -> float:
    """Cell sum of f against the cell measures of g."""
    f = np.asarray(f, dtype=float)
    if f.shape != (g.cells,):
        raise DimensionMismatch(f"field of shape {f.shape} on a grid with {g.cells} cells")
    return float(np.dot(f, g.volumes))


def face_gradients(g, w, boundary_values=None):
    """Face differences of a cell field.

    Returns ``(grad, weight)`` with ``sum(weight * grad**2)`` the discrete
    Dirichlet energy of ``w``; boundary faces are included when
    ``boundary_values`` (one per boundary face) is given.
    """
    w = np.asarray(w, dtype=float)
    h = g.spacing
    grad = np.diff(w) / h
    weight = g.face_trans * h**2  # face area times distance between centres
    if boundary_values is not None:
        wb = w[g.boundary_cells]
        sign = np.ones_like(wb)
        if isinstance(g, IntervalGrid):
            sign[0] = -1.0
        bgrad = sign * (np.asarray(boundary_values, dtype=float) - wb) / (0.5 * h)
        bweight = g.boundary_trans * (0.5 * h) ** 2
        grad = np.concatenate([grad, bgrad])
        weight = np.concatenate([weight, bweight])
    return grad, weight
