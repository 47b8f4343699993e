"""Discrete index spaces for processes indexed by L2(T, m).

The continuous measure space (T, m) is represented at desk scale by a
finite list of atoms with nonnegative weights.  Every L2 quantity used by
the covariance kernels then reduces to a weighted sum: m(f^2), m(|f-g|^2)
and friends.  Rectangle families over [0,1]^d get closed-form measures for
product densities (Lebesgue by default) so that grid sums can always be
cross-checked against exact values.

Conventions:

* grid atoms are cell centers; an atom belongs to [0, t] iff its center is
  coordinatewise <= t (unbiased quadrature of indicator masses);
* user densities are tabulated per axis and integrated by the trapezoid
  rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NegativeWeight, SpaceMismatch


@dataclass(frozen=True)
class MeasureSpace:
    """Finite discretization of a measure space.

    atoms: (n,) or (n, d) array of atom coordinates (opaque labels are
        allowed; only indicator construction needs coordinates).
    weights: (n,) nonnegative masses, at least one positive.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "atoms", np.asarray(self.atoms))
        object.__setattr__(self, "weights",
                           np.asarray(self.weights, dtype=float))
        if len(self.atoms) != len(self.weights):
            raise ValueError("atoms and weights must have the same length")
        if np.any(self.weights < 0):
            raise NegativeWeight("weights must be nonnegative")
        if not np.any(self.weights > 0):
            raise ValueError("at least one weight must be positive")
        self.weights.setflags(write=False)

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return 1 if self.atoms.ndim == 1 else self.atoms.shape[1]

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def coords(self) -> np.ndarray:
        """Atom coordinates as an (n, d) float array."""
        a = np.asarray(self.atoms, dtype=float)
        return a[:, None] if a.ndim == 1 else a


@dataclass(frozen=True)
class IndexFunction:
    """An element of L2(T, m): one value per atom of a MeasureSpace."""

    space: MeasureSpace
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "values",
                           np.asarray(self.values, dtype=float))
        if len(self.values) != self.space.n_atoms:
            raise ValueError("values length must match the atom count")
        self.values.setflags(write=False)


@dataclass(frozen=True)
class RectPoint:
    """Corner t of a rectangle [0, t] inside [0, 1]^d."""

    coords: tuple = field(default_factory=tuple)

    def __post_init__(self):
        c = tuple(float(v) for v in np.atleast_1d(np.asarray(self.coords, dtype=float)))
        if any(v < 0.0 or v > 1.0 for v in c):
            raise ValueError("rectangle corner coordinates must lie in [0,1]")
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return len(self.coords)


def as_rect(t) -> RectPoint:
    return t if isinstance(t, RectPoint) else RectPoint(t)


def make_discrete_space(atoms, weights) -> MeasureSpace:
    return MeasureSpace(atoms, weights)


def lebesgue_grid(n_per_axis: int, dim: int = 1) -> MeasureSpace:
    """Regular cell-center grid on [0,1]^dim with cell-volume weights.

    Total mass is exactly 1 by construction.
    """
    if n_per_axis < 1:
        raise ValueError("need at least one cell per axis")
    centers = (np.arange(n_per_axis) + 0.5) / n_per_axis
    if dim == 1:
        return MeasureSpace(centers, np.full(n_per_axis, 1.0 / n_per_axis))
    grids = np.meshgrid(*([centers] * dim), indexing="ij")
    atoms = np.stack([g.ravel() for g in grids], axis=1)
    w = np.full(len(atoms), n_per_axis ** (-dim), dtype=float)
    return MeasureSpace(atoms, w)


class ProductDensity:
    """Product measure on [0,1]^d given by tabulated per-axis densities.

    Each axis is a pair (grid, density_values) with nonnegative values;
    cumulative masses come from the trapezoid rule and are interpolated
    linearly in between tabulation points.
    """

    def __init__(self, axes):
        self._cums = []
        for grid, vals in axes:
            g = np.asarray(grid, dtype=float)
            v = np.asarray(vals, dtype=float)
            if np.any(v < 0):
                raise NegativeWeight("density values must be nonnegative")
            if len(g) != len(v) or len(g) < 2:
                raise ValueError("each axis needs >= 2 tabulation points")
            cum = np.concatenate([[0.0], np.cumsum(np.diff(g) * (v[1:] + v[:-1]) / 2.0)])
            self._cums.append((g, cum))

    @property
    def dim(self) -> int:
        return len(self._cums)

    def cum_axis(self, axis: int, x) -> np.ndarray:
        g, cum = self._cums[axis]
        return np.interp(np.asarray(x, dtype=float), g, cum)

    def grid_space(self, n_per_axis: int) -> MeasureSpace:
        """Cell-center discretization with per-cell product masses."""
        edges = np.arange(n_per_axis + 1) / n_per_axis
        centers = (edges[:-1] + edges[1:]) / 2.0
        axis_masses = [np.diff(self.cum_axis(a, edges)) for a in range(self.dim)]
        if self.dim == 1:
            return MeasureSpace(centers, axis_masses[0])
        grids = np.meshgrid(*([centers] * self.dim), indexing="ij")
        atoms = np.stack([g.ravel() for g in grids], axis=1)
        w = axis_masses[0]
        for a in range(1, self.dim):
            w = np.multiply.outer(w, axis_masses[a])
        return MeasureSpace(atoms, w.ravel())


def norm_sq(f: IndexFunction) -> float:
    """m(f^2) = sum_i w_i v_i^2."""
    return float(np.dot(f.space.weights, f.values ** 2))


def dist_sq(f: IndexFunction, g: IndexFunction) -> float:
    """m(|f-g|^2); the squared L2(m) distance between f and g."""
    if f.space is not g.space and not (
        f.space.n_atoms == g.space.n_atoms
        and np.array_equal(f.space.weights, g.space.weights)
        and np.array_equal(np.asarray(f.space.atoms), np.asarray(g.space.atoms))
    ):
        raise SpaceMismatch("index functions live on different spaces")
    return float(np.dot(f.space.weights, (f.values - g.values) ** 2))


def inner(f: IndexFunction, g: IndexFunction) -> float:
    """m(f g); plain L2(m) inner product."""
    if f.space is not g.space:
        return 0.5 * (norm_sq(f) + norm_sq(g) - dist_sq(f, g))
    return float(np.dot(f.space.weights, f.values * g.values))


def rect_measure(t, density: ProductDensity | None = None) -> float:
    """m([0, t]) for a product measure on [0,1]^d (Lebesgue by default)."""
    r = as_rect(t)
    if density is None:
        out = 1.0
        for c in r.coords:
            out *= c
        return out
    if density.dim != r.dim:
        raise DimensionMismatch("density dimension != corner dimension")
    out = 1.0
    for a, c in enumerate(r.coords):
        out *= float(density.cum_axis(a, c))
    return out


def rect_symdiff(s, t, density: ProductDensity | None = None) -> float:
    """m([0,s] symdiff [0,t]) = m([0,s]) + m([0,t]) - 2 m([0, s ^ t])."""
    rs, rt = as_rect(s), as_rect(t)
    if rs.dim != rt.dim:
        raise DimensionMismatch("corners of different dimension")
    meet = RectPoint(tuple(min(a, b) for a, b in zip(rs.coords, rt.coords)))
    val = rect_measure(rs, density) + rect_measure(rt, density) \
        - 2.0 * rect_measure(meet, density)
    return max(val, 0.0)


def indicator_of_rect(space: MeasureSpace, t) -> IndexFunction:
    """Indicator of [0, t] materialized on a grid space."""
    r = as_rect(t)
    coords = space.coords()
    if coords.shape[1] != r.dim:
        raise DimensionMismatch(
            f"space has dim {coords.shape[1]}, corner has dim {r.dim}")
    inside = np.all(coords <= np.asarray(r.coords)[None, :], axis=1)
    return IndexFunction(space, inside.astype(float),
                         label=f"1[0,{tuple(r.coords)}]")
