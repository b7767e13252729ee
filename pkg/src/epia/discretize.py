"""Truncated-box tensor grids, finite-difference stencils, action quadrature.

Node enumeration is row-major (C order): in 2D the node index is
``i * n[1] + j`` for coordinates ``(axes[0][i], axes[1][j])``.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "ActionQuadrature",
    "build_grid",
    "refine_grid",
    "restrict_to",
    "gradient",
    "hessian",
    "build_action_quadrature",
    "write_field_binary",
    "read_field_binary",
    "write_field_csv",
]


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid on a box, with a centered core region for metrics."""

    box: tuple  # ((lo, hi), ...) per axis
    n: tuple  # nodes per axis
    core_fraction: float = 1.0

    def __post_init__(self):
        if len(self.box) != len(self.n):
            raise ValueError("box and n must have the same number of axes")
        if len(self.box) not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        for (lo, hi), m in zip(self.box, self.n):
            if not hi > lo:
                raise ValueError(f"degenerate box axis [{lo}, {hi}]")
            if m < 5:
                raise ValueError(f"need at least 5 nodes per axis, got {m}")
        if not 0.0 < self.core_fraction <= 1.0:
            raise ValueError("core_fraction must be in (0, 1]")

    @property
    def dim(self):
        return len(self.n)

    @property
    def shape(self):
        return tuple(self.n)

    @property
    def size(self):
        return int(np.prod(self.n))

    @property
    def h(self):
        return tuple((hi - lo) / (m - 1) for (lo, hi), m in zip(self.box, self.n))

    def axes(self):
        return [np.linspace(lo, hi, m) for (lo, hi), m in zip(self.box, self.n)]

    def nodes(self):
        """Coordinates at every node, shape ``grid.shape + (dim,)``."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack(mesh, axis=-1)

    def nodes_flat(self):
        return self.nodes().reshape(self.size, self.dim)

    def core_mask(self):
        """Boolean mask of the centered core region, shape ``grid.shape``."""
        mask = np.ones(self.shape, dtype=bool)
        coords = self.nodes()
        for ax, (lo, hi) in enumerate(self.box):
            c = 0.5 * (lo + hi)
            half = 0.5 * (hi - lo) * self.core_fraction
            inside = np.abs(coords[..., ax] - c) <= half + 1e-12 * (hi - lo)
            mask &= inside
        return mask

    def boundary_mask(self):
        mask = np.zeros(self.shape, dtype=bool)
        for ax in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[ax] = 0
            mask[tuple(sl)] = True
            sl[ax] = -1
            mask[tuple(sl)] = True
        return mask


def build_grid(box, n, core_fraction=1.0):
    """Build a uniform tensor grid.  ``box`` is (lo, hi) or a list of them."""
    box = np.asarray(box, dtype=float)
    if box.ndim == 1:
        box = box[None, :]
    n_arr = np.atleast_1d(np.asarray(n, dtype=int))
    if n_arr.size == 1 and box.shape[0] > 1:
        n_arr = np.full(box.shape[0], n_arr[0])
    return Grid(
        box=tuple((float(lo), float(hi)) for lo, hi in box),
        n=tuple(int(m) for m in n_arr),
        core_fraction=float(core_fraction),
    )


def refine_grid(grid, factor=2):
    """Nested refinement: every coarse node is a fine node."""
    return Grid(
        box=grid.box,
        n=tuple(factor * (m - 1) + 1 for m in grid.n),
        core_fraction=grid.core_fraction,
    )


@dataclass
class ScalarField:
    """Nodal values on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} != grid shape {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite at every node")

    def copy(self):
        return ScalarField(self.grid, self.values.copy())


def restrict_to(field, coarse):
    """Restrict a fine-grid field to a nested coarse grid by nodal injection."""
    fine = field.grid
    if fine.box != coarse.box:
        raise ValueError("grids are not nested: boxes differ")
    strides = []
    for mf, mc in zip(fine.n, coarse.n):
        if (mf - 1) % (mc - 1) != 0:
            raise ValueError(f"grids are not nested: {mf} vs {mc} nodes")
        strides.append((mf - 1) // (mc - 1))
    sl = tuple(slice(None, None, s) for s in strides)
    return ScalarField(coarse, field.values[sl].copy())


def _deriv1_axis(values, h, axis):
    """Second-order first derivative along one axis (one-sided at the ends)."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - v[:-2]) / (2 * h)
    out[0] = (-3 * v[0] + 4 * v[1] - v[2]) / (2 * h)
    out[-1] = (3 * v[-1] - 4 * v[-2] + v[-3]) / (2 * h)
    return np.moveaxis(out, 0, axis)


def _deriv1_oneside(values, h, axis, forward):
    """First-order one-sided first derivative; falls back to the other side
    at the last reachable node."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    if forward:
        out[:-1] = (v[1:] - v[:-1]) / h
        out[-1] = (v[-1] - v[-2]) / h
    else:
        out[1:] = (v[1:] - v[:-1]) / h
        out[0] = (v[1] - v[0]) / h
    return np.moveaxis(out, 0, axis)


def _deriv2_axis(values, h, axis):
    """Second-order second derivative along one axis (shifted at the ends)."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2 * v[1:-1] + v[:-2]) / h**2
    out[0] = (2 * v[0] - 5 * v[1] + 4 * v[2] - v[3]) / h**2
    out[-1] = (2 * v[-1] - 5 * v[-2] + 4 * v[-3] - v[-4]) / h**2
    return np.moveaxis(out, 0, axis)


def gradient(field, scheme="central", drift=None):
    """Nodal gradient, shape ``grid.shape + (dim,)``.

    ``scheme="central"`` uses second-order stencils (one-sided second order at
    the boundary).  ``scheme="upwind"`` takes per-component one-sided
    differences opposing the sign of ``drift`` (shape ``grid.shape + (dim,)``),
    which is first order but yields monotone policy-evaluation operators.
    """
    g = field.grid
    out = np.empty(g.shape + (g.dim,))
    if scheme == "central":
        for ax in range(g.dim):
            out[..., ax] = _deriv1_axis(field.values, g.h[ax], ax)
        return out
    if scheme == "upwind":
        if drift is None:
            raise ValueError("upwind scheme requires a drift field")
        drift = np.asarray(drift, dtype=float)
        if drift.shape != g.shape + (g.dim,):
            raise ValueError(
                f"drift shape {drift.shape} != {g.shape + (g.dim,)}"
            )
        for ax in range(g.dim):
            fwd = _deriv1_oneside(field.values, g.h[ax], ax, forward=True)
            bwd = _deriv1_oneside(field.values, g.h[ax], ax, forward=False)
            out[..., ax] = np.where(drift[..., ax] >= 0, fwd, bwd)
        return out
    raise ValueError(f"unknown scheme {scheme!r}")


def hessian(field):
    """Nodal Hessian, shape ``grid.shape + (dim, dim)``; symmetric by
    construction (cross terms via composed first-derivative stencils)."""
    g = field.grid
    out = np.empty(g.shape + (g.dim, g.dim))
    for ax in range(g.dim):
        out[..., ax, ax] = _deriv2_axis(field.values, g.h[ax], ax)
    for a in range(g.dim):
        for b in range(a + 1, g.dim):
            cross = _deriv1_axis(
                _deriv1_axis(field.values, g.h[b], b), g.h[a], a
            )
            out[..., a, b] = cross
            out[..., b, a] = cross
    return out


@dataclass(frozen=True)
class ActionQuadrature:
    """Quadrature on the unit-volume action cube [0,1]^L."""

    dim: int
    nodes: np.ndarray = field(compare=False)  # (M, L)
    weights: np.ndarray = field(compare=False)  # (M,)

    @property
    def size(self):
        return self.nodes.shape[0]


def build_action_quadrature(L, nodes_per_dim):
    """Tensor Gauss-Legendre rule mapped to [0,1]^L; weights sum to 1."""
    if L not in (1, 2):
        raise ValueError(f"unsupported action dimension {L}")
    if nodes_per_dim < 2:
        raise ValueError("need at least 2 quadrature nodes per dimension")
    x, w = np.polynomial.legendre.leggauss(nodes_per_dim)
    x01 = 0.5 * (x + 1.0)
    w01 = 0.5 * w
    if L == 1:
        nodes = x01[:, None]
        weights = w01
    else:
        nodes = np.array([(a, b) for a in x01 for b in x01])
        weights = np.array([wa * wb for wa in w01 for wb in w01])
    return ActionQuadrature(dim=L, nodes=nodes, weights=weights)


# -- field serialization ------------------------------------------------------
#
# Flat binary layout, all little-endian float64:
#   [dim, n_1..n_dim, lo_1, hi_1, .., lo_dim, hi_dim] then row-major values.


def write_field_binary(field, path):
    g = field.grid
    header = [float(g.dim)]
    header.extend(float(m) for m in g.n)
    for lo, hi in g.box:
        header.extend((lo, hi))
    with open(path, "wb") as fh:
        fh.write(struct.pack(f"<{len(header)}d", *header))
        fh.write(field.values.astype("<f8").tobytes(order="C"))


def read_field_binary(path, core_fraction=1.0):
    with open(path, "rb") as fh:
        (dim,) = struct.unpack("<d", fh.read(8))
        dim = int(dim)
        n = struct.unpack(f"<{dim}d", fh.read(8 * dim))
        n = tuple(int(m) for m in n)
        box = []
        for _ in range(dim):
            lo, hi = struct.unpack("<2d", fh.read(16))
            box.append((lo, hi))
        count = int(np.prod(n))
        values = np.frombuffer(fh.read(8 * count), dtype="<f8", count=count)
    grid = Grid(box=tuple(box), n=n, core_fraction=core_fraction)
    return ScalarField(grid, values.reshape(n).copy())


def write_field_csv(field, path):
    g = field.grid
    coords = g.nodes_flat()
    flat = field.values.reshape(-1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(g.dim)] + ["value"])
        for row, val in zip(coords, flat):
            writer.writerow([repr(float(c)) for c in row] + [repr(float(val))])
