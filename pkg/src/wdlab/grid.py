"""Discrete function spaces on the square [-R, R]^2.

The discretization is deliberately minimal: bilinear (Q1) nodal fields,
gradients evaluated at cell centers with one-point quadrature, and the
matching weak divergence, so that gradient/divergence are exact adjoints
under the cell-sum quadrature and the discrete energy of the solver is
convex in the nodal values.

Field values are frozen after construction (arrays are marked read-only);
all operations here are pure.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

__all__ = [
    "GridSpec",
    "ScalarField",
    "VectorField",
    "BoundaryMask",
    "node_coords",
    "center_coords",
    "gradient",
    "divergence_weak",
    "integrate",
    "node_to_center",
    "mollify",
    "cutoff_eta",
    "interior_mask",
    "write_csv",
    "read_csv",
    "write_wdl1",
    "read_wdl1",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on the square [-extent, extent]^2 with ``cells`` cells
    per axis; nodes live at the (cells+1)^2 lattice points."""

    extent: float
    cells: int

    def __post_init__(self):
        if not self.extent > 0:
            raise ValueError("extent must be positive")
        if int(self.cells) != self.cells or self.cells < 4:
            raise ValueError("cells must be an integer >= 4")

    @property
    def spacing(self) -> float:
        return 2.0 * self.extent / self.cells

    @property
    def n_nodes(self) -> int:
        return (self.cells + 1) ** 2

    def node_axis(self) -> np.ndarray:
        return -self.extent + self.spacing * np.arange(self.cells + 1)

    def center_axis(self) -> np.ndarray:
        return -self.extent + self.spacing * (np.arange(self.cells) + 0.5)

    def refine(self, factor: int = 2) -> "GridSpec":
        return GridSpec(self.extent, self.cells * factor)


def node_coords(grid: GridSpec):
    """Meshgrid (X, Y) of node coordinates, 'ij' indexing."""
    ax = grid.node_axis()
    return np.meshgrid(ax, ax, indexing="ij")


def center_coords(grid: GridSpec):
    ax = grid.center_axis()
    return np.meshgrid(ax, ax, indexing="ij")


def _freeze(values, shape, name):
    arr = np.array(values, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScalarField:
    """Real values at the grid nodes, shape (cells+1, cells+1)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        m = self.grid.cells + 1
        object.__setattr__(self, "values", _freeze(self.values, (m, m), "ScalarField"))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "ScalarField":
        X, Y = node_coords(grid)
        return cls(grid, np.broadcast_to(np.asarray(fn(X, Y), dtype=float), X.shape))

    @classmethod
    def constant(cls, grid: GridSpec, c: float) -> "ScalarField":
        return cls(grid, np.full((grid.cells + 1, grid.cells + 1), float(c)))

    def replace_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)


@dataclass(frozen=True)
class VectorField:
    """2-vectors at the cell centers, shape (cells, cells, 2)."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        m = self.grid.cells
        object.__setattr__(self, "values", _freeze(self.values, (m, m, 2), "VectorField"))

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "VectorField":
        X, Y = center_coords(grid)
        fx, fy = fn(X, Y)
        vals = np.stack([np.broadcast_to(fx, X.shape), np.broadcast_to(fy, X.shape)], axis=-1)
        return cls(grid, vals)

    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.sum(self.values**2, axis=-1))


@dataclass(frozen=True)
class BoundaryMask:
    """Interior flag per node; non-interior nodes carry Dirichlet data."""

    grid: GridSpec
    interior: np.ndarray

    def __post_init__(self):
        m = self.grid.cells + 1
        arr = np.array(self.interior, dtype=bool)
        if arr.shape != (m, m):
            raise ValueError("BoundaryMask: wrong shape")
        if arr[0, :].any() or arr[-1, :].any() or arr[:, 0].any() or arr[:, -1].any():
            raise ValueError("BoundaryMask: square boundary nodes must be non-interior")
        arr.setflags(write=False)
        object.__setattr__(self, "interior", arr)


def interior_mask(grid: GridSpec, ball_radius: float | None = None) -> BoundaryMask:
    """All nodes strictly inside the square; optionally restricted further
    to the open ball of the given radius."""
    m = grid.cells + 1
    interior = np.zeros((m, m), dtype=bool)
    interior[1:-1, 1:-1] = True
    if ball_radius is not None:
        X, Y = node_coords(grid)
        interior &= X * X + Y * Y < ball_radius**2
    return BoundaryMask(grid, interior)


def gradient(u: ScalarField) -> VectorField:
    """Q1 gradient sampled at cell centers; exact on affine fields."""
    v = u.values
    h = u.grid.spacing
    gx = (v[1:, :-1] - v[:-1, :-1] + v[1:, 1:] - v[:-1, 1:]) / (2.0 * h)
    gy = (v[:-1, 1:] - v[:-1, :-1] + v[1:, 1:] - v[1:, :-1]) / (2.0 * h)
    return VectorField(u.grid, np.stack([gx, gy], axis=-1))


def divergence_weak(F: VectorField, mask: BoundaryMask) -> ScalarField:
    """Nodal pairing u_i -> integral of <F, D phi_i> against the Q1 basis,
    i.e. the weak negative divergence; zero on non-interior nodes.

    Exact adjoint of :func:`gradient` under :func:`integrate`: for any u
    vanishing on non-interior nodes, <divergence_weak(F), u>_nodes equals
    integrate(<F, Du>) to round-off.
    """
    if F.grid != mask.grid:
        raise ValueError("grid mismatch")
    h = F.grid.spacing
    w = (h * h) * F.values
    wx, wy = w[..., 0], w[..., 1]
    m = F.grid.cells + 1
    b = np.zeros((m, m))
    c = 1.0 / (2.0 * h)
    b[:-1, :-1] += (-wx - wy) * c
    b[1:, :-1] += (wx - wy) * c
    b[:-1, 1:] += (-wx + wy) * c
    b[1:, 1:] += (wx + wy) * c
    b[~mask.interior] = 0.0
    return ScalarField(F.grid, b)


def integrate(grid: GridSpec, cell_values: np.ndarray) -> float:
    """One-point quadrature: spacing^2 times the sum of cell values.
    Linear and positive; exact for cell-wise constants."""
    arr = np.asarray(cell_values, dtype=float)
    if arr.shape[:2] != (grid.cells, grid.cells):
        raise ValueError("integrate: cell array has wrong shape")
    return float(grid.spacing**2 * arr.sum())


def node_to_center(u: ScalarField) -> np.ndarray:
    """Q1 interpolation of a nodal field at the cell centers (corner mean)."""
    v = u.values
    return 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[:-1, 1:] + v[1:, 1:])


def _bump_kernel(grid: GridSpec, eps: float):
    """Discrete compactly supported smooth bump on the node lattice,
    truncated at |x| < eps and renormalized so the weights sum to one."""
    h = grid.spacing
    m = int(np.ceil(eps / h)) - 1  # largest offset with |offset|*h < eps
    m = max(m, 1)
    idx = np.arange(-m, m + 1)
    r2 = (idx[:, None] ** 2 + idx[None, :] ** 2) * (h / eps) ** 2
    with np.errstate(divide="ignore", over="ignore"):
        k = np.where(r2 < 1.0, np.exp(-1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
    return k / k.sum()


def mollify(f: ScalarField, eps: float) -> ScalarField:
    """Convolution with a normalized compactly supported smooth bump of
    radius ``eps``.  Near the boundary the stencil is renormalized over
    the in-domain nodes, so constants are preserved exactly everywhere
    and interior mass is conserved.

    Requires eps >= 2 * spacing so the kernel is resolved by the grid.
    """
    if eps < 2.0 * f.grid.spacing:
        raise ValueError("mollify: eps must be at least twice the grid spacing")
    k = _bump_kernel(f.grid, eps)
    num = convolve2d(f.values, k, mode="same", boundary="fill")
    den = convolve2d(np.ones_like(f.values), k, mode="same", boundary="fill")
    return ScalarField(f.grid, num / den)


def cutoff_eta(grid: GridSpec, r: float) -> ScalarField:
    """Radial cut-off: 1 on the ball of radius r/2, 0 outside radius r,
    cubic smoothstep in between.  The profile's slope is 3/r at worst, so
    the discrete max gradient times r stays below 4.
    """
    if r > grid.extent:
        raise ValueError("cutoff_eta: r must not exceed the half-width")
    X, Y = node_coords(grid)
    rho = np.sqrt(X * X + Y * Y)
    s = np.clip((rho - 0.5 * r) / (0.5 * r), 0.0, 1.0)
    return ScalarField(grid, 1.0 - s * s * (3.0 - 2.0 * s))


# --- field I/O ---------------------------------------------------------------

_MAGIC = b"WDL1"


def write_csv(field: ScalarField, path) -> None:
    """Plain CSV rows (x, y, value), row-major in x then y."""
    ax = field.grid.node_axis()
    lines = ["x,y,value"]
    for i, x in enumerate(ax):
        for j, y in enumerate(ax):
            lines.append(f"{x:.17g},{y:.17g},{field.values[i, j]:.17g}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_csv(path) -> ScalarField:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "x,y,value":
            raise ValueError("not a field CSV (bad header)")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    n = len(rows)
    m = int(round(np.sqrt(n)))
    if m * m != n:
        raise ValueError("field CSV is not a square lattice")
    xs = np.array([float(r[0]) for r in rows])
    vals = np.array([float(r[2]) for r in rows]).reshape(m, m)
    extent = -xs[0]
    return ScalarField(GridSpec(extent, m - 1), vals)


def write_wdl1(field, path) -> None:
    """Compact binary dump: magic ``WDL1``, little-endian doubles,
    row-major; header carries extent, cells and component count."""
    if isinstance(field, ScalarField):
        ncomp, data = 1, field.values
    elif isinstance(field, VectorField):
        ncomp, data = 2, field.values
    else:
        raise TypeError("write_wdl1 expects a ScalarField or VectorField")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<dII", field.grid.extent, field.grid.cells, ncomp))
    buf.write(np.ascontiguousarray(data, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_wdl1(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != _MAGIC:
        raise ValueError("not a WDL1 dump")
    extent, cells, ncomp = struct.unpack_from("<dII", raw, 4)
    grid = GridSpec(extent, cells)
    data = np.frombuffer(raw[4 + struct.calcsize("<dII") :], dtype="<f8")
    if ncomp == 1:
        return ScalarField(grid, data.reshape(cells + 1, cells + 1))
    if ncomp == 2:
        return VectorField(grid, data.reshape(cells, cells, 2))
    raise ValueError(f"unsupported component count {ncomp}")
