"""Polar grid on the unit disk, dense fields, and basic calculus.

The reference domain is the open unit disk.  Cells are centered at
r_i = (i + 1/2) / n_r so neither the origin nor the boundary carries a
node; the coordinate singularity at r = 0 never enters a stencil and
boundary data lives on the cell edge r = 1.  Angular derivatives are
taken spectrally (the angular direction is periodic and smooth fields
are band-limited on it), radial derivatives with second-order finite
differences.  Stencils that need a node inside the origin use the
angle-shift rule: a value at (-r, theta) is the value at (r, theta+pi).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class Grid:
    """Cell-centered polar grid of the unit disk."""

    def __init__(self, n_r: int, n_theta: int):
        if n_r < 4:
            raise ValueError("n_r must be at least 4")
        if n_theta < 4 or n_theta % 2 != 0:
            raise ValueError("n_theta must be even and at least 4")
        self.n_r = n_r
        self.n_theta = n_theta
        self.dr = 1.0 / n_r
        self.dtheta = 2.0 * np.pi / n_theta
        self.radii = (np.arange(n_r) + 0.5) * self.dr          # cell centers
        self.edge_radii = np.arange(n_r + 1) * self.dr         # cell edges, 0..1
        self.angles = np.arange(n_theta) * self.dtheta          # cell centers in theta
        self.edge_angles = self.angles + 0.5 * self.dtheta      # theta faces
        # cartesian coordinates of the nodes, shape (n_r, n_theta)
        self.y1 = self.radii[:, None] * np.cos(self.angles)[None, :]
        self.y2 = self.radii[:, None] * np.sin(self.angles)[None, :]
        self.cell_area = self.radii[:, None] * self.dr * self.dtheta * np.ones(n_theta)[None, :]
        # rfft wavenumbers for spectral theta-derivatives
        self.modes = np.arange(n_theta // 2 + 1)

    def __eq__(self, other):
        return isinstance(other, Grid) and (self.n_r, self.n_theta) == (other.n_r, other.n_theta)

    def __hash__(self):
        return hash((self.n_r, self.n_theta))

    def __repr__(self):
        return f"Grid(n_r={self.n_r}, n_theta={self.n_theta})"


@dataclass
class ScalarField:
    """Dense scalar samples on the nodes of a polar grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_r, self.grid.n_theta):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.n_r}, {self.grid.n_theta})"
            )

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros((grid.n_r, grid.n_theta)))

    @classmethod
    def from_function(cls, grid: Grid, f) -> "ScalarField":
        """Sample f(y1, y2) on the grid nodes."""
        return cls(grid, np.asarray(f(grid.y1, grid.y2), dtype=float) * np.ones_like(grid.y1))

    @classmethod
    def from_polar_function(cls, grid: Grid, f) -> "ScalarField":
        """Sample f(r, theta) on the grid nodes."""
        r = grid.radii[:, None] * np.ones_like(grid.y1)
        th = np.ones((grid.n_r, 1)) * grid.angles[None, :]
        return cls(grid, np.asarray(f(r, th), dtype=float) * np.ones_like(grid.y1))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def check_finite(self):
        if not np.all(np.isfinite(self.values)):
            raise FloatingPointError("scalar field contains NaN or Inf")


@dataclass
class VectorField:
    """Cartesian component pair sampled on the nodes of a polar grid."""

    grid: Grid
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        self.u1 = np.asarray(self.u1, dtype=float)
        self.u2 = np.asarray(self.u2, dtype=float)
        shape = (self.grid.n_r, self.grid.n_theta)
        if self.u1.shape != shape or self.u2.shape != shape:
            raise ValueError("component shapes do not match grid")

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        shape = (grid.n_r, grid.n_theta)
        return cls(grid, np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_function(cls, grid: Grid, f) -> "VectorField":
        """Sample f(y1, y2) -> (u1, u2) on the grid nodes."""
        u1, u2 = f(grid.y1, grid.y2)
        ones = np.ones_like(grid.y1)
        return cls(grid, np.asarray(u1, dtype=float) * ones, np.asarray(u2, dtype=float) * ones)

    def copy(self) -> "VectorField":
        return VectorField(self.grid, self.u1.copy(), self.u2.copy())

    def check_finite(self):
        if not (np.all(np.isfinite(self.u1)) and np.all(np.isfinite(self.u2))):
            raise FloatingPointError("vector field contains NaN or Inf")


# ---------------------------------------------------------------------------
# derivative building blocks
# ---------------------------------------------------------------------------

def theta_derivative(grid: Grid, values: np.ndarray, order: int = 1) -> np.ndarray:
    """Spectral d/dtheta along axis 1; exact on resolved harmonics."""
    spec = np.fft.rfft(values, axis=1)
    m = grid.modes
    if order == 1:
        spec = spec * (1j * m)
        if grid.n_theta % 2 == 0:
            spec[:, -1] = 0.0  # odd derivative of the Nyquist mode is not representable
    elif order == 2:
        spec = spec * -(m.astype(float) ** 2)
    else:
        raise ValueError("order must be 1 or 2")
    return np.fft.irfft(spec, n=grid.n_theta, axis=1)


def radial_derivative(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Second-order d/dr: centered inside, angle-shift ghost across the
    origin, one-sided at the outer ring."""
    dr = grid.dr
    out = np.empty_like(values)
    out[1:-1] = (values[2:] - values[:-2]) / (2.0 * dr)
    ghost = np.roll(values[0], grid.n_theta // 2)  # value at (-r_0, theta)
    out[0] = (values[1] - ghost) / (2.0 * dr)
    out[-1] = (3.0 * values[-1] - 4.0 * values[-2] + values[-3]) / (2.0 * dr)
    return out


def gradient(f: ScalarField) -> VectorField:
    """Cartesian gradient from polar derivatives."""
    g = f.grid
    fr = radial_derivative(g, f.values)
    ft = theta_derivative(g, f.values) / g.radii[:, None]
    cos = np.cos(g.angles)[None, :]
    sin = np.sin(g.angles)[None, :]
    return VectorField(g, cos * fr - sin * ft, sin * fr + cos * ft)


def perp_gradient(f: ScalarField) -> VectorField:
    """Counterclockwise perpendicular gradient (-d2 f, d1 f)."""
    grad = gradient(f)
    return VectorField(f.grid, -grad.u2, grad.u1)


def divergence(v: VectorField, jac: np.ndarray | None = None) -> ScalarField:
    """Divergence of a vector field given by Cartesian components.

    With jac = dy/dx of an affine map, the components are treated as
    physical ones sampled at reference nodes and the chain rule gives the
    physical divergence; jac = None means reference = physical.
    """
    g = v.grid
    if jac is None:
        cos = np.cos(g.angles)[None, :]
        sin = np.sin(g.angles)[None, :]
        vr = cos * v.u1 + sin * v.u2
        vt = -sin * v.u1 + cos * v.u2
        r = g.radii[:, None]
        div = radial_derivative(g, r * vr) / r + theta_derivative(g, vt) / r
        return ScalarField(g, div)
    g1 = gradient(ScalarField(g, v.u1))
    g2 = gradient(ScalarField(g, v.u2))
    T = np.asarray(jac, dtype=float)
    div = T[0, 0] * g1.u1 + T[1, 0] * g1.u2 + T[0, 1] * g2.u1 + T[1, 1] * g2.u2
    return ScalarField(g, div)


def curl(v: VectorField, jac: np.ndarray | None = None) -> ScalarField:
    """Scalar curl d1 u2 - d2 u1; jac as in divergence."""
    g = v.grid
    if jac is None:
        cos = np.cos(g.angles)[None, :]
        sin = np.sin(g.angles)[None, :]
        vr = cos * v.u1 + sin * v.u2
        vt = -sin * v.u1 + cos * v.u2
        r = g.radii[:, None]
        w = radial_derivative(g, r * vt) / r - theta_derivative(g, vr) / r
        return ScalarField(g, w)
    g1 = gradient(ScalarField(g, v.u1))
    g2 = gradient(ScalarField(g, v.u2))
    T = np.asarray(jac, dtype=float)
    w = T[0, 0] * g2.u1 + T[1, 0] * g2.u2 - (T[0, 1] * g1.u1 + T[1, 1] * g1.u2)
    return ScalarField(g, w)


def boundary_extrapolate(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Quadratic extrapolation of nodal data to the boundary r = 1.

    Exact for radial profiles of degree <= 2; used for boundary traces of
    interior fields (no boundary node exists on the cell-centered grid).
    """
    # Lagrange weights for nodes at 1 - 5h/2, 1 - 3h/2, 1 - h/2 evaluated at 1
    return (15.0 * values[-1] - 10.0 * values[-2] + 3.0 * values[-3]) / 8.0


def integrate(f: ScalarField, p: float) -> float:
    """L^p norm over the disk with cell-area weights; p = inf gives max |f|.

    The unit-Jacobian pullback makes this equal to the physical-domain norm.
    """
    if p != np.inf and p < 1:
        raise ValueError("integrate requires p >= 1 or p = inf")
    if p == np.inf:
        return float(np.max(np.abs(f.values)))
    w = f.grid.cell_area
    return float(np.sum(np.abs(f.values) ** p * w) ** (1.0 / p))


def inner_product(f: ScalarField, g: ScalarField) -> float:
    """Area-weighted L^2 inner product on the reference disk."""
    return float(np.sum(f.values * g.values * f.grid.cell_area))


def mean_value(f: ScalarField) -> float:
    """Area-weighted mean over the disk."""
    w = f.grid.cell_area
    return float(np.sum(f.values * w) / np.sum(w))


# ---------------------------------------------------------------------------
# snapshot format: `MDFLOW v1 scalar n_r n_theta t` + little-endian float64
# ---------------------------------------------------------------------------

SNAPSHOT_MAGIC = "MDFLOW v1 scalar"


def write_snapshot(path, f: ScalarField, t: float):
    """Write the documented binary snapshot: one ASCII header line
    `MDFLOW v1 scalar n_r n_theta t`, then row-major (radius-major)
    little-endian 64-bit floats."""
    header = f"{SNAPSHOT_MAGIC} {f.grid.n_r} {f.grid.n_theta} {t:.17g}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_snapshot(path) -> tuple[ScalarField, float]:
    """Read a snapshot written by write_snapshot; returns (field, t)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").strip()
        parts = header.split()
        if " ".join(parts[:3]) != SNAPSHOT_MAGIC or len(parts) != 6:
            raise ValueError(f"not an MDFLOW v1 scalar snapshot: {header!r}")
        n_r, n_theta = int(parts[3]), int(parts[4])
        t = float(parts[5])
        data = np.frombuffer(fh.read(8 * n_r * n_theta), dtype="<f8")
        if data.size != n_r * n_theta:
            raise ValueError("snapshot payload truncated")
    grid = Grid(n_r, n_theta)
    return ScalarField(grid, data.reshape(n_r, n_theta).copy()), t
