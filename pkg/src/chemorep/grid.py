"""
Uniform cell-centered tensor grids with homogeneous Neumann boundaries.

Fields are flat ``float64`` arrays of length ``grid.size`` in row-major
(C) order; trajectories stack them as ``(num_nodes, grid.size)``.

Every spatial operator is built from face differences.  For axis ``i`` the
matrix ``G_i`` maps cell values to the ``(n_i - 1) * prod(n_j)`` interior
faces, ``(G_i w)_{k+1/2} = (w_{k+1} - w_k) / h_i``.  Boundary faces carry
zero flux, so the discrete divergence of a face flux is ``-G_i^T``.  This
gives

    laplacian(w)          = -sum_i G_i^T G_i w
    drift_divergence(u,v) = -sum_i G_i^T (u_face * G_i v)

and the cell sum of both vanishes identically (mirrored ghost cells).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

CENTRAL = "central"
UPWIND = "upwind"


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid on ``[0, L_1] x ... x [0, L_dim]``.

    Attributes:
        cells: number of cells per axis (each >= 3).
        spacing: cell width per axis.
        control_mask: boolean flat array, True on the control region.
    """

    cells: tuple[int, ...]
    spacing: tuple[float, ...]
    control_mask: np.ndarray = field(repr=False)

    def __post_init__(self):
        if len(self.cells) not in (1, 2, 3) or len(self.cells) != len(self.spacing):
            raise ValueError("grid dimension must be 1, 2 or 3")
        if any(n < 3 for n in self.cells):
            raise ValueError(f"every axis needs at least 3 cells, got {self.cells}")
        if any(not h > 0 for h in self.spacing):
            raise ValueError("spacing must be positive")
        mask = np.asarray(self.control_mask, dtype=bool).ravel()
        if mask.size != self.size:
            raise ValueError("control mask size does not match the grid")
        mask.setflags(write=False)
        object.__setattr__(self, "control_mask", mask)

    @property
    def dim(self) -> int:
        return len(self.cells)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def size(self) -> int:
        return int(np.prod(self.cells))

    @property
    def lengths(self) -> tuple[float, ...]:
        return tuple(n * h for n, h in zip(self.cells, self.spacing))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return self.cell_volume * self.size

    @property
    def mask_float(self) -> np.ndarray:
        return self.control_mask.astype(float)

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def centers(self) -> list[np.ndarray]:
        """Cell-center coordinates, one flat array per axis."""
        mesh = np.meshgrid(*[self.axis_centers(i) for i in range(self.dim)], indexing="ij")
        return [m.ravel() for m in mesh]

    def face_centers(self, axis: int) -> list[np.ndarray]:
        """Coordinates of the interior faces normal to ``axis``."""
        axes = [self.axis_centers(i) for i in range(self.dim)]
        axes[axis] = np.arange(1, self.cells[axis]) * self.spacing[axis]
        mesh = np.meshgrid(*axes, indexing="ij")
        return [m.ravel() for m in mesh]

    def same_as(self, other: "Grid") -> bool:
        return (
            self.cells == other.cells
            and np.allclose(self.spacing, other.spacing, rtol=1e-14, atol=0)
            and np.array_equal(self.control_mask, other.control_mask)
        )

    def _embed(self, axis: int, block: sp.spmatrix) -> sp.csr_matrix:
        mats = [sp.identity(n, format="csr") for n in self.cells]
        mats[axis] = block
        out = mats[0]
        for m in mats[1:]:
            out = sp.kron(out, m, format="csr")
        return sp.csr_matrix(out)

    @cached_property
    def gradients(self) -> tuple[sp.csr_matrix, ...]:
        """Face-difference operators ``G_i`` (interior faces only)."""
        ops = []
        for axis, (n, h) in enumerate(zip(self.cells, self.spacing)):
            d1 = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / h
            ops.append(self._embed(axis, d1))
        return tuple(ops)

    @cached_property
    def face_left(self) -> tuple[sp.csr_matrix, ...]:
        """Selectors picking the cell on the low side of each face."""
        return tuple(
            self._embed(a, sp.eye(n - 1, n, 0, format="csr")) for a, n in enumerate(self.cells)
        )

    @cached_property
    def face_right(self) -> tuple[sp.csr_matrix, ...]:
        return tuple(
            self._embed(a, sp.eye(n - 1, n, 1, format="csr")) for a, n in enumerate(self.cells)
        )

    @cached_property
    def face_average(self) -> tuple[sp.csr_matrix, ...]:
        return tuple(0.5 * (lo + hi) for lo, hi in zip(self.face_left, self.face_right))

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        lap = sp.csr_matrix((self.size, self.size))
        for g in self.gradients:
            lap = lap - (g.T @ g)
        return sp.csr_matrix(lap)

    def divergence(self, fluxes: Sequence[np.ndarray]) -> np.ndarray:
        """Cell divergence of interior-face fluxes (zero flux on the boundary)."""
        out = np.zeros(self.size)
        for g, flux in zip(self.gradients, fluxes):
            out -= g.T @ flux
        return out


def build_grid(
    dim: int,
    lengths: Sequence[float] | float,
    cells: Sequence[int] | int,
    control_box: str | Sequence[Sequence[float]] | None = "all",
) -> Grid:
    """Build a uniform grid and its control mask.

    ``control_box`` is ``"all"`` (whole domain), ``None`` (no control) or a
    sequence of ``(lo, hi)`` pairs; a cell is controlled when its center lies
    in the closed box.
    """
    lengths = _as_tuple(lengths, dim, float)
    cells = _as_tuple(cells, dim, int)
    if any(n < 3 for n in cells):
        raise ValueError(f"every axis needs at least 3 cells, got {cells}")
    if any(not length > 0 for length in lengths):
        raise ValueError("lengths must be positive")
    spacing = tuple(length / n for length, n in zip(lengths, cells))
    size = int(np.prod(cells))
    if control_box is None:
        mask = np.zeros(size, dtype=bool)
    elif isinstance(control_box, str):
        if control_box != "all":
            raise ValueError(f"unknown control box {control_box!r}")
        mask = np.ones(size, dtype=bool)
    else:
        box = [tuple(map(float, b)) for b in control_box]
        if len(box) != dim:
            raise ValueError("control box needs one (lo, hi) pair per axis")
        probe = Grid(cells, spacing, np.zeros(size, dtype=bool))
        mask = np.ones(size, dtype=bool)
        for x, (lo, hi) in zip(probe.centers(), box):
            if lo > hi:
                raise ValueError("control box has lo > hi")
            mask &= (x >= lo) & (x <= hi)
        if not mask.any():
            raise ValueError("control box contains no cell center")
    return Grid(cells, spacing, mask)


def _as_tuple(value, dim, kind):
    if np.isscalar(value):
        return (kind(value),) * dim
    out = tuple(kind(x) for x in value)
    if len(out) != dim:
        raise ValueError(f"expected {dim} entries, got {len(out)}")
    return out


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid ``t_n = n * dt`` on ``[0, T]``."""

    T: float
    N: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("horizon T must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("step count N must be a positive integer")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt


# ---------------------------------------------------------------- operators


def laplacian(grid: Grid, w: np.ndarray) -> np.ndarray:
    return grid.laplacian_matrix @ w


def face_values(grid: Grid, u: np.ndarray, v: np.ndarray, scheme: str) -> list[np.ndarray]:
    """Face interpolant of ``u`` used by the drift flux ``u_face * grad v``.

    Upwind picks the donor cell of the velocity ``-grad v``: the high-side
    cell when the face gradient is positive, otherwise the low side.
    """
    out = []
    for g, lo, hi in zip(grid.gradients, grid.face_left, grid.face_right):
        if scheme == CENTRAL:
            out.append(0.5 * (lo @ u + hi @ u))
        elif scheme == UPWIND:
            out.append(np.where(g @ v > 0, hi @ u, lo @ u))
        else:
            raise ValueError(f"unknown drift scheme {scheme!r}")
    return out


def donor_operators(grid: Grid, v: np.ndarray, scheme: str) -> list[sp.csr_matrix]:
    """Linear maps ``u -> u_face`` with the donor choice frozen at ``v``."""
    if scheme == CENTRAL:
        return list(grid.face_average)
    if scheme != UPWIND:
        raise ValueError(f"unknown drift scheme {scheme!r}")
    ops = []
    for g, lo, hi in zip(grid.gradients, grid.face_left, grid.face_right):
        right = (g @ v > 0).astype(float)
        ops.append(sp.csr_matrix(sp.diags(right) @ hi + sp.diags(1.0 - right) @ lo))
    return ops


def drift_divergence(grid: Grid, u: np.ndarray, v: np.ndarray, scheme: str = UPWIND) -> np.ndarray:
    """Conservative discretization of ``div(u grad v)``."""
    uf = face_values(grid, u, v, scheme)
    return grid.divergence([a * (g @ v) for a, g in zip(uf, grid.gradients)])


def upwind_outflow_rate(grid: Grid, v: np.ndarray) -> np.ndarray:
    """Per-cell sum of ``|grad v| / h`` over faces where the cell is the donor."""
    out = np.zeros(grid.size)
    for g, lo, hi, h in zip(grid.gradients, grid.face_left, grid.face_right, grid.spacing):
        gv = g @ v
        rate = np.abs(gv) / h
        out += hi.T @ np.where(gv > 0, rate, 0.0)
        out += lo.T @ np.where(gv < 0, rate, 0.0)
    return out


# ------------------------------------------------------------- quadrature


def integrate(grid: Grid, w: np.ndarray) -> float:
    return float(np.sum(w) * grid.cell_volume)


def lq_norm(grid: Grid, w: np.ndarray, q: float = 2.0) -> float:
    if q < 1:
        raise ValueError("q must be >= 1")
    a = np.abs(np.asarray(w, dtype=float))
    if np.isinf(q):
        return float(a.max(initial=0.0))
    return float((np.sum(a**q) * grid.cell_volume) ** (1.0 / q))


def time_rows(values: np.ndarray, timegrid: TimeGrid) -> np.ndarray:
    """Rows entering the left-endpoint rule: nodes ``0..N-1``.

    A node trajectory has ``N + 1`` rows, a control has ``N``.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] == timegrid.N + 1:
        return values[:-1]
    if values.shape[0] == timegrid.N:
        return values
    raise ValueError(f"trajectory has {values.shape[0]} rows, time grid has N={timegrid.N}")


def bochner_norm(grid: Grid, timegrid: TimeGrid, traj: np.ndarray, s: float, q: float) -> float:
    """``L^s(0, T; L^q)`` norm; left-endpoint rule in time, max over nodes for s = inf."""
    if s < 1 or q < 1:
        raise ValueError("s and q must be >= 1")
    traj = np.asarray(traj, dtype=float)
    if np.isinf(s):
        return max(lq_norm(grid, row, q) for row in traj)
    rows = time_rows(traj, timegrid)
    slices = np.array([lq_norm(grid, row, q) for row in rows])
    return float((np.sum(slices**s) * timegrid.dt) ** (1.0 / s))


def spacetime_inner(grid: Grid, timegrid: TimeGrid, a: np.ndarray, b: np.ndarray) -> float:
    """Discrete ``L^2(Q)`` pairing with the left-endpoint time rule."""
    ra, rb = time_rows(a, timegrid), time_rows(b, timegrid)
    return float(np.sum(ra * rb) * grid.cell_volume * timegrid.dt)


def gradient_norm_sq(grid: Grid, w: np.ndarray) -> float:
    """Face-based ``||grad w||^2``."""
    return float(sum(np.sum((g @ w) ** 2) for g in grid.gradients) * grid.cell_volume)


def h1_norm_sq(grid: Grid, w: np.ndarray) -> float:
    """``||grad w||^2 + (int w)^2``."""
    return gradient_norm_sq(grid, w) + integrate(grid, w) ** 2


# ------------------------------------------------------------ snapshot files


def write_field(path: str | Path, grid: Grid, values: np.ndarray) -> None:
    """Write a field snapshot: header ``dim n.. h..`` then one value per line."""
    values = np.asarray(values, dtype=float).ravel()
    if values.size != grid.size:
        raise ValueError("field size does not match the grid")
    header = " ".join([str(grid.dim), *map(str, grid.cells), *(f"{h:.17g}" for h in grid.spacing)])
    body = "\n".join(f"{x:.17g}" for x in values)
    Path(path).write_text(header + "\n" + body + "\n")


def read_field(path: str | Path) -> tuple[Grid, np.ndarray]:
    """Read a snapshot written by :func:`write_field` (control mask: whole domain)."""
    lines = Path(path).read_text().split("\n")
    head = lines[0].split()
    dim = int(head[0])
    if len(head) != 1 + 2 * dim:
        raise ValueError(f"malformed snapshot header: {lines[0]!r}")
    cells = tuple(int(x) for x in head[1 : 1 + dim])
    spacing = tuple(float(x) for x in head[1 + dim :])
    values = np.array([float(x) for x in lines[1:] if x.strip()])
    grid = Grid(cells, spacing, np.ones(int(np.prod(cells)), dtype=bool))
    if values.size != grid.size:
        raise ValueError(f"snapshot has {values.size} values, header expects {grid.size}")
    return grid, values
