"""Finite control subsets, control projection and Markov policy synthesis from a solved field."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import IncompatibleGrids
from .hjb import ValueField, hamiltonian_table
from .problem import ControlSet, ProblemSpec, finite_controls


def finite_subset(controls: ControlSet, n: int) -> ControlSet:
    """First n points of the control enumeration (the whole list if n exceeds it)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return finite_controls(controls.enumerate(n))


def project_controls(U, subset: ControlSet) -> np.ndarray:
    """Row-wise nearest subset point; the lowest index wins ties."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    pts = subset.points
    dist = np.linalg.norm(U[:, None, :] - pts[None, :, :], axis=2)
    return pts[np.argmin(dist, axis=1)]


def project_control(u, subset: ControlSet) -> np.ndarray:
    return project_controls(np.atleast_1d(np.asarray(u, dtype=float))[None, :], subset)[0]


@dataclass(frozen=True, eq=False)
class MarkovPolicy:
    """Control table indexed by time slab and by the spatial cell of the state at the slab start."""

    time_knots: np.ndarray  # (M1 + 1,)
    cell_origin: np.ndarray  # lower corner of the cell grid
    cell_h: float
    cell_shape: tuple
    table: np.ndarray  # (M1, n_cells, p)
    fallback: np.ndarray  # (p,)

    @property
    def M1(self) -> int:
        return len(self.time_knots) - 1

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cell_shape))

    def cell_centers(self) -> np.ndarray:
        axes = [self.cell_origin[i] + self.cell_h * (np.arange(n) + 0.5) for i, n in enumerate(self.cell_shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_index(self, X) -> np.ndarray:
        """Flat cell index per row, -1 outside every cell."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        rel = (X - self.cell_origin) / self.cell_h
        k = np.floor(rel).astype(np.int64)
        shape = np.array(self.cell_shape)
        # the top face of the grid belongs to the last cell
        edge = np.isclose(rel, shape, rtol=0, atol=1e-12)
        k[edge] = (np.broadcast_to(shape, k.shape) - 1)[edge]
        inside = np.all((k >= 0) & (k < shape), axis=1)
        strides = np.array([int(np.prod(self.cell_shape[i + 1:])) for i in range(len(self.cell_shape))])
        flat = np.where(inside, np.clip(k, 0, shape - 1) @ strides, -1)
        return flat

    def slab(self, s: float) -> int:
        """j with s in (t_j, t_{j+1}]; the start time uses j = 0."""
        j = int(np.searchsorted(self.time_knots, s - 1e-12, side="left")) - 1
        return int(np.clip(j, 0, self.M1 - 1))

    def lookup(self, j: int, X) -> np.ndarray:
        k = self.cell_index(X)
        out = np.empty((len(k), self.table.shape[2]))
        ok = k >= 0
        out[ok] = self.table[j, k[ok]]
        out[~ok] = self.fallback
        return out


def evaluate_policy(policy: MarkovPolicy, s: float, x_at_last_knot) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x_at_last_knot, dtype=float))
    return policy.lookup(policy.slab(s), x[None, :])[0]


def _cell_grid(lo, hi, cell_h):
    shape = tuple(int(max(1, np.ceil((b - a) / cell_h - 1e-9))) for a, b in zip(lo, hi))
    return np.asarray(lo, dtype=float), shape


def synthesize(fld: ValueField, spec: ProblemSpec, M1: int, cell_h: float) -> MarkovPolicy:
    """Per (slab, cell) argmin over the field's controls of A^u W + Gamma at the cell centre."""
    if M1 < 1 or cell_h <= 0:
        raise ValueError("need M1 >= 1 and cell_h > 0")
    if fld.lattice.h > cell_h + 1e-12:
        raise IncompatibleGrids(f"field mesh {fld.lattice.h} is coarser than the policy cells {cell_h}")
    controls = fld.control_subset
    t0, T = float(fld.times[0]), float(fld.times[-1])
    knots = t0 + (T - t0) * np.arange(M1 + 1) / M1
    lo, hi = spec.domain.bounding_box
    origin, shape = _cell_grid(lo, hi, cell_h)
    pol = MarkovPolicy(knots, origin, float(cell_h), shape, np.empty((0,)), controls.points[0])
    centers = pol.cell_centers()

    lat = fld.lattice
    coords = lat.coords()
    inner = fld.interior_index
    # non-equation nodes borrow the value of the nearest equation node
    nearest = cKDTree(coords[inner]).query(coords)[1] if len(inner) else None
    ci, wi, _ = lat.locate(centers)

    table = np.empty((M1, len(centers), controls.dim))
    for j in range(M1):
        level = min(fld.level_of(knots[j]), fld.n_levels - 2)
        H = hamiltonian_table(fld, spec, level)  # (n_u, n_inner)
        at_centers = np.empty((len(controls), len(centers)))
        for iu in range(len(controls)):
            full = H[iu][nearest]
            at_centers[iu] = np.sum(full[ci] * wi, axis=1)
        table[j] = controls.points[np.argmin(at_centers, axis=0)]
    return MarkovPolicy(knots, origin, float(cell_h), shape, table, controls.points[0].copy())


def export_policy_csv(path, policy: MarkovPolicy) -> None:
    centers = policy.cell_centers()
    d, p = centers.shape[1], policy.table.shape[2]
    header = ["j", "t_start", "t_end", "k"] + [f"c_{i + 1}" for i in range(d)] + [f"u_{i + 1}" for i in range(p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        # the fallback row also carries the cell width
        w.writerow([-1, f"{policy.cell_h:.16e}", "", -1] + [""] * d + [f"{v:.16e}" for v in policy.fallback])
        for j in range(policy.M1):
            a, b = policy.time_knots[j], policy.time_knots[j + 1]
            for k, c in enumerate(centers):
                w.writerow([j, f"{a:.16e}", f"{b:.16e}", k] + [f"{v:.16e}" for v in c]
                           + [f"{v:.16e}" for v in policy.table[j, k]])


def import_policy_csv(path) -> MarkovPolicy:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = sum(1 for h in header if h.startswith("c_"))
    p = sum(1 for h in header if h.startswith("u_"))
    fallback = np.array([float(v) for v in body[0][4 + d:]])
    cell_h = float(body[0][1])
    body = body[1:]
    js = np.array([int(r[0]) for r in body])
    ks = np.array([int(r[3]) for r in body])
    M1, nc = js.max() + 1, ks.max() + 1
    knots = np.empty(M1 + 1)
    centers = np.empty((nc, d))
    table = np.empty((M1, nc, p))
    for r, j, k in zip(body, js, ks):
        knots[j], knots[j + 1] = float(r[1]), float(r[2])
        centers[k] = [float(v) for v in r[4:4 + d]]
        table[j, k] = [float(v) for v in r[4 + d:]]
    shape = tuple(len(np.unique(np.round(centers[:, i], 12))) for i in range(d))
    origin = centers.min(axis=0) - cell_h / 2
    return MarkovPolicy(knots, origin, cell_h, shape, table, fallback)
