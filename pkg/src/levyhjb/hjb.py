"""Explicit monotone finite-difference solver for the HJB integro-PDE on a bounded domain.

Nodes are the lattice ``center + h * k`` clipped to the bounding box of the
(possibly dilated) domain plus one ghost layer.  Nodes strictly inside the
domain (signed distance > 1e-12) carry the equation; every other node holds
the terminal-boundary data ``Psi(t, node)``.

One backward step reads only the previous level:

    W^k = W^{k+1} + dt * min_u [ L^u W^{k+1} + Gamma(t_{k+1}, ., u) ]

with ``L^u`` made of the (a + eps I)/2 second-order term (7-point cross
stencil in 2d), the upwinded drift ``b - sum_j w_j gamma_j`` and the atom sum
``sum_j w_j (W(x + gamma_j) - W(x))`` with multilinear interpolation.  All
neighbour weights are nonnegative under the CFL bound, so the update is
monotone and commutes with constant shifts.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import CflViolation, EmptyControlSet, NonMonotoneDiffusion, OutsideDomain
from .geometry import DomainSpec, dilate
from .problem import ControlSet, ProblemSpec, finite_controls

NODE_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    spatial_h: float
    time_steps: int | None = None  # None: smallest count meeting the CFL bound
    delta: float = 0.0

    def __post_init__(self):
        if not self.spatial_h > 0:
            raise ValueError("spatial_h must be positive")
        if self.time_steps is not None and self.time_steps < 1:
            raise ValueError("time_steps must be >= 1")


# ---------------------------------------------------------------------------
# lattice


@dataclass(frozen=True, eq=False)
class Lattice:
    origin: np.ndarray  # coordinates of node (0, ..., 0)
    h: float
    shape: tuple
    center: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def strides(self) -> tuple:
        # C order
        s = [1] * self.dim
        for i in range(self.dim - 2, -1, -1):
            s[i] = s[i + 1] * self.shape[i + 1]
        return tuple(s)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    def coords(self) -> np.ndarray:
        axes = [self.origin[i] + self.h * np.arange(n) for i, n in enumerate(self.shape)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def locate(self, pts: np.ndarray):
        """Corner flat indices (n, 2^d), weights (n, 2^d) and an in-box mask."""
        pts = np.atleast_2d(pts)
        rel = (pts - self.origin) / self.h
        base = np.floor(rel).astype(np.int64)
        frac = rel - base
        # a point exactly on the last node uses the last cell
        for i, n in enumerate(self.shape):
            top = base[:, i] == n - 1
            base[top, i] = n - 2
            frac[top, i] = 1.0
        inbox = np.all((base >= 0) & (base <= np.array(self.shape) - 2), axis=1)
        base = np.clip(base, 0, np.array(self.shape) - 2)
        strides = np.array(self.strides)
        idx, wts = [], []
        for corner in itertools.product((0, 1), repeat=self.dim):
            c = np.array(corner)
            idx.append((base + c) @ strides)
            wts.append(np.prod(np.where(c == 1, frac, 1.0 - frac), axis=1))
        return np.stack(idx, axis=1), np.stack(wts, axis=1), inbox


def build_lattice(domain: DomainSpec, h: float) -> Lattice:
    lo, hi = domain.bounding_box
    c = np.asarray(domain.center, dtype=float).reshape(-1)
    kmin = np.floor((lo - c) / h - 1e-9).astype(int) - 1
    kmax = np.ceil((hi - c) / h + 1e-9).astype(int) + 1
    return Lattice(origin=c + kmin * h, h=float(h), shape=tuple(int(v) for v in (kmax - kmin + 1)), center=c)


# ---------------------------------------------------------------------------
# value field


@dataclass(eq=False)
class ValueField:
    grid: GridSpec
    domain_delta: DomainSpec
    lattice: Lattice
    times: np.ndarray  # (N+1,)
    values: np.ndarray  # (N+1, n_nodes)
    eps_viscosity: float
    control_subset: ControlSet
    spec: ProblemSpec
    interior: np.ndarray = field(repr=False, default=None)  # bool (n_nodes,)
    argmin: np.ndarray | None = field(repr=False, default=None)  # (N, n_interior) control index per level

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_levels(self) -> int:
        return len(self.times)

    @property
    def nodes(self) -> np.ndarray:
        return self.lattice.coords()

    @property
    def interior_index(self) -> np.ndarray:
        return np.nonzero(self.interior)[0]

    def level_of(self, t: float) -> int:
        return int(np.clip(round((t - self.times[0]) / self.dt), 0, self.n_levels - 1))


def _classify(domain: DomainSpec, lat: Lattice) -> np.ndarray:
    return domain.signed_distance(lat.coords()) > NODE_TOL


def _finite(controls: ControlSet | None, spec: ProblemSpec) -> ControlSet:
    controls = spec.controls if controls is None else controls
    if not controls.is_finite:
        raise EmptyControlSet("the solver needs a finite control subset; take finite_subset first")
    if len(controls) == 0:
        raise EmptyControlSet("control subset is empty")
    return controls


# ---------------------------------------------------------------------------
# operator assembly


@dataclass
class _Stencil:
    idx: np.ndarray  # interior flat indices
    x: np.ndarray  # interior coordinates
    plus: list  # per axis flat index of the +h neighbour
    minus: list
    diag: dict  # (s0, s1) -> flat index of the diagonal neighbour (2d)


def _stencil(lat: Lattice, interior: np.ndarray, coords: np.ndarray) -> _Stencil:
    idx = np.nonzero(interior)[0]
    st = lat.strides
    plus = [idx + st[i] for i in range(lat.dim)]
    minus = [idx - st[i] for i in range(lat.dim)]
    diag = {}
    if lat.dim == 2:
        for s0, s1 in itertools.product((1, -1), repeat=2):
            diag[(s0, s1)] = idx + s0 * st[0] + s1 * st[1]
    return _Stencil(idx, coords[idx], plus, minus, diag)


@dataclass
class _Coeffs:
    A: np.ndarray  # (n, d, d) a + eps I
    beff: np.ndarray  # (n, d) drift minus compensator
    b: np.ndarray  # (n, d) raw drift
    targets: list  # per atom (n, d) jump targets
    corners: list  # per atom corner indices
    weights: list
    outside: list  # per atom mask of targets outside the domain


def _coeffs(spec, dom, lat, sten, t, u, eps) -> _Coeffs:
    n, d = sten.x.shape
    U = np.broadcast_to(np.asarray(u, dtype=float).reshape(1, -1), (n, spec.controls.dim))
    tt = np.full(n, t)
    A = spec.diffusion(tt, sten.x, U) + eps * np.eye(d)[None]
    if d == 2:
        bad = (A[:, 0, 0] < np.abs(A[:, 0, 1]) - 1e-14) | (A[:, 1, 1] < np.abs(A[:, 0, 1]) - 1e-14)
        if np.any(bad):
            raise NonMonotoneDiffusion("a + eps I is not diagonally dominant; increase eps")
    elif d > 2:
        raise ValueError("the grid solver supports d <= 2")
    b = spec.drift(tt, sten.x, U)
    beff = b - spec.compensator(tt, sten.x, U)
    targets, corners, weights, outside = [], [], [], []
    for z in spec.levy.z:
        y = sten.x + spec.jump(tt, sten.x, U, z)
        ci, wi, inbox = lat.locate(y)
        out = (~inbox) | (dom.signed_distance(y) <= 0)
        targets.append(y)
        corners.append(ci)
        weights.append(wi)
        outside.append(out)
    return _Coeffs(A, beff, b, targets, corners, weights, outside)


def _interp(W, ci, wi):
    return np.sum(W[ci] * wi, axis=1)


def _jump_values(spec, W, c: _Coeffs, j: int, t: float) -> np.ndarray:
    v = _interp(W, c.corners[j], c.weights[j])
    out = c.outside[j]
    if np.any(out):
        v = v.copy()
        v[out] = spec.terminal(np.full(int(out.sum()), t), c.targets[j][out])
    return v


def _diffusion(W, sten: _Stencil, A, h) -> np.ndarray:
    d = A.shape[1]
    w0 = W[sten.idx]
    out = np.zeros(len(sten.idx))
    for i in range(d):
        out += 0.5 * A[:, i, i] * (W[sten.plus[i]] - 2 * w0 + W[sten.minus[i]]) / h**2
    if d == 2:
        a01 = A[:, 0, 1]
        pos = (W[sten.diag[(1, 1)]] - W[sten.plus[0]] - W[sten.plus[1]] + 2 * w0
               - W[sten.minus[0]] - W[sten.minus[1]] + W[sten.diag[(-1, -1)]]) / (2 * h**2)
        neg = -(W[sten.diag[(1, -1)]] - W[sten.plus[0]] - W[sten.minus[1]] + 2 * w0
                - W[sten.minus[0]] - W[sten.plus[1]] + W[sten.diag[(-1, 1)]]) / (2 * h**2)
        out += a01 * np.where(a01 >= 0, pos, neg)
    return out


def _upwind_gradient(W, sten: _Stencil, direction, h) -> np.ndarray:
    """One-sided differences taken along the sign of ``direction`` (n, d)."""
    w0 = W[sten.idx]
    g = np.empty_like(direction)
    for i in range(direction.shape[1]):
        fwd = (W[sten.plus[i]] - w0) / h
        bwd = (w0 - W[sten.minus[i]]) / h
        g[:, i] = np.where(direction[:, i] >= 0, fwd, bwd)
    return g


def _central_gradient(W, sten: _Stencil, h) -> np.ndarray:
    return np.stack([(W[sten.plus[i]] - W[sten.minus[i]]) / (2 * h) for i in range(len(sten.plus))], axis=1)


def _operator(spec, W, sten, c: _Coeffs, h, t) -> np.ndarray:
    """L^u W on interior nodes, written in difference form."""
    w0 = W[sten.idx]
    out = _diffusion(W, sten, c.A, h)
    for i in range(c.beff.shape[1]):
        bi = c.beff[:, i]
        out += np.maximum(bi, 0) * (W[sten.plus[i]] - w0) / h + np.minimum(bi, 0) * (w0 - W[sten.minus[i]]) / h
    for j, wj in enumerate(spec.levy.w):
        out += wj * (_jump_values(spec, W, c, j, t) - w0)
    return out


def cfl_rate(spec: ProblemSpec, domain: DomainSpec, h: float, eps: float, controls: ControlSet) -> float:
    """max over nodes and controls of tr(a + eps I)/h^2 + |b_eff|_1/h + 2 Lambda."""
    lat = build_lattice(domain, h)
    coords = lat.coords()
    inside = _classify(domain, lat)
    x = coords[inside] if inside.any() else coords[:1]
    n = x.shape[0]
    rate = 0.0
    for u in controls.points:
        U = np.broadcast_to(u.reshape(1, -1), (n, controls.dim))
        for t in (0.0, 0.5 * spec.T, spec.T):
            tt = np.full(n, t)
            a = spec.diffusion(tt, x, U)
            tr = np.trace(a, axis1=1, axis2=2) + eps * spec.d
            beff = spec.drift(tt, x, U) - spec.compensator(tt, x, U)
            r = tr / h**2 + np.sum(np.abs(beff), axis=1) / h + 2 * spec.levy.total_rate
            rate = max(rate, float(np.max(r)))
    return rate


def cfl_time_steps(spec, domain, h, eps, controls, T=None) -> int:
    T = spec.T if T is None else T
    rate = cfl_rate(spec, domain, h, eps, controls)
    return max(1, int(math.ceil(T * rate * (1 + 1e-12))))


# ---------------------------------------------------------------------------
# solve


def _time_homogeneous(spec: ProblemSpec, x: np.ndarray, controls: ControlSet) -> bool:
    n = min(len(x), 64)
    xs = x[:n]
    for u in controls.points:
        U = np.broadcast_to(u.reshape(1, -1), (n, controls.dim))
        ref = None
        for t in (0.0, spec.T / 3, spec.T):
            tt = np.full(n, t)
            cur = [spec.drift(tt, xs, U), spec.vol(tt, xs, U)] + [spec.jump(tt, xs, U, z) for z in spec.levy.z]
            if ref is None:
                ref = cur
            elif any(not np.array_equal(a, b) for a, b in zip(ref, cur)):
                return False
    return True


class _Assembler:
    """Caches per-control coefficients (per level when coefficients depend on t)."""

    def __init__(self, spec, dom, lat, sten, eps, controls):
        self.spec, self.dom, self.lat, self.sten, self.eps, self.controls = spec, dom, lat, sten, eps, controls
        self.static = _time_homogeneous(spec, sten.x, controls) if len(sten.idx) else True
        self.cache = {}

    def coeffs(self, t, iu):
        key = iu if self.static else (iu, t)
        if key not in self.cache:
            if not self.static:
                self.cache = {k: v for k, v in self.cache.items() if k[1] == t}
            self.cache[key] = _coeffs(self.spec, self.dom, self.lat, self.sten, t, self.controls.points[iu], self.eps)
        return self.cache[key]

    def hamiltonians(self, W, t) -> np.ndarray:
        """(n_controls, n_interior) array of L^u W + Gamma(t, x, u)."""
        n = len(self.sten.idx)
        out = np.empty((len(self.controls), n))
        for iu, u in enumerate(self.controls.points):
            c = self.coeffs(t, iu)
            U = np.broadcast_to(u.reshape(1, -1), (n, self.controls.dim))
            out[iu] = _operator(self.spec, W, self.sten, c, self.lat.h, t) + self.spec.running_cost(np.full(n, t), self.sten.x, U)
        return out


def solve(
    spec: ProblemSpec,
    grid: GridSpec,
    eps: float = 0.0,
    controls: ControlSet | None = None,
    keep_argmin: bool = False,
) -> ValueField:
    """Backward explicit monotone iteration on the delta-dilated domain."""
    controls = _finite(controls, spec)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    dom = dilate(spec.domain, grid.delta) if grid.delta else spec.domain
    h = grid.spatial_h
    rate = cfl_rate(spec, dom, h, eps, controls)
    N = grid.time_steps if grid.time_steps is not None else cfl_time_steps(spec, dom, h, eps, controls)
    dt = spec.T / N
    if dt * rate > 1 + 1e-12:
        raise CflViolation(
            f"dt * max(tr(a+eps I)/h^2 + |b_eff|_1/h + 2 Lambda) = {dt * rate:.4g} > 1 "
            f"(need time_steps >= {int(math.ceil(spec.T * rate))})"
        )
    lat = build_lattice(dom, h)
    coords = lat.coords()
    interior = _classify(dom, lat)
    sten = _stencil(lat, interior, coords)
    ext = ~interior
    times = spec.T * np.arange(N + 1) / N
    V = np.empty((N + 1, lat.size))
    V[N] = spec.terminal(np.full(lat.size, spec.T), coords)
    asm = _Assembler(spec, dom, lat, sten, eps, controls)
    arg = np.empty((N, len(sten.idx)), dtype=np.int32) if keep_argmin else None
    for k in range(N - 1, -1, -1):
        W = V[k + 1]
        V[k, ext] = spec.terminal(np.full(int(ext.sum()), times[k]), coords[ext])
        if len(sten.idx):
            H = asm.hamiltonians(W, times[k + 1])
            m = np.argmin(H, axis=0)  # first index wins ties
            V[k, sten.idx] = W[sten.idx] + dt * H[m, np.arange(H.shape[1])]
            if arg is not None:
                arg[k] = m
        if not np.all(np.isfinite(V[k])):
            from .errors import NumericalError

            raise NumericalError(f"non-finite value at level {k}")
    return ValueField(grid=GridSpec(h, N, grid.delta), domain_delta=dom, lattice=lat, times=times, values=V,
                      eps_viscosity=eps, control_subset=controls, spec=spec, interior=interior, argmin=arg)


def field_from_function(spec, grid: GridSpec, fn, eps=0.0, controls=None) -> ValueField:
    """A ValueField whose every level is fn(t, nodes); used to probe the discrete operator."""
    controls = _finite(controls, spec)
    dom = dilate(spec.domain, grid.delta) if grid.delta else spec.domain
    N = grid.time_steps or 1
    lat = build_lattice(dom, grid.spatial_h)
    coords = lat.coords()
    times = spec.T * np.arange(N + 1) / N
    V = np.stack([np.asarray(fn(t, coords), dtype=float) for t in times])
    return ValueField(GridSpec(grid.spatial_h, N, grid.delta), dom, lat, times, V, eps, controls, spec,
                      interior=_classify(dom, lat))


# ---------------------------------------------------------------------------
# queries


def evaluate(fld: ValueField, t: float, x) -> np.ndarray | float:
    """Multilinear in space, linear in time; exact terminal data outside the domain."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1 or (x.ndim == 0)
    X = x.reshape(-1, fld.lattice.dim)
    t = float(np.clip(t, fld.times[0], fld.times[-1]))
    pos = (t - fld.times[0]) / fld.dt
    k0 = int(min(math.floor(pos), fld.n_levels - 2))
    lam = pos - k0
    inside = fld.domain_delta.signed_distance(X) > 0
    out = fld.spec.terminal(np.full(len(X), t), X).astype(float)
    if t >= fld.times[-1]:
        inside[:] = False
    if np.any(inside):
        ci, wi, inbox = fld.lattice.locate(X[inside])
        v0 = _interp(fld.values[k0], ci, wi)
        v1 = _interp(fld.values[k0 + 1], ci, wi)
        out[inside] = (1 - lam) * v0 + lam * v1 if lam else v0
    return float(out[0]) if single else out


def _node_index(fld: ValueField, node) -> int:
    node = np.asarray(node)
    if node.ndim == 0 and np.issubdtype(node.dtype, np.integer):
        i = int(node)
    else:
        pt = node.reshape(-1, fld.lattice.dim)[0].astype(float)
        k = np.rint((pt - fld.lattice.origin) / fld.lattice.h).astype(int)
        if np.any(k < 0) or np.any(k >= np.array(fld.lattice.shape)):
            raise OutsideDomain("point is not a lattice node")
        if np.max(np.abs(fld.lattice.origin + k * fld.lattice.h - pt)) > 1e-9:
            raise OutsideDomain("point is not a lattice node")
        i = int(k @ np.array(fld.lattice.strides))
    if not fld.interior[i]:
        raise OutsideDomain("node is not strictly inside the domain")
    return i


def _single_node_setup(fld, spec, level, node, u):
    if not 0 <= level < fld.n_levels - 1:
        raise OutsideDomain("no equation at the terminal level")
    i = _node_index(fld, node)
    lat = fld.lattice
    coords = lat.coords()
    mask = np.zeros(lat.size, dtype=bool)
    mask[i] = True
    sten = _stencil(lat, mask, coords)
    t = fld.times[level + 1]
    c = _coeffs(spec, fld.domain_delta, lat, sten, t, u, fld.eps_viscosity)
    return i, sten, c, t


def generator_parts(fld: ValueField, spec: ProblemSpec, level: int, node, u) -> dict:
    """Pieces of the discrete generator at one interior node (explicit in time).

    ``nonlocal`` uses the upwind gradient of the scheme; ``nonlocal_central``
    uses the central gradient, which is exact on quadratics.
    """
    i, sten, c, t = _single_node_setup(fld, spec, level, node, u)
    W = fld.values[level + 1]
    h = fld.lattice.h
    w0 = W[i]
    time_part = (W[i] - fld.values[level, i]) / fld.dt
    diff = float(_diffusion(W, sten, c.A, h)[0])
    g_up = _upwind_gradient(W, sten, c.beff, h)[0]
    g_c = _central_gradient(W, sten, h)[0]
    nl, nl_c = 0.0, 0.0
    for j, wj in enumerate(spec.levy.w):
        gam = c.targets[j][0] - sten.x[0]
        wy = float(_jump_values(spec, W, c, j, t)[0])
        nl += wj * (wy - w0 - g_up @ gam)
        nl_c += wj * (wy - w0 - g_c @ gam)
    drift = float(c.b[0] @ g_up)
    return {"time": float(time_part), "diffusion": diff, "drift": drift, "nonlocal": float(nl),
            "nonlocal_central": float(nl_c)}


def apply_generator(fld: ValueField, spec: ProblemSpec, level: int, node, u) -> float:
    """Discrete A^u W at (t_level, node): forward time difference plus the scheme operator."""
    p = generator_parts(fld, spec, level, node, u)
    return p["time"] + p["diffusion"] + p["drift"] + p["nonlocal"]


def nonlocal_term(fld: ValueField, spec: ProblemSpec, level: int, node, u, gradient: str = "central") -> float:
    p = generator_parts(fld, spec, level, node, u)
    return p["nonlocal_central"] if gradient == "central" else p["nonlocal"]


def residual(fld: ValueField, spec: ProblemSpec, level: int, node) -> float:
    """|min_u (A^u W + Gamma)| at an interior node and non-terminal level."""
    best = np.inf
    for u in fld.control_subset.points:
        i, sten, c, t = _single_node_setup(fld, spec, level, node, u)
        v = apply_generator(fld, spec, level, i, u) + float(spec.running_cost(np.array([t]), sten.x, u.reshape(1, -1))[0])
        best = min(best, v)
    return abs(best)


def hamiltonian_table(fld: ValueField, spec: ProblemSpec, level: int) -> np.ndarray:
    """(n_controls, n_interior) values of L^u W + Gamma on the level's data."""
    lat = fld.lattice
    sten = _stencil(lat, fld.interior, lat.coords())
    level = int(np.clip(level, 0, fld.n_levels - 2))
    asm = _Assembler(spec, fld.domain_delta, lat, sten, fld.eps_viscosity, fld.control_subset)
    return asm.hamiltonians(fld.values[level + 1], fld.times[level + 1])


# ---------------------------------------------------------------------------
# cascade


@dataclass
class CascadeRow:
    eps: float
    n_controls: int
    delta: float
    diff_to_finest: float
    successive: float  # sup |W_i - W_{i-1}| (nan for the first row)


@dataclass
class CascadeTable:
    rows: list
    varied: str

    @property
    def passed(self) -> bool:
        f = [r.diff_to_finest for r in self.rows[-3:]]
        s = [r.successive for r in self.rows[1:]][-2:]
        ok_f = all(a >= b - 1e-14 for a, b in zip(f, f[1:]))
        ok_s = all(a >= b - 1e-14 for a, b in zip(s, s[1:]))
        return bool(ok_f and ok_s)

    def as_records(self) -> list[dict]:
        return [dict(eps=r.eps, n_controls=r.n_controls, delta=r.delta, diff_to_finest=r.diff_to_finest,
                     successive=r.successive) for r in self.rows]


def cascade_study(spec: ProblemSpec, grid: GridSpec, schedule: Sequence[tuple]) -> CascadeTable:
    """Solve each (eps, n_controls, delta) member and compare on base-domain nodes at every level."""
    from .policy import finite_subset

    schedule = [(float(e), int(n), float(dl)) for e, n, dl in schedule]
    if not schedule:
        raise ValueError("empty schedule")
    varied = [name for k, name in enumerate(("eps", "n_controls", "delta")) if len({s[k] for s in schedule}) > 1]
    N = grid.time_steps
    if N is None:
        N = max(
            cfl_time_steps(spec, dilate(spec.domain, dl) if dl else spec.domain, grid.spatial_h, e,
                           finite_subset(spec.controls, n))
            for e, n, dl in schedule
        )
    fields = [solve(spec, GridSpec(grid.spatial_h, N, dl), e, finite_subset(spec.controls, n)) for e, n, dl in schedule]
    base = spec.domain
    ref_lat = build_lattice(base, grid.spatial_h)
    pts = ref_lat.coords()
    pts = pts[base.signed_distance(pts) >= -NODE_TOL]

    def on_shared(f: ValueField) -> np.ndarray:
        k = np.rint((pts - f.lattice.origin) / f.lattice.h).astype(int)
        flat = k @ np.array(f.lattice.strides)
        return f.values[:, flat]

    vals = [on_shared(f) for f in fields]
    rows = []
    for i, (e, n, dl) in enumerate(schedule):
        dfin = float(np.max(np.abs(vals[i] - vals[-1])))
        succ = float(np.max(np.abs(vals[i] - vals[i - 1]))) if i else float("nan")
        rows.append(CascadeRow(e, n, dl, dfin, succ))
    return CascadeTable(rows, ",".join(varied) or "none")


# ---------------------------------------------------------------------------
# CSV


def export_field_csv(path, fld: ValueField, levels: str | Sequence[int] = "all") -> None:
    coords = fld.nodes
    d = coords.shape[1]
    ks = range(fld.n_levels) if levels == "all" else list(levels)
    blocks = [np.column_stack([np.full(len(coords), fld.times[k]), coords, fld.values[k]]) for k in ks]
    header = ",".join(["t"] + [f"x_{i + 1}" for i in range(d)] + ["W"])
    np.savetxt(path, np.vstack(blocks), delimiter=",", fmt="%.16e", header=header, comments="")


def import_field_csv(path) -> dict:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {"t": data[:, 0], "x": data[:, 1:-1], "W": data[:, -1]}


def compare_field_tables(a: dict, b: dict, decimals: int = 9) -> float:
    """sup |W_a - W_b| over (t, x) rows present in both tables."""
    def keyed(tab):
        keys = np.round(np.column_stack([tab["t"], tab["x"]]), decimals)
        return {tuple(k): w for k, w in zip(keys, tab["W"])}

    ka, kb = keyed(a), keyed(b)
    shared = ka.keys() & kb.keys()
    if not shared:
        raise ValueError("tables share no (t, x) rows")
    return max(abs(ka[k] - kb[k]) for k in shared)
