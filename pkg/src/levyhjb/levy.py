"""Compound-Poisson Levy measures: atoms, jump sampling and tail integrals.

A Levy measure is stored as a finite list of atoms ``(z_j, w_j)`` with
``w_j`` the jump rate per unit time. Everything downstream (simulation,
the nonlocal term of the generator, the barrier tail function) is exact
for such measures.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonPositiveRate, UnboundedRho, ZeroAtom

RhoFn = Callable[[np.ndarray], float]


def euclidean_rho(z: np.ndarray) -> float:
    return float(np.linalg.norm(z))


@dataclass(frozen=True, eq=False)
class LevyModel:
    jump_dim: int
    z: np.ndarray  # (J, m2) atom locations
    w: np.ndarray  # (J,) rates
    rho: RhoFn = field(default=euclidean_rho, compare=False)
    rho_z: np.ndarray = field(default=None, compare=False)  # (J,) cached rho(z_j)

    @property
    def n_atoms(self) -> int:
        return int(self.w.shape[0])

    @property
    def total_rate(self) -> float:
        return float(np.sum(self.w))

    @property
    def second_moment(self) -> float:
        """M = sum_j w_j rho(z_j)^2."""
        return float(np.sum(self.w * self.rho_z**2))

    @property
    def small_jump_mass(self) -> float:
        """sum_j w_j (|z_j|^2 ^ 1); finite for any atom list."""
        norms = np.linalg.norm(self.z, axis=1) if self.n_atoms else np.zeros(0)
        return float(np.sum(self.w * np.minimum(norms**2, 1.0)))

    def rho_lower_bound(self, r: float) -> float:
        """min of rho over atoms with |z| > r (inf if there are none)."""
        if not self.n_atoms:
            return np.inf
        norms = np.linalg.norm(self.z, axis=1)
        sel = norms > r
        return float(self.rho_z[sel].min()) if sel.any() else np.inf


def build_discrete_measure(
    atoms: Sequence[tuple], rho: RhoFn | None = None, jump_dim: int | None = None
) -> LevyModel:
    """Validate an atom list ``[(z, w), ...]`` and cache rho(z_j).

    ``rho`` defaults to the Euclidean norm. ``jump_dim`` is only needed for
    an empty atom list (it is inferred from the atoms otherwise).
    """
    rho = rho or euclidean_rho
    zs, ws = [], []
    for z, w in atoms:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        w = float(w)
        if not w > 0:
            raise NonPositiveRate(f"atom rate must be positive, got {w}")
        if not np.any(z != 0):
            raise ZeroAtom("Levy measure atoms must be nonzero")
        zs.append(z)
        ws.append(w)
    if zs:
        dims = {z.shape[0] for z in zs}
        if len(dims) != 1:
            raise ValueError(f"atoms have inconsistent dimensions {sorted(dims)}")
        m2 = dims.pop()
        if jump_dim is not None and jump_dim != m2:
            raise ValueError(f"jump_dim={jump_dim} but atoms have dimension {m2}")
    else:
        m2 = jump_dim or 1
    z_arr = np.array(zs, dtype=float).reshape(len(zs), m2)
    w_arr = np.array(ws, dtype=float)
    rho_z = np.array([float(rho(z)) for z in z_arr])
    if not np.all(np.isfinite(rho_z)):
        raise UnboundedRho("rho must be finite at every atom")
    if np.any(rho_z < 0):
        raise ValueError("rho must be nonnegative")
    return LevyModel(jump_dim=m2, z=z_arr, w=w_arr, rho=rho, rho_z=rho_z)


def empty_measure(jump_dim: int = 1) -> LevyModel:
    return build_discrete_measure([], jump_dim=jump_dim)


def sample_jump_arrays(
    model: LevyModel, t0: float, t1: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Jump times (sorted) and atom indices on (t0, t1].

    One Poisson draw for the count, then uniform order statistics for the
    times and a categorical draw for the marks.
    """
    if not t0 < t1:
        raise ValueError("need t0 < t1")
    lam = model.total_rate
    if lam == 0.0:
        return np.zeros(0), np.zeros(0, dtype=np.intp)
    n = int(rng.poisson(lam * (t1 - t0)))
    if n == 0:
        return np.zeros(0), np.zeros(0, dtype=np.intp)
    # (t0, t1]: reflect the half-open uniform [0, 1)
    times = t1 - (t1 - t0) * rng.random(n)
    times.sort()
    marks = rng.choice(model.n_atoms, size=n, p=model.w / lam)
    return times, np.asarray(marks, dtype=np.intp)


def sample_jumps(
    model: LevyModel, t0: float, t1: float, stream: np.random.Generator
) -> list[tuple[float, np.ndarray]]:
    times, idx = sample_jump_arrays(model, t0, t1, stream)
    return [(float(s), model.z[k].copy()) for s, k in zip(times, idx)]


def compensator_drift(model: LevyModel, gamma_at: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """sum_j w_j gamma_at(z_j), the per-unit-time mean of the jump integral."""
    if not model.n_atoms:
        probe = np.atleast_1d(np.asarray(gamma_at(np.ones(model.jump_dim)), dtype=float))
        return np.zeros_like(probe)
    vals = [model.w[j] * np.atleast_1d(np.asarray(gamma_at(model.z[j]), dtype=float)) for j in range(model.n_atoms)]
    return np.sum(vals, axis=0)


def beta_tail(model: LevyModel, t: float, C: float) -> float:
    """beta(t) = sum over atoms with C rho(z_j) >= t of w_j rho(z_j)."""
    if t < 0 or C <= 0:
        raise ValueError("need t >= 0 and C > 0")
    if not model.n_atoms:
        return 0.0
    sel = C * model.rho_z >= t
    return float(np.sum(model.w[sel] * model.rho_z[sel]))


def beta_integral(model: LevyModel, t: float, C: float) -> float:
    """int_0^t beta(s) ds, exact for the step function beta."""
    if not model.n_atoms:
        return 0.0
    # atom j contributes w_j rho_j on [0, C rho_j]
    return float(np.sum(model.w * model.rho_z * np.minimum(t, C * model.rho_z)))


def split_small_jumps(model: LevyModel, r0: float) -> tuple[LevyModel, LevyModel]:
    """Split atoms into (|z| >= r0, |z| < r0) parts."""
    norms = np.linalg.norm(model.z, axis=1) if model.n_atoms else np.zeros(0)
    big = norms >= r0

    def sub(mask):
        return LevyModel(model.jump_dim, model.z[mask], model.w[mask], model.rho, model.rho_z[mask])

    return sub(big), sub(~big)


def small_jump_covariance(small: LevyModel, gamma_at: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """sum_j w_j gamma gamma^T: the Gaussian variance that replaces dropped small jumps."""
    g = [np.atleast_1d(np.asarray(gamma_at(small.z[j]), dtype=float)) for j in range(small.n_atoms)]
    if not g:
        return np.zeros((0, 0))
    return sum(small.w[j] * np.outer(g[j], g[j]) for j in range(small.n_atoms))
