"""Jump-adapted Euler simulation of the controlled jump-diffusion with exit times.

The core engine advances one or more *systems* (a problem spec plus a map
applied to the shared control) in lock-step on common noise.  Brownian
increments live on a fixed time grid; compound-Poisson jumps are inserted
at their exact times with a Brownian bridge splitting the grid increment, so
the grid noise is identical whether or not a path jumps.

Every path owns a seed sequence derived from ``(base_seed, path_index)``, so
results do not depend on chunking or on the number of worker threads.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BadWindow, IncompatibleSpecs, NonFiniteState
from .geometry import DomainSpec
from .levy import sample_jump_arrays
from .problem import ProblemSpec

BDG = 4.0  # Doob's L2 maximal constant, used for every BDG-type constant
CHUNK = 2048
_TOL = 1e-12


# ---------------------------------------------------------------------------
# records


@dataclass
class PathRecord:
    times: np.ndarray  # (P,)
    states: np.ndarray  # (P, d)
    controls_applied: np.ndarray  # (P, p) control in force on the interval ending at each time
    is_jump: np.ndarray  # (P,) bool, True for post-jump entries
    jump_events: list  # [(time, z)]
    exit_time_tau: float
    exit_state: np.ndarray
    running_cost: float


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_paths: int
    seed: int

    def as_dict(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_paths": self.n_paths, "seed": self.seed}


def mc_estimate(values: np.ndarray, seed: int) -> McEstimate:
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n < 2 or np.all(values == values[0]):
        # identical samples: report the common value and no spread, free of rounding in the mean
        return McEstimate(float(values[0]) if n else float("nan"), 0.0, int(n), int(seed))
    se = float(np.std(values, ddof=1) / math.sqrt(n))
    return McEstimate(float(np.mean(values)), se, int(n), int(seed))


@dataclass(frozen=True)
class Stopper:
    """Stopping rule for one system: first exit of ``domain`` (if any) or ``t_stop``."""

    system: int = 0
    domain: DomainSpec | None = None
    t_stop: float | None = None


@dataclass
class BatchResult:
    tau: np.ndarray  # (S, n) per stopper
    x_tau: np.ndarray  # (S, n, d)
    cost: np.ndarray  # (S, n) left-endpoint running cost up to the stop
    sup_sq: np.ndarray  # (Y, n) sup_s |X(s)|^2 per system
    window_sup: np.ndarray  # (W, Y, n) sup over window of |X(s) - X(l1)|^2
    dev_sup: np.ndarray  # (Y, n) sup_s |X_i(s) - X_0(s)|^2
    dev_at_stop: np.ndarray  # (S, Y, n) running dev sup at the moment the stopper fired
    cost_gap: np.ndarray  # (Y, n) int |Gamma_i(X_i) - Gamma_0(X_0)| ds over [t, T]
    seed: int = 0


# ---------------------------------------------------------------------------
# controls


class _ControlDriver:
    """Turns a constant, a Markov policy or a feedback callable into step controls."""

    def __init__(self, control, p: int, knots_in_grid: np.ndarray | None):
        self.control = control
        self.p = p
        self.markov = hasattr(control, "time_knots") and hasattr(control, "lookup")
        self.callable = (not self.markov) and callable(control)
        if not (self.markov or self.callable):
            self.const = np.asarray(control, dtype=float).reshape(1, p)
        self.is_knot = knots_in_grid
        self.x_knot = None

    def start(self, X):
        if self.markov:
            self.x_knot = X.copy()

    def step(self, k: int, s: float, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        if self.markov:
            if self.is_knot[k]:
                self.x_knot = X.copy()
            knots = self.control.time_knots
            j = int(np.clip(np.searchsorted(knots, s + _TOL, side="right") - 1, 0, len(knots) - 2))
            return np.asarray(self.control.lookup(j, self.x_knot), dtype=float).reshape(n, self.p)
        if self.callable:
            u = np.asarray(self.control(s, X), dtype=float)
            return np.broadcast_to(u.reshape(-1, self.p), (n, self.p))
        return np.broadcast_to(self.const, (n, self.p))


def _policy_knots(control) -> np.ndarray:
    if hasattr(control, "time_knots"):
        return np.asarray(control.time_knots, dtype=float)
    return np.zeros(0)


# ---------------------------------------------------------------------------
# grid and noise


def time_grid(t: float, T: float, dt: float, extra: Sequence[float] = ()) -> np.ndarray:
    """Uniform grid of step <= dt on [t, T] merged with the extra times in (t, T)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not t < T:
        raise ValueError("need t < T")
    n = max(1, int(math.ceil((T - t) / dt - 1e-9)))
    base = t + (T - t) * np.arange(n + 1) / n
    extra = np.asarray([e for e in extra if t + _TOL < e < T - _TOL], dtype=float)
    g = np.unique(np.concatenate([base, extra]))
    keep = np.concatenate([[True], np.diff(g) > 1e-12])
    g = g[keep]
    g[0], g[-1] = t, T
    return g


def path_seed_sequence(base_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(index),))


def _child(ss: np.random.SeedSequence, c: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (c,))))


@dataclass
class _Noise:
    dW: np.ndarray  # (n, K, m1)
    dE: np.ndarray | None  # (n, K, d) extra Brownian increments
    # flattened jump table sorted by (step, path, time)
    j_step: np.ndarray
    j_path: np.ndarray
    j_time: np.ndarray
    j_mark: np.ndarray
    j_xi: np.ndarray  # (nj, m1 + d) bridge normals
    j_ord: np.ndarray  # ordinal of the jump within its (step, path) group


def _draw_noise(seqs, grid, m1, d, levy, eps) -> _Noise:
    n, K = len(seqs), len(grid) - 1
    sq = np.sqrt(np.diff(grid))
    dW = np.empty((n, K, m1))
    dE = np.empty((n, K, d)) if eps > 0 else None
    steps, paths, times, marks, xis = [], [], [], [], []
    t0, T = grid[0], grid[-1]
    for i, ss in enumerate(seqs):
        dW[i] = _child(ss, 0).standard_normal((K, m1)) * sq[:, None]
        if eps > 0:
            dE[i] = _child(ss, 2).standard_normal((K, d)) * sq[:, None]
        if levy.n_atoms:
            rj = _child(ss, 1)
            tt, mk = sample_jump_arrays(levy, t0, T, rj)
            if len(tt):
                xis.append(rj.standard_normal((len(tt), m1 + d)))
                times.append(tt)
                marks.append(mk)
                paths.append(np.full(len(tt), i))
                steps.append(np.clip(np.searchsorted(grid, tt, side="left") - 1, 0, K - 1))
    if times:
        j_step, j_path = np.concatenate(steps), np.concatenate(paths)
        j_time, j_mark, j_xi = np.concatenate(times), np.concatenate(marks), np.vstack(xis)
        order = np.lexsort((j_time, j_path, j_step))
        j_step, j_path, j_time, j_mark, j_xi = (a[order] for a in (j_step, j_path, j_time, j_mark, j_xi))
        key = j_step * n + j_path
        first = np.concatenate([[True], key[1:] != key[:-1]])
        start = np.maximum.accumulate(np.where(first, np.arange(len(key)), 0))
        j_ord = np.arange(len(key)) - start
    else:
        j_step = j_path = j_mark = j_ord = np.zeros(0, dtype=np.intp)
        j_time = np.zeros(0)
        j_xi = np.zeros((0, m1 + d))
    return _Noise(dW, dE, j_step, j_path, j_time, j_mark, j_xi, j_ord)


# ---------------------------------------------------------------------------
# engine


@dataclass
class _System:
    spec: ProblemSpec
    control_map: Callable | None = None  # maps the shared control to this system's control


def _check_compatible(specs: Sequence[ProblemSpec]):
    a = specs[0]
    for b in specs[1:]:
        if (a.d, a.m1, a.m2) != (b.d, b.m1, b.m2) or a.controls.dim != b.controls.dim:
            raise IncompatibleSpecs("specs differ in dimensions")
        if a.levy.n_atoms != b.levy.n_atoms or (
            a.levy.n_atoms and not (np.array_equal(a.levy.z, b.levy.z) and np.array_equal(a.levy.w, b.levy.w))
        ):
            raise IncompatibleSpecs("common noise needs identical Levy atoms")
        if abs(a.T - b.T) > 0:
            raise IncompatibleSpecs("specs differ in horizon")


def _run_chunk(systems, control, grid, x0, eps, seqs, stoppers, windows, record=False):
    spec0 = systems[0].spec
    d, m1, p, T = spec0.d, spec0.m1, spec0.controls.dim, spec0.T
    n, K, Y, S, Wn = len(seqs), len(grid) - 1, len(systems), len(stoppers), len(windows)
    noise = _draw_noise(seqs, grid, m1, d, spec0.levy, eps)
    seps = math.sqrt(eps)

    X = [np.tile(np.asarray(x0, dtype=float), (n, 1)) for _ in range(Y)]
    knots = _policy_knots(control)
    is_knot = np.array([np.any(np.abs(knots - g) <= 1e-12) for g in grid[:-1]]) if len(knots) else None
    driver = _ControlDriver(control, p, is_knot)
    driver.start(X[0])

    alive = np.ones((S, n), dtype=bool)
    tau = np.full((S, n), T)
    xtau = np.zeros((S, n, d))
    cost = np.zeros((S, n))
    sup_sq = np.zeros((Y, n))
    wsup = np.zeros((Wn, Y, n))
    anchors = [[None] * Y for _ in range(Wn)]
    dev = np.zeros((Y, n))
    dev_stop = np.zeros((S, Y, n))
    gap = np.zeros((Y, n))
    rec = [] if record else None

    def observe(idx, r, grid_k):
        """Exit checks and running sups at an evaluation point for paths idx."""
        for y in range(Y):
            xs = X[y][idx]
            sup_sq[y, idx] = np.maximum(sup_sq[y, idx], np.sum(xs**2, axis=1))
            if y:
                dev[y, idx] = np.maximum(dev[y, idx], np.sum((xs - X[0][idx]) ** 2, axis=1))
            for w, (l1, l2) in enumerate(windows):
                if grid_k is not None and abs(grid[grid_k] - l1) <= _TOL:
                    anchors[w][y] = X[y].copy()
                if anchors[w][y] is None:
                    continue
                rr = r if np.ndim(r) else np.full(len(idx), r)
                inwin = (rr > l1 - _TOL) & (rr <= l2 + _TOL)
                if np.any(inwin):
                    sel = idx[inwin]
                    inc = np.sum((X[y][sel] - anchors[w][y][sel]) ** 2, axis=1)
                    wsup[w, y, sel] = np.maximum(wsup[w, y, sel], inc)
        rr = r if np.ndim(r) else np.full(len(idx), float(r))
        for s, st in enumerate(stoppers):
            live = alive[s, idx]
            if not np.any(live):
                continue
            xs = X[st.system][idx]
            fire = rr >= T - _TOL
            if st.domain is not None:
                fire = fire | (st.domain.signed_distance(xs) <= 0)
            if st.t_stop is not None and grid_k is not None:
                fire = fire | (rr >= st.t_stop - _TOL)
            fire &= live
            if np.any(fire):
                sel = idx[fire]
                tau[s, sel] = np.minimum(rr[fire], T)
                xtau[s, sel] = xs[fire]
                alive[s, sel] = False
                dev_stop[s, :, sel] = dev[:, sel].T

    def accrue(idx, t_left, h, U_sys):
        if np.all(h <= 0):
            return
        gvals = []
        for y in range(Y):
            g = systems[y].spec.running_cost(t_left, X[y][idx], U_sys[y][idx])
            gvals.append(g)
        for y in range(1, Y):
            gap[y, idx] += np.abs(gvals[y] - gvals[0]) * h
        for s, st in enumerate(stoppers):
            live = alive[s, idx]
            if np.any(live):
                cost[s, idx[live]] += gvals[st.system][live] * h[live]

    def advance(idx, t_left, h, inc, inc_e, U_sys):
        for y in range(Y):
            sp = systems[y].spec
            xs, us = X[y][idx], U_sys[y][idx]
            b = sp.drift(t_left, xs, us) - sp.compensator(t_left, xs, us)
            new = xs + b * h[:, None] + np.einsum("nij,nj->ni", sp.vol(t_left, xs, us), inc)
            if inc_e is not None:
                new = new + seps * inc_e
            if not np.all(np.isfinite(new)):
                raise NonFiniteState(f"non-finite state at t={float(np.max(t_left)):.6g}")
            X[y][idx] = new

    all_idx = np.arange(n)
    observe(all_idx, float(grid[0]), 0)
    if record:
        rec.append((grid[0], X[0][0].copy(), np.full(p, np.nan), False))

    # jump table boundaries per step
    js = noise.j_step
    bounds = np.searchsorted(js, np.arange(K + 1), side="left")

    for k in range(K):
        s0, s1 = grid[k], grid[k + 1]
        U = driver.step(k, s0, X[0])
        U_sys = [U if sy.control_map is None else np.asarray(sy.control_map(U), dtype=float) for sy in systems]
        cur = np.full(n, s0)
        remW = noise.dW[:, k].copy()
        remE = noise.dE[:, k].copy() if noise.dE is not None else None
        lo, hi = bounds[k], bounds[k + 1]
        if hi > lo:
            ords = noise.j_ord[lo:hi]
            for q in range(int(ords.max()) + 1):
                sel = lo + np.nonzero(ords == q)[0]
                idx = noise.j_path[sel]
                r = noise.j_time[sel]
                h = r - cur[idx]
                H = s1 - cur[idx]
                frac = np.where(H > 0, h / np.where(H > 0, H, 1.0), 1.0)
                sdb = np.sqrt(np.maximum(h * (s1 - r), 0.0) / np.where(H > 0, H, 1.0))
                xi = noise.j_xi[sel]
                inc = frac[:, None] * remW[idx] + sdb[:, None] * xi[:, :m1]
                inc_e = None
                if remE is not None:
                    inc_e = frac[:, None] * remE[idx] + sdb[:, None] * xi[:, m1:]
                    remE[idx] -= inc_e
                remW[idx] -= inc
                accrue(idx, cur[idx], h, U_sys)
                advance(idx, cur[idx], h, inc, inc_e, U_sys)
                observe(idx, r, None)
                mark_idx = noise.j_mark[sel]
                for y in range(Y):
                    sp = systems[y].spec
                    xs, us = X[y][idx], U_sys[y][idx]
                    jumped = np.empty_like(xs)
                    for j in np.unique(mark_idx):
                        mj = mark_idx == j
                        jumped[mj] = sp.jump(r[mj], xs[mj], us[mj], sp.levy.z[j])
                    new = xs + jumped
                    if not np.all(np.isfinite(new)):
                        raise NonFiniteState("non-finite state after a jump")
                    X[y][idx] = new
                if record:
                    rec.append((float(r[0]), None, U_sys[0][0].copy(), "pre", X[0][0].copy()))
                observe(idx, r, None)
                cur[idx] = r
        h = s1 - cur
        accrue(all_idx, cur, h, U_sys)
        advance(all_idx, cur, h, remW, remE, U_sys)
        observe(all_idx, float(s1), k + 1)
        if record:
            rec.append((float(s1), X[0][0].copy(), U_sys[0][0].copy(), False))

    out = dict(tau=tau, x_tau=xtau, cost=cost, sup_sq=sup_sq, window_sup=wsup, dev_sup=dev,
               dev_at_stop=dev_stop, cost_gap=gap)
    if record:
        out["record"] = rec
        out["jumps"] = [(float(tt), spec0.levy.z[m].copy()) for tt, m in zip(noise.j_time, noise.j_mark)]
    return out


def run_batch(
    systems: Sequence[_System] | Sequence[ProblemSpec],
    control,
    t: float,
    x,
    n_paths: int,
    dt: float,
    base_seed: int,
    stoppers: Sequence[Stopper] = (),
    windows: Sequence[tuple[float, float]] = (),
    extra_times: Sequence[float] = (),
    extra_bm_eps: float = 0.0,
    workers: int | None = None,
) -> BatchResult:
    """Simulate n_paths common-noise path tuples and reduce them to per-path scalars."""
    systems = [s if isinstance(s, _System) else _System(s) for s in systems]
    _check_compatible([s.spec for s in systems])
    spec0 = systems[0].spec
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (spec0.d,):
        raise ValueError(f"start state must have shape ({spec0.d},)")
    if not 0 <= t < spec0.T:
        raise ValueError("need 0 <= t < T")
    if extra_bm_eps < 0:
        raise ValueError("extra_bm_eps must be nonnegative")
    stoppers = list(stoppers) or [Stopper(0, spec0.domain, None)]
    times = list(extra_times) + list(_policy_knots(control))
    times += [st.t_stop for st in stoppers if st.t_stop is not None]
    times += [v for w in windows for v in w]
    grid = time_grid(t, spec0.T, dt, times)

    chunks = [range(a, min(a + CHUNK, n_paths)) for a in range(0, n_paths, CHUNK)]

    def job(rg):
        seqs = [path_seed_sequence(base_seed, i) for i in rg]
        return _run_chunk(systems, control, grid, x, extra_bm_eps, seqs, stoppers, windows)

    if workers is not None and workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, chunks))
    else:
        parts = [job(rg) for rg in chunks]
    axis = {"tau": 1, "x_tau": 1, "cost": 1, "sup_sq": 1, "window_sup": 2, "dev_sup": 1, "dev_at_stop": 2, "cost_gap": 1}
    merged = {k: np.concatenate([p[k] for p in parts], axis=a) for k, a in axis.items()}
    return BatchResult(**merged, seed=int(base_seed))


# ---------------------------------------------------------------------------
# public operations


def _as_seed_sequence(stream) -> np.random.SeedSequence:
    if isinstance(stream, np.random.SeedSequence):
        return stream
    return np.random.SeedSequence(0 if stream is None else int(stream))


def simulate(
    spec: ProblemSpec, control, t: float, x, dt: float, extra_bm_eps: float = 0.0, stream=None
) -> PathRecord:
    """One controlled path, recorded on the step grid and at jump times until the first exit."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (spec.d,):
        raise ValueError(f"start state must have shape ({spec.d},)")
    grid = time_grid(t, spec.T, dt, _policy_knots(control))
    out = _run_chunk(
        [_System(spec)], control, grid, x, extra_bm_eps, [_as_seed_sequence(stream)],
        [Stopper(0, spec.domain, None)], (), record=True,
    )
    tau = float(out["tau"][0, 0])
    times, states, controls, jumps = [], [], [], []
    for entry in out["record"]:
        if entry[3] == "pre":
            r, _, u, _, xpost = entry
            if r > tau + _TOL:
                continue
            times.append(r)
            states.append(xpost)
            controls.append(u)
            jumps.append(True)
        else:
            r, xs, u, _ = entry
            if r > tau + _TOL:
                break
            times.append(r)
            states.append(xs)
            controls.append(u)
            jumps.append(False)
    # a jump and a grid point can share a time; keep times strictly increasing
    T_, S_, U_, J_ = [], [], [], []
    for r, s, u, j in zip(times, states, controls, jumps):
        if T_ and r <= T_[-1]:
            S_[-1], U_[-1], J_[-1] = s, u, J_[-1] or j
            continue
        T_.append(r), S_.append(s), U_.append(u), J_.append(j)
    return PathRecord(
        times=np.array(T_),
        states=np.array(S_).reshape(len(S_), spec.d),
        controls_applied=np.array(U_).reshape(len(U_), spec.controls.dim),
        is_jump=np.array(J_, dtype=bool),
        jump_events=[e for e in out["jumps"] if e[0] <= tau + _TOL],
        exit_time_tau=tau,
        exit_state=out["x_tau"][0, 0].copy(),
        running_cost=float(out["cost"][0, 0]),
    )


def estimate_cost(
    spec: ProblemSpec,
    policy,
    t: float,
    x,
    n_paths: int,
    dt: float,
    base_seed: int,
    extra_bm_eps: float = 0.0,
    workers: int | None = None,
    domain: DomainSpec | None = None,
) -> McEstimate:
    """Monte Carlo estimate of the cost functional (running cost to exit plus terminal data)."""
    if n_paths < 2:
        raise ValueError("n_paths must be >= 2")
    dom = spec.domain if domain is None else domain
    res = run_batch([spec], policy, t, x, n_paths, dt, base_seed, [Stopper(0, dom, None)],
                    extra_bm_eps=extra_bm_eps, workers=workers)
    vals = res.cost[0] + spec.terminal(res.tau[0], res.x_tau[0])
    return mc_estimate(vals, base_seed)


# ---------------------------------------------------------------------------
# moment constants


def k2_constant(C: float, T: float, M: float, lam: float = BDG) -> float:
    return 3 * C**2 * (T + lam + lam * M)


def k3_constant(C: float, T: float, M: float, lam: float = BDG) -> float:
    with np.errstate(over="ignore"):
        return float(6 * T * (T + lam) * np.exp(6 * C**2 * (1 + M) * (T + lam) * T))


def k4_constant(C: float, T: float, M: float, lam: float = BDG) -> float:
    # Cauchy-Schwarz on the pathwise estimate plus sqrt(a+b+c) <= sqrt(a)+sqrt(b)+sqrt(c)
    return math.sqrt(k3_constant(C, T, M, lam))


def second_moment_bound(C: float, T: float, M: float, x, lam: float = BDG) -> float:
    """Explicit bound on E sup |X|^2 from the start point x."""
    x2 = float(np.sum(np.asarray(x, dtype=float) ** 2))
    with np.errstate(over="ignore"):
        return float(3 * (x2 + C**2 * T * (T + lam + lam * M)) * np.exp(3 * C**2 * (2 + M) * (T + lam) * T))


@dataclass
class BoundCheck:
    label: str
    empirical: float
    std_error: float
    bound: float

    @property
    def passed(self) -> bool:
        return bool(self.empirical <= self.bound + 4 * self.std_error)

    def as_dict(self) -> dict:
        return {"label": self.label, "empirical": self.empirical, "std_error": self.std_error,
                "bound": self.bound, "pass": self.passed}


def _mean_se(v) -> tuple[float, float]:
    v = np.asarray(v, dtype=float)
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


def moment_bound_check(spec, policy, t, x, n_paths, dt, seed, workers=None) -> BoundCheck:
    """E sup_{[t,T]} |X|^2 against the explicit Gronwall bound."""
    res = run_batch([spec], policy, t, x, n_paths, dt, seed, [Stopper(0, None, None)], workers=workers)
    m, se = _mean_se(res.sup_sq[0])
    return BoundCheck("sup second moment", m, se, second_moment_bound(spec.C, spec.T - t, spec.levy.second_moment, x))


def increment_moment_probe(spec, policy, t, x, windows, n_paths, dt, seed, workers=None) -> list[BoundCheck]:
    """Per window, E sup |X(s) - X(l1)|^2 against K2 (l2 - l1)."""
    windows = [(float(a), float(b)) for a, b in windows]
    for a, b in windows:
        if not (t - _TOL <= a < b <= spec.T + _TOL):
            raise BadWindow(f"window ({a}, {b}) not inside [{t}, {spec.T}]")
    res = run_batch([spec], policy, t, x, n_paths, dt, seed, [Stopper(0, None, None)], windows=windows, workers=workers)
    k2 = k2_constant(spec.C, spec.T, spec.levy.second_moment)
    out = []
    for w, (a, b) in enumerate(windows):
        m, se = _mean_se(res.window_sup[w, 0])
        out.append(BoundCheck(f"window [{a:g}, {b:g}]", m, se, k2 * (b - a)))
    return out


def sup_norm_differences(specA: ProblemSpec, specB: ProblemSpec, n_samples: int = 10_000, seed: int = 0) -> dict:
    """Sampled sup-norms of the coefficient differences (and of the running-cost gap)."""
    _check_compatible([specA, specB])
    rng = np.random.default_rng(seed)
    lo, hi = specA.domain.bounding_box
    span = hi - lo
    X = (lo - 0.25 * span) + 1.5 * span * rng.random((n_samples, specA.d))
    t = specA.T * rng.random(n_samples)
    U = specA.controls.sample(n_samples, rng)
    db = float(np.max(np.linalg.norm(specA.drift(t, X, U) - specB.drift(t, X, U), axis=1)))
    ds = float(np.max(np.linalg.norm(specA.vol(t, X, U) - specB.vol(t, X, U), axis=(1, 2))))
    dg = 0.0
    for z, w in zip(specA.levy.z, specA.levy.w):
        diff = np.linalg.norm(specA.jump(t, X, U, z) - specB.jump(t, X, U, z), axis=1)
        dg += w * float(np.max(diff)) ** 2
    dG = float(np.max(np.abs(specA.running_cost(t, X, U) - specB.running_cost(t, X, U))))
    return {"drift": db, "vol": ds, "jump_sq": dg, "running_cost": dG}


def pathwise_compare(specA, specB, policy, t, x, n_paths, dt, seed, workers=None) -> BoundCheck:
    """E sup |X_A - X_B|^2 under common noise and a common control, against the K3 bound."""
    norms = sup_norm_differences(specA, specB, seed=seed)
    res = run_batch([specA, specB], policy, t, x, n_paths, dt, seed, [Stopper(0, None, None)], workers=workers)
    m, se = _mean_se(res.dev_sup[1])
    k3 = k3_constant(max(specA.C, specB.C), specA.T, specA.levy.second_moment)
    bound = k3 * (norms["drift"] ** 2 + norms["vol"] ** 2 + norms["jump_sq"])
    return BoundCheck("sup pathwise gap", m, se, bound)


def cost_compare(specA, specB, policy, t, x, n_paths, dt, seed, workers=None) -> BoundCheck:
    """E int_t^T |Gamma_A(X_A) - Gamma_B(X_B)| ds against the running-cost comparison bound."""
    norms = sup_norm_differences(specA, specB, seed=seed)
    res = run_batch([specA, specB], policy, t, x, n_paths, dt, seed, [Stopper(0, None, None)], workers=workers)
    m, se = _mean_se(res.cost_gap[1])
    if norms["drift"] == 0 and norms["vol"] == 0 and norms["jump_sq"] == 0:
        pert = 0.0
    else:
        k4 = k4_constant(max(specA.C, specB.C), specA.T, specA.levy.second_moment)
        pert = k4 * specB.cost_lipschitz * (norms["drift"] + norms["vol"] + math.sqrt(norms["jump_sq"]))
    bound = (specA.T - t) * (norms["running_cost"] + pert)
    return BoundCheck("running cost gap", m, se, bound)


# ---------------------------------------------------------------------------
# output


def write_path_csv(path, record: PathRecord) -> None:
    d = record.states.shape[1]
    p = record.controls_applied.shape[1]
    header = ",".join(["time"] + [f"x_{i + 1}" for i in range(d)] + [f"u_{i + 1}" for i in range(p)] + ["is_jump"])
    rows = np.column_stack([record.times, record.states, record.controls_applied, record.is_jump.astype(float)])
    with open(path, "w", newline="") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.16e}" for v in row[:-1]) + f",{int(row[-1])}\n")
