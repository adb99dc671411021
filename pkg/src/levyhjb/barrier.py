"""Boundary-strip barrier psi = Theta(d(x)) and the composite inf-barrier built on exterior-ball annuli.

Theta(t) = int_0^t 2 exp(-L s - L B(s)) ds - t with B(s) = int_0^s beta.  For an
atom measure beta is a step function, so B is piecewise linear and Theta is
integrated exactly interval by interval.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import EmptyAnchors, NoStrictMonotonicity
from .geometry import DomainSpec, make_domain, proximal_normal
from .levy import LevyModel, beta_integral, beta_tail
from .problem import ProblemSpec

TABLE_POINTS = 4096
HEADROOM = 1.1


# ---------------------------------------------------------------------------
# Theta


class ThetaExact:
    """Closed-form Theta, Theta', Theta'' for a step-function beta."""

    def __init__(self, levy: LevyModel, C: float, L: float):
        self.levy, self.C, self.L = levy, float(C), float(L)
        cuts = np.unique(C * levy.rho_z) if levy.n_atoms else np.zeros(0)
        self.breaks = np.concatenate([[0.0], cuts[cuts > 0]])
        # beta on (breaks[i], breaks[i+1]) and beyond the last break
        self.beta_on = np.array([self._beta_open(i) for i in range(len(self.breaks))])
        expo = np.array([-self.L * (b + beta_integral(levy, b, C)) for b in self.breaks])
        self.expo = expo
        acc = [0.0]
        for i in range(len(self.breaks) - 1):
            acc.append(acc[-1] + self._piece(i, self.breaks[i + 1] - self.breaks[i]))
        self.acc = np.array(acc)

    def _beta_open(self, i: int) -> float:
        if i + 1 < len(self.breaks):
            return beta_tail(self.levy, 0.5 * (self.breaks[i] + self.breaks[i + 1]), self.C)
        return 0.0

    def _piece(self, i, span):
        slope = -self.L * (1.0 + self.beta_on[i])
        return 2.0 * math.exp(self.expo[i]) * np.expm1(slope * span) / slope

    def B(self, t):
        t = np.asarray(t, dtype=float)
        if not self.levy.n_atoms:
            return np.zeros_like(t)
        return np.sum(self.levy.w * self.levy.rho_z * np.minimum(t[..., None], self.C * self.levy.rho_z), axis=-1)

    def theta(self, t):
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(self.breaks, t, side="right") - 1, 0, len(self.breaks) - 1)
        slope = -self.L * (1.0 + self.beta_on[i])
        span = t - self.breaks[i]
        part = 2.0 * np.exp(self.expo[i]) * np.expm1(slope * span) / slope
        return self.acc[i] + part - t

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        return 2.0 * np.exp(-self.L * (t + self.B(t))) - 1.0

    def beta(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if not self.levy.n_atoms:
            return np.zeros_like(t)
        sel = self.C * self.levy.rho_z[None, :] >= t[:, None]
        return np.sum(np.where(sel, self.levy.w * self.levy.rho_z, 0.0), axis=1)

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        return (-self.L * (1.0 + self.beta(t.ravel()).reshape(t.shape)) * (self.d1(t) + 1.0))

    def t0(self) -> float:
        """Largest t with Theta'(t) >= 1/2, i.e. L (t + B(t)) = ln(4/3)."""
        target = math.log(4.0 / 3.0)
        g = lambda s: self.L * (s + float(self.B(s))) - target
        hi = target / self.L
        return float(brentq(g, 0.0, hi, xtol=1e-15, rtol=1e-14)) if g(hi) > 0 else hi


# ---------------------------------------------------------------------------
# single barrier


@dataclass(eq=False)
class BarrierFunction:
    domain: DomainSpec
    L: float
    kappa: float
    delta0: float
    delta1: float
    delta2: float
    t0: float
    lambda_O: float
    K_est: float
    theta: ThetaExact = field(repr=False)
    theta_grid: np.ndarray = field(repr=False)
    theta_table: PchipInterpolator = field(repr=False)

    def theta_value(self, t):
        t = np.asarray(t, dtype=float)
        return self.theta_table(np.clip(t, 0.0, self.delta2))

    def report(self) -> dict:
        return {"kappa": self.kappa, "L": self.L, "K_est": self.K_est, "delta0": self.delta0,
                "delta2": self.delta2, "t0": self.t0, "lambda_O": self.lambda_O}


def _strip_samples(spec, dom, width, n, rng):
    x = dom.sample_strip(n, width, rng)
    t = spec.T * rng.random(n)
    return t, x


def estimate_K(spec: ProblemSpec, dom: DomainSpec, n_samples: int = 1000, seed: int = 0) -> float:
    """Sampled bound on the L-independent parts of the generator applied to Theta(d).

    Per strip point and control: 1/2 |tr(a D^2 d)| + |b| + 1/2 |D^2 d| sum_j w_j |gamma_j|^2,
    and 2C when jumps are present (large-jump part, which multiplies beta).
    """
    rng = np.random.default_rng(seed)
    t, x = _strip_samples(spec, dom, dom.smooth_margin, n_samples, rng)
    Hd = dom.distance_hessian(x)
    hnorm = np.linalg.norm(Hd, ord=2, axis=(1, 2))
    worst = 0.0
    for u in spec.controls.representative_points():
        U = np.broadcast_to(u, (n_samples, spec.controls.dim))
        a = spec.diffusion(t, x, U)
        tr = np.abs(np.einsum("nij,nji->n", a, Hd))
        b = np.linalg.norm(spec.drift(t, x, U), axis=1)
        g2 = np.zeros(n_samples)
        for z, w in zip(spec.levy.z, spec.levy.w):
            g2 += w * np.sum(spec.jump(t, x, U, z) ** 2, axis=1)
        worst = max(worst, float(np.max(0.5 * tr + b + 0.5 * hnorm * g2)))
    if spec.levy.n_atoms:
        worst = max(worst, 2.0 * spec.C)
    return HEADROOM * worst


def _assemble(spec, dom, L, lambda_O, K, delta1, delta2=None, delta0=None, kappa=None):
    th = ThetaExact(spec.levy, spec.C, L)
    if th.d1(np.array(0.0)) < 0.5:
        raise NoStrictMonotonicity("Theta' < 1/2 at the origin")
    t0 = th.t0()
    if delta2 is None:
        delta2 = min(t0, delta1) / 2.0
        delta0 = delta2 / 8.0
    grid = np.linspace(0.0, delta2, TABLE_POINTS + 1)
    vals = th.theta(grid)
    table = PchipInterpolator(grid, vals, extrapolate=False)
    if kappa is None:
        kappa = min(0.5, float(th.theta(delta0)))
    return BarrierFunction(dom, L, kappa, delta0, delta1, delta2, t0, lambda_O, K, th, grid, table)


def build_barrier(
    spec: ProblemSpec,
    target_domain: DomainSpec | None = None,
    lambda_O: float | None = None,
    K: float | None = None,
    n_samples: int = 1000,
    seed: int = 0,
) -> BarrierFunction:
    """Barrier for the target domain; lambda_O defaults to the spec's boundary ellipticity."""
    dom = spec.domain if target_domain is None else target_domain
    lam = spec.lam if lambda_O is None else float(lambda_O)
    K = estimate_K(spec, dom, n_samples, seed) if K is None else float(K)
    L = 4.0 * (K + 1.0) / lam
    return _assemble(spec, dom, L, lam, K, dom.smooth_margin)


def with_L(bar: BarrierFunction, spec: ProblemSpec, L: float) -> BarrierFunction:
    """Same strip parameters with a different L (used to plant a weakened barrier)."""
    return _assemble(spec, bar.domain, L, bar.lambda_O, bar.K_est, bar.delta1, bar.delta2, bar.delta0, bar.kappa)


def evaluate_barrier(bar: BarrierFunction, x) -> np.ndarray | float:
    """Theta(d(x)) inside the strip, Theta(delta2) deeper inside, 0 outside."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    d = bar.domain.dist_to_complement(np.atleast_2d(x))
    out = np.where(d < bar.delta2, bar.theta_value(np.minimum(d, bar.delta2)), bar.theta_value(bar.delta2))
    out = np.where(d > 0, out, 0.0)
    return float(out[0]) if single else out


def generator_on_barrier(bar: BarrierFunction, spec: ProblemSpec, t, x, U) -> np.ndarray:
    """A^u psi with exact derivatives of Theta(d) and the exact atom sum."""
    d = bar.domain.dist_to_complement(x)
    g = bar.domain.distance_gradient(x)
    Hd = bar.domain.distance_hessian(x)
    th1 = bar.theta.d1(d)
    th2 = bar.theta.d2(d)
    Dpsi = th1[:, None] * g
    D2psi = th1[:, None, None] * Hd + th2[:, None, None] * g[:, :, None] * g[:, None, :]
    a = spec.diffusion(t, x, U)
    out = 0.5 * np.einsum("nij,nji->n", a, D2psi) + np.sum(spec.drift(t, x, U) * Dpsi, axis=1)
    psi_x = evaluate_barrier(bar, x)
    for z, w in zip(spec.levy.z, spec.levy.w):
        gam = spec.jump(t, x, U, z)
        out += w * (evaluate_barrier(bar, x + gam) - psi_x - np.sum(Dpsi * gam, axis=1))
    return out


@dataclass
class ProbeReport:
    worst_value: float
    frac_below_half_kappa: float
    kappa: float
    L: float
    K_est: float
    n_evaluations: int

    @property
    def passed(self) -> bool:
        return bool(self.worst_value <= 0.0 and self.frac_below_half_kappa >= 0.99)

    def as_dict(self) -> dict:
        return {"worst_value": self.worst_value, "kappa": self.kappa, "L": self.L, "K_est": self.K_est,
                "fraction_below_minus_half_kappa": self.frac_below_half_kappa,
                "n_evaluations": self.n_evaluations, "pass": self.passed}

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True)


def supersolution_probe(bar: BarrierFunction, spec: ProblemSpec, n_samples: int = 1000, stream=0) -> ProbeReport:
    """Evaluate A^u psi over strip samples (0, T) x {0 < d < delta0} and every control."""
    rng = stream if isinstance(stream, np.random.Generator) else np.random.default_rng(stream)
    t, x = _strip_samples(spec, bar.domain, bar.delta0, n_samples, rng)
    vals = []
    for u in spec.controls.representative_points():
        U = np.broadcast_to(u, (n_samples, spec.controls.dim))
        vals.append(generator_on_barrier(bar, spec, t, x, U))
    v = np.concatenate(vals)
    return ProbeReport(float(np.max(v)), float(np.mean(v <= -bar.kappa / 2)), bar.kappa, bar.L, bar.K_est, int(v.size))


# ---------------------------------------------------------------------------
# composite barrier


def _sup_running_cost(spec: ProblemSpec, n: int = 4000, seed: int = 0, extra=None) -> float:
    rng = np.random.default_rng(seed)
    lo, hi = spec.domain.bounding_box
    x = lo + (hi - lo) * rng.random((n, spec.d))
    t = spec.T * rng.random(n)
    best = 0.0
    for u in spec.controls.representative_points():
        U = np.broadcast_to(u, (n, spec.controls.dim))
        g = spec.running_cost(t, x, U)
        if extra is not None:
            g = g + extra(t, x, U)
        best = max(best, float(np.max(np.abs(g))))
    return best


def terminal_generator_fd(spec: ProblemSpec, h: float = 1e-4):
    """A^u Psi by central finite differences (time derivative included)."""

    def f(t, x, U):
        n, d = x.shape
        P = lambda tt, xx: spec.terminal(tt, xx)
        p0 = P(t, x)
        tp = np.minimum(t + h, spec.T)
        tm = np.maximum(t - h, 0.0)
        out = (P(tp, x) - P(tm, x)) / (tp - tm)
        a = spec.diffusion(t, x, U)
        grad = np.empty((n, d))
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            pp, pm = P(t, x + e), P(t, x - e)
            grad[:, i] = (pp - pm) / (2 * h)
            out += 0.5 * a[:, i, i] * (pp - 2 * p0 + pm) / h**2
            for j in range(i + 1, d):
                e2 = np.zeros(d)
                e2[j] = h
                cross = (P(t, x + e + e2) - P(t, x + e - e2) - P(t, x - e + e2) + P(t, x - e - e2)) / (4 * h**2)
                out += a[:, i, j] * cross
        out += np.sum(spec.drift(t, x, U) * grad, axis=1)
        for z, w in zip(spec.levy.z, spec.levy.w):
            gam = spec.jump(t, x, U, z)
            out += w * (P(t, x + gam) - p0 - np.sum(grad * gam, axis=1))
        return out

    return f


@dataclass(eq=False)
class CompositeBarrier:
    spec: ProblemSpec
    anchors: np.ndarray  # (A, d) boundary points
    centers: np.ndarray  # (A, d) exterior-ball centres y_x
    barriers: list
    K5: float
    gamma_sup: float
    kappa: float
    with_terminal: bool = False

    def anchor_values(self, s, y) -> np.ndarray:
        """(A, n) values of min((|Gamma|+1)(T-s), K5 psi_x(y)) per anchor."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        s = np.broadcast_to(np.asarray(s, dtype=float), (len(y),))
        first = (self.gamma_sup + 1.0) * (self.spec.T - s)
        return np.stack([np.minimum(first, self.K5 * evaluate_barrier(b, y)) for b in self.barriers])

    def __call__(self, s, y):
        y = np.asarray(y, dtype=float)
        single = y.ndim == 1
        Y = np.atleast_2d(y)
        S = np.broadcast_to(np.asarray(s, dtype=float), (len(Y),))
        val = np.min(self.anchor_values(S, Y), axis=0)
        # zero on the parabolic boundary
        on_bdry = (S >= self.spec.T) | (self.spec.domain.signed_distance(Y) <= 0)
        val = np.where(on_bdry, 0.0, val)
        if self.with_terminal:
            val = val + self.spec.terminal(S, Y)
        return float(val[0]) if single else val


def composite_supersolution(
    spec: ProblemSpec,
    anchors=None,
    n_anchors: int = 64,
    with_terminal: bool = False,
    n_samples: int = 1000,
    seed: int = 0,
) -> CompositeBarrier:
    """inf over anchors of min((|Gamma|+1)(T-s), K5 psi_x) with psi_x built on exterior-ball annuli."""
    dom = spec.domain
    anchors = dom.boundary_points(n_anchors) if anchors is None else np.atleast_2d(np.asarray(anchors, dtype=float))
    if len(anchors) == 0:
        raise EmptyAnchors("need at least one boundary anchor")
    eta = dom.eta
    lo, hi = dom.bounding_box
    corners = np.array(np.meshgrid(*[[a, b] for a, b in zip(lo, hi)])).reshape(dom.dim, -1).T
    centers = np.array([x + eta * proximal_normal(dom, x) for x in anchors])
    R0 = max(float(np.max(np.linalg.norm(corners - c, axis=1))) for c in centers) + 1.0
    annuli = [make_domain("annulus", c, inner_radius=eta, outer_radius=R0) for c in centers]
    # one K for all anchors keeps delta0 and kappa anchor-independent
    K = max(estimate_K(spec, a, n_samples, seed) for a in annuli)
    bars = [build_barrier(spec, a, spec.lam, K=K) for a in annuli]
    extra = terminal_generator_fd(spec) if with_terminal else None
    gsup = _sup_running_cost(spec, seed=seed, extra=extra)
    kappa = min(b.kappa for b in bars)
    K5 = max(1.0 + 1e-12, spec.T * (gsup + 1.0) / kappa)
    return CompositeBarrier(spec, anchors, centers, bars, K5, gsup, kappa, with_terminal)
