"""Control-problem data (coefficients, constants, domain, controls) and the instance registry.

Coefficient callables are vectorised over a batch of states and must be
pure functions:

    drift(t, X, U)          -> (n, d)
    vol(t, X, U)            -> (n, d, m1)
    jump(t, X, U, z)        -> (n, d)        z is one atom, shape (m2,)
    running_cost(t, X, U)   -> (n,)
    terminal(t, X)          -> (n,)

``X`` is ``(n, d)``, ``U`` is ``(n, p)`` and ``t`` is a scalar or ``(n,)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import BadParams, UnknownFamily
from .geometry import DomainSpec, make_domain, config_domain
from .levy import LevyModel, build_discrete_measure, empty_measure


# ---------------------------------------------------------------------------
# control sets


@dataclass(frozen=True, eq=False)
class ControlSet:
    """Finite list of controls, or a box with a fixed dense enumeration."""

    kind: str  # "finite" | "box"
    points: np.ndarray | None = None  # (k, p) for finite sets
    low: np.ndarray | None = None
    high: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return int(self.points.shape[1] if self.kind == "finite" else self.low.shape[0])

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    def __len__(self) -> int:
        if not self.is_finite:
            raise TypeError("box control sets have no length; take finite_subset first")
        return int(self.points.shape[0])

    def metric(self, u1, u2) -> np.ndarray:
        return np.linalg.norm(np.asarray(u1, dtype=float) - np.asarray(u2, dtype=float), axis=-1)

    def enumerate(self, n: int) -> np.ndarray:
        """First n elements of the enumeration (whole list for finite sets)."""
        if self.is_finite:
            return self.points[: min(n, len(self))]
        # unscrambled Halton shifted by 1/2, so the head is the box centre
        h = qmc.Halton(self.dim, scramble=False).random(n)
        u = np.mod(h + 0.5, 1.0)
        return self.low + (self.high - self.low) * u

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.is_finite:
            return self.points[rng.integers(0, len(self), size=n)]
        return self.low + (self.high - self.low) * rng.random((n, self.dim))

    def representative_points(self, n_box: int = 16) -> np.ndarray:
        """Finite stand-in used by checks that loop over 'all controls'."""
        if self.is_finite:
            return self.points
        corners = np.array(np.meshgrid(*[[l, h] for l, h in zip(self.low, self.high)])).reshape(self.dim, -1).T
        return np.vstack([self.enumerate(n_box), corners])


def finite_controls(points) -> ControlSet:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.shape[0] == 0:
        raise BadParams("a finite control set needs at least one point")
    return ControlSet("finite", points=pts)


def box_controls(low, high) -> ControlSet:
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    if low.shape != high.shape or np.any(high < low):
        raise BadParams("box controls need low <= high with matching shapes")
    return ControlSet("box", low=low, high=high)


def config_controls(record) -> ControlSet:
    if isinstance(record, dict):
        if record.get("kind", "finite") == "box":
            return box_controls(record["low"], record["high"])
        return finite_controls(record["points"])
    return finite_controls(record)


# ---------------------------------------------------------------------------
# problem data


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    d: int
    m1: int
    m2: int
    T: float
    drift: Callable
    vol: Callable
    jump: Callable
    running_cost: Callable
    terminal: Callable
    C: float
    lam: float
    domain: DomainSpec
    levy: LevyModel
    controls: ControlSet
    cost_lipschitz: float = 0.0  # spatial Lipschitz constant of the running cost
    family: str = "custom"
    params: dict = field(default_factory=dict)

    def with_(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)

    def diffusion(self, t, X, U) -> np.ndarray:
        s = self.vol(t, X, U)
        return np.einsum("nij,nkj->nik", s, s)

    def jump_sizes(self, t, X, U) -> np.ndarray:
        """gamma at every atom, shape (J, n, d)."""
        n = X.shape[0]
        if not self.levy.n_atoms:
            return np.zeros((0, n, self.d))
        return np.stack([self.jump(t, X, U, z) for z in self.levy.z])

    def compensator(self, t, X, U) -> np.ndarray:
        """sum_j w_j gamma(t, X, U, z_j), shape (n, d)."""
        g = self.jump_sizes(t, X, U)
        if not len(g):
            return np.zeros_like(X)
        return np.tensordot(self.levy.w, g, axes=1)


def broadcast_controls(U, n: int, p: int) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    if U.ndim <= 1:
        return np.broadcast_to(U.reshape(1, p), (n, p))
    return U


# ---------------------------------------------------------------------------
# assumption checks


@dataclass
class CheckResult:
    name: str
    worst: float  # worst sampled value of the checked quantity
    limit: float
    passed: bool

    @property
    def margin(self) -> float:
        return self.limit - self.worst


@dataclass
class AssumptionReport:
    checks: list[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def violations(self) -> list[str]:
        return [c.name for c in self.checks if not c.passed]

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "worst": c.worst, "limit": c.limit, "margin": c.margin, "pass": c.passed}
                for c in self.checks
            ],
        }


def _sample_states(spec: ProblemSpec, n: int, rng) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    lo, hi = spec.domain.bounding_box
    span = hi - lo
    X = (lo - 0.25 * span) + 1.5 * span * rng.random((n, spec.d))
    t = spec.T * rng.random(n)
    U = spec.controls.sample(n, rng)
    return t, X, U


def validate_assumptions(spec: ProblemSpec, n_samples: int = 10_000, stream=None) -> AssumptionReport:
    """Sample the standing bounds, Lipschitz ratios and boundary ellipticity.

    Failures are reported, never raised; the spec is not modified.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = stream if isinstance(stream, np.random.Generator) else np.random.default_rng(stream)
    C = spec.C
    rel = 1 + 1e-6
    checks: list[CheckResult] = []

    t, X, U = _sample_states(spec, n_samples, rng)
    b = spec.drift(t, X, U)
    s = spec.vol(t, X, U)
    checks.append(CheckResult("drift bound", float(np.max(np.linalg.norm(b, axis=1))), C, True))
    checks.append(CheckResult("vol bound", float(np.max(np.linalg.norm(s, axis=(1, 2)))), C, True))

    # Lipschitz pairs at mixed separations
    scale = np.exp(rng.uniform(np.log(1e-4), np.log(1.0), size=n_samples))[:, None]
    dirs = rng.standard_normal((n_samples, spec.d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    X2 = X + scale * dirs * np.max(spec.domain.bounding_box[1] - spec.domain.bounding_box[0])
    dx = np.linalg.norm(X2 - X, axis=1)
    db = np.linalg.norm(spec.drift(t, X2, U) - b, axis=1)
    ds = np.linalg.norm(spec.vol(t, X2, U) - s, axis=(1, 2))
    checks.append(CheckResult("drift-vol lipschitz", float(np.max((db + ds) / dx)), C * rel, True))

    if spec.levy.n_atoms:
        jb, jl = 0.0, 0.0
        for z, rz in zip(spec.levy.z, spec.levy.rho_z):
            g1 = spec.jump(t, X, U, z)
            g2 = spec.jump(t, X2, U, z)
            jb = max(jb, float(np.max(np.linalg.norm(g1, axis=1))) / rz)
            jl = max(jl, float(np.max(np.linalg.norm(g2 - g1, axis=1) / dx)) / rz)
        checks.append(CheckResult("jump bound", jb, C, True))
        checks.append(CheckResult("jump lipschitz", jl, C * rel, True))
        for r in (1e-3, 1e-1, 1.0):
            lb = spec.levy.rho_lower_bound(r)
            checks.append(CheckResult(f"rho positive |z|>{r:g}", -lb, 0.0, True))

    g = spec.running_cost(t, X, U)
    psi = spec.terminal(t, X)
    checks.append(CheckResult("running cost bounded", float(np.max(np.abs(g))), np.inf, bool(np.all(np.isfinite(g)))))
    checks.append(CheckResult("terminal bounded", float(np.max(np.abs(psi))), np.inf, bool(np.all(np.isfinite(psi)))))

    a = spec.diffusion(t, X, U)
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (a + np.swapaxes(a, 1, 2)))))
    checks.append(CheckResult("diffusion psd", -min_eig, 1e-10, True))

    # boundary ellipticity: 200 boundary points x controls x 5 times
    xb = spec.domain.boundary_points(200)
    nb = -spec.domain.distance_gradient(xb)
    nb /= np.linalg.norm(nb, axis=1, keepdims=True)
    worst = np.inf
    for u in spec.controls.representative_points():
        Ub = np.broadcast_to(u, (len(xb), spec.controls.dim))
        for tt in np.linspace(0.0, spec.T, 5, endpoint=False):
            ab = spec.diffusion(tt, xb, Ub)
            worst = min(worst, float(np.min(np.einsum("ni,nij,nj->n", nb, ab, nb))))
    checks.append(CheckResult("boundary ellipticity", -worst, -spec.lam * (1 - 1e-9), True))

    for c in checks:
        if np.isfinite(c.limit):
            c.passed = bool(c.worst <= c.limit)
    return AssumptionReport(checks)


# ---------------------------------------------------------------------------
# registry


def _terminal(kind: str, axis: int = 0) -> Callable:
    if kind == "linear":
        return lambda t, X: X[:, axis].copy()
    if kind == "quadratic":
        return lambda t, X: np.sum(X**2, axis=1)
    if kind == "cosine":
        return lambda t, X: np.cos(np.pi * X[:, axis] / 2)
    if kind == "zero":
        return lambda t, X: np.zeros(X.shape[0])
    raise BadParams(f"unknown terminal data {kind!r}")


def _smoothstep(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10 - 15 * s + 6 * s**2)


def _zero_jump(d):
    return lambda t, X, U, z: np.zeros((X.shape[0], d))


def _const_cost(c):
    return lambda t, X, U: np.full(X.shape[0], float(c))


def _uncontrolled_diffusion_1d(p: dict) -> ProblemSpec:
    sigma = float(p.pop("sigma", 1.0))
    drift = float(p.pop("drift", 0.0))
    cost = float(p.pop("running_cost", 0.0))
    psi = p.pop("psi", "linear")
    hw = float(p.pop("halfwidth", 1.0))
    T = float(p.pop("T", 1.0))
    C = float(p.pop("C", max(1.0, abs(sigma), abs(drift))))
    return ProblemSpec(
        d=1, m1=1, m2=1, T=T,
        drift=lambda t, X, U: np.full_like(X, drift),
        vol=lambda t, X, U: np.full((X.shape[0], 1, 1), sigma),
        jump=_zero_jump(1),
        running_cost=_const_cost(cost),
        terminal=_terminal(psi),
        C=C, lam=float(p.pop("lambda", sigma**2)),
        domain=make_domain("interval", 0.0, halfwidth=hw),
        levy=empty_measure(1),
        controls=finite_controls([0.0]),
    )


def _controlled_drift_interval(p: dict) -> ProblemSpec:
    sigma = float(p.pop("sigma", 1.0))
    psi = p.pop("psi", "linear")
    hw = float(p.pop("halfwidth", 1.0))
    T = float(p.pop("T", 1.0))
    controls = config_controls(p.pop("controls", [-1.0, 1.0]))
    cost = float(p.pop("running_cost", 0.0))
    control_cost = float(p.pop("control_cost", 0.0))
    umax = float(np.max(np.abs(controls.representative_points())))
    C = float(p.pop("C", max(1.0, sigma, umax)))

    def running_cost(t, X, U):
        return cost + control_cost * np.abs(U[:, 0])

    return ProblemSpec(
        d=1, m1=1, m2=1, T=T,
        drift=lambda t, X, U: np.array(U[:, :1], dtype=float, copy=True),
        vol=lambda t, X, U: np.full((X.shape[0], 1, 1), sigma),
        jump=_zero_jump(1),
        running_cost=running_cost,
        terminal=_terminal(psi),
        C=C, lam=float(p.pop("lambda", sigma**2)),
        domain=make_domain("interval", 0.0, halfwidth=hw),
        levy=empty_measure(1),
        controls=controls,
    )


def _jump_diffusion_ball(p: dict) -> ProblemSpec:
    radius = float(p.pop("radius", 1.0))
    sigma = float(p.pop("sigma", 0.5))
    scale = float(p.pop("gamma_scale", 0.1))
    T = float(p.pop("T", 1.0))
    atoms = p.pop("atoms", [{"z": [1.0, 0.0], "w": 2.0}])
    levy = build_discrete_measure([(a["z"], a["w"]) for a in atoms], jump_dim=2)
    controls = config_controls(
        p.pop("controls", [[0.0, 0.0], [0.5, 0.0], [-0.5, 0.0], [0.0, 0.5], [0.0, -0.5]])
    )
    control_cost = float(p.pop("control_cost", 0.5))
    psi = p.pop("psi", "linear")
    if levy.jump_dim != 2:
        raise BadParams("jump_diffusion_ball uses two-dimensional jump marks")

    def jump(t, X, U, z):
        return scale * np.asarray(z)[None, :] / np.sqrt(1.0 + np.sum(X**2, axis=1))[:, None]

    def running_cost(t, X, U):
        return control_cost * np.sum(U**2, axis=1)

    umax = float(np.max(np.linalg.norm(controls.representative_points(), axis=1)))
    C = float(p.pop("C", max(1.0, np.sqrt(2) * sigma, umax, scale)))
    return ProblemSpec(
        d=2, m1=2, m2=2, T=T,
        drift=lambda t, X, U: np.array(U[:, :2], dtype=float, copy=True),
        vol=lambda t, X, U: np.broadcast_to(sigma * np.eye(2), (X.shape[0], 2, 2)).copy(),
        jump=jump,
        running_cost=running_cost,
        terminal=_terminal(psi),
        C=C, lam=float(p.pop("lambda", sigma**2)),
        domain=make_domain("ball", [0.0, 0.0], radius=radius),
        levy=levy,
        controls=controls,
    )


def _degenerate_interior(p: dict) -> ProblemSpec:
    hw = float(p.pop("halfwidth", 1.0))
    r_in = float(p.pop("inner", 0.3))
    r_out = float(p.pop("outer", 0.7))
    sigma = float(p.pop("sigma", 1.0))
    T = float(p.pop("T", 1.0))
    controls = config_controls(p.pop("controls", [-0.5, 0.5]))
    cost = float(p.pop("running_cost", 0.0))
    psi = p.pop("psi", "linear")
    if not 0 <= r_in < r_out < hw:
        raise BadParams("degenerate_interior needs 0 <= inner < outer < halfwidth")

    def vol(t, X, U):
        s = sigma * _smoothstep((np.abs(X[:, 0]) - r_in) / (r_out - r_in))
        return s[:, None, None]

    lip = sigma * 1.875 / (r_out - r_in)  # max slope of the quintic smoothstep
    umax = float(np.max(np.abs(controls.representative_points())))
    C = float(p.pop("C", max(1.0, sigma, umax, lip)))
    return ProblemSpec(
        d=1, m1=1, m2=1, T=T,
        drift=lambda t, X, U: np.array(U[:, :1], dtype=float, copy=True),
        vol=vol,
        jump=_zero_jump(1),
        running_cost=_const_cost(cost),
        terminal=_terminal(psi),
        C=C, lam=float(p.pop("lambda", sigma**2)),
        domain=make_domain("interval", 0.0, halfwidth=hw),
        levy=empty_measure(1),
        controls=controls,
    )


FAMILIES: dict[str, Callable[[dict], ProblemSpec]] = {
    "uncontrolled_diffusion_1d": _uncontrolled_diffusion_1d,
    "controlled_drift_interval": _controlled_drift_interval,
    "jump_diffusion_ball": _jump_diffusion_ball,
    "degenerate_interior": _degenerate_interior,
}


def make_problem(family: str, params: dict | None = None) -> ProblemSpec:
    """Build a registry instance. Unknown parameter names raise BadParams."""
    if family not in FAMILIES:
        raise UnknownFamily(family)
    p = dict(params or {})
    domain_rec = p.pop("domain", None)
    eta = p.pop("eta", None)
    spec = FAMILIES[family](p)
    if p:
        raise BadParams(f"unexpected parameters for {family}: {sorted(p)}")
    if domain_rec is not None:
        dom = config_domain(domain_rec)
        if dom.dim != spec.d:
            raise BadParams("domain dimension does not match the family")
        spec = spec.with_(domain=dom)
    if eta is not None:
        spec = spec.with_(domain=replace(spec.domain, eta=float(eta)))
    return spec.with_(family=family, params=dict(params or {}))
