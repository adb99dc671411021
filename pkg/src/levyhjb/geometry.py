"""Closed-form bounded domains with exact signed distances.

Supported shapes are balls (any dimension), intervals, rounded boxes
(a box with corners rounded off, i.e. the offset of an inner box by the
corner radius) and annuli. The annulus is only used internally for the
exterior-ball barriers. All distances are exact, so dilations and
erosions are exact too.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.stats import qmc

from .errors import BadParams, DeltaTooLarge, NotOnBoundary

BOUNDARY_TOL = 1e-8
KINDS = ("ball", "interval", "rounded_box", "annulus")


@dataclass(frozen=True, eq=False)
class DomainSpec:
    kind: str
    center: np.ndarray
    eta: float
    radius: float = 0.0  # ball / interval half-width / annulus outer radius
    inner_halfwidths: np.ndarray | None = None  # rounded_box: the box that gets rounded
    corner_radius: float = 0.0  # rounded_box corner radius / annulus inner radius

    @property
    def dim(self) -> int:
        return int(self.center.shape[0])

    # -- distances ---------------------------------------------------------
    def signed_distance(self, x) -> np.ndarray:
        """Positive inside, negative outside, zero on the boundary.

        Accepts a single point ``(d,)`` or a batch ``(n, d)``.
        """
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        y = np.atleast_2d(x) - self.center
        if self.kind in ("ball", "interval"):
            sd = self.radius - np.linalg.norm(y, axis=1)
        elif self.kind == "rounded_box":
            sd = self.corner_radius - _box_sdf(y, self.inner_halfwidths)
        elif self.kind == "annulus":
            r = np.linalg.norm(y, axis=1)
            sd = np.minimum(r - self.corner_radius, self.radius - r)
        else:  # pragma: no cover
            raise BadParams(self.kind)
        return sd[0] if single else sd

    def dist_to_complement(self, x) -> np.ndarray:
        return np.maximum(self.signed_distance(x), 0.0)

    def contains(self, x) -> np.ndarray:
        """Membership in the open domain."""
        return self.signed_distance(x) > 0.0

    def distance_gradient(self, x) -> np.ndarray:
        """Gradient of the signed distance (points inward), batch ``(n, d)``."""
        y = np.atleast_2d(np.asarray(x, dtype=float)) - self.center
        if self.kind in ("ball", "interval"):
            r = np.linalg.norm(y, axis=1, keepdims=True)
            return -y / r
        if self.kind == "annulus":
            r = np.linalg.norm(y, axis=1, keepdims=True)
            inner = (r[:, 0] - self.corner_radius) <= (self.radius - r[:, 0])
            return np.where(inner[:, None], y / r, -y / r)
        g = _box_sdf_grad(y, self.inner_halfwidths)
        return -g

    def distance_hessian(self, x) -> np.ndarray:
        """Hessian of the signed distance, batch ``(n, d, d)``."""
        y = np.atleast_2d(np.asarray(x, dtype=float)) - self.center
        n, d = y.shape
        eye = np.eye(d)
        if self.kind == "interval" or (self.kind == "ball" and d == 1):
            return np.zeros((n, d, d))
        if self.kind in ("ball", "annulus"):
            r = np.linalg.norm(y, axis=1)
            u = y / r[:, None]
            proj = (eye[None] - u[:, :, None] * u[:, None, :]) / r[:, None, None]
            if self.kind == "ball":
                return -proj
            inner = (r - self.corner_radius) <= (self.radius - r)
            return np.where(inner[:, None, None], proj, -proj)
        # rounded box: minus the Hessian of the inner-box distance
        q = np.abs(y) - self.inner_halfwidths
        outside = np.any(q > 0, axis=1)
        qp = np.maximum(q, 0.0)
        H = np.zeros((n, d, d))
        if np.any(outside):
            qo = qp[outside]
            s = np.sign(y[outside])
            rr = np.linalg.norm(qo, axis=1)
            v = s * qo / rr[:, None]
            active = (qo > 0).astype(float)
            P = active[:, :, None] * active[:, None, :] * (eye[None] - v[:, :, None] * v[:, None, :])
            H[outside] = -P / rr[:, None, None]
        return H

    def curvature_bound(self, width: float) -> float:
        """sup of the distance-Hessian norm over the inner strip {0 <= d < width}."""
        if self.kind == "interval" or (self.kind == "ball" and self.dim == 1):
            return 0.0
        if self.kind == "ball":
            return 1.0 / (self.radius - width)
        if self.kind == "rounded_box":
            return 1.0 / (self.corner_radius - width)
        return 1.0 / self.corner_radius  # annulus: inner sphere is the sharper one

    # -- size information ----------------------------------------------------
    @property
    def inradius(self) -> float:
        if self.kind in ("ball", "interval"):
            return self.radius
        if self.kind == "rounded_box":
            return self.corner_radius + float(np.min(self.inner_halfwidths))
        return 0.5 * (self.radius - self.corner_radius)

    @property
    def smooth_margin(self) -> float:
        """Width of the inner strip on which the distance is C^2 (delta_1 in the barrier)."""
        if self.kind == "rounded_box":
            return min(0.5 * self.inradius, 0.5 * self.corner_radius)
        return 0.5 * self.inradius

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.kind in ("ball", "interval", "annulus"):
            ext = np.full(self.dim, self.radius)
        else:
            ext = self.inner_halfwidths + self.corner_radius
        return self.center - ext, self.center + ext

    # -- boundary sampling -------------------------------------------------------
    def boundary_points(self, n: int) -> np.ndarray:
        """Deterministic quasi-uniform boundary samples, ``(n, d)``."""
        c = self.center
        if self.kind == "interval" or (self.kind == "ball" and self.dim == 1):
            signs = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
            return c + (signs * self.radius)[:, None]
        if self.kind == "ball":
            return c + self.radius * _sphere_points(n, self.dim)
        if self.kind == "annulus":
            n_in = max(1, int(round(n * self.corner_radius / (self.corner_radius + self.radius))))
            inner = c + self.corner_radius * _sphere_points(n_in, self.dim)
            outer = c + self.radius * _sphere_points(n - n_in, self.dim)
            return np.vstack([inner, outer])[:n]
        if self.dim != 2:
            raise BadParams("rounded_box boundary sampling is implemented for d = 2")
        s = (np.arange(n) + 0.5) / n
        return c + _rounded_rect_param(s, self.inner_halfwidths, self.corner_radius)

    def random_boundary_points(self, n: int, rng: np.random.Generator) -> np.ndarray:
        c = self.center
        if self.kind == "interval" or (self.kind == "ball" and self.dim == 1):
            return c + (rng.choice([-1.0, 1.0], size=n) * self.radius)[:, None]
        if self.kind == "ball":
            g = rng.standard_normal((n, self.dim))
            return c + self.radius * g / np.linalg.norm(g, axis=1, keepdims=True)
        if self.kind == "annulus":
            g = rng.standard_normal((n, self.dim))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            p_in = self.corner_radius ** (self.dim - 1)
            p_in /= p_in + self.radius ** (self.dim - 1)
            r = np.where(rng.random(n) < p_in, self.corner_radius, self.radius)
            return c + r[:, None] * g
        return c + _rounded_rect_param(rng.random(n), self.inner_halfwidths, self.corner_radius)

    def sample_strip(self, n: int, width: float, rng: np.random.Generator) -> np.ndarray:
        """Random interior points with 0 < dist_to_complement < width."""
        b = self.random_boundary_points(n, rng)
        inward = self.distance_gradient(b)
        s = width * (1.0 - rng.random(n))  # (0, width]
        s = np.minimum(s, width * (1 - 1e-12))
        return b + s[:, None] * inward

    def sample_interior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        lo, hi = self.bounding_box
        out = []
        need = n
        while need > 0:
            cand = lo + (hi - lo) * rng.random((2 * need + 16, self.dim))
            cand = cand[self.signed_distance(cand) > 0]
            out.append(cand[:need])
            need -= len(out[-1])
        return np.vstack(out)


def _box_sdf(y: np.ndarray, a: np.ndarray) -> np.ndarray:
    q = np.abs(y) - a
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
    inside = np.minimum(np.max(q, axis=1), 0.0)
    return outside + inside


def _box_sdf_grad(y: np.ndarray, a: np.ndarray) -> np.ndarray:
    q = np.abs(y) - a
    s = np.where(y >= 0, 1.0, -1.0)
    qp = np.maximum(q, 0.0)
    r = np.linalg.norm(qp, axis=1)
    g = np.zeros_like(y)
    out = r > 0
    g[out] = s[out] * qp[out] / r[out, None]
    ins = ~out
    if np.any(ins):
        k = np.argmax(q[ins], axis=1)
        gi = np.zeros((int(ins.sum()), y.shape[1]))
        gi[np.arange(len(k)), k] = s[ins][np.arange(len(k)), k]
        g[ins] = gi
    return g


def _sphere_points(n: int, d: int) -> np.ndarray:
    if n <= 0:
        return np.zeros((0, d))
    if d == 2:
        th = 2 * np.pi * (np.arange(n) + 0.5) / n
        return np.column_stack([np.cos(th), np.sin(th)])
    if d == 3:
        k = np.arange(n) + 0.5
        phi = np.arccos(1 - 2 * k / n)
        th = np.pi * (1 + 5**0.5) * k
        return np.column_stack([np.cos(th) * np.sin(phi), np.sin(th) * np.sin(phi), np.cos(phi)])
    # general d: Gaussian transform of an unscrambled Halton set
    from scipy.stats import norm

    u = qmc.Halton(d, scramble=False).random(n + 1)[1:]
    g = norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _rounded_rect_param(s: np.ndarray, a: np.ndarray, r: float) -> np.ndarray:
    """Arc-length parametrisation of a 2d rounded rectangle, s in [0, 1)."""
    ax, ay = float(a[0]), float(a[1])
    seg = np.array([2 * ay, 0.5 * np.pi * r, 2 * ax, 0.5 * np.pi * r, 2 * ay, 0.5 * np.pi * r, 2 * ax, 0.5 * np.pi * r])
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    L = s * cum[-1]
    out = np.zeros((len(s), 2))
    corners = [(ax, ay, 0.0), (-ax, ay, 0.5 * np.pi), (-ax, -ay, np.pi), (ax, -ay, 1.5 * np.pi)]
    for i, li in enumerate(L):
        k = min(int(np.searchsorted(cum, li, side="right") - 1), 7)
        f = li - cum[k]
        side = k // 2
        if k % 2 == 0:  # straight edge: right, top, left, bottom
            if side == 0:
                out[i] = (ax + r, -ay + f)
            elif side == 1:
                out[i] = (ax - f, ay + r)
            elif side == 2:
                out[i] = (-ax - r, ay - f)
            else:
                out[i] = (-ax + f, -ay - r)
        else:
            cx, cy, th0 = corners[side]
            th = th0 + f / r
            out[i] = (cx + r * np.cos(th), cy + r * np.sin(th))
    return out


def make_domain(kind: str, center: Sequence[float] | float = 0.0, **params) -> DomainSpec:
    """Build a closed-form domain.

    ball: ``radius`` (and ``center`` of any dimension); interval: ``halfwidth``
    or ``radius`` (1d); rounded_box: ``halfwidths`` (outer extents) and the
    required ``corner_radius``; annulus: ``inner_radius``, ``outer_radius``.
    ``eta`` overrides the default prox-regularity radius.
    """
    c = np.atleast_1d(np.asarray(center, dtype=float))
    eta = params.pop("eta", None)
    if kind in ("ball", "interval"):
        radius = float(params.pop("radius", params.pop("halfwidth", np.nan)))
        if kind == "interval":
            if c.shape[0] != 1:
                raise BadParams("interval domains are one-dimensional")
        if not radius > 0:
            raise BadParams(f"{kind} needs a positive radius/halfwidth")
        default_eta = min(1 - 1e-6, radius)
        dom = DomainSpec(kind, c, default_eta, radius=radius)
    elif kind == "rounded_box":
        hw = np.atleast_1d(np.asarray(params.pop("halfwidths", np.nan), dtype=float))
        if hw.shape[0] == 1 and c.shape[0] > 1:
            hw = np.full(c.shape[0], hw[0])
        if c.shape[0] == 1 and hw.shape[0] > 1:
            c = np.zeros(hw.shape[0]) + c[0]
        rc = params.pop("corner_radius", None)
        if rc is None or not float(rc) > 0:
            raise BadParams("rounded_box requires corner_radius > 0")
        rc = float(rc)
        if not np.all(hw > 0) or np.any(hw <= rc):
            raise BadParams("rounded_box needs halfwidths > corner_radius > 0")
        dom = DomainSpec(kind, c, min(1 - 1e-6, rc), inner_halfwidths=hw - rc, corner_radius=rc)
    elif kind == "annulus":
        r_in = float(params.pop("inner_radius", np.nan))
        r_out = float(params.pop("outer_radius", np.nan))
        if not (0 < r_in < r_out):
            raise BadParams("annulus needs 0 < inner_radius < outer_radius")
        dom = DomainSpec(kind, c, min(1 - 1e-6, r_in), radius=r_out, corner_radius=r_in)
    else:
        raise BadParams(f"unknown domain kind {kind!r}; expected one of {KINDS}")
    if params:
        raise BadParams(f"unexpected domain parameters {sorted(params)}")
    if eta is not None:
        eta = float(eta)
        if not 0 < eta < 1:
            raise BadParams("eta must lie in (0, 1)")
        dom = replace(dom, eta=eta)
    return dom


def dilate(domain: DomainSpec, delta: float) -> DomainSpec:
    """O_delta = {dist(., O) < delta}; a negative delta erodes instead.

    Dilation requires 0 < delta < eta/2 and leaves an exterior ball radius of
    eta/2. Erosion must stay inside the in-radius (and the corner radius of a
    rounded box, where the eroded set stays a rounded box).
    """
    delta = float(delta)
    if delta == 0:
        return domain
    if delta > 0:
        if delta >= domain.eta / 2:
            raise DeltaTooLarge(f"delta={delta} must be < eta/2={domain.eta / 2}")
        new_eta = domain.eta / 2
    else:
        limit = domain.inradius
        if domain.kind == "rounded_box":
            limit = min(limit, domain.corner_radius)
        if -delta >= limit:
            raise BadParams(f"erosion by {-delta} exceeds the admissible depth {limit}")
        new_eta = domain.eta
    if domain.kind in ("ball", "interval"):
        return replace(domain, radius=domain.radius + delta, eta=new_eta)
    if domain.kind == "rounded_box":
        return replace(domain, corner_radius=domain.corner_radius + delta, eta=new_eta)
    return replace(domain, radius=domain.radius + delta, corner_radius=domain.corner_radius - delta, eta=new_eta)


def proximal_normal(domain: DomainSpec, x) -> np.ndarray:
    """Outward unit normal at a boundary point."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if abs(float(domain.signed_distance(x))) > BOUNDARY_TOL:
        raise NotOnBoundary(f"point {x} is not on the boundary")
    n = -domain.distance_gradient(x)[0]
    return n / np.linalg.norm(n)


def _ball_probes(n: int, d: int) -> np.ndarray:
    """n quasi-uniform points in the open unit ball."""
    u = qmc.Halton(d + 1 if d > 1 else 2, scramble=False).random(n + 1)[1:]
    rad = u[:, 0] ** (1.0 / d)
    rad = np.clip(rad, 1e-9, 1 - 1e-9)
    if d == 1:
        dirs = np.where(u[:, 1] < 0.5, -1.0, 1.0)[:, None]
    elif d == 2:
        th = 2 * np.pi * u[:, 1]
        dirs = np.column_stack([np.cos(th), np.sin(th)])
    else:
        from scipy.stats import norm

        g = norm.ppf(np.clip(u[:, 1:], 1e-12, 1 - 1e-12))
        dirs = g / np.linalg.norm(g, axis=1, keepdims=True)
    return rad[:, None] * dirs


def exterior_ball_check(
    domain: DomainSpec, x, r: float, n_probe: int = 500, inward: bool = False
) -> bool:
    """True iff the radius-r ball tangent at x (along the outward normal) misses the closed domain.

    ``inward=True`` places the ball along the negated normal instead, which
    must fail for any domain thicker than 2r.
    """
    n = proximal_normal(domain, x)
    if inward:
        n = -n
    x = np.asarray(x, dtype=float).reshape(-1)
    probes = x + r * n + r * _ball_probes(n_probe, domain.dim)
    return not bool(np.any(domain.signed_distance(probes) >= 0.0))


def config_domain(record: dict) -> DomainSpec:
    """Build a domain from a config record ``{kind, center, radius | halfwidths, corner_radius, eta}``."""
    rec = dict(record)
    kind = rec.pop("kind")
    center = rec.pop("center", 0.0)
    return make_domain(kind, center, **rec)
