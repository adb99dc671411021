"""Numerical checks tying the grid value function to Monte Carlo costs of Markov policies."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import BadStoppingRule, IncompatibleSpecs
from .geometry import dilate
from .hjb import GridSpec, ValueField, evaluate, solve
from .policy import MarkovPolicy, finite_subset, project_controls, synthesize
from .problem import ControlSet, ProblemSpec
from .sde import McEstimate, Stopper, _System, mc_estimate, run_batch


@dataclass(frozen=True)
class MonteCarlo:
    n_paths: int
    dt: float
    seed: int
    workers: int | None = None


@dataclass
class Quantity:
    label: str
    value: float
    tolerance: float
    rule: str = "abs"  # "abs": |v| <= tol, "le": v <= tol, "ge": v >= -tol

    @property
    def passed(self) -> bool:
        if self.rule == "le":
            return bool(self.value <= self.tolerance)
        if self.rule == "ge":
            return bool(self.value >= -self.tolerance)
        return bool(abs(self.value) <= self.tolerance)

    def as_dict(self) -> dict:
        return {"label": self.label, "value": self.value, "tolerance": self.tolerance, "rule": self.rule,
                "pass": self.passed}


@dataclass
class VerificationReport:
    name: str
    quantities: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    runtime: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(q.passed for q in self.quantities)

    def __getitem__(self, label: str) -> Quantity:
        for q in self.quantities:
            if q.label == label:
                return q
        raise KeyError(label)

    def as_dict(self, include_runtime: bool = False) -> dict:
        out = {"name": self.name, "pass": self.passed, "quantities": [q.as_dict() for q in self.quantities],
               "seeds": self.seeds, "details": self.details}
        if include_runtime:
            out["runtime"] = self.runtime
        return out

    def to_json(self, path) -> None:
        # runtime is left out so reruns are byte-identical
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2, sort_keys=True, default=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["report", "label", "value", "tolerance", "rule", "pass"])
            for q in self.quantities:
                w.writerow([self.name, q.label, f"{q.value:.16e}", f"{q.tolerance:.16e}", q.rule, int(q.passed)])


# ---------------------------------------------------------------------------
# error budgets


ROUNDOFF = 1e-12


@dataclass(frozen=True)
class Budget:
    tol_solver: float = 0.0
    tol_policy: float = 0.0

    def total(self, se: float, scale: float = 0.0) -> float:
        # the round-off term only matters when every other term is zero
        return self.tol_solver + self.tol_policy + 3.0 * se + ROUNDOFF * (1.0 + abs(scale))


def calibrate_solver_tolerance(spec: ProblemSpec, h: float, t: float, x, eps: float = 0.0,
                               controls: ControlSet | None = None, delta: float = 0.0) -> tuple[float, float, ValueField]:
    """c1 from one grid halving, assuming first-order error c1 (h + dt).

    Returns (c1, tol_solver at mesh h, field at mesh h).
    """
    coarse = solve(spec, GridSpec(h, None, delta), eps, controls)
    fine = solve(spec, GridSpec(h / 2, None, delta), eps, controls)
    pts = coarse.nodes[coarse.interior]
    diff = float(np.max(np.abs(evaluate(coarse, t, pts) - evaluate(fine, t, pts)))) if len(pts) else 0.0
    e_c = h + coarse.dt
    e_f = h / 2 + fine.dt
    c1 = diff / (e_c - e_f)
    return c1, c1 * e_c, coarse


def policy_cost(spec, policy, t, x, mc: MonteCarlo, extra_times=()) -> McEstimate:
    res = run_batch([spec], policy, t, x, mc.n_paths, mc.dt, mc.seed, [Stopper(0, spec.domain, None)],
                    extra_times=extra_times, workers=mc.workers)
    return mc_estimate(res.cost[0] + spec.terminal(res.tau[0], res.x_tau[0]), mc.seed)


def calibrate_policy_tolerance(spec: ProblemSpec, fld: ValueField, M1: int, cell_h: float, t: float, x,
                               mc: MonteCarlo) -> tuple[float, float, MarkovPolicy]:
    """c2 from a common-noise comparison of the policy at (cell_h, M1) and at (2 cell_h, M1 / 2)."""
    fine = synthesize(fld, spec, M1, cell_h)
    coarse = synthesize(fld, spec, max(1, M1 // 2), 2 * cell_h)
    jf = policy_cost(spec, fine, t, x, mc)
    jc = policy_cost(spec, coarse, t, x, mc)
    e_f = cell_h + spec.T / M1
    e_c = 2 * cell_h + spec.T / max(1, M1 // 2)
    c2 = abs(jc.mean - jf.mean) / (e_c - e_f)
    return c2, c2 * e_f, fine


# ---------------------------------------------------------------------------
# sandwich and DPP


def _candidates(fld: ValueField, policies) -> list[tuple[str, object]]:
    out = list(policies)
    names = {n for n, _ in out}
    for u in fld.control_subset.points:
        name = "const " + " ".join(f"{v:+g}" for v in u)
        if name not in names:
            out.append((name, u.copy()))
    return out


def _stopped_values(spec, fld, res, s_idx):
    tau, xt = res.tau[s_idx], res.x_tau[s_idx]
    w = np.array([evaluate(fld, tt, xx[None, :])[0] if tt < spec.T else spec.terminal(np.array([tt]), xx[None, :])[0]
                  for tt, xx in zip(tau, xt)]) if len(tau) < 64 else _evaluate_many(fld, spec, tau, xt)
    return res.cost[s_idx] + w


def _evaluate_many(fld, spec, tau, xt):
    out = np.empty(len(tau))
    # group by distinct stop times so interpolation stays vectorised
    order = np.argsort(tau, kind="stable")
    ts = tau[order]
    cuts = np.concatenate([[0], np.nonzero(np.diff(ts))[0] + 1, [len(ts)]])
    for a, b in zip(cuts[:-1], cuts[1:]):
        sel = order[a:b]
        tt = float(ts[a])
        if tt >= spec.T:
            out[sel] = spec.terminal(np.full(len(sel), tt), xt[sel])
        else:
            out[sel] = evaluate(fld, tt, xt[sel])
    return out


def _rule_stopper(spec: ProblemSpec, theta) -> Stopper:
    if theta is None or theta == "T" or (isinstance(theta, tuple) and theta[0] == "terminal"):
        return Stopper(0, spec.domain, None)
    kind, val = theta
    if kind == "time":
        if not 0 < val <= spec.T:
            raise BadStoppingRule("fixed stopping time must lie in (t, T]")
        return Stopper(0, spec.domain, float(val))
    if kind == "exit":
        try:
            eroded = dilate(spec.domain, -float(val))
        except Exception as exc:  # pragma: no cover - geometry message is enough
            raise BadStoppingRule(str(exc)) from exc
        return Stopper(0, eroded, None)
    raise BadStoppingRule(f"unknown stopping rule {theta!r}")


def dpp_estimates(spec, fld, policies, t, x, theta, mc: MonteCarlo) -> dict:
    st = _rule_stopper(spec, theta)
    if st.t_stop is not None and st.t_stop <= t:
        raise BadStoppingRule("fixed stopping time must exceed the start time")
    out = {}
    for name, pol in policies:
        res = run_batch([spec], pol, t, x, mc.n_paths, mc.dt, mc.seed, [st], workers=mc.workers)
        out[name] = mc_estimate(_stopped_values(spec, fld, res, 0), mc.seed)
    return out


def representation_check(spec: ProblemSpec, fld: ValueField, policies: Sequence[tuple[str, object]], t: float, x,
                         mc: MonteCarlo, budget: Budget, synthesized: str = "synthesized") -> VerificationReport:
    """Sandwich: no candidate beats W beyond the budget, and the synthesized policy comes within it."""
    t_start = time.perf_counter()
    cands = _candidates(fld, policies)
    w = float(evaluate(fld, t, np.atleast_1d(x)))
    est = dpp_estimates(spec, fld, cands, t, x, None, mc)
    best = min(est, key=lambda k: est[k].mean)
    syn = est[synthesized] if synthesized in est else est[best]
    rep = VerificationReport("representation", seeds={"mc": mc.seed})
    rep.quantities.append(Quantity("sandwich lower: min cost - W", est[best].mean - w, budget.total(est[best].std_error, w), "ge"))
    rep.quantities.append(Quantity("sandwich upper: synthesized cost - W", syn.mean - w, budget.total(syn.std_error, w), "le"))
    rep.details = {"W": w, "best": best, "tol_solver": budget.tol_solver, "tol_policy": budget.tol_policy,
                   "costs": {k: v.as_dict() for k, v in est.items()}}
    rep.runtime = time.perf_counter() - t_start
    return rep


def dpp_check(spec: ProblemSpec, fld: ValueField, policies: Sequence[tuple[str, object]], t: float, x, theta,
              mc: MonteCarlo, budget: Budget) -> VerificationReport:
    """min over policies of E[int Gamma + W(theta ^ tau, X)] minus W(t, x)."""
    t_start = time.perf_counter()
    cands = _candidates(fld, policies)
    w = float(evaluate(fld, t, np.atleast_1d(x)))
    est = dpp_estimates(spec, fld, cands, t, x, theta, mc)
    best = min(est, key=lambda k: est[k].mean)
    rep = VerificationReport("dpp", seeds={"mc": mc.seed})
    rep.quantities.append(Quantity("dpp residual", est[best].mean - w, budget.total(est[best].std_error, w), "abs"))
    rep.details = {"W": w, "best": best, "theta": str(theta), "costs": {k: v.as_dict() for k, v in est.items()}}
    rep.runtime = time.perf_counter() - t_start
    return rep


# ---------------------------------------------------------------------------
# coupling and control projection


def perturb_drift(spec: ProblemSpec, shift) -> ProblemSpec:
    """Same spec with the drift shifted by a constant vector."""
    s = np.broadcast_to(np.asarray(shift, dtype=float), (spec.d,)).copy()
    base = spec.drift
    return replace(spec, drift=lambda t, X, U: base(t, X, U) + s, C=spec.C + float(np.linalg.norm(s)))


def coupling_probe(specA: ProblemSpec, specB: ProblemSpec, policy, delta: float, t: float, x,
                   mc: MonteCarlo) -> VerificationReport:
    """Fraction of common-noise pairs drifting apart by more than delta/2, and the exit-order identity."""
    t_start = time.perf_counter()
    if specA.d != specB.d:
        raise IncompatibleSpecs("specs differ in dimension")
    dom_half = dilate(specA.domain, delta / 2)
    stops = [Stopper(0, specA.domain, None), Stopper(1, dom_half, None)]
    res = run_batch([specA, specB], policy, t, x, mc.n_paths, mc.dt, mc.seed, stops, workers=mc.workers)
    dev = np.maximum(res.dev_at_stop[0, 1], res.dev_at_stop[1, 1])
    event = dev > (delta / 2) ** 2
    order_ok = res.tau[0] <= res.tau[1]
    violations = int(np.sum(~event & ~order_ok))
    p_hat = float(np.mean(event))
    rep = VerificationReport("coupling", seeds={"mc": mc.seed})
    rep.quantities.append(Quantity("exit-order violations off the event", float(violations), 0.0, "le"))
    rep.details = {"p_hat": p_hat, "delta": delta, "n_paths": mc.n_paths,
                   "p_hat_std_error": float(np.sqrt(p_hat * (1 - p_hat) / mc.n_paths))}
    rep.runtime = time.perf_counter() - t_start
    return rep


def control_projection_probe(spec: ProblemSpec, control, n_schedule: Sequence[int], mc: MonteCarlo,
                             t: float = 0.0, x=None, tolerance: float = 1e-2) -> VerificationReport:
    """E sup |X - X_n|^2 when the control is projected onto the first n enumerated points."""
    t_start = time.perf_counter()
    x = np.zeros(spec.d) if x is None else np.atleast_1d(np.asarray(x, dtype=float))
    systems = [_System(spec)]
    for n in n_schedule:
        sub = finite_subset(spec.controls, n)
        systems.append(_System(spec, lambda U, sub=sub: project_controls(U, sub)))
    res = run_batch(systems, control, t, x, mc.n_paths, mc.dt, mc.seed, [Stopper(0, None, None)], workers=mc.workers)
    devs = [float(np.mean(res.dev_sup[i + 1])) for i in range(len(n_schedule))]
    rep = VerificationReport("control projection", seeds={"mc": mc.seed})
    for n, d in zip(n_schedule, devs):
        rep.details[f"n={n}"] = d
    rises = max([b - a for a, b in zip(devs, devs[1:])] + [0.0])
    rep.quantities.append(Quantity("largest increase along the schedule", rises, 0.0, "le"))
    rep.quantities.append(Quantity("final deviation", devs[-1], tolerance, "le"))
    rep.runtime = time.perf_counter() - t_start
    return rep


def write_reports_csv(path, reports: Sequence[VerificationReport]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["report", "label", "value", "tolerance", "rule", "pass"])
        for r in reports:
            for q in r.quantities:
                w.writerow([r.name, q.label, f"{q.value:.16e}", f"{q.tolerance:.16e}", q.rule, int(q.passed)])
