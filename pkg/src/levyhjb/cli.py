"""Config-driven runner: ``levyhjb {validate,solve,simulate,verify,barrier,cascade} --config FILE``.

Exit status: 0 all checks pass, 1 a check failed, 2 config error, 3 numerical error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .barrier import build_barrier, supersolution_probe
from .config import BarrierBlock, ExperimentConfig, load_config
from .errors import BadParams, ConfigError, NumericalError, UnknownFamily
from .hjb import GridSpec, cascade_study, evaluate, export_field_csv, solve
from .policy import export_policy_csv, finite_subset
from .problem import ProblemSpec, make_problem, validate_assumptions
from .sde import estimate_cost, path_seed_sequence, simulate, write_path_csv
from .verification import (
    Budget, MonteCarlo, Quantity, VerificationReport, calibrate_policy_tolerance, calibrate_solver_tolerance,
    coupling_probe, dpp_check, perturb_drift, representation_check, write_reports_csv,
)

SUBCOMMANDS = ("validate", "solve", "simulate", "verify", "barrier", "cascade")


def _dump_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


def _line(name: str, value, tol, ok: bool) -> str:
    return f"{'PASS' if ok else 'FAIL'}  {name}: value={value:.6g} tolerance={tol:.6g}"


class Runner:
    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self.lines: list[str] = []
        try:
            self.spec: ProblemSpec = make_problem(cfg.problem.family, cfg.problem.params)
        except (BadParams, UnknownFamily, ValueError, KeyError) as exc:
            raise ConfigError(f"cannot build problem: {exc}") from None

    @property
    def mc(self) -> MonteCarlo:
        m = self.cfg.mc
        return MonteCarlo(m.n_paths, m.dt, m.seed, m.workers)

    def wants(self, fmt: str) -> bool:
        return fmt in self.cfg.outputs.formats

    def controls(self, n=None):
        c = self.spec.controls
        n = n if n is not None else (self.cfg.grid.n_controls if self.cfg.grid else None)
        if c.is_finite:
            return c if n is None else finite_subset(c, n)
        if n is None:
            raise ConfigError("box control sets need grid.n_controls")
        return finite_subset(c, n)

    def record(self, name, value, tol, ok) -> bool:
        self.lines.append(_line(name, value, tol, ok))
        return bool(ok)

    def field(self):
        g = self.cfg.require("grid")
        return solve(self.spec, GridSpec(g.h, g.time_steps, g.delta * self.spec.domain.eta), g.eps, self.controls())

    # subcommands return True iff every check passed

    def validate(self) -> bool:
        rep = validate_assumptions(self.spec, stream=self.cfg.mc.seed)
        if self.wants("json"):
            _dump_json(self.out / "assumptions.json", rep.as_dict())
        ok = True
        for c in rep.checks:
            ok &= self.record(c.name, c.worst, c.limit, c.passed)
        return ok

    def solve(self) -> bool:
        fld = self.field()
        if self.wants("csv"):
            export_field_csv(self.out / "field.csv", fld)
        summary = {"family": self.cfg.problem.family, "h": fld.lattice.h, "time_steps": fld.n_levels - 1,
                   "dt": fld.dt, "n_nodes": int(fld.lattice.size), "n_interior": int(fld.interior.sum())}
        if self.cfg.simulate is not None:
            x = np.asarray(self.cfg.simulate.x, dtype=float)
            summary["W_at_start"] = float(evaluate(fld, self.cfg.simulate.t, x))
        if self.wants("json"):
            _dump_json(self.out / "solve.json", summary)
        ok = bool(np.all(np.isfinite(fld.values)))
        return self.record("finite field values", float(np.max(np.abs(fld.values))), float("inf"), ok)

    def simulate(self) -> bool:
        s = self.cfg.require("simulate")
        m = self.cfg.mc
        u = np.asarray(s.control if s.control is not None else self.controls(1).points[0], dtype=float)
        x = np.asarray(s.x, dtype=float)
        for i in range(s.n_recorded):
            rec = simulate(self.spec, u, s.t, x, m.dt, stream=path_seed_sequence(m.seed, i))
            if self.wants("csv"):
                write_path_csv(self.out / f"path_{i:03d}.csv", rec)
        est = estimate_cost(self.spec, u, s.t, x, m.n_paths, m.dt, m.seed, workers=m.workers)
        if self.wants("json"):
            _dump_json(self.out / "simulate.json", {"control": u.tolist(), "x": x.tolist(), "t": s.t,
                                                    "cost": est.as_dict()})
        return self.record("finite cost estimate", est.mean, float("inf"), bool(np.isfinite(est.mean)))

    def verify(self) -> bool:
        v = self.cfg.require("verify")
        g = self.cfg.require("grid")
        mc = self.mc
        x = np.asarray(v.x, dtype=float)
        delta = g.delta * self.spec.domain.eta
        c1, tol_s, fld = calibrate_solver_tolerance(self.spec, g.h, v.t, x, g.eps, self.controls(), delta)
        c2, tol_p, pol = calibrate_policy_tolerance(self.spec, fld, v.M1, v.cell_h, v.t, x, mc)
        budget = Budget(tol_s, tol_p)
        if self.wants("csv"):
            export_policy_csv(self.out / "policy.csv", pol)
        policies = [("synthesized", pol)]
        reports = [representation_check(self.spec, fld, policies, v.t, x, mc, budget)]
        reports[0].details.update({"c1": c1, "c2": c2})
        for rule in v.dpp_rules:
            theta = None if rule in (None, "T") else (str(rule[0]), float(rule[1]))
            rep = dpp_check(self.spec, fld, policies, v.t, x, theta, mc, budget)
            rep.name = f"dpp {rule if isinstance(rule, str) else rule[0] + ' ' + format(float(rule[1]), 'g')}"
            reports.append(rep)
        if v.coupling_shifts:
            reports.append(self._coupling(v, pol, x, mc))
        ok = True
        for i, rep in enumerate(reports):
            if self.wants("json"):
                _dump_json(self.out / f"report_{i:02d}_{rep.name.replace(' ', '_')}.json", rep.as_dict())
            for q in rep.quantities:
                ok &= self.record(f"{rep.name}: {q.label}", q.value, q.tolerance, q.passed)
        if self.wants("csv"):
            write_reports_csv(self.out / "verify_summary.csv", reports)
        return ok

    def _coupling(self, v, pol, x, mc) -> VerificationReport:
        delta = (v.coupling_delta if v.coupling_delta is not None else 0.1) * self.spec.domain.eta
        rep = VerificationReport("coupling", seeds={"mc": mc.seed})
        p_hats = []
        direction = np.ones(self.spec.d) / np.sqrt(self.spec.d)
        for s in v.coupling_shifts:
            r = coupling_probe(self.spec, perturb_drift(self.spec, float(s) * direction), pol, delta, v.t, x, mc)
            p_hats.append(r.details["p_hat"])
            q = r.quantities[0]
            rep.quantities.append(Quantity(f"shift {float(s):g}: {q.label}", q.value, q.tolerance, q.rule))
            rep.details[f"shift {float(s):g}"] = r.details
        rises = max([b - a for a, b in zip(p_hats, p_hats[1:])] + [0.0])
        rep.quantities.append(Quantity("largest increase of P along the shifts", rises, 0.0, "le"))
        rep.quantities.append(Quantity("final P", p_hats[-1], 0.01, "le"))
        return rep

    def barrier(self) -> bool:
        b = self.cfg.barrier or BarrierBlock()
        seed = self.cfg.mc.seed if b.seed is None else b.seed
        bar = build_barrier(self.spec, n_samples=b.n_samples, seed=seed)
        probe = supersolution_probe(bar, self.spec, n_samples=b.n_samples, stream=seed)
        if self.wants("json"):
            _dump_json(self.out / "barrier.json", {**bar.report(), "probe": probe.as_dict()})
        ok = self.record("max generator on barrier", probe.worst_value, 0.0, probe.worst_value <= 0)
        ok &= self.record("fraction <= -kappa/2", probe.frac_below_half_kappa, 0.99, probe.frac_below_half_kappa >= 0.99)
        return ok

    def cascade(self) -> bool:
        c = self.cfg.require("cascade")
        g = self.cfg.require("grid")
        spec = self.spec if c.psi is None else make_problem(
            self.cfg.problem.family, {**self.cfg.problem.params, "psi": c.psi})
        h = c.h if c.h is not None else g.h
        eta = spec.domain.eta
        n_base = g.n_controls if g.n_controls is not None else (len(spec.controls) if spec.controls.is_finite else None)
        schedules = {
            "eps": [(e, n_base, 0.0) for e in c.eps],
            "n_controls": [(g.eps, n, 0.0) for n in c.n_controls],
            "delta": [(g.eps, n_base, dl * eta) for dl in c.delta],
        }
        if not any(schedules.values()):
            raise ConfigError("cascade block has no non-empty schedule")
        ok = True
        rows = []
        for name, sched in schedules.items():
            if not sched:
                continue
            if any(n is None for _, n, _ in sched):
                raise ConfigError("box control sets need grid.n_controls for the cascade")
            tab = cascade_study(spec, GridSpec(h, g.time_steps), sched)
            for r in tab.as_records():
                rows.append({"study": name, **r})
            succ = [r.successive for r in tab.rows[1:]]
            rises = max([b - a for a, b in zip(succ, succ[1:])] + [0.0])
            ok &= self.record(f"cascade {name}: largest increase of successive differences", rises, 0.0, tab.passed)
        if self.wants("csv"):
            with open(self.out / "cascade.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["study", "eps", "n_controls", "delta", "diff_to_finest", "successive"])
                for r in rows:
                    w.writerow([r["study"], f"{r['eps']:.16e}", r["n_controls"], f"{r['delta']:.16e}",
                                f"{r['diff_to_finest']:.16e}", f"{r['successive']:.16e}"])
        return ok


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levyhjb", description=__doc__.splitlines()[0])
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--out", help="output directory (overrides outputs.directory)")
    p.add_argument("--workers", type=int, help="cap on worker threads")
    p.add_argument("--seed", type=int, help="overrides mc.seed")
    return p


def run(subcommand: str, config_path, out=None, workers=None, seed=None) -> int:
    try:
        cfg = load_config(config_path)
        if seed is not None:
            cfg.mc = replace(cfg.mc, seed=int(seed))
        if workers is not None:
            if workers < 1:
                raise ConfigError("--workers must be >= 1")
            cfg.mc = replace(cfg.mc, workers=int(workers))
        out_dir = Path(out if out is not None else cfg.outputs.directory)
        runner = Runner(cfg, out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        ok = getattr(runner, subcommand)()
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    for line in runner.lines:
        print(line)
    return 0 if ok else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.subcommand, args.config, args.out, args.workers, args.seed)


if __name__ == "__main__":
    sys.exit(main())
