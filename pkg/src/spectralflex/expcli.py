"""Configuration-driven experiments and the ``spectralflex`` command line.

Config files are flat ``key = value`` text; ``#`` starts a comment and
unknown keys are rejected.  Recognised keys and defaults are in ``DEFAULTS``.
Angles accept ``pi`` expressions such as ``pi/8`` or ``3*pi/16``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import discretize as dz
from . import eigensolve as es
from . import hormander as hm
from . import poincare as pc
from . import quasikahler as qk
from . import vectorfield as vf

log = logging.getLogger("spectralflex")

SWEEP_SCHEMA = "# schema: sweep v1"
SWEEP_COLUMNS = ["phi_max", "delta", "inv_phi_norm", "K", "lambda1",
                 "iterations", "residual", "chain_min_slack"]


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class ExperimentConfig:
    preset: str = "t4-d1"
    N: int = 16
    phi_max: tuple = (1.0, 2.0, 4.0, 8.0)
    delta: float = float(np.pi / 8)
    p: float = 1.8
    eig_tol: float = es.REL_TOL
    eig_maxiter: int = es.ITER_CAP
    max_depth: int = 6
    samples: int = 2000
    test_functions: int = 100
    sv_tol: float = hm.SV_TOL
    singular_tol: float = 1e-8
    out_dir: str = "out"
    seed: int = 0

    def __post_init__(self):
        if self.preset not in vf.PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; "
                              f"choose from {', '.join(vf.PRESETS)}")
        if self.N < 4 or self.N % 2:
            raise ConfigError("N must be even and >= 4")
        if not self.phi_max or any(v < 1 for v in self.phi_max):
            raise ConfigError("phi_max values must be >= 1")
        if any(b <= a for a, b in zip(self.phi_max, self.phi_max[1:])):
            raise ConfigError("phi_max values must be strictly increasing")
        if self.preset == "t4-d2-singular" and not self.delta > 0:
            raise ConfigError("delta must be > 0: this preset has a "
                              "nonempty singular set")
        if not 1 < self.p < 2:
            raise ConfigError("p must lie in (1, 2)")
        if self.seed < 0:
            raise ConfigError("seed must be a non-negative integer")

    def resolved(self) -> dict:
        d = asdict(self)
        d["phi_max"] = list(self.phi_max)
        return d


DEFAULTS = ExperimentConfig().resolved()

_ANGLE = re.compile(r"^\s*(?:(?P<num>[0-9.eE+-]+)\s*\*?\s*)?pi"
                    r"(?:\s*/\s*(?P<den>[0-9.eE+-]+))?\s*$")


def parse_real(text: str) -> float:
    m = _ANGLE.match(text)
    if m:
        num = float(m.group("num")) if m.group("num") else 1.0
        den = float(m.group("den")) if m.group("den") else 1.0
        return num * np.pi / den
    return float(text)


def _coerce(key: str, raw: str):
    kind = type(DEFAULTS[key])
    try:
        if key == "phi_max":
            return tuple(parse_real(v) for v in raw.split(",") if v.strip())
        if kind is int:
            return int(raw)
        if kind is float:
            return parse_real(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc


def parse_config(text: str, **overrides) -> ExperimentConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(), **overrides)


# -- stages -----------------------------------------------------------------

class _Run:
    """Shared state of one experiment; stages fill it lazily."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.checks: dict = {}
        self.timings: dict = {}
        self._cache: dict = {}

    def stage(self, name, fn):
        if name in self._cache:
            return self._cache[name]
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:  # noqa: BLE001 - re-raised with the stage name
            raise StageError(name, exc) from exc
        self.timings[name] = time.perf_counter() - t0
        log.info("%s done in %.2fs", name, self.timings[name])
        self._cache[name] = out
        return out

    @property
    def spec(self):
        return self.stage("construction", lambda: vf.preset(self.config.preset))

    @property
    def grid(self):
        return dz.make_grid(self.spec.n, self.config.N)

    @property
    def base(self):
        return qk.base_structure(self.spec.n)

    def isotropy(self):
        def run():
            pts = hm.kronecker_points(10_000, self.spec.n)
            val = qk.isotropy_check(*self.spec.fields, self.base, pts)
            self.checks["isotropic"] = val < 1e-14
            return val
        return self.stage("isotropy", run)

    def singular(self):
        def run():
            rep = hm.find_singular_set(self.spec, self.config.N,
                                       self.config.singular_tol)
            self.checks["singular_fraction_decreasing"] = rep.fraction_decreasing
            return rep
        return self.stage("singular-set", run)

    def hormander(self):
        def run():
            rep, words, _ = hm.certify(
                self.spec, self.config.max_depth, self.config.samples,
                singular=self.singular(), tol=self.config.sv_tol,
                seed=self.config.seed)
            self.checks["hormander_full_rank"] = rep.full_rank
            return rep, words
        return self.stage("hormander", run)

    def field_values(self):
        return self.stage("field-values", lambda: dz.field_values(
            self.grid, self.spec.fields))

    def tests(self):
        return self.stage("test-functions", lambda: pc.seeded_test_functions(
            self.grid, self.config.test_functions, self.config.seed))

    def point(self, phi_max: float) -> dict:
        """Bump, metric, operator, lambda_1 and chain check at one phi_max."""
        def run():
            cfg = self.config
            bump = qk.build_bump(self.singular(), cfg.delta, phi_max, self.grid)
            metric = qk.metric_field(self.grid, self.spec.fields, bump.values,
                                     self.base)
            A = dz.assemble_laplace_beltrami(self.grid, metric)
            spec = es.lowest_eigenpairs(A, 1, tol=cfg.eig_tol,
                                        maxiter=cfg.eig_maxiter, seed=cfg.seed)
            vals = self.field_values()
            K = pc.sup_field_norm(self.spec.fields, self.grid, vals)
            ipn = qk.inv_phi_norm(bump.values, cfg.p, self.grid)
            slacks = []
            violations = 0
            for u in self.tests():
                rep = pc.verify_estimate_chain(
                    self.grid, self.spec.fields, metric, bump.values, u,
                    cfg.p, K=K, values=vals, operator=A)
                slacks.append(rep.slack / rep.right if rep.right else 0.0)
                violations += not rep.ok
            return {
                "phi_max": float(phi_max),
                "delta": float(cfg.delta),
                "inv_phi_norm": ipn,
                "K": K,
                "lambda1": spec.lambda1,
                "iterations": spec.iterations,
                "residual": float(spec.residuals[0]),
                "chain_min_slack": float(min(slacks)) if slacks else 0.0,
                "chain_violations": violations,
                "det_defect": metric.max_det_defect(),
                "bound_times_Cp2": pc.lambda1_lower_bound(
                    1.0, len(self.spec.fields), K, ipn),
            }
        return self.stage(f"phi_max={phi_max!r}", run)

    def poincare(self):
        def run():
            return pc.estimate_constant(
                self.grid, self.spec.fields, 2, 2, self.tests(),
                eig_tol=self.config.eig_tol, seed=self.config.seed)
        return self.stage("poincare", run)


def _check_sweep(rows) -> list:
    bad = []
    for a, b in zip(rows, rows[1:]):
        if not b["lambda1"] > a["lambda1"]:
            bad.append(f"lambda1 not increasing: phi_max {a['phi_max']} -> "
                       f"{b['phi_max']} ({a['lambda1']:.10g} -> "
                       f"{b['lambda1']:.10g})")
        if not b["inv_phi_norm"] < a["inv_phi_norm"]:
            bad.append(f"inv_phi_norm not decreasing: phi_max {a['phi_max']}"
                       f" -> {b['phi_max']}")
    return bad


def write_sweep_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(SWEEP_SCHEMA + "\n")
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([repr(r[c]) if isinstance(r[c], float) else r[c]
                        for c in SWEEP_COLUMNS])


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


COMMANDS = ("verify-hormander", "singular-set", "lambda1", "sweep",
            "poincare", "all")


def run_experiment(config: ExperimentConfig, command: str = "all",
                   out_dir: Optional[Path] = None) -> dict:
    """Run ``command``'s stages, write report files, return the summary.

    ``summary["ok"]`` is true iff every invariant check passed.
    """
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    out = Path(out_dir or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    run = _Run(config)
    summary: dict = {"command": command, "config": config.resolved()}
    try:
        summary["preset"] = run.spec.name
        summary["isotropy_max"] = run.isotropy()
        if command in ("singular-set", "verify-hormander", "all", "lambda1",
                       "sweep"):
            summary["singular_set"] = run.singular().to_json()
        if command in ("verify-hormander", "all"):
            rep, words = run.hormander()
            hj = rep.to_json()
            hj["words"] = len(words)
            _dump(out / "hormander.json", hj)
            summary["hormander"] = {k: hj[k] for k in
                                    ("points_sampled", "min_rank", "depth_used",
                                     "sv_threshold", "words")}
        if command in ("lambda1", "sweep", "all"):
            phis = config.phi_max if command != "lambda1" else config.phi_max[:1]
            rows = [run.point(v) for v in phis]
            summary["points"] = rows
            summary["lambda1"] = rows[0]["lambda1"]
            run.checks["det_invariant"] = all(r["det_defect"] < 1e-10
                                              for r in rows)
            run.checks["chain_inequality"] = all(r["chain_violations"] == 0
                                                 for r in rows)
            if command in ("sweep", "all") and len(rows) > 1:
                write_sweep_csv(out / "sweep.csv", rows)
                problems = _check_sweep(rows)
                summary["sweep_problems"] = problems
                run.checks["sweep_monotone"] = not problems
            elif command == "sweep":
                raise StageError("sweep", ConfigError(
                    "a sweep needs at least two phi_max values"))
        if command in ("poincare", "all"):
            rep = run.poincare()
            rep.write_csv(out / "poincare.csv")
            summary["poincare"] = rep.to_json()
            run.checks["poincare_no_violations"] = (
                rep.violations == 0 and not rep.witnesses)
    except StageError as exc:
        summary["error"] = {"stage": exc.stage, "message": str(exc.cause)}
        run.checks["completed"] = False
    summary["checks"] = run.checks
    summary["ok"] = all(run.checks.values())
    _dump(out / "summary.json", summary)
    return summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="spectralflex",
        description="Hoermander distributions on T^2 x M and lambda_1 of "
                    "deformed quasi-Kaehler metrics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=False,
                       help="flat key = value config file")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="overrides the config seed")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.config is not None:
            config = load_config(args.config, seed=args.seed)
        else:
            config = parse_config("", seed=args.seed)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    summary = run_experiment(config, args.command, args.out)
    if "error" in summary:
        print(f"error in stage {summary['error']['stage']}: "
              f"{summary['error']['message']}", file=sys.stderr)
    for msg in summary.get("sweep_problems", []):
        print(msg, file=sys.stderr)
    failed = [k for k, v in summary["checks"].items() if not v]
    if failed:
        print("failed checks: " + ", ".join(failed), file=sys.stderr)
    return 0 if summary["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
