"""Command-line orchestration: spectrum -> bound states -> resonance sets
-> damping rates -> reduced / full dynamics, with a hashed artifact
manifest.  Exit codes: 0 ok, 2 config error, 3 hypothesis-check failure,
4 numerical failure."""
from __future__ import annotations

import argparse
import hashlib
import json
import pathlib
import sys
import time
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .bound import (AmplitudeTooLargeError, FieldOutsideChartError,
                    Nonlinearity, bound_family_scan, build_family,
                    scan_to_csv)
from .combinatorics import (EnumerationBlowupError, ModeVector, check_H4,
                            enumerate_sets, sets_to_json)
from .config import ConfigError, ExperimentConfig, canonical_config, \
    parse_config
from .fgr import (DegeneratePairError, StiffnessError, build_fgr_model,
                  integrate_reduced, lyapunov_report, model_to_json)
from .grid import Grid, save_field
from .resolvent import NearResonanceError
from .sim import (ChartExitError, prepare, run_simulation,
                  scattering_diagnostic)
from .spectral import HypothesisViolationError, discrete_spectrum

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HYPOTHESIS = 3
EXIT_NUMERICAL = 4

STAGES = ("spectrum", "bound", "sets", "rates", "reduced", "full")
_DEPS = {
    "spectrum": (),
    "bound": ("spectrum",),
    "sets": ("spectrum",),
    "rates": ("spectrum", "sets"),
    "reduced": ("spectrum", "sets", "rates"),
    "full": ("spectrum", "bound"),
}


class HypothesisFailure(RuntimeError):
    """An (H3)/(H4)/(H5)-style check failed; the report was written."""


@dataclass
class ExperimentPlan:
    stages: tuple
    config_path: str
    out_dir: str
    seed: int | None = None
    stage_tols: dict = field(default_factory=dict)

    def __post_init__(self):
        for s in self.stages:
            if s not in STAGES:
                raise ValueError(f"unknown stage {s!r}")
        closed = []
        for s in STAGES:          # fixed dependency order
            if s in self.stages or any(
                    s in _DEPS[t] for t in self.stages):
                closed.append(s)
        # transitive closure in fixed order
        changed = True
        want = set(closed)
        while changed:
            changed = False
            for s in list(want):
                for d in _DEPS[s]:
                    if d not in want:
                        want.add(d)
                        changed = True
        self.stages = tuple(s for s in STAGES if s in want)


def _sha256(path: pathlib.Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class _Runner:
    def __init__(self, plan: ExperimentPlan, cfg: ExperimentConfig):
        self.plan = plan
        self.cfg = cfg
        self.sim = cfg.sim
        if plan.seed is not None:
            self.sim.seed = plan.seed
        self.out = pathlib.Path(plan.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = {
            "versions": self._versions(),
            "config_sha256": hashlib.sha256(
                canonical_config(cfg).encode()).hexdigest(),
            "seed": self.sim.seed,
            "stages": {},
            "scalars": {},
            "files": {},
        }
        self.sd = None
        self.family = None
        self.model = None
        self.nl = Nonlinearity(self.sim.nonlinearity)

    @staticmethod
    def _versions():
        import scipy
        from . import __version__
        return {"nldirac": __version__, "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": sys.version.split()[0]}

    def _tol(self, key):
        if key in self.plan.stage_tols:
            return self.plan.stage_tols[key]
        return self.cfg.tolerances[key]

    def _write(self, name: str, text: str | bytes):
        p = self.out / name
        if isinstance(text, str):
            p.write_text(text)
        else:
            p.write_bytes(text)
        self.manifest["files"][name] = _sha256(p)

    def run(self):
        (self.out / "config.canonical.json").write_text(
            canonical_config(self.cfg))
        self.manifest["files"]["config.canonical.json"] = _sha256(
            self.out / "config.canonical.json")
        try:
            for stage in self.plan.stages:
                t0 = time.perf_counter()
                getattr(self, "stage_" + stage)()
                self.manifest["stages"][stage] = {
                    "wall_time_s": time.perf_counter() - t0}
        finally:
            self._write_manifest()

    def _write_manifest(self):
        text = json.dumps(self.manifest, indent=2, sort_keys=True)
        (self.out / "manifest.json").write_text(text)

    # -- stages -------------------------------------------------------------

    def stage_spectrum(self):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            self.sd = discrete_spectrum(
                Grid(self.sim.n, self.sim.L), self.sim.mass,
                self.sim.potential, eig_tol=self._tol("eig_tol"),
                dense=self.sim.dense_spectrum)
        lines = ["j,e_j"]
        for j, e in enumerate(self.sd.eigenvalues):
            lines.append(f"{j},{e:.15g}")
        self._write("spectrum.csv", "\n".join(lines) + "\n")
        self.manifest["scalars"]["eigenvalues"] = [
            float(e) for e in self.sd.eigenvalues]

    def stage_bound(self):
        self.family = build_family(self.sd, self.nl,
                                   self.sim.family_amplitudes)
        slopes = {}
        scan_amps = tuple(a for a in self.sim.family_amplitudes if a <= 0.01)
        if len(scan_amps) >= 3:
            for j in range(self.sd.n_modes):
                rep = bound_family_scan(self.sd, self.nl, j, scan_amps)
                self._write(f"bound_mode{j}.csv", scan_to_csv(rep))
                slopes[str(j)] = {"slope_q": rep["slope_q"],
                                  "slope_E": rep["slope_E"]}
        self.manifest["scalars"]["bound_slopes"] = slopes
        self.manifest["scalars"]["family_radius"] = float(self.family.a0)

    def _mode_vector(self) -> ModeVector:
        if self.cfg.mode_vector_override is not None:
            e = tuple(Fraction(s) for s in self.cfg.mode_vector_override)
            return ModeVector(e, Fraction(self.sim.mass))
        modes = self.cfg.modes or tuple(range(self.sd.n_modes))
        e = tuple(self.sd.eigenvalues[j] for j in modes)
        return ModeVector(e, self.sim.mass)

    def stage_sets(self):
        mv = self._mode_vector()
        h4 = check_H4(mv)
        self._write("h4.json", json.dumps(
            {"passed": bool(h4.passed),
             "n": mv.n, "N": mv.N,
             "first_condition_ok": bool(h4.first_condition_ok),
             "second_condition_ok": bool(h4.second_condition_ok),
             "margin1": None if h4.margin1 is None else float(h4.margin1),
             "margin2": None if h4.margin2 is None else float(h4.margin2)},
            indent=2))
        if not h4.passed:
            raise HypothesisFailure("(H4) check failed; see h4.json")
        sets = enumerate_sets(mv, self.cfg.ball_radius or (2 * mv.N + 4))
        self._write("sets.json", sets_to_json(sets))
        self.manifest["scalars"]["n_modes_selected"] = mv.n
        self.manifest["scalars"]["M_min_size"] = len(sets.M_min)
        self.sets = sets

    def stage_rates(self):
        modes = self.cfg.modes or tuple(range(self.sd.n_modes))
        self.model = build_fgr_model(
            self.sd, self.nl, modes,
            ball_radius=self.cfg.ball_radius,
            gamma_threshold=self.cfg.gamma_threshold,
            order=self._tol("delta_order"),
            pv_kwargs=dict(n_outer=self._tol("pv_n_outer"),
                           n_inner=self._tol("pv_n_inner"),
                           order=self._tol("pv_order")))
        self._write("rates.json", model_to_json(self.model))
        self.manifest["scalars"]["Gamma"] = {
            str(p): float(g) for p, g in self.model.rates.items()}
        if not self.model.h5.passed:
            raise HypothesisFailure("(H5) check failed; see rates.json")

    def stage_reduced(self):
        modes = self.cfg.modes or tuple(range(self.sd.n_modes))
        z0 = np.array([self.sim.z0[j] if j < len(self.sim.z0) else 0.0
                       for j in modes], dtype=complex)
        traj = integrate_reduced(self.model, z0, self.sim.T,
                                 self.sim.dt * self.sim.output_stride,
                                 rtol=self._tol("reduced_rtol"),
                                 atol=self._tol("reduced_atol"))
        self._write("reduced.csv", traj.to_csv())
        rep = lyapunov_report(self.model, traj)
        self._write("reduced_lyapunov.json", json.dumps(
            {"mean_residual": rep["mean_residual"],
             "relative_residual": rep["relative_residual"],
             "budget": rep["budget"],
             "budget_constant": rep["budget_constant"]}, indent=2))
        self.manifest["scalars"]["reduced_final_abs_z"] = [
            float(a) for a in np.abs(traj.z[-1])]

    def stage_full(self):
        series = run_simulation(
            self.cfg.sim, sd=self.sd, nl=self.nl, family=self.family,
            checkpoint_path=self.out / "checkpoint")
        self._write("timeseries.csv", series.to_csv())
        save_field(series.final_field, self.out / "final_field.nldf")
        self.manifest["files"]["final_field.nldf"] = _sha256(
            self.out / "final_field.nldf")
        diag = scattering_diagnostic(self.sd, series)
        self._write("scattering.json", json.dumps(
            {"cauchy_differences":
                 [float(c) for c in diag["cauchy_differences"]],
             "cauchy_decreasing": bool(diag["cauchy_decreasing"]),
             "eta_local_decaying": bool(diag["eta_local_decaying"])},
            indent=2))
        self.manifest["scalars"]["rho_plus"] = [
            float(r) for r in series.rho_plus]


def run_plan(plan: ExperimentPlan) -> dict:
    """Execute a plan; returns the manifest dict.  Raises on failure after
    preserving partial results."""
    cfg = parse_config(plan.config_path)
    runner = _Runner(plan, cfg)
    runner.run()
    return runner.manifest


def _parse_stage_tols(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--stage-tol expects KEY=VAL, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = int(v) if v.lstrip("+-").isdigit() else float(v)
        except ValueError:
            raise ConfigError(f"--stage-tol value not numeric: {item!r}")
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="nldirac",
        description="nonlinear Dirac mode-damping laboratory")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in STAGES + ("all",):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--stage-tol", action="append", default=[],
                       metavar="KEY=VAL")
    args = ap.parse_args(argv)

    stages = STAGES if args.command == "all" else (args.command,)
    try:
        plan = ExperimentPlan(stages, args.config, args.out,
                              seed=args.seed,
                              stage_tols=_parse_stage_tols(args.stage_tol))
        run_plan(plan)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HypothesisFailure, HypothesisViolationError,
            DegeneratePairError) as exc:
        print(f"hypothesis check failed: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except (AmplitudeTooLargeError, FieldOutsideChartError, ChartExitError,
            StiffnessError, NearResonanceError, EnumerationBlowupError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
