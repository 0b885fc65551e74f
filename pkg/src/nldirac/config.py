"""Experiment configuration: a small JSON schema with strict validation,
defaults, and line-anchored error reporting."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .algebra import BETA, SIGMA3
from .sim import SimConfig
from .spectral import PotentialBump, PotentialSpec

# the 4x4 spin matrix diag(1, -1, 1, -1) used by the reference potentials
SIGMA3_4 = np.kron(np.eye(2), SIGMA3)

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Schema violation, anchored to a source line when possible."""

    def __init__(self, message, key=None, line=None):
        loc = ""
        if key is not None:
            loc = f" (key {key!r}"
            loc += f", line {line})" if line is not None else ")"
        super().__init__(message + loc)
        self.key = key
        self.line = line


DEFAULT_TOLERANCES = {
    "newton_tol": 1e-10,
    "lsqr_tol": 1e-12,
    "eig_tol": 1e-8,
    "resolvent_rtol": 1e-8,
    "delta_order": 10,
    "pv_n_outer": 8,
    "pv_n_inner": 6,
    "pv_order": 10,
    "reduced_rtol": 1e-10,
    "reduced_atol": 1e-12,
}

_SCHEMA = {
    "schema_version": int,
    "grid": dict,
    "mass": (int, float),
    "potential": list,
    "nonlinearity": list,
    "modes": list,
    "mode_vector_override": (list, type(None)),
    "z0": list,
    "pulse": dict,
    "time": dict,
    "absorber": dict,
    "family_amplitudes": list,
    "decomposition_radius": (int, float),
    "ball_radius": (int, type(None)),
    "gamma_threshold": (int, float),
    "seed": int,
    "dense_spectrum": (bool, type(None)),
    "tolerances": dict,
}

_SUBKEYS = {
    "grid": {"n": int, "L": (int, float)},
    "pulse": {"amplitude": (int, float), "width": (int, float),
              "momentum": list},
    "time": {"dt": (int, float), "T": (int, float), "output_stride": int},
    "absorber": {"enabled": bool, "width": (int, float)},
    "bump": {"beta": (int, float), "identity": (int, float),
             "sigma3": (int, float), "matrix_re": list, "matrix_im": list,
             "center": list, "width": (int, float)},
}


@dataclass
class ExperimentConfig:
    sim: SimConfig
    modes: tuple
    mode_vector_override: tuple | None
    ball_radius: int | None
    gamma_threshold: float
    tolerances: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _line_of(text: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, ln in enumerate(text.splitlines(), start=1):
        if needle in ln:
            return i
    return None


def _check_keys(doc: dict, allowed: dict, text: str, scope: str = ""):
    for k in doc:
        if k not in allowed:
            raise ConfigError(f"unknown configuration key in {scope or 'top level'}",
                              key=k, line=_line_of(text, k))
    for k, v in doc.items():
        if not isinstance(v, allowed[k]) or (allowed[k] is int
                                             and isinstance(v, bool)):
            raise ConfigError(
                f"wrong type for {scope + '.' if scope else ''}{k}: "
                f"got {type(v).__name__}",
                key=k, line=_line_of(text, k))


def _parse_bump(doc: dict, text: str) -> PotentialBump:
    _check_keys(doc, _SUBKEYS["bump"], text, scope="potential bump")
    if "width" not in doc:
        raise ConfigError("potential bump missing 'width'", key="width",
                          line=_line_of(text, "potential"))
    width = float(doc["width"])
    if width <= 0:
        raise ConfigError("potential bump width must be positive",
                          key="width", line=_line_of(text, "width"))
    if "matrix_re" in doc or "matrix_im" in doc:
        re = np.array(doc.get("matrix_re",
                              np.zeros((4, 4)).tolist()), dtype=float)
        im = np.array(doc.get("matrix_im",
                              np.zeros((4, 4)).tolist()), dtype=float)
        if re.shape != (4, 4) or im.shape != (4, 4):
            raise ConfigError("bump matrix must be 4x4", key="matrix_re",
                              line=_line_of(text, "matrix_re"))
        amp = re + 1j * im
    else:
        amp = (doc.get("beta", 0.0) * BETA
               + doc.get("identity", 0.0) * np.eye(4)
               + doc.get("sigma3", 0.0) * SIGMA3_4).astype(complex)
    center = tuple(float(c) for c in doc.get("center", (0.0, 0.0, 0.0)))
    if len(center) != 3:
        raise ConfigError("bump center must have 3 components", key="center",
                          line=_line_of(text, "center"))
    return PotentialBump(amp, center, width)


def parse_config(path) -> ExperimentConfig:
    """Load, validate, and default-fill an experiment configuration."""
    try:
        text = open(path).read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON syntax error: {exc.msg}", line=exc.lineno)
    if not isinstance(doc, dict):
        raise ConfigError("top-level config must be a JSON object")
    _check_keys(doc, _SCHEMA, text)

    version = doc.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}",
                          key="schema_version",
                          line=_line_of(text, "schema_version"))
    if "mass" not in doc:
        raise ConfigError("missing required key 'mass'", key="mass")
    if "potential" not in doc:
        raise ConfigError("missing required key 'potential'",
                          key="potential")

    grid = doc.get("grid", {})
    _check_keys(grid, _SUBKEYS["grid"], text, scope="grid")
    n = int(grid.get("n", 8))
    L = float(grid.get("L", 6.0))
    if n < 4 or n % 2:
        raise ConfigError("grid.n must be an even integer >= 4", key="n",
                          line=_line_of(text, "n"))
    if L <= 0:
        raise ConfigError("grid.L must be positive", key="L",
                          line=_line_of(text, "L"))
    mass = float(doc["mass"])
    if mass <= 0:
        raise ConfigError("mass must be positive", key="mass",
                          line=_line_of(text, "mass"))

    bumps = tuple(_parse_bump(b, text) for b in doc["potential"])

    pulse = doc.get("pulse", {})
    _check_keys(pulse, _SUBKEYS["pulse"], text, scope="pulse")
    tm = doc.get("time", {})
    _check_keys(tm, _SUBKEYS["time"], text, scope="time")
    ab = doc.get("absorber", {})
    _check_keys(ab, _SUBKEYS["absorber"], text, scope="absorber")

    tol = dict(DEFAULT_TOLERANCES)
    for k, v in doc.get("tolerances", {}).items():
        if k not in DEFAULT_TOLERANCES:
            raise ConfigError("unknown tolerance key", key=k,
                              line=_line_of(text, k))
        tol[k] = type(DEFAULT_TOLERANCES[k])(v)

    z0 = tuple(complex(re, im) for re, im in doc.get("z0", []))
    dense = doc.get("dense_spectrum")
    if dense is None:
        dense = n <= 10
    try:
        sim = SimConfig(
            n=n, L=L, mass=mass, potential=PotentialSpec(bumps),
            nonlinearity=tuple(float(c) for c in
                               doc.get("nonlinearity", [1.0])),
            z0=z0,
            pulse_amplitude=float(pulse.get("amplitude", 0.0)),
            pulse_width=float(pulse.get("width", 1.5)),
            pulse_momentum=tuple(float(k) for k in
                                 pulse.get("momentum", (0.0, 0.0, 0.0))),
            seed=int(doc.get("seed", 0)),
            dt=float(tm.get("dt", 0.01)),
            T=float(tm.get("T", 10.0)),
            output_stride=int(tm.get("output_stride", 10)),
            absorber=bool(ab.get("enabled", False)),
            absorber_width=float(ab.get("width", 0.15)),
            decomposition_radius=float(doc.get("decomposition_radius", 3.0)),
            family_amplitudes=tuple(
                float(a) for a in doc.get(
                    "family_amplitudes",
                    (1e-3, 2e-3, 3.5e-3, 6e-3, 1e-2, 3e-2, 0.1))),
            dense_spectrum=bool(dense),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))

    modes = tuple(int(j) for j in doc.get("modes", []))
    override = doc.get("mode_vector_override")
    if override is not None:
        override = tuple(str(s) for s in override)
    ball = doc.get("ball_radius")
    return ExperimentConfig(
        sim=sim, modes=modes, mode_vector_override=override,
        ball_radius=None if ball is None else int(ball),
        gamma_threshold=float(doc.get("gamma_threshold", 1e-8)),
        tolerances=tol, raw=doc)


def canonical_config(cfg: ExperimentConfig) -> str:
    """Canonical re-emission; parse(canonical(parse(x))) is idempotent."""
    sim = cfg.sim
    doc = {
        "schema_version": SCHEMA_VERSION,
        "grid": {"n": sim.n, "L": sim.L},
        "mass": sim.mass,
        "potential": [
            {"matrix_re": b.amplitude.real.tolist(),
             "matrix_im": b.amplitude.imag.tolist(),
             "center": list(b.center), "width": b.width}
            for b in sim.potential.bumps],
        "nonlinearity": list(sim.nonlinearity),
        "modes": list(cfg.modes),
        "mode_vector_override": (None if cfg.mode_vector_override is None
                                 else list(cfg.mode_vector_override)),
        "z0": [[complex(z).real, complex(z).imag] for z in sim.z0],
        "pulse": {"amplitude": sim.pulse_amplitude,
                  "width": sim.pulse_width,
                  "momentum": list(sim.pulse_momentum)},
        "time": {"dt": sim.dt, "T": sim.T,
                 "output_stride": sim.output_stride},
        "absorber": {"enabled": sim.absorber, "width": sim.absorber_width},
        "family_amplitudes": list(sim.family_amplitudes),
        "decomposition_radius": sim.decomposition_radius,
        "ball_radius": cfg.ball_radius,
        "gamma_threshold": cfg.gamma_threshold,
        "seed": sim.seed,
        "dense_spectrum": sim.dense_spectrum,
        "tolerances": dict(sorted(cfg.tolerances.items())),
    }
    return json.dumps(doc, indent=2, sort_keys=False)
