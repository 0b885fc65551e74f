"""Full time-domain integration of the nonlinear Dirac equation
i u_t - H u + g(u ubar) beta u = 0 by Strang splitting, with conservation
monitors, mode extraction along the bound-state families, and scattering
diagnostics for the radiation component.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .bound import (BoundStateFamily, FieldOutsideChartError, Nonlinearity,
                    decompose_field, scalar_invariant)
from .grid import (Grid, NormSpec, SpinorField, herm, load_field, save_field,
                   weighted_norm)
from .spectral import (PotentialSpec, SpectralData, apply_H, free_evolve)


@dataclass
class SimConfig:
    n: int
    L: float
    mass: float
    potential: PotentialSpec
    nonlinearity: tuple
    z0: tuple = ()                    # complex amplitude per discrete mode
    pulse_amplitude: float = 0.0      # optional radiation pulse
    pulse_width: float = 1.5
    pulse_momentum: tuple = (0.0, 0.0, 0.0)
    seed: int = 0
    dt: float = 0.01
    T: float = 10.0
    output_stride: int = 10           # steps between recorded samples
    absorber: bool = False
    absorber_width: float = 0.15      # fraction of the box, per side
    decomposition_radius: float = 3.0  # admissible ||u(0)||_{H^4}
    family_amplitudes: tuple = (1e-3, 2e-3, 3.5e-3, 6e-3, 1e-2, 3e-2, 0.1)
    dense_spectrum: bool = True

    def __post_init__(self):
        if self.dt <= 0 or self.T <= 0:
            raise ValueError("dt and T must be positive")
        if self.dt > 0.1 / self.mass:
            raise ValueError(
                f"dt={self.dt} beyond the splitting stability default "
                f"0.1/mass = {0.1 / self.mass}")
        if not 0 < self.absorber_width < 0.5:
            raise ValueError("absorber width must be a fraction in (0, 0.5)")

    def to_json(self) -> str:
        doc = {
            "n": self.n, "L": self.L, "mass": self.mass,
            "potential": [
                {"amplitude_re": b.amplitude.real.tolist(),
                 "amplitude_im": b.amplitude.imag.tolist(),
                 "center": list(b.center), "width": b.width}
                for b in self.potential.bumps],
            "nonlinearity": list(self.nonlinearity),
            "z0": [[complex(z).real, complex(z).imag] for z in self.z0],
            "pulse_amplitude": self.pulse_amplitude,
            "pulse_width": self.pulse_width,
            "pulse_momentum": list(self.pulse_momentum),
            "seed": self.seed, "dt": self.dt, "T": self.T,
            "output_stride": self.output_stride,
            "absorber": self.absorber,
            "absorber_width": self.absorber_width,
            "decomposition_radius": self.decomposition_radius,
            "family_amplitudes": list(self.family_amplitudes),
            "dense_spectrum": self.dense_spectrum,
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        from .spectral import PotentialBump
        doc = json.loads(text)
        bumps = tuple(
            PotentialBump(np.array(b["amplitude_re"])
                          + 1j * np.array(b["amplitude_im"]),
                          tuple(b["center"]), b["width"])
            for b in doc["potential"])
        return cls(n=doc["n"], L=doc["L"], mass=doc["mass"],
                   potential=PotentialSpec(bumps),
                   nonlinearity=tuple(doc["nonlinearity"]),
                   z0=tuple(complex(re, im) for re, im in doc["z0"]),
                   pulse_amplitude=doc["pulse_amplitude"],
                   pulse_width=doc["pulse_width"],
                   pulse_momentum=tuple(doc["pulse_momentum"]),
                   seed=doc["seed"], dt=doc["dt"], T=doc["T"],
                   output_stride=doc["output_stride"],
                   absorber=doc["absorber"],
                   absorber_width=doc["absorber_width"],
                   decomposition_radius=doc["decomposition_radius"],
                   family_amplitudes=tuple(doc["family_amplitudes"]),
                   dense_spectrum=doc["dense_spectrum"])


def mass_functional(u: SpinorField) -> float:
    """Q(u) = ||u||^2, conserved by the unitary splitting."""
    return u.norm() ** 2


def energy_functional(sd: SpectralData, nl: Nonlinearity,
                      u: SpinorField) -> float:
    """Conserved Hamiltonian <H u, u*> - int G(u ubar)."""
    kin = herm(apply_H(sd, u), u).real
    s = scalar_invariant(u.data)
    return kin - float(np.sum(nl.G(s)) * u.grid.cell_volume)


class StrangPropagator:
    """Cached substep data for N(dt/2) V(dt/2) D(dt) V(dt/2) N(dt/2)."""

    def __init__(self, sd: SpectralData, nl: Nonlinearity, dt: float):
        self.sd, self.nl, self.dt = sd, nl, dt
        if sd.potential.is_zero:
            self.expV = None
        else:
            V = sd.V  # (n, n, n, 4, 4) Hermitian
            w, U = np.linalg.eigh(V)
            ph = np.exp(-0.5j * dt * w)
            self.expV = np.einsum("...ik,...k,...jk->...ij", U, ph,
                                  np.conj(U))

    def _nonlinear_half(self, u: np.ndarray) -> np.ndarray:
        if len(self.nl.coeffs) == 1 and self.nl.coeffs[0] == 0.0:
            return u
        s = scalar_invariant(u)
        ph = np.exp(0.5j * self.dt * self.nl.g(s))
        out = u.copy()
        out[..., :2] *= ph[..., None]
        out[..., 2:] *= np.conj(ph)[..., None]
        return out

    def step(self, u: SpinorField) -> SpinorField:
        d = self._nonlinear_half(u.data)
        if self.expV is not None:
            d = np.einsum("...ij,...j->...i", self.expV, d)
        d = free_evolve(SpinorField(u.grid, d), self.dt, self.sd.mass).data
        if self.expV is not None:
            d = np.einsum("...ij,...j->...i", self.expV, d)
        d = self._nonlinear_half(d)
        return SpinorField(u.grid, d)


def strang_step(sd: SpectralData, nl: Nonlinearity, u: SpinorField,
                dt: float) -> SpinorField:
    """One Strang step; the substep cache is kept on the spectral data."""
    cache = getattr(sd, "_strang_cache", None)
    if cache is None or cache[0] != (dt, nl.coeffs):
        cache = ((dt, nl.coeffs), StrangPropagator(sd, nl, dt))
        sd._strang_cache = cache
    return cache[1].step(u)


def absorber_mask(grid: Grid, width_fraction: float) -> np.ndarray:
    """Smooth cosine ramp to zero over the outer fraction of each axis."""
    edge = (1.0 - width_fraction) * grid.L
    ramp = np.ones_like(grid.x1)
    out = np.abs(grid.x1) > edge
    ramp[out] = np.cos(
        0.5 * np.pi * (np.abs(grid.x1[out]) - edge)
        / (width_fraction * grid.L)) ** 2
    m = np.ones((grid.n, grid.n, grid.n))
    for axis in range(3):
        shape = [1, 1, 1]
        shape[axis] = grid.n
        m = m * ramp.reshape(shape)
    return m


@dataclass
class TimeSeries:
    t: np.ndarray
    z: np.ndarray                     # (n_t, n_modes)
    mass: np.ndarray
    energy: np.ndarray
    eta_local: np.ndarray             # ||eta||_{L^{2,-10}}
    absorbed: np.ndarray              # cumulative absorbed mass
    rho_plus: np.ndarray = None       # tail-average |z_j|
    eta_plus: SpinorField = None      # scattered profile estimate
    eta_snapshots: list = field(default_factory=list)  # (t, SpinorField)

    @property
    def abs_z(self):
        return np.abs(self.z)

    def to_csv(self) -> str:
        import csv
        import io
        buf = io.StringIO()
        wr = csv.writer(buf)
        nm = self.z.shape[1]
        head = ["t"] + [f"abs_z{j + 1}" for j in range(nm)] \
            + ["mass", "energy", "eta_local", "absorbed"]
        wr.writerow(head)
        for i, t in enumerate(self.t):
            row = [f"{t:.10g}"]
            row += [f"{abs(self.z[i, j]):.15g}" for j in range(nm)]
            row += [f"{self.mass[i]:.15g}", f"{self.energy[i]:.15g}",
                    f"{self.eta_local[i]:.15g}", f"{self.absorbed[i]:.15g}"]
            wr.writerow(row)
        return buf.getvalue()


def initial_field(cfg: SimConfig, sd: SpectralData,
                  family: BoundStateFamily) -> SpinorField:
    g = sd.grid
    data = np.zeros((g.n, g.n, g.n, 4), dtype=complex)
    for j, z in enumerate(cfg.z0):
        if z != 0:
            data += family.Q(j, complex(z)).data
    if cfg.pulse_amplitude != 0.0:
        rng = np.random.default_rng(cfg.seed)
        amp = rng.normal(size=4) + 1j * rng.normal(size=4)
        amp *= cfg.pulse_amplitude / np.linalg.norm(amp)
        k = np.array(cfg.pulse_momentum)
        envelope = np.exp(-g.r2 / (2 * cfg.pulse_width ** 2))
        phase = np.exp(1j * np.tensordot(g.x, k, axes=([-1], [0])))
        from .spectral import project_continuous
        pulse = project_continuous(
            sd, SpinorField(g, (envelope * phase)[..., None] * amp))
        data += pulse.data
    return SpinorField(g, data)


class ChartExitError(RuntimeError):
    def __init__(self, msg, checkpoint=None):
        super().__init__(msg)
        self.checkpoint = checkpoint


def prepare(cfg: SimConfig):
    """Spectral data, nonlinearity, and bound-state family for a config."""
    from .bound import build_family
    from .spectral import discrete_spectrum
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sd = discrete_spectrum(Grid(cfg.n, cfg.L), cfg.mass, cfg.potential,
                               dense=cfg.dense_spectrum)
    nl = Nonlinearity(cfg.nonlinearity)
    family = build_family(sd, nl, cfg.family_amplitudes)
    return sd, nl, family


def run_simulation(cfg: SimConfig, sd=None, nl=None, family=None,
                   u0=None, checkpoint_path=None, start_step=0,
                   keep_snapshots=3) -> TimeSeries:
    if sd is None or family is None:
        sd, nl, family = prepare(cfg)
    if nl is None:
        nl = Nonlinearity(cfg.nonlinearity)
    if u0 is None:
        u0 = initial_field(cfg, sd, family)
        h4 = weighted_norm(u0, NormSpec(k=4.0))
        if h4 > cfg.decomposition_radius:
            raise ValueError(
                f"||u(0)||_H4 = {h4:.3e} beyond the decomposition radius")
    mask = absorber_mask(sd.grid, cfg.absorber_width) if cfg.absorber \
        else None

    n_steps = int(round(cfg.T / cfg.dt))
    u = u0
    ts, zs, ms, es, els, absb = [], [], [], [], [], []
    absorbed_total = 0.0
    snapshots = []

    def record(step):
        t = step * cfg.dt
        try:
            z, eta = decompose_field(sd, nl, family,
                                     SpinorField(sd.grid, u.data.copy()))
        except FieldOutsideChartError as exc:
            ckpt = None
            if checkpoint_path is not None:
                ckpt = save_checkpoint(checkpoint_path, cfg, u, step)
            raise ChartExitError(
                f"decomposition chart exit at t={t}: {exc}", ckpt)
        ts.append(t)
        zs.append(z)
        ms.append(mass_functional(u))
        es.append(energy_functional(sd, nl, u))
        els.append(weighted_norm(eta, NormSpec(s=-10.0)))
        absb.append(absorbed_total)
        snapshots.append((t, eta))
        if len(snapshots) > keep_snapshots:
            snapshots.pop(0)

    record(start_step)
    for step in range(start_step, n_steps):
        u = strang_step(sd, nl, u, cfg.dt)
        if mask is not None:
            # absorb only the continuous component, keep the bookkeeping
            disc = np.zeros_like(u.data)
            for j in range(sd.n_modes):
                disc += herm(u, sd.eigenfunctions[j]) \
                    * sd.eigenfunctions[j].data
            eta_part = mask[..., None] * (u.data - disc)
            before = float(np.sum(np.abs(u.data) ** 2) * sd.grid.cell_volume)
            u = SpinorField(sd.grid, disc + eta_part)
            after = float(np.sum(np.abs(u.data) ** 2) * sd.grid.cell_volume)
            absorbed_total += before - after
        if (step + 1) % cfg.output_stride == 0 or step + 1 == n_steps:
            record(step + 1)

    series = TimeSeries(np.array(ts), np.array(zs), np.array(ms),
                        np.array(es), np.array(els), np.array(absb),
                        eta_snapshots=snapshots)
    tail = max(1, len(ts) // 4)
    series.rho_plus = np.mean(np.abs(series.z[-tail:]), axis=0)
    t_last, eta_last = snapshots[-1]
    series.eta_plus = free_evolve(eta_last, -t_last, sd.mass)
    series.final_field = u
    return series


def save_checkpoint(path, cfg: SimConfig, u: SpinorField, step: int):
    import pathlib
    p = pathlib.Path(path)
    p.mkdir(parents=True, exist_ok=True)
    (p / "config.json").write_text(cfg.to_json())
    (p / "state.json").write_text(json.dumps({"step": step}))
    save_field(u, p / "field.nldf")
    return str(p)


def resume_simulation(path, sd=None, nl=None, family=None,
                      **kwargs) -> TimeSeries:
    import pathlib
    p = pathlib.Path(path)
    cfg = SimConfig.from_json((p / "config.json").read_text())
    step = json.loads((p / "state.json").read_text())["step"]
    u = load_field(p / "field.nldf")
    if sd is None or family is None:
        sd, nl, family = prepare(cfg)
    return run_simulation(cfg, sd=sd, nl=nl, family=family, u0=u,
                          start_step=step, **kwargs)


def scattering_diagnostic(sd: SpectralData, series: TimeSeries,
                          model=None, z_late=None) -> dict:
    """Cauchy differences of the back-evolved radiation, the local-decay
    trend, and optionally the g = eta + Y split against the quasi-static
    radiation profile."""
    snaps = series.eta_snapshots
    if len(snaps) < 3:
        raise ValueError("need at least three late-time snapshots")
    vs = [free_evolve(eta, -t, sd.mass) for t, eta in snaps]
    cauchy = [weighted_norm(vs[i + 1] - vs[i], NormSpec(k=4.0))
              for i in range(len(vs) - 1)]
    report = {
        "cauchy_differences": cauchy,
        "cauchy_decreasing": all(b <= a * (1 + 1e-9)
                                 for a, b in zip(cauchy, cauchy[1:])),
        "eta_local_trend": series.eta_local,
        "eta_local_decaying": bool(series.eta_local[-1]
                                   <= np.max(series.eta_local) + 1e-30),
    }
    if model is not None and z_late is not None:
        from .fgr import build_Y
        t_last, eta_last = snaps[-1]
        Y = build_Y(model, z_late)
        g_var = eta_last + Y
        report["g_var_local"] = weighted_norm(g_var, NormSpec(s=-10.0))
        report["Y_local"] = weighted_norm(Y, NormSpec(s=-10.0))
        report["eta_last_local"] = weighted_norm(eta_last,
                                                 NormSpec(s=-10.0))
    return report
