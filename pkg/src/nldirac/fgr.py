"""Leading-order mode couplings, damping rates via the sphere formula,
the quasi-static radiation profile, the zeta coordinate change, and the
reduced dissipative ODE system with its Lyapunov monitor.

The reduced model lives on the amplitudes z of a selected set of discrete
modes.  Cubic couplings G_{mu nu} are extracted from the nonlinear term on
the multi-mode ansatz; each resonant pair damps at the rate
Gamma = pi <delta(H - lambda) G*, G> computed by the restricted distorted
transform.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .algebra import BETA
from .combinatorics import ModeVector, ResonanceSets
from .distorted import spectral_delta, spectral_pv
from .grid import SpinorField, pairing
from .resolvent import boundary_resolvent
from .spectral import SpectralData, project_continuous


class DegeneratePairError(RuntimeError):
    pass


class StiffnessError(RuntimeError):
    pass


@dataclass
class H5Report:
    passed: bool
    gamma_threshold: float
    min_rate: float
    rates: dict


@dataclass
class FGRModel:
    sd: SpectralData
    mode_indices: tuple
    mv: ModeVector
    sets: ResonanceSets
    e: np.ndarray                     # selected mode frequencies (float)
    couplings: dict                   # (mu, nu) -> SpinorField
    rates: dict = field(default_factory=dict)
    plus_pairings: dict = field(default_factory=dict)   # <R+ G*, G>
    minus_pairings: dict = field(default_factory=dict)  # <R- G, G*>
    pv_parts: dict = field(default_factory=dict)
    radiation_plus: dict = field(default_factory=dict)  # R+ G* profiles
    radiation_minus: dict = field(default_factory=dict)
    cross_plus: dict = field(default_factory=dict)      # (src, obs) -> value
    cross_minus: dict = field(default_factory=dict)
    freq_shift: np.ndarray = None     # Kerr coefficients lambda'_j
    z0_coeffs: dict = field(default_factory=dict)
    gamma_threshold: float = 1e-8
    h5: H5Report = None

    def __post_init__(self):
        if self.freq_shift is None:
            self.freq_shift = np.zeros(len(self.e))

    @property
    def n(self) -> int:
        return len(self.e)

    def pair_frequency(self, pair) -> float:
        mu, nu = pair
        return float(np.dot(self.e, np.asarray(nu) - np.asarray(mu)))


def leading_couplings(sd: SpectralData, nl, sets: ResonanceSets,
                      mode_indices=None) -> dict:
    """Cubic coupling fields: for (mu, nu) with |mu| + |nu| = 3, the
    coefficient of zbar^mu z^nu in P_c[g'(0) (u ubar) beta u] on the
    multi-mode ansatz u = sum_a z_a phi_a.  Higher pairs get zero."""
    n = sets.mv.n
    if mode_indices is None:
        mode_indices = tuple(range(n))
    g1 = nl.coeffs[0]
    phis = [sd.eigenfunctions[j].data for j in mode_indices]
    zero = np.zeros_like(phis[0])
    out = {}
    for mu, nu in sets.M_min:
        if sum(mu) + sum(nu) != 3:
            out[(mu, nu)] = SpinorField(sd.grid, zero.copy())
            continue
        b = next(i for i in range(n) if mu[i])
        # ordered (a, c) with e_a + e_c = nu
        acc = np.zeros_like(zero)
        for a in range(n):
            for c in range(n):
                want = tuple((a == i) + (c == i) for i in range(n))
                if want != nu:
                    continue
                scal = np.sum(phis[a] * np.conj(phis[b] @ BETA.T), axis=-1)
                acc += g1 * scal[..., None] * (phis[c] @ BETA.T)
        out[(mu, nu)] = project_continuous(sd, SpinorField(sd.grid, acc))
    return out


def fgr_rates(sd: SpectralData, model: FGRModel, order: int = 14,
              pv_kwargs=None, with_pv: bool = True) -> H5Report:
    """Damping rates Gamma = pi <delta(H - lambda) G*, G> and the PV parts
    of the full boundary-resolvent pairings.  with_pv=False leaves the PV
    parts at zero (they only rotate phases, so amplitude studies can skip
    their much costlier energy quadrature)."""
    pv_kwargs = dict(pv_kwargs or {})
    for pair, G in model.couplings.items():
        lam = model.pair_frequency(pair)
        assert abs(lam) > sd.mass, "resonance-set pair below threshold"
        Gc = SpinorField(sd.grid, np.conj(G.data))
        if G.norm() == 0.0:
            d_star, d_plain, pv_star, pv_plain = 0.0, 0.0, 0.0, 0.0
        else:
            d_star = spectral_delta(sd, Gc, lam, order=order)
            d_plain = spectral_delta(sd, G, lam, order=order)
            pv_star = spectral_pv(sd, Gc, lam, **pv_kwargs) if with_pv \
                else 0.0
            pv_plain = spectral_pv(sd, G, lam, **pv_kwargs) if with_pv \
                else 0.0
        model.rates[pair] = np.pi * d_star
        model.pv_parts[pair] = pv_star
        model.plus_pairings[pair] = pv_star + 1j * np.pi * d_star
        model.minus_pairings[pair] = pv_plain - 1j * np.pi * d_plain
    min_rate = min(model.rates.values(), default=np.inf)
    model.h5 = H5Report(min_rate > model.gamma_threshold,
                        model.gamma_threshold, min_rate, dict(model.rates))
    return model.h5


def radiation_profiles(sd: SpectralData, model: FGRModel,
                       rtol: float = 1e-8) -> None:
    """Boundary-resolvent fields R_H^+(lam) G* and R_H^-(lam) G per pair,
    plus all cross pairings used by the zeta shift and the heuristic
    variant."""
    for pair, G in model.couplings.items():
        lam = model.pair_frequency(pair)
        Gc = SpinorField(sd.grid, np.conj(G.data))
        if G.norm() == 0.0:
            model.radiation_plus[pair] = G
            model.radiation_minus[pair] = G
            continue
        model.radiation_plus[pair] = boundary_resolvent(sd, Gc, lam, "+",
                                                        rtol=rtol)
        model.radiation_minus[pair] = boundary_resolvent(sd, G, lam, "-",
                                                         rtol=rtol)
    for src in model.couplings:
        for obs, Gobs in model.couplings.items():
            model.cross_plus[(src, obs)] = pairing(
                model.radiation_plus[src], Gobs)
            model.cross_minus[(src, obs)] = pairing(
                model.radiation_minus[src],
                SpinorField(sd.grid, np.conj(Gobs.data)))


def build_fgr_model(sd, nl, mode_indices, *, ball_radius=None,
                    gamma_threshold=1e-8, freq_shift=None, z0_coeffs=None,
                    order=14, pv_kwargs=None, with_profiles=True,
                    with_pv=True, extra_couplings=None) -> FGRModel:
    """Assemble the full reduced model for the selected discrete modes."""
    from .combinatorics import enumerate_sets
    e = np.array([sd.eigenvalues[j] for j in mode_indices], dtype=float)
    mv = ModeVector(tuple(e), sd.mass)
    sets = enumerate_sets(mv, ball_radius or (2 * mv.N + 4))
    couplings = leading_couplings(sd, nl, sets, mode_indices)
    if extra_couplings:
        couplings.update(extra_couplings)
    model = FGRModel(sd, tuple(mode_indices), mv, sets, e, couplings,
                     freq_shift=freq_shift,
                     z0_coeffs=dict(z0_coeffs or {}),
                     gamma_threshold=gamma_threshold)
    fgr_rates(sd, model, order=order, pv_kwargs=pv_kwargs, with_pv=with_pv)
    if with_profiles:
        radiation_profiles(sd, model)
    return model


# -- monomial helpers -------------------------------------------------------


def _mono(z, p, q):
    """z^p zbar^q with nonnegative integer exponent vectors."""
    out = 1.0 + 0j
    for zi, pi, qi in zip(z, p, q):
        if pi:
            out *= zi ** pi
        if qi:
            out *= np.conj(zi) ** qi
    return out


def _sub(p, j):
    q = list(p)
    q[j] -= 1
    return tuple(q)


def build_Y(model: FGRModel, z) -> SpinorField:
    """Quasi-static radiation profile
    Y = sum zbar^alpha z^beta R_H^+(e.(beta-alpha)) G*_{alpha beta}."""
    if not model.radiation_plus:
        raise RuntimeError("radiation profiles not built")
    g = model.sd.grid
    acc = np.zeros((g.n, g.n, g.n, 4), dtype=complex)
    for (alpha, beta), prof in model.radiation_plus.items():
        acc += _mono(z, beta, alpha) * prof.data
    return SpinorField(g, acc)


def zeta_shift(model: FGRModel, z, margin: float = 1e-9):
    """zeta_j = z_j + T_j(z), with T_j summing the off-diagonal pair
    combinations weighted by the stored resolvent pairings."""
    z = np.asarray(z, dtype=complex)
    n = model.n
    T = np.zeros(n, dtype=complex)
    pairs = list(model.couplings)
    for (mu, nu) in pairs:
        for (alpha, beta) in pairs:
            den = model.pair_frequency((alpha, beta)) \
                - model.pair_frequency((mu, nu))
            # den = (mu - nu).e - (alpha - beta).e
            if den == 0.0:
                continue
            if abs(den) < margin:
                raise DegeneratePairError(
                    f"pair energies within {margin}: {(mu, nu)}, "
                    f"{(alpha, beta)}")
            Ap = model.cross_plus[((alpha, beta), (mu, nu))]
            Am = model.cross_minus[((alpha, beta), (mu, nu))]
            for j in range(n):
                if nu[j]:
                    T[j] += nu[j] * _mono(
                        z, tuple(np.add(mu, beta)),
                        _sub(np.add(nu, alpha), j)) * Ap / den
                if mu[j]:
                    T[j] += mu[j] * _mono(
                        z, tuple(np.add(nu, alpha)),
                        _sub(np.add(mu, beta), j)) * Am / (-den)
    return z + T


# -- reduced dynamics -------------------------------------------------------


@dataclass
class Trajectory:
    t: np.ndarray
    z: np.ndarray                 # (n_t, n) complex
    pairs: list

    @property
    def abs_z(self):
        return np.abs(self.z)

    @property
    def total_power(self):
        return np.sum(np.abs(self.z) ** 2, axis=1)

    def pair_power(self, pair):
        mu, nu = pair
        w = np.ones(len(self.t), dtype=complex)
        for i, (m, v) in enumerate(zip(mu, nu)):
            w *= self.z[:, i] ** m * np.conj(self.z[:, i]) ** v
        return np.abs(w) ** 2

    def to_csv(self) -> str:
        import csv
        import io
        buf = io.StringIO()
        wr = csv.writer(buf)
        n = self.z.shape[1]
        head = ["t"]
        for j in range(n):
            head += [f"re_z{j + 1}", f"im_z{j + 1}", f"abs_z{j + 1}"]
        head.append("total_power")
        head += [f"pair_power_{mu}_{nu}" for mu, nu in self.pairs]
        wr.writerow(head)
        powers = [self.pair_power(p) for p in self.pairs]
        for i, t in enumerate(self.t):
            row = [f"{t:.10g}"]
            for j in range(n):
                row += [f"{self.z[i, j].real:.15g}",
                        f"{self.z[i, j].imag:.15g}",
                        f"{abs(self.z[i, j]):.15g}"]
            row.append(f"{self.total_power[i]:.15g}")
            row += [f"{pw[i]:.15g}" for pw in powers]
            wr.writerow(row)
        return buf.getvalue()


def _dz0_shift(model, absz2):
    """d/dzbar_j of the cross-mode phase polynomial, divided by z_j."""
    out = np.zeros(model.n)
    for (i, j), a in model.z0_coeffs.items():
        if i == j:
            out[i] += 2 * a * absz2[i]
        else:
            out[j] += a * absz2[i]
            out[i] += a * absz2[j]
    return out


def reduced_rhs(model: FGRModel, z, variant="full", include_pv=True,
                include_delta=True):
    """i zdot for the reduced system; returns zdot."""
    z = np.asarray(z, dtype=complex)
    n = model.n
    absz2 = np.abs(z) ** 2
    lin = (model.e + model.freq_shift * absz2 + _dz0_shift(model, absz2)) * z
    rhs = lin.astype(complex)
    if variant == "full":
        for pair in model.couplings:
            mu, nu = pair
            A = model.plus_pairings[pair]
            B = model.minus_pairings[pair]
            if not include_pv:
                A, B = 1j * A.imag, 1j * B.imag
            if not include_delta:
                A, B = A.real + 0j, B.real + 0j
            for j in range(n):
                if nu[j]:
                    # nu_j |z^mu zbar^nu|^2 / zbar_j
                    rhs[j] -= nu[j] * _mono(z, mu, _sub(nu, j)) \
                        * _mono(z, nu, mu) * A
                if mu[j]:
                    rhs[j] -= mu[j] * _mono(z, nu, _sub(mu, j)) \
                        * _mono(z, mu, nu) * B
    elif variant == "heuristic":
        for (mu, nu) in model.couplings:
            for (alpha, beta) in model.couplings:
                Ap = model.cross_plus[((alpha, beta), (mu, nu))]
                Am = model.cross_minus[((alpha, beta), (mu, nu))]
                for j in range(n):
                    if nu[j]:
                        rhs[j] -= nu[j] * _mono(
                            z, tuple(np.add(mu, beta)),
                            _sub(np.add(nu, alpha), j)) * Ap
                    if mu[j]:
                        rhs[j] -= mu[j] * _mono(
                            z, tuple(np.add(nu, alpha)),
                            _sub(np.add(mu, beta), j)) * Am
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return -1j * rhs


def integrate_reduced(model: FGRModel, z0, T, dt, variant="full",
                      include_pv=True, include_delta=True,
                      rtol=1e-10, atol=1e-12) -> Trajectory:
    """Integrate the reduced system with an adaptive embedded RK pair,
    recording at uniform output times."""
    z0 = np.asarray(z0, dtype=complex)
    n = model.n

    def rhs(t, y):
        z = y[:n] + 1j * y[n:]
        dz = reduced_rhs(model, z, variant, include_pv, include_delta)
        return np.concatenate([dz.real, dz.imag])

    t_eval = np.arange(0.0, T + 0.5 * dt, dt)
    y0 = np.concatenate([z0.real, z0.imag])
    sol = solve_ivp(rhs, (0.0, T), y0, method="DOP853", t_eval=t_eval,
                    rtol=rtol, atol=atol)
    if not sol.success:
        raise StiffnessError(f"integrator failed: {sol.message}")
    z = (sol.y[:n] + 1j * sol.y[n:]).T
    return Trajectory(sol.t, z, list(model.couplings))


def lyapunov_report(model: FGRModel, traj: Trajectory) -> dict:
    """Compare d/dt sum |z_j|^2 against the FGR prediction
    -2 sum Gamma |z^mu zbar^nu|^2, and report the dissipation budget."""
    t, S = traj.t, traj.total_power
    dS = np.gradient(S, t)
    powers = {p: traj.pair_power(p) for p in traj.pairs}
    fgr = -2.0 * sum(model.rates[p] * powers[p] for p in traj.pairs)
    if np.isscalar(fgr):
        fgr = np.zeros_like(t)
    resid = dS - fgr
    fgr_scale = float(np.mean(np.abs(fgr)))
    budget = float(sum(np.trapezoid(powers[p], t) for p in traj.pairs))
    S0 = float(S[0]) if S[0] > 0 else 1.0
    return {
        "dS_dt": dS,
        "fgr_term": fgr,
        "residual": resid,
        "mean_residual": float(np.mean(np.abs(resid))),
        "fgr_scale": fgr_scale,
        "relative_residual": (float(np.mean(np.abs(resid)) / fgr_scale)
                              if fgr_scale > 0 else 0.0),
        "budget": budget,
        "budget_constant": (float(S[-1]) + budget) / S0,
    }


def model_to_json(model: FGRModel) -> str:
    import json
    doc = {
        "mode_indices": list(model.mode_indices),
        "e": [float(v) for v in model.e],
        "pairs": [[list(mu), list(nu)] for mu, nu in model.couplings],
        "rates": {str(p): model.rates[p] for p in model.rates},
        "plus_pairings": {str(p): [v.real, v.imag]
                          for p, v in model.plus_pairings.items()},
        "minus_pairings": {str(p): [v.real, v.imag]
                           for p, v in model.minus_pairings.items()},
        "h5_passed": bool(model.h5.passed) if model.h5 else None,
        "gamma_threshold": model.gamma_threshold,
    }
    return json.dumps(doc, indent=2)
