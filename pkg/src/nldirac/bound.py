"""Nonlinear bound-state families, the leading-order chart map, and the
field decomposition u = sum_j Q_{j z_j} + remainder.

A bound state solves H Q + g(Q Qbar) beta Q = E Q with Q = z phi_j + q,
q constrained Hermitian-orthogonal to phi_j.  The correction has the
radial structure q = z h_j(|z|^2) with h_j a field-valued function, which
the family scan samples and interpolates; chart coefficients are the
z-derivatives of that structure.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline

from .algebra import BETA
from .grid import SpinorField, herm, sigma_norm
from .spectral import SpectralData, project_continuous


class AmplitudeTooLargeError(RuntimeError):
    pass


class FieldOutsideChartError(RuntimeError):
    pass


@dataclass(frozen=True)
class Nonlinearity:
    """g(s) = g1 s + g2 s^2 + ... with primitive G, G(0) = 0."""

    coeffs: tuple

    def __post_init__(self):
        object.__setattr__(self, "coeffs",
                           tuple(float(c) for c in self.coeffs))
        if not self.coeffs:
            raise ValueError("at least one coefficient required")

    def g(self, s):
        out = np.zeros_like(np.asarray(s, dtype=float))
        for k, c in enumerate(reversed(self.coeffs)):
            out = out * s + c
        return out * s

    def dg(self, s):
        out = np.zeros_like(np.asarray(s, dtype=float))
        for k, c in zip(range(len(self.coeffs), 0, -1),
                        reversed(self.coeffs)):
            out = out * s + k * c
        return out

    def G(self, s):
        out = np.zeros_like(np.asarray(s, dtype=float))
        for k, c in zip(range(len(self.coeffs) + 1, 1, -1),
                        reversed(self.coeffs)):
            out = out * s + c / k
        return out * s * s


def scalar_invariant(u: np.ndarray) -> np.ndarray:
    """u ubar = u . beta u^*, real pointwise."""
    bu = np.conj(u) @ BETA.T
    return np.real(np.sum(u * bu, axis=-1))


@dataclass
class BoundState:
    j: int
    z: complex
    Q: SpinorField
    q: SpinorField
    E: float
    iterations: int = 0
    residual: float = 0.0
    residual_history: tuple = ()


def _equation_residual(sd: SpectralData, nl: Nonlinearity,
                       Q: np.ndarray, E: float) -> np.ndarray:
    s = scalar_invariant(Q)
    return sd._apply_H(Q) + nl.g(s)[..., None] * (Q @ BETA.T) - E * Q


class _BorderedOperator(spla.LinearOperator):
    """Real-stacked linearization with the constraint rows and the E column.

    Unknowns x = [Re dq, Im dq, dE] (2K+1); rows are the real and imaginary
    parts of the linearized field equation (2K) plus Re/Im of <dq, phi*>
    (2 rows).  One field-equation row is redundant (the phase-gauge
    identity Im<F, Q*> = 0), so steps are taken in the least-squares sense.
    """

    def __init__(self, sd, nl, Q, E, phi):
        self.sd, self.nl, self.Q, self.E, self.phi = sd, nl, Q, E, phi
        self.K = Q.size
        s = scalar_invariant(Q)
        self.gs = nl.g(s)
        self.u = Q @ BETA.T            # beta Q; c = 2 Re(dq . conj(u))
        self.v = nl.dg(s)[..., None] * self.u   # g'(s) beta Q
        self.w3 = sd.grid.cell_volume
        super().__init__(dtype=float, shape=(2 * self.K + 2, 2 * self.K + 1))

    def _lin(self, dq, dE):
        c = 2.0 * np.real(np.sum(dq * np.conj(self.u), axis=-1))
        out = self.sd._apply_H(dq)
        out += self.gs[..., None] * (dq @ BETA.T)
        out += c[..., None] * self.v
        out -= self.E * dq
        out -= dE * self.Q
        return out

    def _matvec(self, x):
        K = self.K
        dq = (x[:K] + 1j * x[K:2 * K]).reshape(self.Q.shape)
        y = self._lin(dq, x[2 * K])
        con = np.sum(dq * np.conj(self.phi)) * self.w3
        return np.concatenate([y.real.reshape(-1), y.imag.reshape(-1),
                               [con.real, con.imag]])

    def _rmatvec(self, y):
        K = self.K
        w = (y[:K] + 1j * y[K:2 * K]).reshape(self.Q.shape)
        # Hermitian complex-linear parts are their own real adjoints
        out = self.sd._apply_H(w)
        out += self.gs[..., None] * (w @ BETA.T)
        out -= self.E * w
        # rank-structure term: adjoint of dq -> 2 Re(dq.conj(u)) v
        c = 2.0 * np.real(np.sum(np.conj(w) * self.v, axis=-1))
        out += c[..., None] * self.u
        # constraint rows
        out += self.w3 * (y[2 * K] + 1j * y[2 * K + 1]) * self.phi
        dE = -float(np.real(np.sum(np.conj(w) * self.Q)))
        return np.concatenate([out.real.reshape(-1), out.imag.reshape(-1),
                               [dE]])


def solve_bound_state(sd: SpectralData, nl: Nonlinearity, j: int, z: complex,
                      newton_tol: float = 1e-10, max_iter: int = 30,
                      lsqr_tol: float = 1e-12) -> BoundState:
    """Bordered Newton for Q = z phi_j + q, q orthogonal to phi_j."""
    if not 0 <= j < sd.n_modes:
        raise ValueError("mode index outside the discrete spectrum")
    phi = sd.eigenfunctions[j].data
    g = sd.grid
    if z == 0:
        zero = SpinorField(g, np.zeros_like(phi))
        return BoundState(j, 0.0, zero, zero, float(sd.eigenvalues[j]))

    q = np.zeros_like(phi)
    E = float(sd.eigenvalues[j])
    history = []
    for it in range(max_iter):
        Q = z * phi + q
        F = _equation_residual(sd, nl, Q, E)
        con = np.sum(q * np.conj(phi)) * g.cell_volume
        res = np.sqrt(np.sum(np.abs(F) ** 2) * g.cell_volume
                      + abs(con) ** 2)
        history.append(res)
        # always take at least one step: at small |z| the zero seed already
        # sits below an absolute tolerance while q itself is still untouched
        if res < newton_tol and it > 0:
            return BoundState(j, z, SpinorField(g, Q), SpinorField(g, q), E,
                              it, res, tuple(history))
        if it > 3 and res > 0.5 * history[-2]:
            raise AmplitudeTooLargeError(
                f"Newton stagnated at |z|={abs(z):.3e}, residual {res:.3e}")
        A = _BorderedOperator(sd, nl, Q, E, phi)
        b = np.concatenate([(-F).real.reshape(-1), (-F).imag.reshape(-1),
                            [-con.real, -con.imag]])
        sol = spla.lsqr(A, b, atol=lsqr_tol, btol=lsqr_tol, iter_lim=4000)
        x = sol[0]
        K = A.K
        q = q + (x[:K] + 1j * x[K:2 * K]).reshape(q.shape)
        E = E + x[2 * K]
    raise AmplitudeTooLargeError(
        f"Newton did not converge in {max_iter} iterations at |z|={abs(z):.3e}")


# -- family scan and interpolation ------------------------------------------


@dataclass
class FamilyBranch:
    """Radial data of one mode's family: q = z h(|z|^2), E = E(|z|^2)."""

    j: int
    t: np.ndarray                 # |z|^2 samples, increasing, t[0] = 0
    h: np.ndarray                 # (len(t), n, n, n, 4) field samples
    E: np.ndarray
    h_spline: CubicSpline = field(repr=False, default=None)
    E_spline: CubicSpline = field(repr=False, default=None)

    def __post_init__(self):
        if self.h_spline is None:
            self.h_spline = CubicSpline(self.t, self.h, axis=0)
        if self.E_spline is None:
            self.E_spline = CubicSpline(self.t, self.E)


@dataclass
class BoundStateFamily:
    sd: SpectralData
    nl: Nonlinearity
    branches: list
    a0: float                     # certified amplitude radius

    @property
    def n(self) -> int:
        return len(self.branches)

    def _check_amp(self, z):
        if abs(z) > self.a0 * (1 + 1e-12):
            raise AmplitudeTooLargeError(
                f"|z|={abs(z):.3e} beyond certified radius {self.a0:.3e}")

    def Q(self, j: int, z: complex) -> SpinorField:
        self._check_amp(z)
        br = self.branches[j]
        phi = self.sd.eigenfunctions[j].data
        h = br.h_spline(abs(z) ** 2)
        return SpinorField(self.sd.grid, z * (phi + h))

    def q(self, j: int, z: complex) -> SpinorField:
        self._check_amp(z)
        br = self.branches[j]
        return SpinorField(self.sd.grid, z * br.h_spline(abs(z) ** 2))

    def energy(self, j: int, z: complex) -> float:
        self._check_amp(z)
        return float(self.branches[j].E_spline(abs(z) ** 2))

    def dq_dz(self, j: int, z: complex) -> np.ndarray:
        """d/dz of q at fixed zbar: h + t h'."""
        t = abs(z) ** 2
        br = self.branches[j]
        return br.h_spline(t) + t * br.h_spline(t, 1)

    def dq_dzbar(self, j: int, z: complex) -> np.ndarray:
        """d/dzbar of q at fixed z: z^2 h'."""
        br = self.branches[j]
        return z ** 2 * br.h_spline(abs(z) ** 2, 1)


def bound_family_scan(sd: SpectralData, nl: Nonlinearity, j: int,
                      amplitudes, newton_tol: float = 1e-10) -> dict:
    """Solve the family along real z = a and report the small-z scalings.

    Returns {"branch": FamilyBranch, "slope_q": ..., "slope_E": ...,
    "a0": certified amplitude, "phase_check": ...}.
    Amplitudes that fail Newton shrink the certified radius.
    """
    amps = sorted(float(a) for a in amplitudes)
    solved, a0 = [], np.inf
    for a in amps:
        try:
            solved.append((a, solve_bound_state(sd, nl, j, a, newton_tol)))
        except AmplitudeTooLargeError:
            a0 = min(a0, a)
            break
    if len(solved) < 3:
        raise AmplitudeTooLargeError(
            "fewer than three amplitudes converged; no scan possible")
    # certified radius: the largest amplitude that actually converged
    a0 = solved[-1][0]

    t = np.array([0.0] + [a * a for a, _ in solved])
    e0 = float(sd.eigenvalues[j])
    h = np.stack([np.zeros_like(solved[0][1].q.data)]
                 + [bs.q.data / a for a, bs in solved])
    E = np.array([e0] + [bs.E for _, bs in solved])
    branch = FamilyBranch(j, t, h, E)

    records = [(a, bs.E, bs.q.norm(), sigma_norm(bs.q, 2.0), bs.iterations)
               for a, bs in solved]

    la = np.log([a for a, _ in solved])
    lq = np.log([max(bs.q.norm(), 1e-300) for _, bs in solved])
    lE = np.log([max(abs(bs.E - e0), 1e-300) for _, bs in solved])
    slope_q = float(np.polyfit(la, lq, 1)[0])
    slope_E = float(np.polyfit(la, lE, 1)[0])

    # phase equivariance on one rotated sample
    a_mid, bs_mid = solved[len(solved) // 2]
    th = 0.7
    bs_rot = solve_bound_state(sd, nl, j, a_mid * np.exp(1j * th), newton_tol)
    phase_err = float(np.max(np.abs(
        bs_rot.Q.data - np.exp(1j * th) * bs_mid.Q.data)))
    energy_err = abs(bs_rot.E - bs_mid.E)

    return {"branch": branch, "slope_q": slope_q, "slope_E": slope_E,
            "a0": a0, "phase_error": phase_err, "energy_error": energy_err,
            "records": records}


def scan_to_csv(report: dict) -> str:
    """Per-amplitude family table: |z|, E, ||q||_L2, ||q||_Sigma2, iters."""
    import csv
    import io
    buf = io.StringIO()
    wr = csv.writer(buf)
    wr.writerow(["abs_z", "E", "q_l2", "q_sigma2", "newton_iterations"])
    for a, E, ql2, qs2, its in report["records"]:
        wr.writerow([f"{a:.12g}", f"{E:.15g}", f"{ql2:.15g}",
                     f"{qs2:.15g}", its])
    return buf.getvalue()


def build_family(sd: SpectralData, nl: Nonlinearity, amplitudes,
                 newton_tol: float = 1e-10) -> BoundStateFamily:
    branches, a0 = [], np.inf
    reports = []
    for j in range(sd.n_modes):
        rep = bound_family_scan(sd, nl, j, amplitudes, newton_tol)
        branches.append(rep["branch"])
        a0 = min(a0, rep["a0"])
        reports.append(rep)
    fam = BoundStateFamily(sd, nl, branches, float(a0))
    fam.scan_reports = reports
    return fam


# -- chart map R[z] ---------------------------------------------------------


def r_of_z_apply(family: BoundStateFamily, z, eta: SpinorField) -> SpinorField:
    """Leading-order R[z] eta = eta + sum_j (<B_j,eta> + <C_j,eta*>) phi_j.

    B_j = -d/dzbar_j (q*) = -(h + t h')^*, C_j = d/dzbar_j q = z^2 h'.
    """
    z = np.asarray(z, dtype=complex)
    sd = family.sd
    out = eta.data.copy()
    for j in range(family.n):
        B = -np.conj(family.dq_dz(j, z[j]))
        C = family.dq_dzbar(j, z[j])
        w = sd.grid.cell_volume
        coef = np.sum(B * eta.data) * w + np.sum(C * np.conj(eta.data)) * w
        out += coef * sd.eigenfunctions[j].data
    return SpinorField(sd.grid, out, eta.space)


def symplectic_defect(family: BoundStateFamily, z, theta: SpinorField):
    """The 2n real pairings Re<i theta*, D_{jA} Q_{j z_j}>, A in {R, I}.

    These vanish exactly on the continuous component of the chart; returned
    as n complex numbers u_j + i v_j packing the (R, I) pair.
    """
    z = np.asarray(z, dtype=complex)
    sd = family.sd
    w = sd.grid.cell_volume
    out = np.empty(family.n, dtype=complex)
    for j in range(family.n):
        phi = sd.eigenfunctions[j].data
        dzQ = phi + family.dq_dz(j, z[j])
        dzbQ = family.dq_dzbar(j, z[j])
        tc = np.conj(theta.data)
        u = np.sum(tc * dzQ) * w
        v = np.sum(tc * dzbQ) * w
        # D_R Q = dzQ + dzbQ, D_I Q = i dzQ - i dzbQ
        re_pair = -np.imag(u + v)
        im_pair = -np.real(u) + np.real(v)
        out[j] = re_pair + 1j * im_pair
    return out


def decompose_field(sd: SpectralData, nl: Nonlinearity,
                    family: BoundStateFamily, u: SpinorField,
                    tol: float = 1e-12, max_iter: int = 40):
    """Split u into discrete amplitudes z and continuous remainder eta.

    Newton on the 2n real symplectic-orthogonality conditions for
    Theta = u - sum_j Q_{j z_j}, seeded at z_j = (u, phi_j)_herm; returns
    (z, eta = P_c Theta).
    """
    n = family.n
    z = np.array([herm(u, sd.eigenfunctions[j]) for j in range(n)],
                 dtype=complex)
    if np.max(np.abs(z)) > family.a0:
        raise FieldOutsideChartError(
            "discrete content exceeds the certified family radius")
    scale = max(u.norm(), 1e-30)

    def theta_of(zv):
        d = u.data.copy()
        for j in range(n):
            d -= family.Q(j, zv[j]).data
        return SpinorField(sd.grid, d, u.space)

    def cond(zv):
        return symplectic_defect(family, zv, theta_of(zv))

    f = cond(z)
    for it in range(max_iter):
        if np.max(np.abs(f)) < tol * scale:
            break
        # finite-difference Jacobian in the 2n real coordinates
        J = np.empty((2 * n, 2 * n))
        step = 1e-7 * max(np.max(np.abs(z)), 1e-3)
        for k in range(n):
            for part in range(2):
                dz = np.zeros(n, dtype=complex)
                dz[k] = step if part == 0 else 1j * step
                fp = cond(z + dz)
                fm = cond(z - dz)
                col = (fp - fm) / (2 * step)
                J[0::2, 2 * k + part] = col.real
                J[1::2, 2 * k + part] = col.imag
        rhs = np.empty(2 * n)
        rhs[0::2] = -f.real
        rhs[1::2] = -f.imag
        try:
            dx = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError as exc:
            raise FieldOutsideChartError(f"singular chart Jacobian: {exc}")
        z = z + dx[0::2] + 1j * dx[1::2]
        if np.max(np.abs(z)) > family.a0:
            raise FieldOutsideChartError(
                "amplitude left the certified family radius")
        f = cond(z)
    else:
        raise FieldOutsideChartError(
            f"chart Newton did not converge: |f|={np.max(np.abs(f)):.3e}")
    eta = project_continuous(sd, theta_of(z))
    return z, eta
