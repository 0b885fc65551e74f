"""The operator H = D_M + V: symbol utilities, discrete spectrum, projector.

D_M acts through its exact Fourier symbol alpha.xi + M*beta, which is
diagonalized at every lattice frequency by the unitary v(xi):

    v(xi)^dagger (alpha.xi + M beta) v(xi) = L(xi) beta,
    L(xi) = sqrt(|xi|^2 + M^2).

V is a sum of Gaussian bumps with Hermitian 4x4 amplitude matrices.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse.linalg as spla

from .algebra import ALPHA, BETA
from .grid import Grid, SpinorField, herm, spectral_transform


class HypothesisViolationError(RuntimeError):
    """A numerically detected failure of one of the standing hypotheses."""


@dataclass(frozen=True)
class PotentialBump:
    amplitude: np.ndarray  # Hermitian 4x4
    center: tuple = (0.0, 0.0, 0.0)
    width: float = 1.0

    def __post_init__(self):
        a = np.asarray(self.amplitude, dtype=complex)
        if a.shape != (4, 4):
            raise ValueError("bump amplitude must be a 4x4 matrix")
        if np.max(np.abs(a - a.conj().T)) > 1e-14:
            raise ValueError("bump amplitude must be Hermitian")
        if self.width <= 0:
            raise ValueError("bump width must be positive")
        object.__setattr__(self, "amplitude", a)


@dataclass(frozen=True)
class PotentialSpec:
    bumps: tuple = ()

    def evaluate(self, grid: Grid) -> np.ndarray:
        """V(x) as an (n, n, n, 4, 4) Hermitian-valued array."""
        out = np.zeros((grid.n,) * 3 + (4, 4), dtype=complex)
        for b in self.bumps:
            d2 = np.zeros((grid.n,) * 3)
            for ax in range(3):
                d2 += (grid.x[..., ax] - b.center[ax]) ** 2
            out += np.exp(-d2 / b.width ** 2)[..., None, None] * b.amplitude
        return out

    @property
    def is_zero(self) -> bool:
        return len(self.bumps) == 0


def dirac_symbol(xi: np.ndarray, mass: float) -> np.ndarray:
    """alpha.xi + M*beta at frequencies xi of shape (..., 3) -> (..., 4, 4)."""
    out = np.tensordot(xi, ALPHA, axes=([-1], [0]))
    out += mass * BETA
    return out


def branch_energy(xi: np.ndarray, mass: float) -> np.ndarray:
    """L(xi) = sqrt(|xi|^2 + M^2) for xi of shape (..., 3)."""
    return np.sqrt(np.sum(np.asarray(xi) ** 2, axis=-1) + mass ** 2)


def unitary_v(xi: np.ndarray, mass: float) -> np.ndarray:
    """The unitary v(xi) diagonalizing the free symbol, shape (..., 4, 4)."""
    xi = np.asarray(xi, dtype=float)
    L = branch_energy(xi, mass)
    # beta @ alpha_k is (3, 4, 4); contract with xi
    ba_xi = np.tensordot(xi, BETA @ ALPHA, axes=([-1], [0]))
    num = (L + mass)[..., None, None] * np.eye(4) - ba_xi
    den = np.sqrt(2.0 * L * (L + mass))
    return num / den[..., None, None]


@dataclass
class SpectralData:
    """Discretized H = D_M + V with its gap eigenpairs.

    Eigenfunctions are Hermitian-orthonormal, which is the normalization
    Re<phi_j, phi_k^*> = delta_jk with a definite phase choice.
    """

    grid: Grid
    mass: float
    potential: PotentialSpec
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0))
    eigenfunctions: list = field(default_factory=list)
    eig_tol: float = 1e-8

    @cached_property
    def V(self) -> np.ndarray:
        return self.potential.evaluate(self.grid)

    @cached_property
    def free_symbol(self) -> np.ndarray:
        return dirac_symbol(self.grid.xi, self.mass)

    @cached_property
    def v_matrices(self) -> np.ndarray:
        return unitary_v(self.grid.xi, self.mass)

    @cached_property
    def L_xi(self) -> np.ndarray:
        return branch_energy(self.grid.xi, self.mass)

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def gap_margin(self) -> float:
        if self.n_modes == 0:
            return self.mass
        return float(self.mass - np.max(np.abs(self.eigenvalues)))

    # -- raw-array operator applications (shape (n, n, n, 4)) --

    def _apply_free(self, u: np.ndarray) -> np.ndarray:
        uk = np.fft.fftn(u, axes=(0, 1, 2))
        uk = np.einsum("...ij,...j->...i", self.free_symbol, uk)
        return np.fft.ifftn(uk, axes=(0, 1, 2))

    def _apply_V(self, u: np.ndarray) -> np.ndarray:
        if self.potential.is_zero:
            return np.zeros_like(u)
        return np.einsum("...ij,...j->...i", self.V, u)

    def _apply_H(self, u: np.ndarray) -> np.ndarray:
        return self._apply_free(u) + self._apply_V(u)


def apply_H(sd: SpectralData, u: SpinorField) -> SpinorField:
    """H u = D_M u + V u, with D_M applied via the exact Fourier symbol."""
    if u.space != "x":
        raise ValueError("apply_H expects a position-space field")
    return SpinorField(u.grid, sd._apply_H(u.data))


def apply_free_dirac(u: SpinorField, mass: float) -> SpinorField:
    uk = np.fft.fftn(u.data, axes=(0, 1, 2))
    uk = np.einsum("...ij,...j->...i", dirac_symbol(u.grid.xi, mass), uk)
    return SpinorField(u.grid, np.fft.ifftn(uk, axes=(0, 1, 2)))


def free_evolve(u: SpinorField, t: float, mass: float) -> SpinorField:
    """Exact e^{-i t D_M} u via the diagonalizing frame v(xi)."""
    g = u.grid
    v = unitary_v(g.xi, mass)
    L = branch_energy(g.xi, mass)
    uk = np.fft.fftn(u.data, axes=(0, 1, 2))
    w = np.einsum("...ji,...j->...i", np.conj(v), uk)  # v^dagger u
    phase = np.exp(-1j * t * L)
    w[..., :2] *= phase[..., None]
    w[..., 2:] *= np.conj(phase)[..., None]
    uk = np.einsum("...ij,...j->...i", v, w)
    return SpinorField(g, np.fft.ifftn(uk, axes=(0, 1, 2)))


# -- eigensolvers -----------------------------------------------------------


def dense_hamiltonian(sd: SpectralData) -> np.ndarray:
    """Dense matrix of H on the grid (oracle-scale only)."""
    n = sd.grid.n
    dim = 4 * n ** 3
    if dim > 5000:
        raise MemoryError(f"dense Hamiltonian of dimension {dim} refused")
    H = np.empty((dim, dim), dtype=complex)
    e = np.zeros((n, n, n, 4), dtype=complex)
    flat = e.reshape(-1)
    for i in range(dim):
        flat[i] = 1.0
        H[:, i] = sd._apply_H(e).reshape(-1)
        flat[i] = 0.0
    return H


def _solve_shifted(sd: SpectralData, sigma: float, b: np.ndarray,
                   tol: float = 1e-12, maxiter: int = 400) -> np.ndarray:
    """Solve (H - sigma) u = b preconditioned by the exact free inverse."""
    g = sd.grid
    sym = sd.free_symbol - sigma * np.eye(4)
    inv = np.linalg.inv(sym)

    def free_inv(w):
        wk = np.fft.fftn(w.reshape(g.n, g.n, g.n, 4), axes=(0, 1, 2))
        wk = np.einsum("...ij,...j->...i", inv, wk)
        return np.fft.ifftn(wk, axes=(0, 1, 2)).reshape(-1)

    if sd.potential.is_zero:
        return free_inv(b.reshape(-1)).reshape(b.shape)

    # (I + (D - sigma)^{-1} V) u = (D - sigma)^{-1} b
    def op(w):
        u = w.reshape(g.n, g.n, g.n, 4)
        return w + free_inv(sd._apply_V(u).reshape(-1))

    dim = 4 * g.n ** 3
    A = spla.LinearOperator((dim, dim), matvec=op, dtype=complex)
    rhs = free_inv(b.reshape(-1))
    u, info = spla.gmres(A, rhs, rtol=tol, atol=0.0, maxiter=maxiter)
    if info != 0:
        raise RuntimeError(f"shifted solve failed to converge (info={info})")
    return u.reshape(b.shape)


def discrete_spectrum(grid: Grid, mass: float, potential: PotentialSpec,
                      k: int = 8, shifts=None, eig_tol: float = 1e-8,
                      gap_margin_min: float = 0.05, cluster_tol: float = 1e-6,
                      dense: bool = False) -> SpectralData:
    """All eigenvalues of the discretized H inside the spectral gap.

    dense=True uses full Hermitian diagonalization (oracle grids); otherwise
    a matrix-free shift-invert Lanczos iteration around each shift.
    Raises HypothesisViolationError on a detected eigenvalue of numerical
    multiplicity > 1.
    """
    sd = SpectralData(grid, mass, potential, eig_tol=eig_tol)
    delta = max(gap_margin_min, 2.0 / (grid.n * grid.h))  # resolution floor
    if potential.is_zero:
        return sd

    pairs = []
    if dense:
        H = dense_hamiltonian(sd)
        w, U = np.linalg.eigh(H)
        sel = np.where(np.abs(w) < mass - 1e-12)[0]
        for i in sel:
            pairs.append((float(w[i]), U[:, i].reshape(grid.n, grid.n, grid.n, 4)))
    else:
        if shifts is None:
            shifts = [0.0, 0.7 * mass, -0.7 * mass]
        dim = 4 * grid.n ** 3
        for sigma in shifts:
            def op(b, _s=sigma):
                return _solve_shifted(sd, _s, b.reshape(grid.n, grid.n, grid.n, 4)
                                      ).reshape(-1)
            A = spla.LinearOperator((dim, dim), matvec=op, dtype=complex)
            try:
                theta, U = spla.eigsh(A, k=min(k, dim - 2), which="LM",
                                      tol=1e-11)
            except spla.ArpackNoConvergence as exc:
                theta, U = exc.eigenvalues, exc.eigenvectors
            for t, col in zip(theta, U.T):
                if abs(t) < 1e-8:
                    continue
                lam = sigma + 1.0 / t
                if abs(lam) >= mass - 1e-12:
                    continue
                pairs.append((float(lam),
                              col.reshape(grid.n, grid.n, grid.n, 4)))

    # residual filter, dedupe, multiplicity check
    vol = grid.cell_volume
    kept = []
    for lam, vec in sorted(pairs, key=lambda p: p[0]):
        nrm = np.sqrt(np.sum(np.abs(vec) ** 2) * vol)
        vec = vec / nrm
        res = sd._apply_H(vec) - lam * vec
        if np.sqrt(np.sum(np.abs(res) ** 2) * vol) > eig_tol:
            continue
        dup = False
        for lam0, vec0 in kept:
            if abs(lam - lam0) < cluster_tol:
                ov = abs(np.sum(vec * np.conj(vec0)) * vol)
                if ov > 0.5:
                    dup = True
                    break
                raise HypothesisViolationError(
                    f"eigenvalue {lam:.6f} has numerical multiplicity > 1")
        if not dup:
            kept.append((lam, vec))

    kept.sort(key=lambda p: p[0])
    evals = np.array([p[0] for p in kept])
    if len(evals) and mass - np.max(np.abs(evals)) < delta:
        import warnings
        warnings.warn(
            "eigenvalue within resolution margin of the gap edge: "
            "threshold-resonance risk", RuntimeWarning)

    funcs = []
    for lam, vec in kept:
        # phase convention: largest-magnitude entry real positive
        idx = np.argmax(np.abs(vec))
        vec = vec * np.exp(-1j * np.angle(vec.reshape(-1)[idx]))
        funcs.append(SpinorField(grid, vec))
    sd.eigenvalues = evals
    sd.eigenfunctions = funcs
    return sd


def project_continuous(sd: SpectralData, u: SpinorField) -> SpinorField:
    """P_c u: remove the Hermitian projection onto span{phi_j}."""
    out = u.data.copy()
    for phi in sd.eigenfunctions:
        c = herm(u, phi)
        out -= c * phi.data
    return SpinorField(u.grid, out, u.space)
