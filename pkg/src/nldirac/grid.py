"""Periodic spatial grid, spinor-field storage, Fourier transforms and norms.

The cube [-L, L)^3 replaces R^3.  Frequencies live on the lattice
(pi/L) * Z^3 truncated at Nyquist.  The forward transform uses the
physical convention

    F(f)(xi) = (2pi)^{-3/2} * integral e^{-i xi.x} f(x) dx,

approximated by the trapezoid sum on the grid, so that Parseval reads
||f||_{L^2(x)}^2 = sum_xi |F(f)(xi)|^2 * (pi/L)^3.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property

import numpy as np

_TWO_PI_32 = (2.0 * np.pi) ** 1.5


@dataclass(frozen=True)
class Grid:
    """Uniform periodic cube with n points per axis and half width L."""

    n: int
    L: float

    def __post_init__(self):
        if self.n < 8 or self.n % 2 != 0:
            raise ValueError("n must be even and >= 8")
        if self.L <= 0:
            raise ValueError("L must be positive")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** 3

    @property
    def dxi(self) -> float:
        return np.pi / self.L

    @property
    def freq_cell_volume(self) -> float:
        return self.dxi ** 3

    @cached_property
    def x1(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.n)

    @cached_property
    def xi1(self) -> np.ndarray:
        return self.dxi * (np.fft.fftfreq(self.n) * self.n)

    @cached_property
    def x(self) -> np.ndarray:
        """Position coordinates, shape (n, n, n, 3)."""
        a, b, c = np.meshgrid(self.x1, self.x1, self.x1, indexing="ij")
        return np.stack([a, b, c], axis=-1)

    @cached_property
    def xi(self) -> np.ndarray:
        """Frequency coordinates, shape (n, n, n, 3)."""
        a, b, c = np.meshgrid(self.xi1, self.xi1, self.xi1, indexing="ij")
        return np.stack([a, b, c], axis=-1)

    @cached_property
    def r2(self) -> np.ndarray:
        return np.sum(self.x ** 2, axis=-1)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(np.sum(self.xi ** 2, axis=-1))

    @cached_property
    def _phase(self) -> np.ndarray:
        """(-1)^(kx+ky+kz), the e^{-i xi.x0} factor for x0 = (-L,-L,-L)."""
        k = np.fft.fftfreq(self.n) * self.n
        s = k[:, None, None] + k[None, :, None] + k[None, None, :]
        return np.where(np.round(s).astype(int) % 2 == 0, 1.0, -1.0)

    def __eq__(self, other):
        return isinstance(other, Grid) and self.n == other.n and self.L == other.L

    def __hash__(self):
        return hash((self.n, self.L))


@dataclass(frozen=True)
class SpinorField:
    """A C^4-valued field on a Grid, in position or frequency space.

    data has shape (n, n, n, 4).  Fields are treated as immutable values:
    operations allocate new fields.
    """

    grid: Grid
    data: np.ndarray
    space: str = "x"  # "x" or "k"

    def __post_init__(self):
        n = self.grid.n
        if self.data.shape != (n, n, n, 4):
            raise ValueError(
                f"field data shape {self.data.shape} does not match grid n={n}")
        if self.space not in ("x", "k"):
            raise ValueError("space must be 'x' or 'k'")

    @property
    def weight(self) -> float:
        return self.grid.cell_volume if self.space == "x" else self.grid.freq_cell_volume

    def norm(self) -> float:
        """L^2 norm with the quadrature weight of the field's space."""
        return float(np.sqrt(np.sum(np.abs(self.data) ** 2) * self.weight))

    def __add__(self, other: "SpinorField") -> "SpinorField":
        self._check_compatible(other)
        return SpinorField(self.grid, self.data + other.data, self.space)

    def __sub__(self, other: "SpinorField") -> "SpinorField":
        self._check_compatible(other)
        return SpinorField(self.grid, self.data - other.data, self.space)

    def __mul__(self, c) -> "SpinorField":
        return SpinorField(self.grid, self.data * c, self.space)

    __rmul__ = __mul__

    def __neg__(self) -> "SpinorField":
        return SpinorField(self.grid, -self.data, self.space)

    def conj(self) -> "SpinorField":
        return SpinorField(self.grid, np.conj(self.data), self.space)

    def _check_compatible(self, other: "SpinorField"):
        if self.grid != other.grid:
            raise ValueError("fields live on different grids")
        if self.space != other.space:
            raise ValueError("fields live in different spaces")


def zero_field(grid: Grid, space: str = "x") -> SpinorField:
    return SpinorField(grid, np.zeros((grid.n,) * 3 + (4,), dtype=complex), space)


def pairing(f: SpinorField, g: SpinorField) -> complex:
    """Bilinear pairing <f, g> = integral f(x).g(x) dx (no conjugation)."""
    f._check_compatible(g)
    return complex(np.sum(f.data * g.data) * f.weight)


def herm(f: SpinorField, g: SpinorField) -> complex:
    """Hermitian product (f, g) = integral f(x).g(x)^* dx = <f, g^*>."""
    f._check_compatible(g)
    return complex(np.sum(f.data * np.conj(g.data)) * f.weight)


def spectral_transform(f: SpinorField, direction: str = "forward") -> SpinorField:
    """Componentwise Fourier transform between position and frequency space."""
    g = f.grid
    if direction == "forward":
        if f.space != "x":
            raise ValueError("forward transform expects a position-space field")
        out = np.fft.fftn(f.data, axes=(0, 1, 2))
        out *= g._phase[..., None] * (g.cell_volume / _TWO_PI_32)
        return SpinorField(g, out, "k")
    elif direction == "inverse":
        if f.space != "k":
            raise ValueError("inverse transform expects a frequency-space field")
        out = np.fft.ifftn(f.data * g._phase[..., None], axes=(0, 1, 2))
        out *= g.n ** 3 * g.freq_cell_volume / _TWO_PI_32
        return SpinorField(g, out, "x")
    raise ValueError("direction must be 'forward' or 'inverse'")


def nonuniform_transform(f: SpinorField, xi_pts: np.ndarray) -> np.ndarray:
    """F(f) evaluated at arbitrary frequencies xi_pts, shape (m, 3) -> (m, 4).

    Direct trapezoid sum; used for sphere restrictions where the target
    frequencies are off the lattice.
    """
    if f.space != "x":
        raise ValueError("nonuniform transform expects a position-space field")
    g = f.grid
    # e^{-i xi.x} factorizes over axes
    ex = np.exp(-1j * np.outer(xi_pts[:, 0], g.x1))
    ey = np.exp(-1j * np.outer(xi_pts[:, 1], g.x1))
    ez = np.exp(-1j * np.outer(xi_pts[:, 2], g.x1))
    t = np.einsum("ma,abcs->mbcs", ex, f.data)
    t = np.einsum("mb,mbcs->mcs", ey, t)
    t = np.einsum("mc,mcs->ms", ez, t)
    return t * (g.cell_volume / _TWO_PI_32)


@dataclass(frozen=True)
class NormSpec:
    """Weighted Sobolev norm parameters: ||<x>^s <grad>^k f||_{L^p}."""

    k: float = 0.0
    s: float = 0.0
    p: float = 2.0

    def __post_init__(self):
        if self.p not in (2.0, np.inf, 2, float("inf")):
            raise ValueError(f"unsupported integrability exponent p={self.p}")


class UnsupportedNormError(ValueError):
    pass


def _bessel_smooth(f: SpinorField, k: float) -> SpinorField:
    """Apply <grad>^k = (1 - Laplace)^{k/2} as an exact Fourier multiplier."""
    if k == 0:
        return f
    g = f.grid
    fk = spectral_transform(f, "forward")
    mult = (1.0 + g.xi_abs ** 2) ** (k / 2.0)
    return spectral_transform(
        SpinorField(g, fk.data * mult[..., None], "k"), "inverse")


def weighted_norm(f: SpinorField, spec: NormSpec) -> float:
    """||<x>^s <grad>^k f||_{L^p} on the grid, p in {2, inf}."""
    if f.space != "x":
        raise ValueError("weighted norms are position-space quantities")
    g = f.grid
    u = _bessel_smooth(f, spec.k).data
    if spec.s != 0:
        u = u * ((1.0 + g.r2) ** (spec.s / 2.0))[..., None]
    if spec.p in (2.0, 2):
        return float(np.sqrt(np.sum(np.abs(u) ** 2) * g.cell_volume))
    if spec.p == np.inf or spec.p == float("inf"):
        return float(np.max(np.sqrt(np.sum(np.abs(u) ** 2, axis=-1))))
    raise UnsupportedNormError(f"p={spec.p}")


def sigma_norm(f: SpinorField, k: float) -> float:
    """Sigma_k norm: sqrt(H^k^2 + L^{2,k}^2)."""
    hk = weighted_norm(f, NormSpec(k=k, s=0.0))
    l2k = weighted_norm(f, NormSpec(k=0.0, s=k))
    return float(np.hypot(hk, l2k))


def _dyadic_masks(grid: Grid) -> list[tuple[int, np.ndarray]]:
    """Smooth dyadic partition of unity sum_j m_j(xi) = 1 on the lattice.

    Block j is supported in |xi| ~ 2^j; block j_min absorbs everything
    below, so the masks sum to 1 everywhere including xi = 0.
    """
    s = grid.xi_abs
    smax = float(np.max(s))
    j_max = int(np.ceil(np.log2(smax))) + 1

    def chi(r):
        # smooth cutoff: 1 for r <= 1, 0 for r >= 2
        t = np.clip((r - 1.0), 0.0, 1.0)
        return 0.5 * (1.0 + np.cos(np.pi * t))

    masks = []
    low = chi(s / 1.0)  # everything below |xi| <= 2 goes to the base block
    masks.append((0, low))
    acc = low
    for j in range(1, j_max + 1):
        c = chi(s / 2.0 ** j)
        masks.append((j, c - acc))
        acc = c
        if np.all(c >= 1.0 - 1e-15):
            break
    return masks


def dyadic_besov_norm(f: SpinorField, k: float, q_spatial: float = 2.0,
                      q_sum: float = 2.0) -> float:
    """Littlewood-Paley diagnostic norm (sum_j 2^{jkq} ||P_j f||_p^q)^{1/q}.

    q_spatial in {2, 6}; finite-box stand-in for the continuum Besov norm.
    """
    if q_spatial not in (2.0, 6.0, 2, 6):
        raise UnsupportedNormError(f"q_spatial={q_spatial}")
    g = f.grid
    fk = spectral_transform(f, "forward")
    total = 0.0
    for j, m in _dyadic_masks(g):
        blk = spectral_transform(SpinorField(g, fk.data * m[..., None], "k"),
                                 "inverse").data
        if q_spatial in (2.0, 2):
            p_norm = np.sqrt(np.sum(np.abs(blk) ** 2) * g.cell_volume)
        else:
            p_norm = (np.sum(np.abs(blk) ** 6) * g.cell_volume) ** (1.0 / 6.0)
        total += (2.0 ** (j * k) * p_norm) ** q_sum
    return float(total ** (1.0 / q_sum))


_MAGIC = b"NLDF"
_VERSION = 1


def save_field(f: SpinorField, path: str) -> None:
    """Binary blob: magic "NLDF", version u32, n u32, L f64, then row-major
    little-endian f64 interleaved (re, im) per component."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, f.grid.n))
        fh.write(struct.pack("<d", f.grid.L))
        flat = np.ascontiguousarray(f.data).reshape(-1)
        inter = np.empty(flat.size * 2, dtype="<f8")
        inter[0::2] = flat.real
        inter[1::2] = flat.imag
        fh.write(inter.tobytes())


def load_field(path: str) -> SpinorField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError("not a field file (bad magic)")
        version, n = struct.unpack("<II", fh.read(8))
        if version != _VERSION:
            raise ValueError(f"unsupported field file version {version}")
        (L,) = struct.unpack("<d", fh.read(8))
        raw = np.frombuffer(fh.read(), dtype="<f8")
        data = (raw[0::2] + 1j * raw[1::2]).reshape(n, n, n, 4)
        return SpinorField(Grid(n, L), data.copy())
