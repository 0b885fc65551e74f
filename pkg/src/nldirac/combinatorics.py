"""Exact integer/rational machinery for the resonant multi-index sets.

Monomials in the discrete-mode amplitudes z in C^n are encoded two ways:

* pair indices (mu, nu) in N_0^n x N_0^n for z^mu zbar^nu;
* Z-multi-indices m = (m_ij), i != j, for Z^m = prod (z_i zbar_j)^{m_ij},
  stored as n x n integer matrices with zero diagonal, flattened in
  lexicographic (i, j) order when a vector view is needed.

All membership decisions use Fraction arithmetic; floats never enter.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb

MAX_BALL = 2_000_000


class EnumerationBlowupError(RuntimeError):
    pass


def _as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, str)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(x).limit_denominator(10 ** 12)
    raise TypeError(f"cannot convert {x!r} to an exact rational")


@dataclass(frozen=True)
class ModeVector:
    """Exact rational eigenvalue vector with its combinatorial order N.

    N must exceed (mass + |e_1|) / min_gap; by default the least such
    integer is taken.
    """

    e: tuple
    mass: Fraction
    N: int = 0

    def __post_init__(self):
        e = tuple(_as_fraction(x) for x in self.e)
        mass = _as_fraction(self.mass)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "mass", mass)
        if len(e) < 1:
            raise ValueError("at least one mode required")
        for a, b in zip(e, e[1:]):
            if not a < b:
                raise ValueError("eigenvalues must be strictly increasing")
        if not (-mass < e[0] and e[-1] < mass):
            raise ValueError("eigenvalues must lie inside the gap (-M, M)")
        if len(e) > 1:
            threshold = (mass + abs(e[0])) / self.min_gap
        else:
            threshold = mass + abs(e[0])  # no gap constraint with one mode
        least = int(threshold) + 1
        if self.N == 0:
            object.__setattr__(self, "N", least)
        elif self.N <= threshold:
            raise ValueError(
                f"N={self.N} must exceed (mass+|e_1|)/min_gap = {threshold}")

    @property
    def n(self) -> int:
        return len(self.e)

    @property
    def min_gap(self) -> Fraction:
        if self.n < 2:
            raise ValueError("min_gap needs at least two modes")
        return min(b - a for a, b in zip(self.e, self.e[1:]))

    def dot(self, mu) -> Fraction:
        return sum(Fraction(int(c)) * ev for c, ev in zip(mu, self.e))


# -- Z-multi-index helpers --------------------------------------------------


def offdiag_pairs(n: int):
    """(i, j), i != j, in the fixed lexicographic order."""
    return [(i, j) for i in range(n) for j in range(n) if i != j]


def m_to_matrix(m_flat, n: int):
    """Flat lexicographic vector -> n x n tuple matrix with zero diagonal."""
    pairs = offdiag_pairs(n)
    if len(m_flat) != len(pairs):
        raise ValueError("flat multi-index has wrong length")
    mat = [[0] * n for _ in range(n)]
    for (i, j), v in zip(pairs, m_flat):
        if v < 0:
            raise ValueError("multi-index entries must be nonnegative")
        mat[i][j] = int(v)
    return tuple(tuple(row) for row in mat)


def m_order(m) -> int:
    return sum(sum(row) for row in m)


def m_energy(m, mv: ModeVector) -> Fraction:
    """sum_ij m_ij (e_i - e_j)."""
    tot = Fraction(0)
    for i in range(mv.n):
        for j in range(mv.n):
            if m[i][j]:
                tot += m[i][j] * (mv.e[i] - mv.e[j])
    return tot


def pair_from_m(m, k: int | None = None):
    """(mu, nu) with z^mu zbar^nu = (zbar_k if k is not None else 1) Z^m."""
    n = len(m)
    mu = tuple(sum(m[i][j] for j in range(n)) for i in range(n))
    nu = [sum(m[j][i] for j in range(n)) for i in range(n)]
    if k is not None:
        nu[k] += 1
    return mu, tuple(nu)


def iter_multiindices(n_slots: int, max_total: int):
    """All vectors in N_0^{n_slots} with 1-norm <= max_total."""
    size = comb(max_total + n_slots, n_slots)
    if size > MAX_BALL:
        raise EnumerationBlowupError(
            f"multi-index ball of size {size} exceeds cap {MAX_BALL}; "
            "lower r or the number of modes")

    def rec(slots_left, budget):
        if slots_left == 0:
            yield ()
            return
        for v in range(budget + 1):
            for rest in rec(slots_left - 1, budget - v):
                yield (v,) + rest

    yield from rec(n_slots, max_total)


# -- hypothesis (H4) --------------------------------------------------------


@dataclass
class H4Report:
    passed: bool
    first_condition_ok: bool
    second_condition_ok: bool
    margin1: Fraction | None = None  # min | |mu.e| - M |
    margin2: Fraction | None = None  # min |delta.e| over the h42 family
    violating_mu: tuple | None = None
    violating_pair: tuple | None = None


def check_H4(mv: ModeVector, max_order: int | None = None) -> H4Report:
    """Exhaustive exact verification of the nonresonance hypothesis.

    (i)  |mu.e| != M for every mu in Z^n with |mu|_1 <= 4N+6;
    (ii) mu, nu in N_0^n, |mu| = |nu| <= 2N+3, (mu-nu).e = 0  =>  mu = nu.
    """
    n, M = mv.n, mv.mass
    r1 = 4 * mv.N + 6 if max_order is None else max_order
    r2 = 2 * mv.N + 3

    ok1, margin1, bad_mu = True, None, None
    for mu_abs in iter_multiindices(n, r1):
        if sum(mu_abs) == 0:
            continue
        # sign patterns over the support; skip global-sign duplicates
        support = [i for i in range(n) if mu_abs[i]]
        for signs in itertools.product((1, -1), repeat=len(support) - 1):
            mu = list(mu_abs)
            for s, i in zip(signs, support[1:]):
                mu[i] *= s
            val = abs(mv.dot(mu))
            gap = abs(val - M)
            if margin1 is None or gap < margin1:
                margin1 = gap
            if val == M:
                ok1, bad_mu = False, tuple(mu)
                break
        if not ok1:
            break

    # (ii) via difference vectors: delta != 0, sum(delta) = 0,
    # positive part <= 2N+3, delta.e = 0 would violate
    ok2, margin2, bad_pair = True, None, None
    for delta_abs in iter_multiindices(n, 2 * r2):
        if sum(delta_abs) == 0:
            continue
        support = [i for i in range(n) if delta_abs[i]]
        for signs in itertools.product((1, -1), repeat=len(support) - 1):
            delta = list(delta_abs)
            for s, i in zip(signs, support[1:]):
                delta[i] *= s
            if sum(delta) != 0:
                continue
            pos = sum(d for d in delta if d > 0)
            if pos > r2:
                continue
            val = abs(mv.dot(delta))
            if margin2 is None or val < margin2:
                margin2 = val
            if val == 0:
                mu = tuple(max(d, 0) for d in delta)
                nu = tuple(max(-d, 0) for d in delta)
                ok2, bad_pair = False, (mu, nu)
                break
        if not ok2:
            break

    return H4Report(ok1 and ok2, ok1, ok2, margin1, margin2, bad_mu, bad_pair)


# -- resonance sets ---------------------------------------------------------


@dataclass
class ResonanceSets:
    mv: ModeVector
    r: int
    script_M: dict = field(default_factory=dict)  # k (0..n, 1-based) -> [m]
    M: list = field(default_factory=list)         # [(mu, nu)]
    M_min: list = field(default_factory=list)
    M_by_k: dict = field(default_factory=dict)    # k (1-based) -> [(mu, nu)]


def minimal_pairs(pairs):
    """Dominance filter: keep pairs not strictly dominating another member."""
    pairs = list(pairs)
    out = []
    for mu, nu in pairs:
        dominated = False
        for a, b in pairs:
            if (a, b) == (mu, nu):
                continue
            if all(x <= y for x, y in zip(a, mu)) and \
               all(x <= y for x, y in zip(b, nu)):
                dominated = True
                break
        if not dominated:
            out.append((mu, nu))
    return sorted(out)


def _pair_feasible_as_m(mu, nu) -> bool:
    """Is there a zero-diagonal m with row sums mu and column sums nu?

    Needs |mu| = |nu| and mu_i + nu_i <= |mu| for every i (the diagonal
    exclusion caps how much mass index i can absorb).
    """
    tot = sum(mu)
    if tot != sum(nu):
        return False
    return all(mu[i] + nu[i] <= tot for i in range(len(mu)))


def enumerate_sets(mv: ModeVector, r: int) -> ResonanceSets:
    """Build script-M_k(r), M_k(r), M(r) and M_min by exhaustive scan.

    Also cross-checks M(r) against the closed characterization
    (mu, nu) in M(r) iff |nu| = |mu| + 1, |mu| <= r, |(mu-nu).e| > mass
    (restricted to realizable pairs); a mismatch raises AssertionError.
    """
    n, M_ = mv.n, mv.mass
    n0 = n * (n - 1)
    sets = ResonanceSets(mv, r)
    sets.script_M = {k: [] for k in range(n + 1)}
    by_k = {k: set() for k in range(1, n + 1)}

    for flat in iter_multiindices(n0, r):
        m = m_to_matrix(flat, n)
        en = m_energy(m, mv)
        if en == 0:
            sets.script_M[0].append(m)
        for k in range(1, n + 1):
            if abs(en - mv.e[k - 1]) > M_:
                sets.script_M[k].append(m)
                by_k[k].add(pair_from_m(m, k - 1))

    sets.M_by_k = {k: sorted(v) for k, v in by_k.items()}
    union = set()
    for v in by_k.values():
        union |= v
    sets.M = sorted(union)

    # characterization cross-check (independent enumeration route)
    alt = set()
    for mu in iter_multiindices(n, r):
        for nu in iter_multiindices(n, sum(mu) + 1):
            if sum(nu) != sum(mu) + 1:
                continue
            if abs(mv.dot(mu) - mv.dot(nu)) <= M_:
                continue
            if any(_pair_feasible_as_m(
                    mu, tuple(x - (1 if i == k else 0)
                              for i, x in enumerate(nu)))
                   for k in range(n) if nu[k] >= 1):
                alt.add((mu, tuple(nu)))
    if alt != union:
        raise AssertionError(
            "definitional and characterization enumerations disagree: "
            f"{sorted(alt ^ union)}")

    sets.M_min = minimal_pairs(sets.M)
    return sets


# -- factorization of large monomials ---------------------------------------


def factor_large_monomial(mv: ModeVector, m, j: int):
    """Split z_j Z^m into z_j (z_k Z^a)(z_l Z^b) with strongly resonant a, b.

    Requires |m| >= 2N+3.  Returns (k, l, a, b) where a, b are upper
    triangular with sum_{i<j} = N+1 and a_ij + b_ij <= m_ij + m_ji.
    """
    n, N = mv.n, mv.N
    if m_order(m) < 2 * N + 3:
        raise ValueError(f"|m| = {m_order(m)} < 2N+3 = {2 * N + 3}")
    if not 0 <= j < n:
        raise ValueError("mode index out of range")

    # greedily carve c then d out of m, |c| = |d| = N+1
    rem = [list(row) for row in m]

    def carve(amount):
        out = [[0] * n for _ in range(n)]
        for i in range(n):
            for jj in range(n):
                if amount == 0:
                    break
                take = min(rem[i][jj], amount)
                out[i][jj] = take
                rem[i][jj] -= take
                amount -= take
        if amount != 0:
            raise AssertionError("carve failed despite order precondition")
        return out

    c = carve(N + 1)
    d = carve(N + 1)

    # remainder encodes z^mu zbar^nu with both |mu|, |nu| >= 1
    mu = [sum(rem[i]) for i in range(n)]
    nu = [sum(rem[i][l] for i in range(n)) for l in range(n)]
    k = max(range(n), key=lambda i: mu[i])
    l = max(range(n), key=lambda i: nu[i])
    if mu[k] == 0 or nu[l] == 0:
        raise AssertionError("remainder lost its z and zbar factors")

    def symmetrize(x):
        out = [[0] * n for _ in range(n)]
        for i in range(n):
            for jj in range(i + 1, n):
                out[i][jj] = x[i][jj] + x[jj][i]
        return tuple(tuple(row) for row in out)

    return k, l, symmetrize(c), symmetrize(d)


# -- structure of the null set ----------------------------------------------


@dataclass
class M0Report:
    passed: bool
    violations: list = field(default_factory=list)


def verify_M0_structure(mv: ModeVector, r: int) -> M0Report:
    """Null-energy monomials are radial; short monomials miss eigenvalues.

    For every m in script-M_0(r) the induced (mu, nu) must satisfy mu = nu;
    for every |m| <= min(r, 2N+3) and every j, the shifted energy
    sum m_ab (e_a - e_b) - e_j must be nonzero.
    """
    rep = M0Report(True)
    n0 = mv.n * (mv.n - 1)
    r2 = min(r, 2 * mv.N + 3)
    for flat in iter_multiindices(n0, r):
        m = m_to_matrix(flat, mv.n)
        en = m_energy(m, mv)
        if en == 0:
            mu, nu = pair_from_m(m)
            if mu != nu:
                rep.passed = False
                rep.violations.append(("radial", m))
        if m_order(m) <= r2:
            for j in range(mv.n):
                if en - mv.e[j] == 0:
                    rep.passed = False
                    rep.violations.append(("eigenvalue-hit", m, j))
    return rep


# -- export ------------------------------------------------------------------


def sets_to_json(sets: ResonanceSets) -> str:
    doc = {
        "n": sets.mv.n,
        "r": sets.r,
        "e": [str(x) for x in sets.mv.e],
        "mass": str(sets.mv.mass),
        "N": sets.mv.N,
        "script_M_sizes": {str(k): len(v)
                           for k, v in sets.script_M.items()},
        "M": [[list(mu), list(nu)] for mu, nu in sets.M],
        "M_min": [[list(mu), list(nu)] for mu, nu in sets.M_min],
    }
    return json.dumps(doc, indent=2)
