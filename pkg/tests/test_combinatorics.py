import json
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nldirac.combinatorics import (EnumerationBlowupError, H4Report,
                                   ModeVector, check_H4, enumerate_sets,
                                   factor_large_monomial, iter_multiindices,
                                   m_energy, m_order, m_to_matrix,
                                   minimal_pairs, offdiag_pairs, pair_from_m,
                                   sets_to_json, verify_M0_structure)

# two modes near the curated reference positions, denominators chosen
# large so no bounded integer combination hits the mass exactly
E_REF = (F(-7, 20) + F(1, 1009), F(11, 20) + F(1, 1013))
MV = ModeVector(E_REF, F(1))


def test_mode_vector_validation():
    with pytest.raises(ValueError):
        ModeVector((F(1, 2), F(1, 3)), F(1))  # not increasing
    with pytest.raises(ValueError):
        ModeVector((F(-3, 2), F(1, 2)), F(1))  # outside gap
    with pytest.raises(ValueError):
        ModeVector(E_REF, F(1), N=1)  # below threshold
    assert MV.N == 2  # least integer above (1 + 0.349)/0.899
    assert MV.min_gap == E_REF[1] - E_REF[0]


def test_mode_vector_accepts_floats_exactly():
    mv = ModeVector((-0.25, 0.5), 1.0)
    assert mv.e == (F(-1, 4), F(1, 2))
    assert mv.mass == 1


def test_multiindex_encoding_round_trip():
    assert offdiag_pairs(2) == [(0, 1), (1, 0)]
    m = m_to_matrix((3, 1), 2)
    assert m == ((0, 3), (1, 0))
    assert m_order(m) == 4
    mu, nu = pair_from_m(m)
    assert (mu, nu) == ((3, 1), (1, 3))
    mu, nu = pair_from_m(m, k=0)
    assert (mu, nu) == ((3, 1), (2, 3))


def test_m_energy_exact():
    m = m_to_matrix((2, 0), 2)
    assert m_energy(m, MV) == 2 * (E_REF[0] - E_REF[1])


def test_ball_enumeration_counts():
    assert len(list(iter_multiindices(2, 3))) == 10  # C(5, 2)
    with pytest.raises(EnumerationBlowupError):
        list(iter_multiindices(30, 30))


# -- (H4) -------------------------------------------------------------------


def test_h4_single_mode_violation():
    # e = 1/2, M = 1: mu = (2) gives mu.e = M exactly
    mv = ModeVector((F(1, 2),), F(1))
    rep = check_H4(mv)
    assert not rep.passed
    assert not rep.first_condition_ok
    assert rep.violating_mu == (2,)


def test_h4_generic_two_modes_pass():
    mv = ModeVector((F(3, 10) + F(1, 997), F(7, 10)), F(1))
    rep = check_H4(mv, max_order=18)  # scan depth of the smaller order
    assert rep.passed
    rep_full = check_H4(mv)
    assert rep_full.passed
    assert rep_full.margin1 > 0
    assert rep_full.margin2 > 0


def test_h4_nice_rationals_fail():
    # (-7/20, 11/20): -6 e_1 - 2 e_2 = 1 = M, caught by the exact scan
    mv = ModeVector((F(-7, 20), F(11, 20)), F(1))
    rep = check_H4(mv)
    assert not rep.first_condition_ok
    assert abs(mv.dot(rep.violating_mu)) == mv.mass


def test_h4_reference_modes_pass():
    rep = check_H4(MV)
    assert rep.passed
    assert rep.margin1 > 0 and rep.margin2 > 0


def test_h4_equal_pair_trivial():
    # mu = nu always satisfies the second condition: scan cannot flag it
    rep = check_H4(MV)
    assert rep.violating_pair is None


# -- resonance sets ---------------------------------------------------------


@pytest.fixture(scope="module")
def sets():
    return enumerate_sets(MV, 2 * MV.N + 4)


def test_reference_minimal_set(sets):
    # the curated two-mode layout leaks through exactly two channels
    assert sets.M_min == [((0, 1), (2, 0)), ((1, 0), (0, 2))]


def test_pair_order_excess(sets):
    for mu, nu in sets.M:
        assert sum(nu) == sum(mu) + 1
        assert abs(MV.dot(mu) - MV.dot(nu)) > MV.mass


def test_minimal_pairs_disjoint_support(sets):
    for mu, nu in sets.M_min:
        assert all(a * b == 0 for a, b in zip(mu, nu))


def test_minimal_pairs_distinct_energies(sets):
    ens = [MV.dot(mu) - MV.dot(nu) for mu, nu in sets.M_min]
    assert len(set(ens)) == len(ens)


def test_minimal_filter_idempotent(sets):
    assert minimal_pairs(sets.M_min) == sets.M_min
    assert minimal_pairs(sets.M) == sets.M_min


def test_membership_example():
    # e ~ (-1/2, 1/2): mu = (0,0), nu = (1,2) has (mu-nu).e = e_1 - 2 e_2
    # ... = -(e_1 + 2 e_2) ~ -1/2, below the mass threshold: excluded
    mv = ModeVector((F(-1, 2) + F(1, 991), F(1, 2)), F(1))
    sets = enumerate_sets(mv, 2 * mv.N + 4)
    mu, nu = (0, 0), (1, 2)
    assert abs(mv.dot(mu) - mv.dot(nu)) < mv.mass
    assert (mu, nu) not in sets.M
    # whereas mu = (0,1), nu = (2,0) reaches |e_2 - 2 e_1| ~ 3/2 > M
    assert ((0, 1), (2, 0)) in sets.M


def test_sets_in_union(sets):
    union = set()
    for k, pairs in sets.M_by_k.items():
        union |= set(pairs)
    assert sorted(union) == sets.M
    assert set(sets.M_min) <= set(sets.M)


def test_json_export(sets):
    doc = json.loads(sets_to_json(sets))
    assert doc["n"] == 2
    assert doc["N"] == MV.N
    assert [[list(mu), list(nu)] for mu, nu in sets.M_min] == doc["M_min"]


# -- factorization ----------------------------------------------------------


def test_factorization_contract():
    m = m_to_matrix((5, 4), 2)  # |m| = 9 >= 2N+3 = 7
    k, l, a, b = factor_large_monomial(MV, m, 0)
    n = MV.n
    # upper triangular with the exact order
    for x in (a, b):
        assert all(x[i][j] == 0 for i in range(n) for j in range(n) if i >= j)
        assert sum(x[i][j] for i in range(n) for j in range(i + 1, n)) \
            == MV.N + 1
    for i in range(n):
        for j in range(n):
            assert a[i][j] + b[i][j] <= m[i][j] + m[j][i]
    # strong resonance inequality for both halves
    for x, idx in ((a, k), (b, l)):
        en = sum(x[i][j] * (MV.e[i] - MV.e[j])
                 for i in range(n) for j in range(i + 1, n))
        assert en - MV.e[idx] < -MV.mass


def test_factorization_rejects_small():
    with pytest.raises(ValueError):
        factor_large_monomial(MV, m_to_matrix((2, 1), 2), 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 9), st.integers(0, 9), st.integers(0, 1),
       st.integers(0, 2 ** 31 - 1))
def test_factorization_domination_numeric(m01, m10, j, seed):
    # |z_j Z^m| <= |z_j| |z_k Z^a| |z_l Z^b| for |z| <= 1
    if m01 + m10 < 2 * MV.N + 3:
        return
    m = m_to_matrix((m01, m10), 2)
    k, l, a, b = factor_large_monomial(MV, m, j)
    rng = np.random.default_rng(seed)
    for _ in range(20):
        z = rng.uniform(0.05, 1.0, size=2) * np.exp(
            2j * np.pi * rng.uniform(size=2))

        def zmono(x):
            out = 1.0 + 0j
            for i in range(2):
                for jj in range(2):
                    out *= (z[i] * np.conj(z[jj])) ** x[i][jj]
            return out

        lhs = abs(z[j] * zmono(m))
        rhs = abs(z[j]) * abs(z[k] * zmono(a)) * abs(z[l] * zmono(b))
        assert lhs <= rhs * (1 + 1e-9)


# -- null-set structure -----------------------------------------------------


def test_m0_structure_reference():
    rep = verify_M0_structure(MV, 2 * MV.N + 4)
    assert rep.passed and rep.violations == []


def test_m0_symmetric_example():
    m = m_to_matrix((1, 1), 2)
    assert m_energy(m, MV) == 0
    mu, nu = pair_from_m(m)
    assert mu == nu == (1, 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_m0_structure_random_generic(seed):
    rng = np.random.default_rng(seed)
    # random generic rationals with large denominators
    den = 10 ** 6
    vals = sorted(rng.integers(-den + 1, den, size=2))
    if vals[0] == vals[1]:
        return
    mv = ModeVector((F(int(vals[0]), den), F(int(vals[1]), den)), F(1), N=0) \
        if vals[1] - vals[0] > den // 20 else None
    if mv is None:
        return
    rep = verify_M0_structure(mv, min(2 * mv.N + 4, 8))
    assert rep.passed
