import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import central_difference_check, random_admissible, random_symmetric
from lindstedt.blocks import (ClusterMatrix, as_rows, divisor_state, inverse, is_symmetric,
                              is_zero, madd, matmul, matrix_norms, propagator,
                              resonant_block_decompose, resonant_propagator, sandwiched,
                              transpose)
from lindstedt.errors import AsymmetricInput, SingularA22
from lindstedt.lattice import ClusterConstants, ClusterIndex
from lindstedt.smalldiv import CutoffSpec, FrequencyContext, chi_bar, chi_scale, delta
from lindstedt.trees import resonant_counterterm

PAIR_CONSTANTS = ClusterConstants(D=2, alpha=0.1, C1=2.0, C2=1.0)


def near_resonant_ctx(d0=3e-4, eps=0.01):
    # mu chosen so that delta(10, 25) = d0
    mu = (5 + 10 * eps - d0) / 9
    return FrequencyContext(D=2, s=1.0, mu=mu, eps=eps, gamma=0.005, gamma0=0.01)


@pytest.fixture(scope="module")
def pair():
    return ClusterIndex(2, PAIR_CONSTANTS).cluster_of((3, 4))


def test_pair_cluster(pair):
    assert pair.members == ((3, 4), (4, 3)) and pair.d == 2


def test_identity_norms():
    I = np.eye(3)
    assert matrix_norms(I) == (1.0, 1.0, 1.0)


def test_weighted_norm_single_entry():
    members = ((3, 4), (4, 3))
    c, sigma = 0.7, 0.4
    A = np.array([[0.0, c], [c, 0.0]])
    inf, sig, rms = matrix_norms(ClusterMatrix(A, members, sigma))
    rho = 1.0 / (1 + 2 * (1 + 2 * math.factorial(4) / 2))
    assert inf == c
    assert math.isclose(sig, c * math.exp(sigma * math.sqrt(2) ** rho), rel_tol=1e-14)
    assert math.isclose(rms, c, rel_tol=1e-14)


def test_asymmetric_input_rejected():
    with pytest.raises(AsymmetricInput):
        matrix_norms(np.array([[1.0, 2.0], [0.0, 1.0]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(0, 10 ** 6))
def test_norm_bracket(d, seed):
    A = np.asarray(random_symmetric(random.Random(seed), d), dtype=float)
    inf, _, rms = matrix_norms(A)
    assert rms / math.sqrt(d) <= inf + 1e-12 and inf <= math.sqrt(d) * rms + 1e-12


def test_divisor_state_without_counterterm(pair):
    ctx = near_resonant_ctx()
    st_ = divisor_state(10, pair, None, ctx)
    dv = delta(10, 25, ctx)
    assert st_.nu == pytest.approx(0, abs=1e-15)
    assert st_.x == pytest.approx(abs(dv), rel=1e-12)
    assert st_.y == pytest.approx(25 ** ctx.s2 * dv, rel=1e-14)


def test_divisor_state_scalar_shift(pair):
    ctx = near_resonant_ctx()
    lam = 2e-3
    st_ = divisor_state(10, pair, lam * np.eye(2), ctx)
    spec = CutoffSpec(gamma=ctx.gamma)
    cb = chi_bar(st_.y, 1, spec)
    assert cb > 0
    assert st_.x == pytest.approx(abs(delta(10, 25, ctx) + cb * lam / 25), rel=1e-12)


def test_divisor_state_against_dense_inverse(pair):
    ctx = near_resonant_ctx()
    rng = np.random.default_rng(1)
    for _ in range(20):
        M = rng.normal(scale=1e-3, size=(2, 2))
        M = M + M.T
        st_ = divisor_state(10, pair, M, ctx)
        A = np.asarray(st_.shifted, dtype=float)
        inv = np.linalg.inv(A)
        assert st_.x == pytest.approx(1 / math.sqrt((inv ** 2).sum() / 2), rel=1e-12)
        d = float(st_.delta)
        assert abs(abs(d + st_.nu / 25 ** ctx.s1) - st_.x) <= 1e-12


def test_far_propagator_is_diagonal(exact_ctx, plane_clusters):
    cl = plane_clusters.cluster_of((3, 3))
    G = propagator(1, cl, -1, -1, None, exact_ctx)
    dv = delta(1, 18, exact_ctx)
    assert as_rows(G) == ((Fraction(1, 18) / dv,),)
    assert is_zero(propagator(1, cl, 0, 1, None, exact_ctx))


def test_propagator_support(pair):
    ctx = near_resonant_ctx()
    spec = CutoffSpec(gamma=ctx.gamma)
    st_ = divisor_state(10, pair, None, ctx, spec)
    live = [h for h in range(-1, 20)
            if not is_zero(propagator(10, pair, h, 1, None, ctx, spec, state=st_))]
    assert 1 <= len(live) <= 2
    assert all(chi_scale(st_.x, h, spec) != 0 for h in live)


def test_all_far_labels_give_diagonal_inverse():
    A = ((Fraction(2), 0, 0), (0, Fraction(-3), 0), (0, 0, Fraction(5)))
    dec = resonant_block_decompose(A, [-1, -1, -1], Fraction(1, 4))
    assert as_rows(dec.bare[-1]) == tuple(
        tuple(Fraction(1, 4) / A[r][r] if r == c else 0 for c in range(3)) for r in range(3))


def test_singular_label0_block():
    A = ((Fraction(1), Fraction(1)), (Fraction(1), Fraction(0)))
    with pytest.raises(SingularA22):
        resonant_block_decompose(A, [1, 0])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_decomposition_reconstructs_and_sums(seed):
    A, b = random_admissible(random.Random(seed))
    dec = resonant_block_decompose(A, b, Fraction(1, 3))
    assert as_rows(matmul(matmul(dec.S, dec.A_tilde), transpose(dec.S))) == as_rows(A)
    total = None
    for i in (1, 0, -1):
        total = dec.bare[i] if total is None else madd(total, dec.bare[i])
    target = tuple(tuple(Fraction(1, 3) * v for v in row) for row in as_rows(inverse(A)))
    assert as_rows(total) == target


def test_float_decomposition_matches_dense_inverse():
    rng = random.Random(5)
    for _ in range(20):
        A, b = random_admissible(rng, 5)
        Af = np.asarray(A, dtype=float)
        dec = resonant_block_decompose(Af, b, 0.5)
        total = sum(np.asarray(dec.bare[i]) for i in (1, 0, -1))
        assert np.abs(total - 0.5 * np.linalg.inv(Af)).max() <= 1e-12 * np.abs(total).max()


def test_resonant_propagator_scaling():
    A, b = random_admissible(random.Random(2), 4)
    dec = resonant_block_decompose(A, b)
    G = resonant_propagator(dec, 1, 2, Fraction(1, 2), Fraction(1, 3))
    assert as_rows(G) == tuple(tuple(Fraction(1, 6) * v for v in r) for r in as_rows(dec.bare[1]))
    assert is_zero(resonant_propagator(dec, 0, 2, 1, 1))


def test_counterterm_zero_for_zero_T():
    A, b = random_admissible(random.Random(3), 4)
    T = tuple(tuple(Fraction(0) for _ in range(4)) for _ in range(4))
    L, _ = resonant_counterterm(T, A, b)
    assert is_zero(L)


def test_counterterm_without_label0_is_minus_T_block():
    rng = random.Random(4)
    A, _ = random_admissible(rng, 3)
    b = [1, 1, -1]
    A = tuple(tuple(A[r][c] if (r == c or (b[r] == 1 and b[c] == 1)) else Fraction(0)
                    for c in range(3)) for r in range(3))
    A = tuple(tuple(v if not (r == c == 2) else Fraction(2) for c, v in enumerate(row))
              for r, row in enumerate(A))
    T = random_symmetric(rng, 3)
    L, _ = resonant_counterterm(T, A, b)
    for r in range(3):
        for c in range(3):
            expect = -T[r][c] if b[r] == 1 and b[c] == 1 else 0
            assert L[r][c] == expect


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_resonant_cancellation_exact(seed):
    rng = random.Random(seed)
    A, b = random_admissible(rng)
    T = random_symmetric(rng, len(b))
    L, dec = resonant_counterterm(T, A, b)
    assert is_symmetric(L)
    assert is_zero(sandwiched(dec, L, T))


def test_derivative_identities():
    rng = np.random.default_rng(7)
    for _ in range(20):
        assert central_difference_check(int(rng.integers(2, 7)), rng) <= 1e-6
