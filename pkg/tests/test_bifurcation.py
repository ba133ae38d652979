import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindstedt.bifurcation import (JPattern, PacketSet, alphabet, amplitudes, assemble_J,
                                   bifurcation_residual, chain_steps, construct_packet,
                                   contains_loop, far_diagonal, find_blocks, orbit_sign,
                                   packet_condition, positive_q_modes, positive_row,
                                   leading_field, recursive_chain_bound,
                                   repeated_letter_identity, sample_chains,
                                   scan_J11_invertibility, sign_orbit, word_vector)
from lindstedt.errors import NegativeAmplitudeSquare, SearchExhausted
from lindstedt.lattice import norm2


@pytest.fixture(scope="module")
def single():
    return construct_packet(1, 2, 1)


@pytest.fixture(scope="module")
def pair():
    return construct_packet(2, 2, 1)


def rectangle_oracle(members):
    """Brute force: every orthogonal corner (m1, m3, m2) of the orbit whose fourth corner is in
    the orbit involves one member three times, or one member once and another twice."""
    base = {v: m for m in members for v in sign_orbit(m)}
    for m1, m2, m3 in itertools.product(base, repeat=3):
        m = tuple(a + b - c for a, b, c in zip(m1, m2, m3))
        if m not in base:
            continue
        if sum((a - c) * (b - c) for a, b, c in zip(m1, m2, m3)) != 0:
            continue
        reps = sorted([base[m1], base[m2], base[m3]], key=lambda r: r != base[m])
        ok = reps.count(base[m]) == 3 or (reps.count(base[m]) == 1 and reps[1] == reps[2])
        if not ok:
            return False
    return True


def test_single_member_packets():
    assert construct_packet(1, 2, 1).members == [(1, 1)]
    assert construct_packet(1, 3, 1).members == [(1, 1, 1)]


@pytest.mark.parametrize("D,A2", [(2, Fraction(2, 9)), (3, Fraction(1, 9))])
def test_single_member_amplitudes(D, A2):
    amps = amplitudes(construct_packet(1, D, 1))
    assert amps.exact and amps.A_squared == A2
    assert amps.a_squared == {(1,) * D: A2}


def test_pair_packet_geometry(pair):
    assert pair.N == 2
    ok, slack = packet_condition(pair.members, 2, 1)
    assert ok and slack >= 0
    assert rectangle_oracle(pair.members)
    assert all(a > 0 for a in amplitudes(pair).a_squared.values())


@pytest.mark.parametrize("N", [1, 2, 3])
def test_bifurcation_residual_is_exactly_zero(N):
    packet = construct_packet(N, 2, 1)
    assert all(v == 0 for v in bifurcation_residual(packet).values())


def test_negative_amplitude_and_exhausted_search():
    with pytest.raises(NegativeAmplitudeSquare):
        amplitudes(PacketSet(D=2, members=[(1, 1), (5, 5)], s=1))
    with pytest.raises(SearchExhausted):
        construct_packet(2, 2, 1, max_radius=3)


def test_leading_field_is_odd(pair):
    field = leading_field(pair)
    for m in pair.members:
        for v in sign_orbit(m):
            assert field[v] == orbit_sign(v, m) * field[m]


def test_unit_entry_of_J(single):
    # derivative of 2a - 9a^3 at a^2 = 2/9
    J = assemble_J(single, 1, mode_bound=2)
    assert J.modes == [(1, 1)]
    assert J.entries[0, 0] == pytest.approx(-4.0, abs=1e-12)


@pytest.mark.parametrize("which", ["single", "pair"])
def test_pattern_matches_naive_rows(which, request):
    packet = request.getfixturevalue(which)
    modes = positive_q_modes(2, 200)
    index = {m: i for i, m in enumerate(modes)}
    amps = amplitudes(packet)
    J = JPattern(packet, modes).evaluate(amps, 1)
    naive = np.zeros_like(J)
    field = leading_field(packet, amps)
    for i, q in enumerate(modes):
        naive[i, i] += norm2(q) ** 2 / 2
        for qp, v in positive_row(q, packet, field).items():
            if qp in index:
                naive[i, index[qp]] += v
    assert np.allclose(J, naive, atol=1e-12)
    assert np.allclose(J, J.T, atol=1e-12)


@pytest.mark.parametrize("which", ["single", "pair"])
def test_far_diagonal_off_packet_lines(which, request):
    packet = request.getfixturevalue(which)
    comps = {abs(c) for m in packet.members for c in m}
    J = assemble_J(packet, 1, mode_bound=2000)
    checked = 0
    for i, q in enumerate(J.modes):
        if comps & set(q) or q[0] == q[1]:
            continue
        assert J.entries[i, i] == pytest.approx(far_diagonal(packet, q), rel=1e-12)
        checked += 1
    assert checked > 500


def test_diagonal_dominates_far_out(single):
    J = assemble_J(single, 1, mode_bound=4000)
    big = [i for i, q in enumerate(J.modes) if norm2(q) > 2000]
    off = np.abs(J.entries).sum(axis=1) - np.abs(np.diag(J.entries))
    assert all(off[i] < 1e-3 * abs(J.entries[i, i]) for i in big)


def test_single_packet_blocks(single):
    part = find_blocks(single, 50)
    assert part.max_size <= 3
    flat = [m for b in part.blocks for m in b]
    assert set(positive_q_modes(2, 50)) <= set(flat)
    assert len(flat) == len(set(flat))


def test_empty_packet_gives_singletons():
    part = find_blocks(PacketSet(D=2, members=[], s=1), 50)
    assert all(len(b) == 1 for b in part.blocks)


@pytest.mark.parametrize("which", ["single", "pair"])
def test_J_vanishes_across_blocks(which, request):
    packet = request.getfixturevalue(which)
    J = assemble_J(packet, 1, mode_bound=300)
    where = {m: k for k, b in enumerate(J.blocks) for m in b}
    for i, q in enumerate(J.modes):
        for j, qp in enumerate(J.modes):
            if where[q] != where[qp]:
                assert J.entries[i, j] == 0


def test_recursive_bound():
    assert [recursive_chain_bound(L) for L in (1, 2, 3)] == [2, 10, 590500]
    assert recursive_chain_bound(12) == ">10^60"


@settings(max_examples=40, deadline=None)
@given(st.integers(-15, 15), st.integers(-15, 15))
def test_chain_relation_is_symmetric(a, b):
    q = (a, b)
    letters = alphabet(construct_packet(1, 2, 1).orbit())
    for (x, y), w in chain_steps(q, letters):
        back = {(v, target) for v, target in chain_steps(w, letters)}
        assert ((y, x), q) in back


@pytest.mark.parametrize("N,M1", [(1, 2), (2, 4)])
def test_chains_contain_loops(N, M1):
    packet = construct_packet(N, 2, 1)
    part = find_blocks(packet, 50, chain_radius2=400)
    assert part.max_size == M1
    chains = sample_chains(packet, 100, part.chain_bound, seed=1)
    assert len(chains) == 100
    assert all(contains_loop(w) for _, w in chains)
    assert all(repeated_letter_identity(w) for _, w in chains)


def test_loop_detection_on_words():
    a, b, c = (1, 1), (-1, 1), (1, -1)
    assert contains_loop([(a, b), (b, a)])
    assert not contains_loop([(a, b), (a, c)])
    assert word_vector([(a, b), (b, c)]) == (0, 2)


def test_invertibility_scan_single(single):
    res = scan_J11_invertibility(single, np.linspace(0.5, 2.0, 100))
    assert res["zeros"] == [] and res["crossings"] == [] and not res["identically_zero"]


def test_diagonal_builder(single):
    def diag_only(p):
        modes = positive_q_modes(2, 50)
        return np.diag([norm2(m) ** (1 + p.s) / 2 for m in modes])

    res = scan_J11_invertibility(single, [1.0, 2.0, 4.0], builder=diag_only)
    for row in res["rows"]:
        modes = positive_q_modes(2, 50)
        logprod = sum(math.log(norm2(m) ** (1 + row["s"]) / 2) for m in modes)
        assert row["sign"] == 1 and row["logabsdet"] == pytest.approx(logprod, rel=1e-12)
        assert row["log_diag_ratio"] == pytest.approx(0, abs=1e-9)


def test_diagonal_takes_over_as_s_grows(single):
    res = scan_J11_invertibility(single, [0.5, 1.0, 2.0, 4.0], bound=56)
    ratios = [abs(r["log_diag_ratio"]) for r in res["rows"]]
    assert ratios == sorted(ratios, reverse=True)
