import itertools
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindstedt.errors import InvariantViolation
from lindstedt.lattice import (BourgainConstants, ClusterConstants, build_resonant_cells,
                               bourgain_partition, cluster_sphere, enumerate_sphere, norm2,
                               omega_membership, verify_bourgain)


def brute_sphere(p, D):
    r = math.isqrt(p)
    return sorted(m for m in itertools.product(range(-r, r + 1), repeat=D) if norm2(m) == p)


def test_unit_sphere_is_sign_orbit():
    assert sorted(enumerate_sphere(2, 2)) == [(-1, -1), (-1, 1), (1, -1), (1, 1)]


def test_sphere_25_has_twelve_points():
    pts = enumerate_sphere(25, 2)
    assert len(pts) == 12
    assert set(pts) == {(5, 0), (-5, 0), (0, 5), (0, -5)} | {
        (a * x, b * y) for x, y in ((3, 4), (4, 3)) for a in (1, -1) for b in (1, -1)}


def test_non_sum_of_squares_is_empty():
    assert enumerate_sphere(7, 2) == []


def test_positive_sector():
    assert enumerate_sphere(25, 2, symmetry_sector=True) == [(3, 4), (4, 3)]
    assert all(min(m) > 0 for m in enumerate_sphere(50, 3, symmetry_sector=True))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(2, 3))
def test_enumeration_matches_brute_force(p, D):
    pts = enumerate_sphere(p, D)
    assert pts == sorted(pts)
    assert pts == brute_sphere(p, D)


def test_p25_pairs_close_points():
    const = ClusterConstants(D=2, alpha=0.1, C1=2.0, C2=1.0)
    assert math.sqrt(2) < const.threshold(25) < math.sqrt(10)
    clusters = cluster_sphere(enumerate_sphere(25, 2), constants=const)
    groups = {c.members for c in clusters}
    assert ((3, 4), (4, 3)) in groups
    assert ((5, 0),) in groups
    assert ((-4, -3), (-3, -4)) in groups


def test_unit_sphere_single_cluster():
    clusters = cluster_sphere(enumerate_sphere(2, 2))
    assert len(clusters) == 1 and clusters[0].d == 4
    positive = cluster_sphere(enumerate_sphere(2, 2, symmetry_sector=True))
    assert all(c.d <= 2 for c in positive)


def test_single_point_cluster():
    (c,) = cluster_sphere([(3, 4)])
    assert c.members == ((3, 4),) and c.d == 1


def test_rejects_mixed_spheres_and_duplicates():
    with pytest.raises(InvariantViolation):
        cluster_sphere([(3, 4), (1, 1)])
    with pytest.raises(InvariantViolation):
        cluster_sphere([(3, 4), (3, 4)])


def test_bad_constants_are_reported():
    # a huge edge threshold merges the whole sphere and breaks the size bound
    const = ClusterConstants(D=2, alpha=0.1, C1=2.0, C2=10.0)
    with pytest.raises(InvariantViolation):
        cluster_sphere(enumerate_sphere(25, 2), constants=const)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 3000))
def test_partition_property(p):
    pts = enumerate_sphere(p, 2)
    clusters = cluster_sphere(pts)
    flat = [m for c in clusters for m in c.members]
    assert sorted(flat) == sorted(pts)
    assert all(norm2(m) == p for m in flat)


def test_omega_membership_examples():
    assert omega_membership(10, 21, 0.1, 0.05, 2)
    assert not omega_membership(10, 20, 0.1, 0.05, 2)
    assert not omega_membership(1, 2, 0.3, 0.05, 2)
    assert not omega_membership(0, 3, 0.1, 0.05, 2)


def test_bourgain_partition_radius_20():
    modes = [m for m in itertools.product(range(-20, 21), repeat=2)
             if 0 < norm2(m) <= 400]
    cells = bourgain_partition(modes, alpha=0.2)
    flat = sorted(m for c in cells for m in c.members)
    assert flat == sorted(modes)
    verify_bourgain(cells, BourgainConstants(D=2, alpha=0.2))


def test_bourgain_rejects_duplicates_and_singleton():
    with pytest.raises(InvariantViolation):
        bourgain_partition([(1, 2), (1, 2)])
    (cell,) = bourgain_partition([(3, 4)])
    assert cell.members == ((3, 4),) and cell.diam == 0


def test_resonant_cells_examples():
    assert build_resonant_cells([], 1.99, 0.05, 2) == []
    cells = bourgain_partition([(3, 4)])
    (rc,) = build_resonant_cells(cells, 1.99, 0.05, 2)
    assert sorted({n for n, _ in rc.members}) == [13]
    unit = bourgain_partition([(1, 1)])
    assert all(not c.members for c in build_resonant_cells(unit, 1.99, 0.05, 2))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.floats(0.01, 0.1))
def test_resonant_cell_window(a, b, eps0):
    cells = bourgain_partition([(a, b)])
    for rc in build_resonant_cells(cells, 2 - eps0 / 2, eps0, 2):
        for n, m in rc.members:
            p = norm2(m)
            assert 2 * n != p
            assert -0.5 + (2 - eps0) * n <= p <= 2 * n + 0.5
