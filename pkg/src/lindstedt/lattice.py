"""Lattice geometry: spheres, sphere clusters, the near-resonant index set,
Bourgain cells and the resonant-case cells.

Partitions are connected components of a proximity graph whose edge threshold
grows like a small power of the radius; every emitted partition is checked
against the size, separation and diameter bounds for the configured constants.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial.distance import pdist, squareform

from .errors import InvariantViolation

Vector = tuple


# ---------------------------------------------------------------------------
# spheres


@lru_cache(maxsize=4096)
def _sphere(p: int, D: int, positive: bool) -> tuple:
    if p < 0:
        return ()
    top = math.isqrt(p)
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            r = math.isqrt(remaining)
            if r * r == remaining:
                if r == 0:
                    if not positive:
                        out.append(prefix + (0,))
                elif positive:
                    out.append(prefix + (r,))
                else:
                    out.append(prefix + (-r,))
                    out.append(prefix + (r,))
            return
        lo = 1 if positive else -min(top, math.isqrt(remaining))
        for c in range(lo, math.isqrt(remaining) + 1):
            rec(prefix + (c,), remaining - c * c, slots - 1)

    rec((), p, D)
    return tuple(sorted(out))


def enumerate_sphere(p: int, D: int, symmetry_sector: bool = False) -> list[Vector]:
    """All integer D-vectors with squared length p, sorted lexicographically.

    With ``symmetry_sector`` only vectors with strictly positive components
    are returned (the sine-series sector).
    """
    if D < 2:
        raise ValueError("dimension must be at least 2")
    if p < 1:
        raise ValueError("p must be positive")
    return list(_sphere(p, D, bool(symmetry_sector)))


def norm2(m) -> int:
    return sum(c * c for c in m)


def unit_orbit(D: int) -> list[Vector]:
    """The 2**D vectors with all components equal to +-1."""
    return sorted(itertools.product((-1, 1), repeat=D))


def is_unit_orbit(m) -> bool:
    return all(abs(c) == 1 for c in m)


# ---------------------------------------------------------------------------
# sphere clusters


def sphere_beta(D: int, alpha: float) -> float:
    """Separation exponent; 1/3 in the plane."""
    if D == 2:
        return 1.0 / 3.0
    return 2.0 * alpha / (2 * D + math.factorial(D + 2) * D * D)


@dataclass(frozen=True)
class ClusterConstants:
    """Constants of the sphere partition.

    ``C2`` is both the proximity-graph edge coefficient and the separation
    constant; ``C1`` bounds cluster sizes by ``C1 * p**alpha``.
    """

    D: int
    alpha: float = 0.1
    C1: float = 2.0
    C2: float = 0.35

    @property
    def beta(self) -> float:
        return sphere_beta(self.D, self.alpha)

    def threshold(self, p: int) -> float:
        return self.C2 * p ** self.beta


# Defaults calibrated by ``calibrate_sphere_constants`` over p <= 10**4 in the
# plane and p <= 2000 in three dimensions; see the decisions log.
DEFAULT_CONSTANTS = {
    2: ClusterConstants(D=2, alpha=0.1, C1=2.0, C2=0.35),
    3: ClusterConstants(D=3, alpha=0.1, C1=24.0, C2=1.5),
}


def default_constants(D: int, alpha: float = 0.1) -> ClusterConstants:
    base = DEFAULT_CONSTANTS.get(D, ClusterConstants(D=D, alpha=alpha, C1=2.0 ** D, C2=1.5))
    if base.alpha != alpha:
        base = ClusterConstants(D=D, alpha=alpha, C1=base.C1, C2=base.C2)
    return base


@dataclass(frozen=True)
class SphereCluster:
    """A cluster of lattice points on one sphere.

    ``key = (p, rank)`` identifies it; rank orders the clusters of a sphere by
    their lexicographically smallest member.  The unit orbit on the sphere
    p = D is always its own cluster with rank 0.
    """

    p: int
    rank: int
    members: tuple
    diam: float = 0.0
    min_separation: float = math.inf

    @property
    def key(self) -> tuple[int, int]:
        return (self.p, self.rank)

    @property
    def d(self) -> int:
        return len(self.members)

    def index(self, m) -> int:
        return self.members.index(tuple(m))

    def is_unit(self) -> bool:
        return self.rank == 0 and is_unit_orbit(self.members[0])

    def report(self) -> dict:
        return {
            "j": list(self.key),
            "p_j": self.p,
            "d_j": self.d,
            "members": [list(m) for m in self.members],
            "diam": self.diam,
            "min_separation": None if math.isinf(self.min_separation) else self.min_separation,
        }


def _components(points: np.ndarray, threshold: float) -> list[list[int]]:
    n = len(points)
    if n == 1:
        return [[0]]
    dist = squareform(pdist(points))
    adj = csr_matrix(dist < threshold)
    count, labels = connected_components(adj, directed=False)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def _diameter(pts: np.ndarray) -> float:
    return float(pdist(pts).max()) if len(pts) > 1 else 0.0


def cluster_sphere(points, alpha: float = 0.1, constants: ClusterConstants | None = None,
                   check: bool = True) -> list[SphereCluster]:
    """Partition points of one sphere into clusters and verify the bounds.

    Checks: all members on the sphere, ``d <= C1 p**alpha`` (and ``d <= 2`` in
    the plane), separation ``>= C2 p**beta`` between clusters, a neighbour
    closer than ``C2 p**beta`` for every member of a non-trivial cluster and
    ``diam <= C1 C2 p**(alpha+beta)``.  The unit orbit is exempt from the size
    and separation checks because it is a single cluster by convention.
    """
    pts = [tuple(int(c) for c in m) for m in points]
    if not pts:
        return []
    if len(set(pts)) != len(pts):
        raise InvariantViolation("duplicate points in sphere input")
    D = len(pts[0])
    p = norm2(pts[0])
    if any(norm2(m) != p for m in pts):
        raise InvariantViolation("points do not share a sphere")
    const = constants or default_constants(D, alpha)
    pts.sort()
    unit = [m for m in pts if is_unit_orbit(m)]
    rest = [m for m in pts if not is_unit_orbit(m)]
    groups: list[tuple] = []
    if unit:
        groups.append(tuple(unit))
    if rest:
        arr = np.asarray(rest, dtype=float)
        for comp in _components(arr, const.threshold(p)):
            groups.append(tuple(rest[i] for i in comp))
    order = [m for g in groups for m in g]
    labels = np.repeat(np.arange(len(groups)), [len(g) for g in groups])
    arr = np.asarray(order, dtype=float)
    dist = squareform(pdist(arr)) if len(order) > 1 else np.zeros((1, 1))
    other = labels[:, None] != labels[None, :]
    clusters = []
    for rank, members in enumerate(groups):
        rows = labels == rank
        block = dist[np.ix_(rows, rows)]
        cross = np.where(other[rows], dist[rows], np.inf)
        clusters.append(SphereCluster(p=p, rank=rank, members=members,
                                      diam=float(block.max()),
                                      min_separation=float(cross.min()) if cross.size else math.inf))
    if check:
        verify_sphere_clusters(clusters, const)
    return clusters


def verify_sphere_clusters(clusters: list[SphereCluster], const: ClusterConstants) -> None:
    """Raise InvariantViolation if a cluster breaks a partition bound."""
    for c in clusters:
        if c.is_unit():
            continue
        p = c.p
        thr = const.threshold(p)
        if c.d > const.C1 * p ** const.alpha:
            raise InvariantViolation(f"cluster {c.key} has {c.d} members, above C1 p^alpha",
                                     cluster=c.key)
        if const.D == 2 and c.d > 2:
            raise InvariantViolation(f"planar cluster {c.key} has {c.d} > 2 members",
                                     cluster=c.key)
        if c.min_separation < thr:
            raise InvariantViolation(f"cluster {c.key} is closer than C2 p^beta to another",
                                     cluster=c.key)
        if c.d > 1:
            arr = np.asarray(c.members, dtype=float)
            dist = squareform(pdist(arr))
            np.fill_diagonal(dist, np.inf)
            if float(dist.min(axis=1).max()) >= thr:
                raise InvariantViolation(f"cluster {c.key} has an isolated member",
                                         cluster=c.key)
            if c.diam > const.C1 * const.C2 * p ** (const.alpha + const.beta):
                raise InvariantViolation(f"cluster {c.key} diameter too large", cluster=c.key)


class ClusterIndex:
    """Lazily built partition of the lattice into sphere clusters."""

    def __init__(self, D: int, constants: ClusterConstants | None = None,
                 positive: bool = False):
        self.D = D
        self.constants = constants or default_constants(D)
        self.positive = positive
        self._spheres: dict[int, list[SphereCluster]] = {}
        self._where: dict[tuple, SphereCluster] = {}

    def clusters_on_sphere(self, p: int) -> list[SphereCluster]:
        if p not in self._spheres:
            pts = enumerate_sphere(p, self.D, self.positive) if p >= 1 else []
            clusters = cluster_sphere(pts, constants=self.constants) if pts else []
            self._spheres[p] = clusters
            for c in clusters:
                for m in c.members:
                    self._where[m] = c
        return self._spheres[p]

    def cluster_of(self, m) -> SphereCluster:
        m = tuple(m)
        if m not in self._where:
            self.clusters_on_sphere(norm2(m))
        return self._where[m]

    def cluster(self, key) -> SphereCluster:
        p, rank = key
        return self.clusters_on_sphere(p)[rank]

    @property
    def unit(self) -> SphereCluster:
        return self.cluster_of((1,) * self.D)


def calibrate_sphere_constants(D: int, p_max: int, alpha: float = 0.1) -> dict:
    """Largest admissible edge coefficient and the size constant it implies.

    For the plane the edge coefficient is the largest value keeping every
    cluster at two points or fewer; the returned ``C2`` is 90 percent of it.
    """
    beta = sphere_beta(D, alpha)
    worst = math.inf
    for p in range(1, p_max + 1):
        rest = [m for m in enumerate_sphere(p, D) if not is_unit_orbit(m)]
        if len(rest) < 3:
            continue
        arr = np.asarray(rest, dtype=float)
        dist = squareform(pdist(arr))
        # smallest threshold at which some component reaches three points is
        # the smallest 'second neighbour' distance along chains; a direct scan
        # of edges in increasing order is simple and fast enough here
        iu = np.triu_indices(len(rest), 1)
        order = np.argsort(dist[iu], kind="stable")
        parent = list(range(len(rest)))
        size = [1] * len(rest)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for e in order:
            a, b = int(iu[0][e]), int(iu[1][e])
            ra, rb = find(a), find(b)
            if ra == rb:
                continue
            if size[ra] + size[rb] >= 3:
                worst = min(worst, float(dist[a, b]) / p ** beta)
                break
            parent[ra] = rb
            size[rb] += size[ra]
    return {"D": D, "p_max": p_max, "beta": beta, "edge_coefficient_limit": worst}


def measure_size_constant(D: int, p_max: int, const: ClusterConstants) -> float:
    """max d_j / p_j**alpha over all non-unit clusters with p_j <= p_max."""
    worst = 0.0
    for p in range(1, p_max + 1):
        pts = enumerate_sphere(p, D)
        if not pts:
            continue
        for c in cluster_sphere(pts, constants=const, check=False):
            if not c.is_unit():
                worst = max(worst, c.d / p ** const.alpha)
    return worst


# ---------------------------------------------------------------------------
# near-resonant index set


def omega_membership(n: int, p: int, mu, eps0, D: int) -> bool:
    """Whether (n, p) belongs to the near-resonant index set.

    True iff ``-1/2 + (D + mu - eps0) n < p < (D + mu) n + 1/2`` and
    ``(n, p) != (1, D)``.
    """
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    if (n, p) == (1, D):
        return False
    half = Fraction(1, 2)
    return -half + (D + mu - eps0) * n < p < (D + mu) * n + half


# ---------------------------------------------------------------------------
# Bourgain cells and resonant cells


def bourgain_beta(D: int, alpha: float) -> float:
    return alpha / ((1 + 2 ** (D - 1) * math.factorial(D) * math.factorial(D + 1)) * D)


@dataclass(frozen=True)
class BourgainConstants:
    D: int
    alpha: float = 0.2
    C1: float = 10.0
    C2: float = 1.5

    @property
    def beta(self) -> float:
        return bourgain_beta(self.D, self.alpha)


@dataclass(frozen=True)
class BourgainCell:
    rank: int
    members: tuple
    p: int
    diam: float

    @property
    def d(self) -> int:
        return len(self.members)


def _phi(members) -> np.ndarray:
    arr = np.asarray(members, dtype=float)
    return np.hstack([arr, (arr ** 2).sum(axis=1, keepdims=True)])


def bourgain_partition(modes, alpha: float = 0.2,
                       constants: BourgainConstants | None = None,
                       check: bool = True) -> list[BourgainCell]:
    """Partition lattice vectors by proximity of their lifts (m, |m|^2).

    Two vectors are linked when the lifts are closer than
    ``C2 * min(p, p')**beta`` (with p floored at 1); cells are the connected
    components.  Each cell is checked for ``|cell| <= C1 p**alpha``, lift
    separation ``>= C2 min(p_i, p_j)**beta`` and ``diam < C1 C2 p**(alpha+beta)``.
    """
    pts = [tuple(int(c) for c in m) for m in modes]
    if len(set(pts)) != len(pts):
        raise InvariantViolation("duplicate vectors in partition input", stage="lattice partition")
    if not pts:
        return []
    D = len(pts[0])
    const = constants or BourgainConstants(D=D, alpha=alpha)
    pts.sort()
    lifts = _phi(pts)
    pw = np.maximum(lifts[:, -1], 1.0) ** const.beta
    dist = squareform(pdist(lifts)) if len(pts) > 1 else np.zeros((1, 1))
    thr = const.C2 * np.minimum(pw[:, None], pw[None, :])
    adj = csr_matrix((dist < thr) & ~np.eye(len(pts), dtype=bool))
    _, labels = connected_components(adj, directed=False)
    groups: dict[int, list[int]] = {}
    for i, lab in enumerate(labels):
        groups.setdefault(int(lab), []).append(i)
    cells = []
    for rank, idx in enumerate(sorted(groups.values(), key=lambda g: g[0])):
        members = tuple(pts[i] for i in idx)
        p = min(norm2(m) for m in members)
        cells.append(BourgainCell(rank, members, p, _diameter(np.asarray(members, float))))
    if check:
        verify_bourgain(cells, const, labels, dist, pw)
    return cells


def verify_bourgain(cells, const: BourgainConstants, labels=None, dist=None, pw=None) -> None:
    for c in cells:
        p = max(c.p, 1)
        if c.d > const.C1 * p ** const.alpha:
            raise InvariantViolation(f"cell {c.rank} too large ({c.d})")
        if c.diam >= const.C1 * const.C2 * p ** (const.alpha + const.beta):
            raise InvariantViolation(f"cell {c.rank} diameter too large")
    if labels is None:
        return
    # exhaustive pairwise lift separation between distinct cells
    same = labels[:, None] == labels[None, :]
    thr = const.C2 * np.minimum(pw[:, None], pw[None, :])
    bad = (~same) & (dist < thr)
    if bad.any():
        raise InvariantViolation("two cells are closer than the lift separation bound")


@dataclass(frozen=True)
class ResonantCell:
    rank: int
    members: tuple  # of (n, m)

    @property
    def d(self) -> int:
        return len(self.members)


def build_resonant_cells(cells, omega, eps0, D: int) -> list[ResonantCell]:
    """Collect the near-resonant time-space modes attached to each cell.

    A mode (n, m) with m in the cell is kept when ``D n != |m|^2`` and
    ``-1/2 + (D - eps0) n <= |m|^2 <= D n + 1/2``.
    """
    if not (omega < D):
        raise ValueError("resonant cells need omega = D - eps with eps > 0")
    out = []
    e0 = float(eps0)
    for cell in cells:
        members = []
        for m in cell.members:
            p = norm2(m)
            n_lo = math.ceil((p - 0.5) / D)
            n_hi = math.floor((p + 0.5) / (D - e0))
            for n in range(max(n_lo, 1), n_hi + 1):
                if D * n == p:
                    continue
                if -0.5 + (D - e0) * n <= p <= D * n + 0.5:
                    members.append((n, tuple(m)))
        if members:
            out.append(ResonantCell(cell.rank, tuple(sorted(members))))
    return out
