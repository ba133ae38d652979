"""Labelled trees: enumeration, values, resonances and counterterms.

A tree is built from ``Node`` objects.  Each non-root node owns the line
that exits it, so the labels of that line (type, scale, momenta, block
indices) are stored on the node.  Cubic nodes have their three children in
fixed sign positions (+, +, -); the factor 1/3 of a cubic node and the 3
ways of placing the conjugated line cancel, so cubic node factors are 1 and
the values match the plain recursion term by term.

Three tree families are produced:

* ``"full"``: every labelled tree, including counterterm nodes (one child,
  node factor read from a counterterm table);
* ``"renormalized"``: trees with no resonances and no counterterm nodes;
* ``"resonance"``: resonance-family trees for one block (n, cluster), with a
  single special end-point ``e`` and unit propagators on the root line and
  on the line leaving ``e``.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterator

import numpy as np

from .blocks import divisor_state, is_symmetric, propagator, zeros
from .errors import BoundViolation, InvariantViolation, LabelInconsistency
from .lattice import ClusterIndex, omega_membership
from .smalldiv import (CutoffSpec, FrequencyContext, chi_dyadic, chi_scale, chi_tail, delta)

SIGNS = (1, 1, -1)

END, SPECIAL, CUBIC, COUNTER = "end", "e", "cubic", "counter"


def endpoint_sign(m) -> int:
    """(-1)^(|m - V|_1 / 2) for m in the unit orbit: minus one per negative entry."""
    return -1 if sum(1 for c in m if c < 0) % 2 else 1


class Node:
    """A node together with the line leaving it."""

    __slots__ = ("kind", "children", "n", "m", "mp", "cluster", "a", "b", "i", "h", "order",
                 "kv", "value", "has_e", "e_index", "blocks", "maxscale", "free")

    def __init__(self, kind, children, n, m, mp, cluster, a, b, i, h, order, value,
                 kv=0, has_e=False, e_index=None, free=False):
        self.kind = kind
        self.children = children
        self.n = n
        self.m = m
        self.mp = mp
        self.cluster = cluster
        self.a = a
        self.b = b
        self.i = i
        self.h = h
        self.order = order
        self.kv = kv
        self.value = value
        self.has_e = has_e
        self.e_index = e_index
        self.free = free
        blocks = set()
        mx = -1
        for c in children:
            blocks |= c.blocks
            if c.kind != SPECIAL:
                mx = max(mx, c.maxscale)
        if kind in (CUBIC, COUNTER) and not free:
            blocks.add((n, cluster.key))
            mx = max(mx, h)
        self.blocks = frozenset(blocks)
        self.maxscale = mx

    @property
    def block(self):
        return (self.n, self.cluster.key) if self.cluster is not None else None

    def lines(self) -> Iterator["Node"]:
        """All nodes of the subtree (each standing for its exiting line)."""
        stack = [self]
        while stack:
            v = stack.pop()
            yield v
            stack.extend(v.children)

    def endpoint_count(self) -> int:
        return sum(1 for v in self.lines() if v.kind == END)

    def internal_count(self) -> int:
        return sum(1 for v in self.lines() if v.kind in (CUBIC, COUNTER))

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "n": self.n}
        if self.m is not None:
            d["m"] = list(self.m)
        if self.mp is not None:
            d["mp"] = list(self.mp)
        if self.kind in (CUBIC, COUNTER):
            if not self.free:
                d.update(i=self.i, h=self.h, a=self.a)
            d["j"] = list(self.cluster.key)
            d["b"] = self.b
        if self.kind == COUNTER:
            d["kv"] = self.kv
        if self.children:
            d["children"] = [c.to_dict() for c in self.children]
        return d


def canonical_json(node: Node) -> str:
    """Canonical serialization; children keep their sign positions."""
    return json.dumps(node.to_dict(), sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# resonances


@dataclass(frozen=True)
class ResonanceRecord:
    kind: int
    exiting: Node = field(repr=False)
    entering: Node = field(repr=False)
    scale: int
    order: int
    path: tuple = ()


def positions(root: Node):
    """Yield (path, node) for every node; ``path`` is the tuple of child indices.

    Subtrees are shared between trees (and may repeat inside one tree), so
    lines are identified by position, never by object identity.
    """
    stack = [((), root)]
    while stack:
        path, v = stack.pop()
        yield path, v
        for i, c in enumerate(v.children):
            stack.append((path + (i,), c))


def root_resonances(root: Node, tau: float, extended: bool = False) -> list[ResonanceRecord]:
    """Resonances whose exiting line is the line leaving ``root``.

    The cluster of a candidate entering line is everything strictly below the
    root minus the candidate and its subtree.  The special end-point line of a
    resonance-family tree is never a cluster line; a cluster containing the
    special end-point therefore has two entering lines and is skipped.  With
    ``extended`` every cluster line (not only off-path lines) must avoid the
    block of the resonance.
    """
    if root.kind != CUBIC or root.free or root.i != 1:
        return []
    key = root.block
    if key not in set().union(*(c.blocks for c in root.children)):
        return []
    found = []
    lines = [(path, v) for path, v in positions(root) if path]
    for cpath, cand in lines:
        if cand.kind not in (CUBIC, COUNTER) or cand.block != key or cand.i not in (0, 1):
            continue
        depth = len(cpath)
        H = -1
        ok = True
        for path, v in lines:
            if path[:depth] == cpath:
                continue
            if v.kind == SPECIAL:
                ok = False
                break
            if v.kind in (CUBIC, COUNTER):
                H = max(H, v.h)
                on_path = len(path) < depth and cpath[:len(path)] == path
                if v.block == key and (extended or not on_path):
                    ok = False
                    break
        if not ok:
            continue
        if root.h <= H + 1:
            continue
        if root.n < 2 ** ((H - 2) / tau):
            continue
        if cand.i == 1 and cand.h <= H:
            continue
        found.append(ResonanceRecord(kind=1 if cand.i == 1 else 2, exiting=root, entering=cand,
                                     scale=H, order=root.order - cand.order, path=cpath))
    return found


def _line_scale(v: Node) -> int:
    if v.kind in (CUBIC, COUNTER) and not v.free:
        return v.h
    return -1


def detect_clusters_resonances(root: Node, tau: float):
    """Scale clusters of a tree and all resonances it contains.

    Clusters are returned as (h, frozenset of node paths) for every h >= 0:
    maximal sets of nodes joined by lines of scale <= h with at least one
    joining line on scale h.  End-point lines count as scale -1; the line
    leaving the special end-point joins nothing.  Resonance records carry
    the absolute path of their entering line.
    """
    nodes = dict(positions(root))
    internal = [path for path in nodes if path and nodes[path].kind != SPECIAL]
    clusters = []
    for h in sorted({_line_scale(nodes[p]) for p in internal if _line_scale(nodes[p]) >= 0}):
        parent = {p: p for p in nodes}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for path in internal:
            if _line_scale(nodes[path]) <= h:
                parent[find(path)] = find(path[:-1])
        groups = defaultdict(set)
        for path in nodes:
            groups[find(path)].add(path)
        for comp in groups.values():
            if any(path in comp and path[:-1] in comp and _line_scale(nodes[path]) == h
                   for path in internal):
                clusters.append((h, frozenset(comp)))
    res = []
    for vpath, v in nodes.items():
        for r in root_resonances(v, tau):
            res.append(replace(r, path=vpath + r.path))
    return clusters, res


# ---------------------------------------------------------------------------
# evaluation context


class TreeContext:
    """Everything needed to label lines and price propagators.

    ``M`` maps (n, cluster key) to a symmetric block (or is a callable of
    (n, cluster), or None for the zero counterterm).  ``counterterms`` is a
    callable (k, n, cluster, h) -> matrix used by counterterm nodes of full
    trees.  ``cutoff`` may differ from the Diophantine gamma of ``ctx``.
    """

    def __init__(self, ctx: FrequencyContext, clusters: ClusterIndex | None = None,
                 cutoff: CutoffSpec | None = None, M=None, q=1, counterterms=None,
                 counter_orders: int = 0):
        self.ctx = ctx
        self.clusters = clusters or ClusterIndex(ctx.D)
        self.spec = cutoff or CutoffSpec(gamma=ctx.gamma, exact=ctx.exact)
        self.M = M
        self.q = Fraction(q) if ctx.exact and isinstance(q, int) else q
        self.counterterms = counterterms
        self.counter_orders = counter_orders
        self._states = {}
        self._props = {}
        self._options = {}
        self._endpoint = {}

    @property
    def exact(self):
        return self.ctx.exact

    def block_matrix(self, n, cluster):
        M = self.M
        if M is None:
            return None
        if callable(M):
            return M(n, cluster)
        return M.get((n, cluster.key))

    def state(self, n, cluster):
        key = (n, cluster.key)
        if key not in self._states:
            self._states[key] = divisor_state(n, cluster, self.block_matrix(n, cluster), self.ctx,
                                              self.spec)
        return self._states[key]

    def propagators(self, n, cluster):
        """Nonzero propagator matrices of a block as a list of (i, h, matrix)."""
        key = (n, cluster.key)
        if key not in self._props:
            st = self.state(n, cluster)
            out = []
            for i in (-1, 0):
                if st.chibar[i] != 0:
                    out.append((i, -1, propagator(n, cluster, -1, i, None, self.ctx, self.spec,
                                                  state=st)))
            if st.chibar[1] != 0:
                for h in st.scales:
                    out.append((1, h, propagator(n, cluster, h, 1, None, self.ctx, self.spec,
                                                 state=st)))
            self._props[key] = out
        return self._props[key]

    def is_q_block(self, n, cluster) -> bool:
        return n == 1 and cluster.is_unit()

    def line_options(self, n, mp):
        """All labellings (m, cluster, a, b, i, h, g) of a line with exit momentum mp."""
        key = (n, mp)
        if key not in self._options:
            cluster = self.clusters.cluster_of(mp)
            if self.is_q_block(n, cluster):
                self._options[key] = ()
            else:
                b = cluster.index(mp)
                out = []
                for i, h, G in self.propagators(n, cluster):
                    for a, m in enumerate(cluster.members):
                        out.append((m, cluster, a, b, i, h, G[a][b]))
                self._options[key] = tuple(out)
        return self._options[key]

    def endpoint_value(self, m):
        if m not in self._endpoint:
            self._endpoint[m] = endpoint_sign(m) * self.q
        return self._endpoint[m]

    def in_omega(self, n, cluster) -> bool:
        return omega_membership(n, cluster.p, self.ctx.mu, self.ctx.eps0, self.ctx.D)


def _vsum(ms, signs):
    return tuple(sum(s * m[c] for s, m in zip(signs, ms)) for c in range(len(ms[0])))


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


# ---------------------------------------------------------------------------
# enumeration


class TreeEnumerator:
    """Memoised generator of labelled trees for one ``TreeContext``."""

    def __init__(self, tc: TreeContext):
        self.tc = tc
        self.tau = tc.ctx.tau
        self._pools = {}
        self._rpools = {}
        self._filtered = {}
        self._index_cache = {}

    # -- plain and renormalized trees --------------------------------------

    def endpoints(self):
        tc = self.tc
        unit = tc.clusters.unit
        return [Node(END, (), 1, m, None, unit, unit.index(m), None, -1, -1, 0,
                     tc.endpoint_value(m)) for m in unit.members]

    def pool(self, k: int, mode: str) -> list[Node]:
        key = (k, mode)
        if key not in self._pools:
            self._pools[key] = self.endpoints() if k == 0 else list(self.iter_trees(k, mode))
        return self._pools[key]

    def iter_trees(self, k: int, mode: str = "renormalized") -> Iterator[Node]:
        """Stream every tree of order k in the given family ("full" or "renormalized")."""
        if mode not in ("full", "renormalized"):
            raise LabelInconsistency(f"unknown tree family {mode!r}")
        if k == 0:
            yield from self.endpoints()
            return
        tc = self.tc
        for orders in _compositions(k - 1, 3):
            pools = [self.pool(o, mode) for o in orders]
            for c1 in pools[0]:
                for c2 in pools[1]:
                    n12 = c1.n + c2.n
                    s12 = tuple(x + y for x, y in zip(c1.m, c2.m))
                    v12 = c1.value * c2.value
                    for c3 in pools[2]:
                        n = n12 - c3.n
                        mp = tuple(x - y for x, y in zip(s12, c3.m))
                        opts = tc.line_options(n, mp)
                        if not opts:
                            continue
                        v123 = v12 * c3.value
                        children = (c1, c2, c3)
                        for m, cl, a, b, i, h, g in opts:
                            node = Node(CUBIC, children, n, m, mp, cl, a, b, i, h, k, g * v123)
                            if mode == "renormalized" and i == 1 and root_resonances(node, self.tau):
                                continue
                            yield node
        if mode == "full" and tc.counterterms is not None:
            yield from self._counter_nodes(k)

    def _counter_nodes(self, k):
        tc = self.tc
        for kv in range(1, min(k, tc.counter_orders) + 1):
            for child in self.pool(k - kv, "full"):
                if child.kind == END or child.i not in (0, 1):
                    continue
                n, cl = child.n, child.cluster
                st = tc.state(n, cl)
                if st.chibar[1] == 0:
                    continue
                for i, h, G in tc.propagators(n, cl):
                    if i != 1:
                        continue
                    L = tc.counterterms(kv, n, cl, h)
                    for b, mp in enumerate(cl.members):
                        factor = L[b][child.a]
                        for a, m in enumerate(cl.members):
                            yield Node(COUNTER, (child,), n, m, mp, cl, a, b, 1, h, k,
                                       G[a][b] * factor * child.value, kv=kv)

    def enumerate(self, k: int, root=None, mode: str = "renormalized") -> list[Node]:
        """Trees of order k; ``root`` filters (n, m) for tree families and is
        (h, n, cluster, a, b) for the resonance family."""
        if mode == "resonance":
            if root is None or len(root) != 5:
                raise LabelInconsistency("resonance family needs root labels (h, n, cluster, a, b)")
            h, n, cluster, a, b = root
            return [t for t in self.iter_resonance_trees(k, n, cluster)
                    if t.maxscale == h and t.b == a and t.e_index == b]
        out = []
        for t in self.iter_trees(k, mode):
            if root is None or (t.n, t.m) == (root[0], tuple(root[1])):
                out.append(t)
        return out

    def tree_sums(self, k: int, mode: str = "renormalized") -> dict:
        """Sum of values per root mode (n, m) over all trees of order k."""
        sums = defaultdict(int)
        for t in self.iter_trees(k, mode):
            sums[(t.n, t.m)] += t.value
        return dict(sums)

    # -- resonance family ----------------------------------------------------

    def _rpool(self, r: int, n_e: int, cluster) -> list[Node]:
        key = (r, n_e, cluster.key)
        if key in self._rpools:
            return self._rpools[key]
        tc = self.tc
        target = (n_e, cluster.key)
        if r == 0:
            out = [Node(SPECIAL, (), n_e, m, None, cluster, None, None, None, None, 0,
                        Fraction(1) if tc.exact else 1.0, has_e=True, e_index=idx)
                   for idx, m in enumerate(cluster.members)]
        else:
            out = [node for node in self._r_combine(r, n_e, cluster, free=False)
                   if node.block != target]
        self._rpools[key] = out
        return out

    def _avoiding(self, o: int, target) -> list[Node]:
        """Renormalized trees of order o with no line in the block ``target``."""
        key = (o, target)
        if key not in self._filtered:
            self._filtered[key] = [t for t in self.pool(o, "renormalized")
                                   if target not in t.blocks]
        return self._filtered[key]

    @staticmethod
    def _by_mode(pool: list[Node]) -> dict:
        index = defaultdict(list)
        for t in pool:
            index[(t.n, t.m)].append(t)
        return index

    def _r_combine(self, r, n_e, cluster, free):
        tc = self.tc
        target = (n_e, cluster.key)
        for orders in _compositions(r - 1, 3):
            for pos in range(3):
                pools = []
                for idx, o in enumerate(orders):
                    if idx == pos:
                        pools.append(self._rpool(o, n_e, cluster))
                    else:
                        pools.append(self._avoiding(o, target))
                if free:
                    yield from self._free_roots(r, n_e, cluster, pools, pos)
                    continue
                for c1, c2, c3 in itertools.product(*pools):
                    children = (c1, c2, c3)
                    n = c1.n + c2.n - c3.n
                    mp = _vsum((c1.m, c2.m, c3.m), SIGNS)
                    value = c1.value * c2.value * c3.value
                    e_index = children[pos].e_index
                    for m, cl, a, b, i, h, g in tc.line_options(n, mp):
                        node = Node(CUBIC, children, n, m, mp, cl, a, b, i, h, r, g * value,
                                    has_e=True, e_index=e_index)
                        if i == 1 and root_resonances(node, self.tau):
                            continue
                        yield node

    def _free_roots(self, r, n_e, cluster, pools, pos):
        # the root momentum must land in the cluster: look the third child up
        key = (id(pools[2]), len(pools[2]))
        index = self._index_cache.get(key)
        if index is None:
            index = self._index_cache[key] = (pools[2], self._by_mode(pools[2]))
        index = index[1]
        for c1 in pools[0]:
            for c2 in pools[1]:
                n3 = c1.n + c2.n - n_e
                s12 = tuple(x + y for x, y in zip(c1.m, c2.m))
                v12 = c1.value * c2.value
                for b, mp in enumerate(cluster.members):
                    m3 = tuple(x - y for x, y in zip(s12, mp))
                    for c3 in index.get((n3, m3), ()):
                        children = (c1, c2, c3)
                        yield Node(CUBIC, children, n_e, None, mp, cluster, None, b, 1, None, r,
                                   v12 * c3.value, has_e=True, e_index=children[pos].e_index,
                                   free=True)

    def iter_resonance_trees(self, r: int, n_e: int, cluster) -> Iterator[Node]:
        """Renormalized resonance-family trees of order r for the block (n_e, cluster).

        The maximal internal scale is ``tree.maxscale``; trees violating the
        time-frequency threshold for that scale, or with an internal line in
        the block itself, are dropped.
        """
        if r < 1:
            return
        for t in self._r_combine(r, n_e, cluster, free=True):
            if (n_e, cluster.key) in t.blocks:
                continue
            if n_e < 2 ** ((t.maxscale - 2) / self.tau):
                continue
            yield t

    def resonance_sums(self, r: int, n_e: int, cluster) -> dict:
        """Per maximal internal scale, the matrix of summed values (row: root, col: e)."""
        d = cluster.d
        exact = self.tc.exact
        acc = {}
        for t in self.iter_resonance_trees(r, n_e, cluster):
            mat = acc.setdefault(t.maxscale, [[0] * d for _ in range(d)])
            mat[t.b][t.e_index] += t.value
        zero = Fraction(0) if exact else 0.0
        return {h: tuple(tuple(zero + v for v in row) for row in mat) for h, mat in acc.items()}


# ---------------------------------------------------------------------------
# counterterms


class CountertermTable:
    """Counterterm matrices L^(k)_{n,j,h}, sealed order by order."""

    def __init__(self, enumerator: TreeEnumerator, check_symmetry: bool = True,
                 corrupt: bool = False):
        self.enum = enumerator
        self.tc = enumerator.tc
        self.check_symmetry = check_symmetry
        self.corrupt = corrupt
        self._sums = {}

    def resonance_sums(self, k, n, cluster):
        key = (k, n, cluster.key)
        if key not in self._sums:
            self._sums[key] = self.enum.resonance_sums(k, n, cluster)
        return self._sums[key]

    def scale_matrix(self, k: int, n: int, cluster, h: int):
        """L^(k)_{n,j,h}: minus the resonance-family sums with max scale <= h - 2."""
        tc = self.tc
        d = cluster.d
        exact = tc.exact
        if not tc.in_omega(n, cluster):
            return zeros(d, exact=exact)
        out = [[Fraction(0) if exact else 0.0] * d for _ in range(d)]
        for h1, mat in self.resonance_sums(k, n, cluster).items():
            if h1 <= h - 2:
                for a in range(d):
                    for b in range(d):
                        out[a][b] -= mat[a][b]
        if self.corrupt and d > 1:
            out[0][1] += 1
        L = tuple(tuple(r) for r in out)
        if self.check_symmetry and not is_symmetric(L):
            raise InvariantViolation(f"counterterm L^({k}) at n={n}, cluster {cluster.key} "
                                     "is not symmetric", stage="counterterm symmetry")
        return L

    __call__ = scale_matrix

    def assembled(self, k: int, n: int, cluster):
        """L^(k)_{n,j} = chibar_1(y) sum_h chi_h(x) L^(k)_{n,j,h}."""
        tc = self.tc
        st = tc.state(n, cluster)
        d = cluster.d
        total = zeros(d, exact=tc.exact)
        if st.chibar[1] == 0:
            return total
        rows = [list(r) for r in total]
        for h in st.scales:
            w = st.chibar[1] * chi_scale(st.x, h, tc.spec)
            L = self.scale_matrix(k, n, cluster, h)
            for a in range(d):
                for b in range(d):
                    rows[a][b] += w * L[a][b]
        return tuple(tuple(r) for r in rows)

    def tail_form(self, k: int, n: int, cluster):
        """The same matrix written as -chibar_1(y) sum_h C_h(x) sum_R Val."""
        tc = self.tc
        st = tc.state(n, cluster)
        d = cluster.d
        rows = [[Fraction(0) if tc.exact else 0.0] * d for _ in range(d)]
        if st.chibar[1] == 0 or not tc.in_omega(n, cluster):
            return tuple(tuple(r) for r in rows)
        for h1, mat in self.resonance_sums(k, n, cluster).items():
            w = st.chibar[1] * chi_tail(st.x, h1, tc.spec)
            for a in range(d):
                for b in range(d):
                    rows[a][b] -= w * mat[a][b]
        return tuple(tuple(r) for r in rows)


def counterterm(k: int, n: int, cluster, h: int, table: CountertermTable):
    """L^(k)_{n,j,h}; zero outside the near-resonant index set."""
    return table.scale_matrix(k, n, cluster, h)


def resonant_counterterm(T, A, b, p_minus_s=1):
    """Resonant-case counterterm for a cell: cancels T through the label-1 propagator.

    Builds the block decomposition of the cell matrix ``A`` for labels ``b``
    and returns (L, decomposition).  The cancellation is asserted exactly in
    rational arithmetic and to 1e-10 in floating point.
    """
    from .blocks import (cancellation_residual, is_exact_matrix, is_zero,
                         resonant_block_decompose, resonant_counterterm_from_T, sandwiched)

    dec = resonant_block_decompose(A, b, p_minus_s)
    L = resonant_counterterm_from_T(dec, T)
    res = cancellation_residual(dec, L, T)
    if is_exact_matrix(res):
        ok = is_zero(res)
        if ok and dec.bare[1] is not None:
            ok = is_zero(sandwiched(dec, L, T))
    else:
        ok = float(np.abs(np.asarray(res, dtype=float)).max(initial=0.0)) < 1e-10
    if not ok:
        raise InvariantViolation("resonant cancellation failed", stage="resonant counterterm")
    return L, dec


# ---------------------------------------------------------------------------
# Bryuno counting


def scale_counts(root: Node) -> dict:
    """N_h: number of type-1 lines on scale >= h, for every h that occurs."""
    scales = [v.h for _, v in positions(root)
              if v.kind in (CUBIC, COUNTER) and not v.free and v.i == 1]
    return {h: sum(1 for s in scales if s >= h) for h in sorted(set(scales))}


def bryuno_bound(k: int, h: int, c: float, beta: float, tau: float) -> float:
    return max(0.0, c * k * 2 ** ((2 - h) * beta / tau) - 1)


def bryuno_assert(root: Node, c: float, beta: float, tau: float) -> list[tuple]:
    """Check N_h <= max(0, c k 2^((2-h) beta / tau) - 1) for every h; returns (h, N_h, bound)."""
    k = root.order
    report = []
    for h, count in scale_counts(root).items():
        bound = bryuno_bound(k, h, c, beta, tau)
        report.append((h, count, bound))
        if count > bound:
            raise BoundViolation(f"N_{h} = {count} exceeds {bound:.3f} at order {k}",
                                 stage="Bryuno bound", h=h)
    return report


def calibrate_bryuno_constant(k: int, h: int, count: int, beta: float, tau: float) -> float:
    """Smallest c admitting ``count`` type-1 lines on scale >= h at order k."""
    return (count + 1) / (k * 2 ** ((2 - h) * beta / tau))


def scale_cap(n: int, tau: float) -> int:
    """Largest scale compatible with x >= gamma / |n|^tau: 2^(-h+1) gamma > gamma / |n|^tau."""
    return int(math.floor(1 + tau * math.log2(abs(n)))) if n else -1


def admissible_labels(n: int, tau: float) -> list[tuple[int, int]]:
    return [(-1, -1), (0, -1)] + [(1, h) for h in range(-1, scale_cap(n, tau) + 1)]


def ternary_shapes(k: int):
    """Planar trees with k cubic nodes; a leaf is () and a node a 3-tuple."""
    if k == 0:
        yield ()
        return
    for orders in _compositions(k - 1, 3):
        for a in ternary_shapes(orders[0]):
            for b in ternary_shapes(orders[1]):
                for c in ternary_shapes(orders[2]):
                    yield (a, b, c)


def set_partitions(items: list):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


class _Block:
    __slots__ = ("key",)

    def __init__(self, key):
        self.key = key

    def is_unit(self):
        return False


def _shape_n(shape) -> int:
    if shape == ():
        return 1
    return sum(s * _shape_n(c) for s, c in zip(SIGNS, shape))


def _build(shape, path, labels, classes, order_of):
    if shape == ():
        return Node(END, (), 1, None, None, None, None, None, -1, -1, 0, 1)
    children = tuple(_build(c, path + (i,), labels, classes, order_of)
                     for i, c in enumerate(shape))
    i, h = labels[path]
    n = _shape_n(shape)
    return Node(CUBIC, children, n, None, None, _Block((n, classes[path])), None, None, i, h,
                order_of[path], 1)


def _internal_paths(shape, path=()):
    if shape == ():
        return []
    out = [(path, shape)]
    for i, c in enumerate(shape):
        out.extend(_internal_paths(c, path + (i,)))
    return out


def bryuno_scan(k_max: int, c: float, beta: float, tau: float,
                raise_on_violation: bool = True) -> dict:
    """Every admissible scale assignment of every renormalized tree skeleton up to k_max.

    A skeleton is a planar shape plus a partition of its cubic lines into
    blocks (lines in one block share (n, j)); all partitions are scanned, a
    superset of those realised by momenta.  Assignments obey the type and
    scale consistency of lines sharing a block and the scale cap from the
    Diophantine bound; assignments containing a resonance are dropped.
    """
    stats = {"skeletons": 0, "assignments": 0, "renormalized": 0, "violations": 0,
             "worst_ratio": 0.0}
    for k in range(1, k_max + 1):
        for shape in ternary_shapes(k):
            nodes = _internal_paths(shape)
            order_of = {p: _order(s) for p, s in nodes}
            paths = [p for p, _ in nodes]
            for part in set_partitions(paths):
                ns = [{_shape_n(dict(nodes)[p]) for p in group} for group in part]
                if any(len(x) > 1 for x in ns):
                    continue
                stats["skeletons"] += 1
                classes = {p: gi for gi, group in enumerate(part) for p in group}
                per_group = []
                for group, nset in zip(part, ns):
                    per_group.append(list(_group_labels(len(group), next(iter(nset)), tau)))
                for combo in itertools.product(*per_group):
                    labels = {}
                    for group, choice in zip(part, combo):
                        labels.update(zip(group, choice))
                    stats["assignments"] += 1
                    tree = _build(shape, (), labels, classes, order_of)
                    if any(root_resonances(v, tau) for _, v in positions(tree)):
                        continue
                    stats["renormalized"] += 1
                    for h, count in scale_counts(tree).items():
                        ratio = calibrate_bryuno_constant(k, h, count, beta, tau)
                        stats["worst_ratio"] = max(stats["worst_ratio"], ratio)
                        if count > bryuno_bound(k, h, c, beta, tau):
                            stats["violations"] += 1
                            if raise_on_violation:
                                raise BoundViolation(f"N_{h}={count} at order {k}",
                                                     stage="Bryuno bound")
    return stats


def _order(shape) -> int:
    return 0 if shape == () else 1 + sum(_order(c) for c in shape)


def _group_labels(size: int, n: int, tau: float):
    opts = admissible_labels(n, tau)
    for choice in itertools.product(opts, repeat=size):
        types = [c[0] for c in choice]
        if max(types) - min(types) > 1:
            continue
        hs = [c[1] for c in choice if c[0] == 1]
        if hs and max(hs) - min(hs) > 1:
            continue
        yield choice


# ---------------------------------------------------------------------------
# extension factors


def extension_factor(root: Node, tc: TreeContext, spec: CutoffSpec | None = None) -> float:
    """Product of the smooth step chi_{-1} over small-divisor lines and line pairs.

    Lines of type 1 contribute chi_{-1}(|x| |n|^tau).  Pairs l1 below l2,
    both of type 0 or 1, with distinct n and with n_{l1} entering n_{l2}
    with a plus sign, contribute chi_{-1}(|delta_1 - delta_2| |n_1 - n_2|^tau1).
    In resonance-family trees the pairs are restricted to lines both on, or
    both off, the path from the special end-point to the root.
    """
    ctx = tc.ctx
    spec = spec or CutoffSpec(gamma=ctx.gamma, exact=False)
    factor = 1.0
    nodes = dict(positions(root))
    lines = [(p, v) for p, v in nodes.items() if v.kind in (CUBIC, COUNTER) and not v.free]
    e_path = next((p for p, v in nodes.items() if v.kind == SPECIAL), None)

    def on_e_path(p):
        return e_path is not None and e_path[:len(p)] == p

    for _, v in lines:
        if v.i == 1:
            st = tc.state(v.n, v.cluster)
            factor *= 1.0 - float(chi_dyadic(abs(st.x) * abs(v.n) ** ctx.tau, 0, spec))
    for p2, v2 in lines:
        for p1, v1 in lines:
            if len(p1) <= len(p2) or p1[:len(p2)] != p2:
                continue
            if v1.i not in (0, 1) or v2.i not in (0, 1) or v1.n == v2.n:
                continue
            if root.free and on_e_path(p1) != on_e_path(p2):
                continue
            sign = 1
            for j in range(len(p2), len(p1)):
                parent = nodes[p1[:j]]
                sign *= SIGNS[p1[j]] if parent.kind == CUBIC else 1
            if sign != 1:
                continue
            d1 = float(delta(v1.n, v1.cluster.p, ctx))
            d2 = float(delta(v2.n, v2.cluster.p, ctx))
            arg = abs(d1 - d2) * abs(v1.n - v2.n) ** ctx.tau1
            factor *= 1.0 - float(chi_dyadic(arg, 0, spec))
    return factor


def tree_value(root: Node):
    """Value of a tree: the product of propagators and node factors."""
    return root.value


def evaluate_tree(root: Node, tc: TreeContext):
    """Recompute the value of a tree from its labels (independent of the cached value)."""
    if root.kind == END:
        return tc.endpoint_value(root.m)
    if root.kind == SPECIAL:
        return Fraction(1) if tc.exact else 1.0
    prod = 1
    for c in root.children:
        prod = prod * evaluate_tree(c, tc)
    if root.free:
        g = 1
    else:
        G = propagator(root.n, root.cluster, root.h, root.i, None, tc.ctx, tc.spec,
                       state=tc.state(root.n, root.cluster))
        g = G[root.a][root.b]
    if root.kind == COUNTER:
        L = tc.counterterms(root.kv, root.n, root.cluster, root.h)
        prod = prod * L[root.b][root.children[0].a]
    return g * prod


def check_conservation(root: Node) -> bool:
    """Replay momentum conservation from the leaves."""
    for v in root.lines():
        if v.kind == CUBIC:
            n = sum(s * c.n for s, c in zip(SIGNS, v.children))
            mp = _vsum([c.m for c in v.children], SIGNS)
            if n != v.n or mp != v.mp:
                return False
            if not v.free and v.m not in v.cluster.members:
                return False
        elif v.kind == COUNTER:
            if v.children[0].block != v.block:
                return False
    return True
