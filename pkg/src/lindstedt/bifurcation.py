"""Resonant case (mu = 0): wave-packet sets, their amplitudes, and the
linearized bifurcation matrix J with its block structure.

Packets are built in the positive sector Z_+^D (all components >= 1) and
completed to full sign orbits with the odd (Dirichlet) sign rule
q_{S m} = sign(S) q_m.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (BlockBoundViolation, ConfigError, InvariantViolation,
                     NegativeAmplitudeSquare, SearchExhausted)
from .lattice import norm2


def _dot(a, b) -> int:
    return sum(x * y for x, y in zip(a, b))


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def sign_orbit(m) -> list[tuple]:
    """All vectors with the same absolute components, in lexicographic order."""
    choices = [sorted({c, -c}) for c in m]
    return sorted(itertools.product(*choices))


def orbit_sign(m, reference) -> int:
    """(-1)^(number of components flipped relative to ``reference``)."""
    flips = sum(1 for x, r in zip(m, reference) if x != r)
    return -1 if flips % 2 else 1


def _power(base: int, exponent, exact: bool):
    if exact:
        return Fraction(base) ** int(exponent)
    return float(base) ** float(exponent)


def _is_int(s) -> bool:
    return float(s).is_integer()


@dataclass
class PacketSet:
    D: int
    members: list
    s: object
    alphas: list = field(default_factory=list)
    r: float = 0.0

    @property
    def N(self) -> int:
        return len(self.members)

    def orbit(self) -> list[tuple]:
        """The full set M: every sign image of every member."""
        out = []
        for m in self.members:
            out.extend(sign_orbit(m))
        return out

    def weight_sum(self, exact: bool | None = None):
        """M = sum |m|^(2 + 2s) over the positive members."""
        exact = _is_int(self.s) if exact is None else exact
        return sum(_power(norm2(m), 1 + self.s, exact) for m in self.members)

    def to_dict(self) -> dict:
        return {"D": self.D, "N": self.N, "members": [list(m) for m in self.members],
                "s": float(self.s), "alphas": [float(a) for a in self.alphas], "r": self.r}


# ---------------------------------------------------------------------------
# packet construction


def is_degenerate_triple(m1, m2, m3) -> bool:
    """Triples allowed to satisfy the orthogonality: m1 = m3, m2 = m3, or equal |components|."""
    return (m1 == m3 or m2 == m3
            or all(abs(a) == abs(b) == abs(c) for a, b, c in zip(m1, m2, m3)))


def orthogonality_violations(orbit: list) -> list[tuple]:
    """Triples of the orbit set with <m1 - m3, m2 - m3> = 0 that are not degenerate."""
    bad = []
    for m3 in orbit:
        diffs = [(m, _sub(m, m3)) for m in orbit]
        for m1, d1 in diffs:
            if m1 == m3:
                continue
            for m2, d2 in diffs:
                if m2 == m3:
                    continue
                if _dot(d1, d2) == 0 and not is_degenerate_triple(m1, m2, m3):
                    bad.append((m1, m2, m3))
    return bad


def forbidden_surfaces(orbit: list) -> list[tuple]:
    """Planes through m and m' orthogonal to m - m', and the sphere on the diameter mm'.

    Each surface is returned as a predicate-ready tuple: ("plane", point,
    normal) or ("sphere", a, b) meaning <x - a, x - b> = 0.
    """
    out = []
    for a, b in itertools.combinations(orbit, 2):
        n = _sub(a, b)
        out.append(("plane", a, n))
        out.append(("plane", b, n))
        out.append(("sphere", a, b))
    return out


def _on_surface(x, surface) -> bool:
    kind, a, b = surface
    if kind == "plane":
        return _dot(_sub(x, a), b) == 0
    return _dot(_sub(x, a), _sub(x, b)) == 0


def packet_condition(members: list, D: int, s) -> tuple[bool, float]:
    """Condition on the moduli: 2^(D+1) sum_{i>1} |m_i|^(2+2s) <= (3^D + 2^(D+1)(N-2)) |m_1|^(2+2s).

    Returns (holds, slack) with the slack as a float.
    """
    exact = _is_int(s)
    ordered = sorted(members, key=norm2)
    N = len(ordered)
    w = [_power(norm2(m), 1 + s, exact) for m in ordered]
    lhs = 2 ** (D + 1) * sum(w[1:])
    rhs = (3 ** D + 2 ** (D + 1) * (N - 2)) * w[0]
    return lhs <= rhs, float(rhs - lhs)


def default_alphas(N: int, D: int, s) -> list[float]:
    """Shell radii 1 = a_1 < a_2 < ... < a_N keeping the moduli condition satisfied."""
    if N <= 1:
        return [1.0]
    cap = ((3 ** D + 2 ** (D + 1) * (N - 2)) / (2 ** (D + 1) * (N - 1))) ** (1 / (2 + 2 * float(s)))
    return [1.0 + (cap - 1.0) * i / (N - 1) for i in range(N)]


def _positive_vectors_in_shell(D: int, lo2: float, hi2: float, multiple: int):
    top = int(math.isqrt(int(math.floor(hi2))))
    for v in itertools.product(range(1, top + 1), repeat=D):
        p = norm2(v)
        if lo2 <= p <= hi2 and p % multiple == 0:
            yield v


def construct_packet(N: int, D: int, s, alphas: list | None = None, r_min: float = 1.0,
                     max_radius: float = 60.0) -> PacketSet:
    """Search for N positive vectors satisfying the moduli and orthogonality conditions.

    m_1 runs over positive vectors with |m_1|^2 divisible by D and |m_1| >=
    r_min, in order of increasing norm.  Each later m_i is taken from the
    shell alphas[i-2] r <= |x| <= alphas[i-1] r, must keep its whole sign
    orbit off the planes and spheres spanned by the orbits found so far, and
    the final set is checked exhaustively.
    """
    if N < 1:
        raise ConfigError("packet size must be at least 1")
    alphas = sorted(alphas) if alphas else default_alphas(N, D, s)
    if len(alphas) < N:
        raise ConfigError(f"need {N} shell radii, got {len(alphas)}")
    if any(a < 1 for a in alphas):
        raise ConfigError("shell radii must be >= 1 (relative to |m_1|)")
    starts = sorted(_positive_vectors_in_shell(D, r_min ** 2, max_radius ** 2, D),
                    key=lambda v: (norm2(v), v))
    for m1 in starts:
        r = math.sqrt(norm2(m1))
        found = _extend([m1], N, D, s, alphas, r)
        if found is not None:
            return PacketSet(D=D, members=found, s=s, alphas=list(alphas[:N]), r=r)
    raise SearchExhausted(f"no packet with N={N} up to radius {max_radius}",
                          stage="packet construction")


def _extend(members, N, D, s, alphas, r):
    if len(members) == N:
        ok, _ = packet_condition(members, D, s)
        if not ok or not admissible_amplitudes(members, D, s):
            return None
        orbit = [v for m in members for v in sign_orbit(m)]
        return members if not orthogonality_violations(orbit) else None
    i = len(members)
    lo2 = (alphas[i - 1] * r) ** 2
    hi2 = (alphas[i] * r) ** 2 + 1e-9
    orbit = [v for m in members for v in sign_orbit(m)]
    surfaces = forbidden_surfaces(orbit)
    for cand in sorted(_positive_vectors_in_shell(D, lo2, hi2, D), key=lambda v: (norm2(v), v)):
        if cand in members:
            continue
        corbit = sign_orbit(cand)
        if any(_on_surface(x, sf) for x in corbit for sf in surfaces):
            continue
        found = _extend(members + [cand], N, D, s, alphas, r)
        if found is not None:
            return found
    return None


# ---------------------------------------------------------------------------
# amplitudes


def admissible_amplitudes(members, D, s) -> bool:
    try:
        amplitudes(PacketSet(D=D, members=list(members), s=s))
    except NegativeAmplitudeSquare:
        return False
    return True


@dataclass
class Amplitudes:
    A_squared: object
    a_squared: dict
    exact: bool

    def a(self, m) -> float:
        return math.sqrt(float(self.a_squared[m]))


def with_exponent(packet: PacketSet, s) -> PacketSet:
    if s is None or s == packet.s:
        return packet
    return PacketSet(D=packet.D, members=packet.members, s=s, alphas=packet.alphas, r=packet.r)


def amplitudes(packet: PacketSet, s=None) -> Amplitudes:
    """A^2 = M / (D (2^(D+1) (N-1) + 3^D)) and a_m^2 = (|m|^(2+2s)/D - 2^(D+1) A^2) / (3^D - 2^(D+1)).

    Exact rationals when s is an integer.
    """
    packet = with_exponent(packet, s)
    D, N, s = packet.D, packet.N, packet.s
    exact = _is_int(s)
    M = packet.weight_sum(exact)
    denom = D * (2 ** (D + 1) * (N - 1) + 3 ** D)
    A2 = M / denom
    out = {}
    for m in packet.members:
        a2 = (_power(norm2(m), 1 + s, exact) / D - 2 ** (D + 1) * A2) / (3 ** D - 2 ** (D + 1))
        if a2 <= 0:
            raise NegativeAmplitudeSquare(f"a_m^2 = {float(a2):.4g} <= 0 at m={m}",
                                          stage="amplitudes", m=m)
        out[m] = a2
    return Amplitudes(A_squared=A2, a_squared=out, exact=exact)


def leading_field(packet: PacketSet, amps: Amplitudes | None = None) -> dict:
    """q^(0)_m on the full orbit as floats."""
    amps = amps or amplitudes(packet)
    out = {}
    for m, a2 in amps.a_squared.items():
        a = math.sqrt(float(a2))
        for v in sign_orbit(m):
            out[v] = orbit_sign(v, m) * a
    return out


def bifurcation_residual(packet: PacketSet, amps: Amplitudes | None = None) -> dict:
    """Residual of |m|^(2+2s)/D a_m = sum over orthogonal triples of a a a, per positive member.

    Works with squared amplitudes so the rational case is exact: every
    orthogonal triple is degenerate, so each product is sign * a_{m1}^2 a_m
    or sign * a_m^3, and the residual divided by a_m is rational.
    """
    amps = amps or amplitudes(packet)
    exact = amps.exact
    orbit = packet.orbit()
    base = {}
    for m in packet.members:
        for v in sign_orbit(m):
            base[v] = (m, orbit_sign(v, m))
    out = {}
    for m in packet.members:
        total = 0
        for m1 in orbit:
            for m2 in orbit:
                m3 = _sub(_add(m1, m2), m)
                if m3 not in base or _dot(_sub(m1, m3), _sub(m2, m3)) != 0:
                    continue
                (r1, s1), (r2, s2), (r3, s3) = base[m1], base[m2], base[m3]
                # a_{r1} a_{r2} a_{r3} / a_m with at least two equal moduli to m or a pair equal
                mults = sorted([r1, r2, r3], key=lambda v: v != m)
                if mults.count(m) == 3:
                    term = amps.a_squared[m]
                elif mults.count(m) == 1 and mults[1] == mults[2]:
                    term = amps.a_squared[mults[1]]
                else:
                    raise InvariantViolation(f"non-degenerate orthogonal triple {m1, m2, m3}",
                                             stage="bifurcation residual")
                total += s1 * s2 * s3 * term
        out[m] = _power(norm2(m), 1 + packet.s, exact) / packet.D - total
    return out


# ---------------------------------------------------------------------------
# the matrix J


def is_q_mode(m, D: int) -> bool:
    return norm2(m) % D == 0


def full_row(q, packet: PacketSet, field_: dict) -> dict:
    """Off-diagonal-inclusive row of the cubic part of J on the full lattice (without the
    |q|^(2+2s)/D diagonal)."""
    orbit = list(field_)
    row = {}
    for m2 in orbit:
        for m3 in orbit:
            qp = _add(_sub(q, m2), m3)
            if _dot(_sub(qp, m3), _sub(m2, m3)) == 0:
                row[qp] = row.get(qp, 0) - 2 * field_[m2] * field_[m3]
    for m1 in orbit:
        for m2 in orbit:
            qp = _sub(_add(m1, m2), q)
            if _dot(_sub(m1, qp), _sub(m2, qp)) == 0:
                row[qp] = row.get(qp, 0) - field_[m1] * field_[m2]
    return row


def positive_row(q, packet: PacketSet, field_: dict) -> dict:
    """Row of J restricted to odd coefficients, indexed by positive modes."""
    row = {}
    for qp, v in full_row(q, packet, field_).items():
        if any(c == 0 for c in qp):
            continue
        rep = tuple(abs(c) for c in qp)
        row[rep] = row.get(rep, 0) + orbit_sign(qp, rep) * v
    return row


def structural_neighbours(q, orbit: list) -> set:
    """Positive modes linked to q by a structurally nonzero entry of J."""
    out = set()
    for m2 in orbit:
        for m3 in orbit:
            qp = _add(_sub(q, m2), m3)
            if _dot(_sub(qp, m3), _sub(m2, m3)) == 0:
                out.add(qp)
    for m1 in orbit:
        for m2 in orbit:
            qp = _sub(_add(m1, m2), q)
            if _dot(_sub(m1, qp), _sub(m2, qp)) == 0:
                out.add(qp)
    return {tuple(abs(c) for c in v) for v in out if all(c != 0 for c in v)} - {tuple(q)}


@dataclass
class JMatrix:
    modes: list
    entries: np.ndarray
    blocks: list

    def block_sizes(self) -> list[int]:
        return [len(b) for b in self.blocks]


def positive_q_modes(D: int, bound: int) -> list[tuple]:
    top = int(math.isqrt(bound))
    return sorted((v for v in itertools.product(range(1, top + 1), repeat=D)
                   if norm2(v) <= bound and norm2(v) % D == 0), key=lambda v: (norm2(v), v))


class JPattern:
    """Sparsity of J on a mode list, independent of s.

    Each off-diagonal contribution is stored as an integer coefficient times
    a_i a_j for a pair of packet members, so evaluating J at a new exponent
    only needs the new amplitudes.
    """

    def __init__(self, packet: PacketSet, modes: list):
        self.packet = packet
        self.modes = list(modes)
        self.index = {m: i for i, m in enumerate(self.modes)}
        member_of = {}
        for k, m in enumerate(packet.members):
            for v in sign_orbit(m):
                member_of[v] = (k, orbit_sign(v, m))
        orbit = list(member_of)
        terms: dict = {}

        def add(row, qp, coef, a, b):
            if any(c == 0 for c in qp):
                return
            rep = tuple(abs(c) for c in qp)
            col = self.index.get(rep)
            if col is None:
                return
            (ka, sa), (kb, sb) = member_of[a], member_of[b]
            key = (row, col, min(ka, kb), max(ka, kb))
            terms[key] = terms.get(key, 0) + coef * sa * sb * orbit_sign(qp, rep)

        for row, q in enumerate(self.modes):
            for m2 in orbit:
                for m3 in orbit:
                    qp = _add(_sub(q, m2), m3)
                    if _dot(_sub(qp, m3), _sub(m2, m3)) == 0:
                        add(row, qp, -2, m2, m3)
            for m1 in orbit:
                for m2 in orbit:
                    qp = _sub(_add(m1, m2), q)
                    if _dot(_sub(m1, qp), _sub(m2, qp)) == 0:
                        add(row, qp, -1, m1, m2)
        keys = [k for k, c in terms.items() if c != 0]
        self.rows = np.array([k[0] for k in keys], dtype=np.int64)
        self.cols = np.array([k[1] for k in keys], dtype=np.int64)
        self.first = np.array([k[2] for k in keys], dtype=np.int64)
        self.second = np.array([k[3] for k in keys], dtype=np.int64)
        self.coef = np.array([terms[k] for k in keys], dtype=float)
        self.norms = np.array([norm2(m) for m in self.modes], dtype=float)

    def evaluate(self, amps: "Amplitudes", s) -> np.ndarray:
        a = np.array([math.sqrt(float(amps.a_squared[m])) for m in self.packet.members])
        J = np.zeros((len(self.modes), len(self.modes)))
        np.add.at(J, (self.rows, self.cols), self.coef * a[self.first] * a[self.second])
        J[np.diag_indices_from(J)] += self.norms ** (1 + float(s)) / self.packet.D
        return J


def assemble_J(packet: PacketSet, s=None, mode_bound: int = 50, amps: Amplitudes | None = None,
               modes: list | None = None) -> JMatrix:
    """J on the positive Q modes with |m|^2 <= mode_bound (or an explicit mode list)."""
    packet = with_exponent(packet, s)
    amps = amps or amplitudes(packet)
    modes = modes if modes is not None else positive_q_modes(packet.D, mode_bound)
    J = JPattern(packet, modes).evaluate(amps, packet.s)
    if not np.allclose(J, J.T, atol=1e-12 * max(1.0, np.abs(J).max(initial=0.0))):
        raise InvariantViolation("J is not symmetric", stage="assemble J")
    blocks = find_blocks(packet, mode_bound, starts=modes).blocks if modes else []
    return JMatrix(modes=modes, entries=J, blocks=blocks)


def far_diagonal(packet: PacketSet, m, amps: Amplitudes | None = None) -> float:
    """Diagonal entry |m|^(2+2s)/D - 2^(D+1) A^2 expected away from the packet geometry."""
    amps = amps or amplitudes(packet)
    return norm2(m) ** (1 + float(packet.s)) / packet.D - 2 ** (packet.D + 1) * float(amps.A_squared)


@dataclass
class BlockPartition:
    blocks: list
    max_size: int
    chain_bound: int
    alphabet_size: int
    recursive_bound: object


def chain_components(packet: PacketSet, radius2: int = 400, max_block: int = 10 ** 4) -> list:
    """Components of the chain relation on the full lattice of Q modes.

    Seeds are all Q modes with |q|^2 <= radius2; components are grown
    without truncation.  The relation is symmetric: a step by (a, b) is
    undone by (b, a).
    """
    letters = alphabet(packet.orbit())
    top = int(math.isqrt(radius2))
    seeds = [v for v in itertools.product(range(-top, top + 1), repeat=packet.D)
             if norm2(v) <= radius2 and norm2(v) % packet.D == 0]
    seen, comps = set(), []
    for q in seeds:
        if q in seen:
            continue
        comp, queue = [], deque([q])
        seen.add(q)
        while queue:
            v = queue.popleft()
            comp.append(v)
            if len(comp) > max_block:
                raise BlockBoundViolation(f"chain component through {q} exceeds {max_block}",
                                          stage="block search")
            for _, w in chain_steps(v, letters):
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        comps.append(comp)
    return comps


def find_blocks(packet: PacketSet, bound: int, starts: list | None = None,
                max_block: int = 50, chain_radius2: int | None = None) -> BlockPartition:
    """Connected components of the structural graph of J through the positive Q modes.

    Components are grown without truncation; a component larger than
    ``max_block`` raises :class:`BlockBoundViolation`.  With
    ``chain_radius2`` the chain relation is also explored on the full
    lattice and the chain bound K is its largest component: a chain that
    long visits more modes than its component holds, so it revisits one and
    the word between the two visits is a loop.  Without it K is the largest
    J block.
    """
    orbit = packet.orbit()
    starts = starts if starts is not None else positive_q_modes(packet.D, bound)
    seen = {}
    blocks = []
    for q in starts:
        if q in seen:
            continue
        comp = []
        queue = deque([q])
        seen[q] = len(blocks)
        while queue:
            v = queue.popleft()
            comp.append(v)
            if len(comp) > max_block:
                raise BlockBoundViolation(f"block through {q} exceeds {max_block} modes",
                                          stage="block search")
            for w in structural_neighbours(v, orbit):
                if w not in seen:
                    seen[w] = len(blocks)
                    queue.append(w)
        blocks.append(sorted(comp, key=lambda v: (norm2(v), v)))
    size = max((len(b) for b in blocks), default=0)
    K = max(size, 1)
    if chain_radius2 is not None and orbit:
        K = max(len(c) for c in chain_components(packet, chain_radius2))
    L = len(orbit) * (len(orbit) - 1)
    return BlockPartition(blocks=blocks, max_size=size, chain_bound=K,
                          alphabet_size=L, recursive_bound=recursive_chain_bound(L))


def recursive_chain_bound(L: int, cap_digits: int = 60):
    """K(L) from K(1) = 2 and K(l+1) <= K(l) ((l+1)^K(l) + 1).

    Returned exactly while it has at most ``cap_digits`` digits; beyond
    that the string ">10^cap_digits" is returned.
    """
    K = 2
    for ell in range(1, L):
        if K * math.log10(ell + 1) > cap_digits:
            return f">10^{cap_digits}"
        K = K * ((ell + 1) ** K + 1)
        if len(str(K)) > cap_digits:
            return f">10^{cap_digits}"
    return K


# ---------------------------------------------------------------------------
# words and loops


def alphabet(orbit: list) -> list[tuple]:
    return [(a, b) for a in orbit for b in orbit if a != b]


def word_vector(word) -> tuple:
    if not word:
        return None
    D = len(word[0][0])
    total = (0,) * D
    for a, b in word:
        total = _add(total, _sub(a, b))
    return total


def contains_loop(word) -> bool:
    """Whether some non-empty contiguous sub-word has w = 0."""
    if not word:
        return False
    D = len(word[0][0])
    prefix = {(0,) * D}
    acc = (0,) * D
    for a, b in word:
        acc = _add(acc, _sub(a, b))
        if acc in prefix:
            return True
        prefix.add(acc)
    return False


def chain_steps(q, letters) -> list:
    """Letters v admissible after q, with the mode they lead to.

    The step is q -> q + w(v) and needs <q - v(2), w(v)> = 0 at the mode it
    leaves; this is the structural relation of J, and (b, a) undoes (a, b).
    """
    out = []
    for v in letters:
        w = _sub(v[0], v[1])
        if _dot(_sub(q, v[1]), w) == 0:
            out.append((v, _add(q, w)))
    return out


def sample_chains(packet: PacketSet, count: int, length: int, seed: int = 0,
                  bound: int = 400) -> list:
    """Random chains (q_0; word) of the given length; q_0 drawn from Q modes with |q|^2 <= bound."""
    rng = random.Random(seed)
    orbit = packet.orbit()
    letters = alphabet(orbit)
    D = packet.D
    top = int(math.isqrt(bound))
    starts = [v for v in itertools.product(range(-top, top + 1), repeat=D)
              if norm2(v) <= bound and norm2(v) % D == 0]
    chains = []
    attempts = 0
    while len(chains) < count and attempts < 200 * count:
        attempts += 1
        q = rng.choice(starts)
        word = []
        cur = q
        for _ in range(length):
            steps = chain_steps(cur, letters)
            if not steps:
                break
            v, cur = rng.choice(steps)
            word.append(v)
        if len(word) == length:
            chains.append((q, word))
    return chains


def repeated_letter_identity(word) -> bool:
    """For every sub-word v a v: <w(v a), w(v)> = 0."""
    for i, v in enumerate(word):
        for j in range(i + 1, len(word)):
            if word[j] == v:
                wva = word_vector(word[i:j])
                wv = _sub(v[0], v[1])
                if _dot(wva, wv) != 0:
                    return False
    return True


# ---------------------------------------------------------------------------
# invertibility scan


def dominance_bound(packet: PacketSet, amps: Amplitudes | None = None) -> int:
    """|m|^2 beyond which every row of J is strictly diagonally dominant.

    Off-diagonal row sums are at most 3 |M|^2 max a_m^2, so rows with
    |m|^(2+2s) / D > 2^(D+1) A^2 + 3 |M|^2 max a_m^2 are dominant and the
    blocks they form are invertible.
    """
    amps = amps or amplitudes(packet)
    size = 2 ** packet.D * packet.N
    radius = 3 * size ** 2 * max(float(a) for a in amps.a_squared.values())
    top = packet.D * (2 ** (packet.D + 1) * float(amps.A_squared) + radius)
    return int(math.floor(top ** (1 / (1 + float(packet.s)))))


def head_bound(packet: PacketSet, amps: Amplitudes | None = None) -> int:
    """|m|^2 cutoff of the head block: 16 A^2 D 2^(D+1), capped at the dominance bound."""
    amps = amps or amplitudes(packet)
    rule = int(math.floor(16 * float(amps.A_squared) * packet.D * 2 ** (packet.D + 1)))
    return min(rule, max(dominance_bound(packet, amps), max(norm2(m) for m in packet.members)))


def head_block(packet: PacketSet, amps: Amplitudes | None = None, bound: int | None = None):
    """J restricted to the union of blocks meeting the head modes."""
    amps = amps or amplitudes(packet)
    bound = head_bound(packet, amps) if bound is None else bound
    modes, _ = head_modes(packet, bound)
    return assemble_J(packet, None, bound, amps, modes=modes)


def head_modes(packet: PacketSet, bound: int) -> tuple[list, list]:
    """Modes of the union of J blocks meeting |m|^2 <= bound, and those blocks."""
    part = find_blocks(packet, bound, max_block=10 ** 6)
    modes = sorted({v for b in part.blocks for v in b}, key=lambda v: (norm2(v), v))
    return modes, part.blocks


def scan_J11_invertibility(packet: PacketSet, s_grid, builder=None,
                           bound: int | None = None) -> dict:
    """det J_11 over a grid of smoothing exponents.

    Amplitudes are recomputed at each s; the head modes are fixed from the
    largest head bound over the grid (or ``bound``).  ``builder`` may replace
    the matrix construction (it receives the packet at that s and returns a
    square array).  Sign changes between neighbouring grid points are
    reported as zero crossings; a determinant that is zero at every grid
    point is flagged.
    """
    s_grid = [float(s) for s in s_grid]
    pattern = None
    if builder is None:
        if bound is None:
            bound = max(head_bound(with_exponent(packet, s)) for s in s_grid)
        modes, _ = head_modes(packet, bound)
        pattern = JPattern(packet, modes)
    rows = []
    for s in s_grid:
        p = with_exponent(packet, s)
        J = builder(p) if builder is not None else pattern.evaluate(amplitudes(p), s)
        J = np.asarray(J, dtype=float)
        sign, logdet = np.linalg.slogdet(J)
        diag = float(np.sum(np.log(np.abs(np.diag(J)))))
        rows.append({"s": s, "sign": int(sign), "logabsdet": float(logdet),
                     "log_diag_ratio": float(logdet) - diag if sign != 0 else float("-inf"),
                     "size": int(J.shape[0])})
    crossings = [(rows[i]["s"], rows[i + 1]["s"]) for i in range(len(rows) - 1)
                 if rows[i]["sign"] * rows[i + 1]["sign"] < 0]
    zero = [r["s"] for r in rows if r["sign"] == 0]
    return {"rows": rows, "crossings": crossings, "zeros": zero,
            "identically_zero": bool(rows) and len(zero) == len(rows)}


def det_table_csv(result: dict) -> str:
    lines = ["s,sign,logabsdet,log_diag_ratio,size"]
    for r in result["rows"]:
        lines.append(f"{r['s']!r},{r['sign']},{r['logabsdet']!r},{r['log_diag_ratio']!r},"
                     f"{r['size']}")
    return "\n".join(lines) + "\n"
