"""Order-by-order recursion for the Fourier coefficients, plus the Q equation,
the counterterm fixpoint, the PDE residual and field reconstruction.

Coefficients live on the full lattice: ``u[(n, m)]`` with m in Z^D.  The
real field is recovered with the sine convention

    u(x, t) = sum_{n, m in Z_+^D} u_{n,m} e^{i n t} prod_i sin(m_i x_i),

i.e. the coefficient on each sign orbit is read at its positive member and
the (2i)^D normalisation is dropped.
"""

from __future__ import annotations

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from . import kernels
from .blocks import matrix_norms
from .errors import InvariantViolation, MelnikovFailure, MissingCounterterm, NoConvergence
from .lattice import ClusterIndex, norm2, unit_orbit
from .smalldiv import FrequencyContext, check_melnikov_second, chi_tail, delta
from .trees import CountertermTable, TreeContext, TreeEnumerator, endpoint_sign


@dataclass
class SeriesSolution:
    """Coefficients u^(k)_{n,m} for k = 0..K, all computed at one (eps, M, q)."""

    orders: list = field(default_factory=list)
    exact: bool = True
    q: object = None

    @property
    def K(self) -> int:
        return len(self.orders) - 1

    def support(self, k: int) -> set:
        return {key for key, v in self.orders[k].items() if v != 0}

    def summed(self, eta, K: int | None = None) -> dict:
        """u = sum_{k <= K} eta^k u^(k)."""
        K = self.K if K is None else K
        total = defaultdict(int)
        for k in range(K + 1):
            w = eta ** k
            for key, v in self.orders[k].items():
                total[key] += w * v
        return dict(total)

    def support_radius(self) -> list[tuple[int, int, float]]:
        """Per order, (k, max |n|, max |m|) over the support."""
        out = []
        for k in range(self.K + 1):
            sup = self.support(k)
            out.append((k, max((abs(n) for n, _ in sup), default=0),
                        max((math.sqrt(norm2(m)) for _, m in sup), default=0.0)))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for k, coeffs in enumerate(self.orders):
            for (n, m), v in sorted(coeffs.items()):
                if v == 0:
                    continue
                if isinstance(v, Fraction):
                    w.writerow([k, n, *m, v.numerator, v.denominator])
                else:
                    w.writerow([k, n, *m, repr(float(v))])
        return buf.getvalue()


def leading_order(D: int, q, exact: bool = True) -> dict:
    """U^(0): q times the end-point sign on the unit orbit at n = 1."""
    return {(1, m): endpoint_sign(m) * q for m in unit_orbit(D)}


# ---------------------------------------------------------------------------
# cubic convolution


def convolve_exact(a: dict, b: dict, c: dict) -> dict:
    """f[n, m] = sum a[n1, m1] b[n2, m2] c[n3, m3] with (n, m) = 1 + 2 - 3."""
    out = defaultdict(int)
    if not a or not b or not c:
        return {}
    for (n1, m1), v1 in a.items():
        if v1 == 0:
            continue
        for (n2, m2), v2 in b.items():
            v12 = v1 * v2
            if v12 == 0:
                continue
            n12 = n1 + n2
            s12 = tuple(x + y for x, y in zip(m1, m2))
            for (n3, m3), v3 in c.items():
                out[(n12 - n3, tuple(x - y for x, y in zip(s12, m3)))] += v12 * v3
    return dict(out)


def _as_arrays(d: dict):
    keys = np.array([(n, *m) for n, m in d], dtype=np.int64).reshape(len(d), -1)
    vals = np.array([float(v) for v in d.values()], dtype=float)
    return keys, vals


def convolve_float(a: dict, b: dict, c: dict) -> dict:
    """Float version of :func:`convolve_exact` through the selected kernel."""
    if not a or not b or not c:
        return {}
    ka, va = _as_arrays(a)
    kb, vb = _as_arrays(b)
    kc, vc = _as_arrays(c)
    lo = ka.min(0) + kb.min(0) - kc.max(0)
    hi = ka.max(0) + kb.max(0) - kc.min(0)
    shape = hi - lo + 1
    out = kernels.cubic_convolve(np.ascontiguousarray(ka), va, np.ascontiguousarray(kb), vb,
                                 np.ascontiguousarray(kc), vc, lo.astype(np.int64),
                                 shape.astype(np.int64))
    nz = np.nonzero(out)[0]
    coords = np.array(np.unravel_index(nz, tuple(shape))).T + lo
    return {(int(r[0]), tuple(int(x) for x in r[1:])): float(out[i])
            for r, i in zip(coords, nz)}


def convolve(a, b, c, exact: bool):
    return convolve_exact(a, b, c) if exact else convolve_float(a, b, c)


def forcing(k: int, orders: list, exact: bool) -> dict:
    """F^(k): the cubic term summed over k1 + k2 + k3 = k - 1."""
    out = defaultdict(int)
    for k1 in range(k):
        for k2 in range(k - k1):
            k3 = k - 1 - k1 - k2
            for key, v in convolve(orders[k1], orders[k2], orders[k3], exact).items():
                out[key] += v
    return dict(out)


def cubic_term(u: dict, exact: bool) -> dict:
    """f(u) for a single coefficient map."""
    return convolve(u, u, u, exact)


# ---------------------------------------------------------------------------
# recursion


def _blocks_of(keys, clusters: ClusterIndex, skip_q: bool = True):
    blocks = {}
    for n, m in keys:
        cl = clusters.cluster_of(m)
        if skip_q and n == 1 and cl.is_unit():
            continue
        blocks[(n, cl.key)] = cl
    return blocks


def _vector(coeffs: dict, n: int, cluster, zero):
    return [coeffs.get((n, m), zero) for m in cluster.members]


def _apply(A, v):
    return [sum(A[i][j] * v[j] for j in range(len(v))) for i in range(len(A))]


class Recursion:
    """The oracle: solves the renormalized P equations order by order.

    ``table`` supplies the counterterms; pass ``None`` for identically zero
    counterterms.  ``split`` selects the per-scale, per-type form instead of
    the direct inverse; both give the same coefficients.
    """

    def __init__(self, tc: TreeContext, table=None, split: bool = False):
        self.tc = tc
        self.table = table
        self.split = split
        self.zero = Fraction(0) if tc.exact else 0.0
        self._pieces = {}

    def assembled(self, r, n, cluster):
        if self.table is None:
            return None
        return self.table.assembled(r, n, cluster)

    def scale_matrix(self, r, n, cluster, h):
        if self.table is None:
            return None
        return self.table.scale_matrix(r, n, cluster, h)

    def step(self, k: int, orders: list) -> dict:
        tc = self.tc
        F = forcing(k, orders, tc.exact)
        keys = set(F)
        for r in range(1, k):
            keys |= set(orders[k - r])
        out = {}
        for (n, _), cluster in sorted(_blocks_of(keys, tc.clusters).items(),
                                      key=lambda kv: kv[0]):
            Fv = _vector(F, n, cluster, self.zero)
            if self.split:
                U = self._split_block(k, n, cluster, Fv, orders)
            else:
                U = self._direct_block(k, n, cluster, Fv, orders)
            for m, v in zip(cluster.members, U):
                if v != 0:
                    out[(n, m)] = v
        return out

    def _direct_block(self, k, n, cluster, Fv, orders):
        st = self.tc.state(n, cluster)
        rhs = list(Fv)
        for r in range(1, k):
            L = self.assembled(r, n, cluster)
            if L is None:
                continue
            LU = _apply(L, _vector(orders[k - r], n, cluster, self.zero))
            rhs = [x + y for x, y in zip(rhs, LU)]
        return [st.p_minus_s * x for x in _apply(st.shifted_inverse, rhs)]

    def _split_block(self, k, n, cluster, Fv, orders):
        # U_{h,i} = G_{h,i} F + [i = 1] G_{h,1} sum_r L_h sum_{i1 in {0,1}} U^(k-r)_{h1,i1}
        tc = self.tc
        d = cluster.d
        pieces = {i: [self.zero] * d for i in (-1, 0, 1)}
        for i, h, G in tc.propagators(n, cluster):
            part = _apply(G, Fv)
            if i == 1 and self.table is not None:
                for r in range(1, k):
                    L = self.scale_matrix(r, n, cluster, h)
                    low = self._pieces.get((k - r, n, cluster.key))
                    if low is None:
                        # the type -1 piece is killed by chibar_1 anyway
                        prior = _vector(orders[k - r], n, cluster, self.zero)
                    else:
                        prior = [x + y for x, y in zip(low[0], low[1])]
                    part = [x + y for x, y in zip(part, _apply(G, _apply(L, prior)))]
            pieces[i] = [x + y for x, y in zip(pieces[i], part)]
        self._pieces[(k, n, cluster.key)] = pieces
        return [a + b + c for a, b, c in zip(pieces[-1], pieces[0], pieces[1])]

    def solve(self, K: int, q=None) -> SeriesSolution:
        tc = self.tc
        q = tc.q if q is None else q
        orders = [leading_order(tc.ctx.D, q, tc.exact)]
        for k in range(1, K + 1):
            orders.append(self.step(k, orders))
        return SeriesSolution(orders=orders, exact=tc.exact, q=q)


def recursion_step(k: int, prior: SeriesSolution, counterterms, tc: TreeContext,
                   split: bool = True) -> dict:
    """Order-k coefficients from orders < k."""
    if len(prior.orders) < k:
        raise MissingCounterterm(f"orders below {k} are not all available", stage="recursion")
    return Recursion(tc, counterterms, split=split).step(k, prior.orders)


# ---------------------------------------------------------------------------
# Q equation


@dataclass(frozen=True)
class QSolution:
    q: float
    q_squared: object
    iterations: int
    residual: float


def q_equation_solve(eta, coefficients: list | None, ctx: FrequencyContext, q_ref=1,
                     damping: float = 0.5, tol: float = 1e-14, max_iter: int = 500) -> QSolution:
    """Solve D^s q = f_{1,V}(u) for the Q amplitude.

    ``coefficients`` are the P coefficients u^(k), k >= 1, computed with
    amplitude ``q_ref`` (order 0 is rebuilt from q).  Each u^(k) is
    homogeneous of degree 2k + 1 in q, so f_{1,V} / q^3 is a polynomial in
    eta q^2 and the iteration q^2 <- D^s / g(q^2) is damped towards its
    fixed point.  At eta = 0 the exact value q^2 = D^s 3^-D is returned.
    """
    D = ctx.D
    Ds = Fraction(D) ** int(ctx.s) if float(ctx.s).is_integer() else float(D) ** float(ctx.s)
    if eta == 0 or not coefficients:
        base = Ds / 3 ** D
        return QSolution(q=math.sqrt(float(base)), q_squared=base, iterations=0, residual=0.0)
    V = tuple([1] * D)
    exact = isinstance(eta, Fraction) and ctx.exact
    normalised = [leading_order(D, 1, exact)]
    for k, coeffs in enumerate(coefficients, start=1):
        scale = Fraction(1) / Fraction(q_ref) ** (2 * k + 1) if exact else float(q_ref) ** -(2 * k + 1)
        normalised.append({key: v * scale for key, v in coeffs.items()})
    # g(z) = sum_j C_j z^j with z = eta q^2
    C = defaultdict(float)
    K = len(normalised) - 1
    for k1 in range(K + 1):
        for k2 in range(K + 1):
            for k3 in range(K + 1):
                f = convolve(normalised[k1], normalised[k2], normalised[k3], False)
                C[k1 + k2 + k3] += f.get((1, V), 0.0)
    if abs(C[0] - 3 ** D) > 1e-9:
        raise InvariantViolation("leading Q coefficient differs from 3^D", stage="Q equation")
    eta_f = float(eta)

    def g(z2):
        return sum(c * (eta_f * z2) ** j for j, c in C.items())

    z = float(Ds) / 3 ** D
    for it in range(1, max_iter + 1):
        target = float(Ds) / g(z)
        if not math.isfinite(target) or target <= 0:
            break
        new = (1 - damping) * z + damping * target
        if abs(new - z) <= tol * max(1.0, abs(z)):
            z = new
            res = abs(float(Ds) * math.sqrt(z) - math.sqrt(z) ** 3 * g(z))
            return QSolution(q=math.sqrt(z), q_squared=z, iterations=it, residual=res)
        z = new
    raise NoConvergence(f"Q iteration did not converge at eta={eta_f}", stage="Q equation")


def scale_to_amplitude(coefficients: list, q_ref, q) -> list:
    """Rescale u^(k) computed at amplitude q_ref to amplitude q."""
    out = []
    for k, coeffs in enumerate(coefficients):
        w = (q / q_ref) ** (2 * k + 1)
        out.append({key: v * w for key, v in coeffs.items()})
    return out


# ---------------------------------------------------------------------------
# compatibility fixpoint


@dataclass
class FixpointResult:
    M: dict
    iterations: int
    steps: list
    ratios: list
    sigma_norm: float
    residual: float


def float_context(ctx: FrequencyContext, eps=None) -> FrequencyContext:
    """The same context in floating point (optionally at another eps)."""
    eps = ctx.eps if eps is None else eps
    return replace(ctx, s=float(ctx.s), mu=float(ctx.mu), eps=float(eps), gamma=float(ctx.gamma),
                   gamma0=float(ctx.gamma0), eps0=float(ctx.eps0))


def _compat_map(tc: TreeContext, blocks: dict, K: int, eta) -> dict:
    """Right side of the compatibility equation: -sum_h C_h(x) sum_k eta^k R^(k)_h."""
    enum = TreeEnumerator(tc)
    table = CountertermTable(enum)
    out = {}
    for key, cluster in blocks.items():
        n = key[0]
        d = cluster.d
        st = tc.state(n, cluster)
        acc = np.zeros((d, d))
        if st.chibar[1] != 0 and tc.in_omega(n, cluster):
            for k in range(1, K + 1):
                w = float(eta) ** k
                for h1, mat in table.resonance_sums(k, n, cluster).items():
                    acc -= w * float(chi_tail(st.x, h1, tc.spec)) * np.asarray(mat, dtype=float)
        out[key] = acc
    return out


def compatibility_fixpoint(eps, K: int, ctx: FrequencyContext, clusters: ClusterIndex,
                           blocks: dict, cutoff=None, q=None, K2: float = 50.0,
                           tol: float = 1e-13, max_iter: int = 100, melnikov_n_max: int = 4,
                           sigma: float = 0.0) -> FixpointResult:
    """Iterate M <- L^E(M) on the given blocks until the step is below ``tol``.

    Works in floating point.  After each step the second Melnikov conditions
    are checked on the Diophantine gamma of ``ctx``; a failure raises
    :class:`MelnikovFailure`.  The bound |M|_sigma <= K2 eps is asserted at the end.
    """
    fctx = float_context(ctx, eps)
    if q is None:
        q = math.sqrt(float(fctx.D) ** float(fctx.s) / 3 ** fctx.D)
    M = {key: np.zeros((cl.d, cl.d)) for key, cl in blocks.items()}
    steps, ratios = [], []
    for it in range(1, max_iter + 1):
        tc = TreeContext(fctx, clusters, cutoff=cutoff, M=M, q=q)
        new = _compat_map(tc, blocks, K, eps)
        step = max((float(np.abs(new[k] - M[k]).max(initial=0.0)) for k in M), default=0.0)
        steps.append(step)
        if len(steps) >= 2 and steps[-2] > 0:
            ratios.append(step / steps[-2])
        M = new
        ok, witness = check_melnikov_second(float(eps), lambda n, cl: M.get((n, cl.key)), fctx,
                                            clusters, n_max=melnikov_n_max)
        if not ok:
            raise MelnikovFailure(f"second Melnikov condition fails at {witness}",
                                  stage="compatibility fixpoint", witness=witness)
        if step <= tol:
            break
    else:
        raise NoConvergence("compatibility iteration did not converge",
                            stage="compatibility fixpoint")
    norm = 0.0
    for key, mat in M.items():
        cl = blocks[key]
        norm = max(norm, matrix_norms(mat, cl.members, sigma)[1])
    if norm > K2 * float(eps):
        raise InvariantViolation(f"|M|_sigma = {norm:.3e} exceeds K2 eps",
                                 stage="compatibility fixpoint")
    tc = TreeContext(fctx, clusters, cutoff=cutoff, M=M, q=q)
    final = _compat_map(tc, blocks, K, eps)
    residual = max((float(np.abs(final[k] - M[k]).max(initial=0.0)) for k in M), default=0.0)
    return FixpointResult(M=M, iterations=it, steps=steps, ratios=ratios, sigma_norm=norm,
                          residual=residual)


# ---------------------------------------------------------------------------
# residual and reconstruction


@dataclass
class ResidualReport:
    per_mode: dict
    max_residual: float
    slope: float | None = None
    etas: list = field(default_factory=list)
    maxima: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"max_residual": self.max_residual, "slope": self.slope,
                "etas": [float(e) for e in self.etas], "maxima": self.maxima}


def pde_residual(u: dict, ctx: FrequencyContext, exact: bool | None = None) -> dict:
    """r_{n,m} = |m|^{2s} (-omega n + |m|^2 + mu) u_{n,m} - eps f_{n,m}(u) on every touched mode."""
    exact = ctx.exact if exact is None else exact
    f = cubic_term(u, exact)
    keys = set(u) | set(f)
    out = {}
    for n, m in keys:
        p = norm2(m)
        lin = ctx.p_power(p, ctx.s) * delta(n, p, ctx) * u.get((n, m), 0)
        out[(n, m)] = lin - ctx.eps * f.get((n, m), 0)
    return out


def solve_truncated(K: int, ctx: FrequencyContext, clusters: ClusterIndex | None = None,
                    cutoff=None):
    """Float solution truncated at order K with M = 0 and eps = eta, q from the Q equation."""
    clusters = clusters or ClusterIndex(ctx.D)
    tc = TreeContext(ctx, clusters, cutoff=cutoff, q=1.0)
    ref = Recursion(tc).solve(K, q=1.0)
    qs = q_equation_solve(ctx.eps, ref.orders[1:], ctx, q_ref=1.0)
    orders = scale_to_amplitude(ref.orders, 1.0, qs.q)
    return SeriesSolution(orders=orders, exact=False, q=qs.q), qs


def residual(K: int, etas, base: FrequencyContext, clusters: ClusterIndex | None = None,
             cutoff=None) -> ResidualReport:
    """Max PDE residual of the order-K truncation at each eta, and the log-log slope."""
    maxima = []
    last = {}
    for eta in etas:
        ctx = base.with_eps(float(eta))
        sol, _ = solve_truncated(K, ctx, clusters, cutoff)
        last = pde_residual(sol.summed(float(eta)), ctx, exact=False)
        maxima.append(max(abs(float(v)) for v in last.values()))
    slope = None
    if len(etas) >= 2:
        slope = float(np.polyfit(np.log(np.asarray(etas, dtype=float)), np.log(maxima), 1)[0])
    return ResidualReport(per_mode=last, max_residual=maxima[-1] if maxima else 0.0,
                          slope=slope, etas=list(etas), maxima=maxima)


def reconstruct(u: dict, x_grid, t_grid) -> np.ndarray:
    """Real part of the field on a product grid; shape (len(t), *x shape).

    ``x_grid`` is a sequence of D 1-d arrays; the result is indexed
    [t, x_1, ..., x_D].
    """
    xs = [np.asarray(x, dtype=float) for x in x_grid]
    ts = np.asarray(t_grid, dtype=float)
    D = len(xs)
    field_ = np.zeros((len(ts),) + tuple(len(x) for x in xs))
    mesh = np.meshgrid(*xs, indexing="ij")
    for (n, m), v in u.items():
        if v == 0 or any(c <= 0 for c in m):
            continue
        spatial = np.ones_like(mesh[0])
        for i in range(D):
            spatial = spatial * np.sin(m[i] * mesh[i])
        field_ += float(v) * np.cos(n * ts)[(...,) + (None,) * D] * spatial[None]
    return field_


# ---------------------------------------------------------------------------
# resonant case (mu = 0)


def _rational_sqrt(x: Fraction):
    num, den = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if num * num == x.numerator and den * den == x.denominator:
        return Fraction(num, den)
    return None


def convolution_sum(total: int, orders: list, exact: bool) -> dict:
    """sum over k1 + k2 + k3 = total of u^(k1) u^(k2) conj u^(k3)."""
    out = defaultdict(int)
    for k1 in range(total + 1):
        for k2 in range(total + 1 - k1):
            k3 = total - k1 - k2
            if k3 >= len(orders) or k1 >= len(orders) or k2 >= len(orders):
                continue
            for key, v in convolve(orders[k1], orders[k2], orders[k3], exact).items():
                out[key] += v
    return dict(out)


class ResonantRecursion:
    """Order-by-order solution around a wave packet when mu = 0.

    u^(0) is the packet field on the Q modes (D n = |m|^2).  At order k the P
    modes take f^(k-1) / (|m|^{2s} delta) and the Q modes solve
    J Q^(k) = [f]^(k) restricted to terms that do not contain Q^(k), one J
    block at a time on the odd (Dirichlet) coefficients.  No cell
    counterterms are built: a P mode whose divisor falls inside the cutoff
    support raises :class:`MissingCounterterm`.
    """

    def __init__(self, ctx: FrequencyContext, packet, exact: bool = False, cutoff=None,
                 max_block: int = 200):
        from .bifurcation import amplitudes
        from .smalldiv import CutoffSpec

        if ctx.mu != 0:
            raise InvariantViolation("the resonant recursion needs mu = 0", stage="resonant setup")
        self.ctx = ctx
        self.packet = packet
        self.exact = exact
        self.spec = cutoff or CutoffSpec(gamma=ctx.gamma)
        self.max_block = max_block
        self.amps = amplitudes(packet)
        self._field = self._leading_field()

    def _leading_field(self) -> dict:
        from .bifurcation import orbit_sign, sign_orbit

        out = {}
        D = self.packet.D
        for m, a2 in self.amps.a_squared.items():
            if self.exact:
                a = _rational_sqrt(Fraction(a2))
                if a is None:
                    raise InvariantViolation(f"a_m^2 = {a2} is not a rational square",
                                             stage="resonant setup")
            else:
                a = math.sqrt(float(a2))
            for v in sign_orbit(m):
                out[(norm2(v) // D, v)] = orbit_sign(v, m) * a
        return out

    def _p_value(self, n, m, f):
        from .smalldiv import chi_bar

        p = norm2(m)
        d = delta(n, p, self.ctx)
        if chi_bar(d, 1, self.spec) != 0 or chi_bar(d, 0, self.spec) != 0:
            raise MissingCounterterm(f"P mode (n={n}, m={m}) has divisor {float(d):.3g} inside "
                                     "the cutoff support", stage="resonant P equation")
        return f / (self.ctx.p_power(p, self.ctx.s) * d)

    def _solve_q(self, rhs: dict) -> dict:
        from .bifurcation import (leading_field, orbit_sign, positive_row, sign_orbit,
                                  structural_neighbours)

        D = self.packet.D
        orbit = self.packet.orbit()
        field_ = leading_field(self.packet, self.amps)
        seeds = sorted({m for (n, m), v in rhs.items() if v != 0 and all(c > 0 for c in m)},
                       key=lambda v: (norm2(v), v))
        if not seeds:
            return {}
        modes, seen = [], set(seeds)
        queue = list(seeds)
        while queue:
            v = queue.pop()
            modes.append(v)
            if len(modes) > self.max_block:
                raise InvariantViolation("Q block search exceeded its bound", stage="resonant Q equation")
            for w in structural_neighbours(v, orbit):
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
        modes.sort(key=lambda v: (norm2(v), v))
        index = {m: i for i, m in enumerate(modes)}
        J = np.zeros((len(modes), len(modes)))
        s = float(self.packet.s)
        for i, q in enumerate(modes):
            J[i, i] += norm2(q) ** (1 + s) / D
            for qp, v in positive_row(q, self.packet, field_).items():
                if qp in index:
                    J[i, index[qp]] += v
        b = np.array([float(rhs.get((norm2(m) // D, m), 0.0)) for m in modes])
        sol = np.linalg.solve(J, b)
        out = {}
        for m, value in zip(modes, sol):
            if value == 0:
                continue
            for v in sign_orbit(m):
                out[(norm2(v) // D, v)] = orbit_sign(v, m) * float(value)
        return out

    def step(self, k: int, orders: list) -> dict:
        D = self.packet.D
        exact = self.exact
        new = {}
        for (n, m), f in forcing(k, orders, exact).items():
            if f == 0 or any(c == 0 for c in m) or D * n == norm2(m):
                continue
            new[(n, m)] = self._p_value(n, m, f)
        trial = orders + [new]
        rhs = {key: v for key, v in convolution_sum(k, trial, exact).items()
               if D * key[0] == norm2(key[1])}
        for key, v in self._solve_q(rhs).items():
            new[key] = new.get(key, 0) + v
        return new

    def solve(self, K: int) -> SeriesSolution:
        orders = [dict(self._field)]
        for k in range(1, K + 1):
            orders.append(self.step(k, orders))
        return SeriesSolution(orders=orders, exact=self.exact, q=None)


def resonant_residual(K: int, etas, packet, base: FrequencyContext, cutoff=None) -> ResidualReport:
    """Max PDE residual of the resonant truncation at each eta and the log-log slope."""
    maxima, last = [], {}
    for eta in etas:
        ctx = base.with_eps(float(eta))
        sol = ResonantRecursion(ctx, packet, cutoff=cutoff).solve(K)
        last = pde_residual(sol.summed(float(eta)), ctx, exact=False)
        maxima.append(max(abs(float(v)) for v in last.values()))
    slope = None
    if len(etas) >= 2:
        slope = float(np.polyfit(np.log(np.asarray(etas, dtype=float)), np.log(maxima), 1)[0])
    return ResidualReport(per_mode=last, max_residual=maxima[-1] if maxima else 0.0,
                          slope=slope, etas=list(etas), maxima=maxima)
