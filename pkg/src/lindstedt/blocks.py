"""Symmetric blocks on clusters: norms, shifted inverses, propagators and the
resonant block decomposition.

Matrices are plain nested tuples in exact mode (entries ``Fraction``) and
numpy arrays in float mode.  The small dense helpers below work on both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .errors import (AsymmetricInput, InvariantViolation, SingularA22, SingularSchurBlock,
                     SingularShiftedMatrix)
from .smalldiv import CutoffSpec, FrequencyContext, chi_bar, chi_scale, delta, nonzero_scales

# ---------------------------------------------------------------------------
# dense helpers (exact or float)


def is_exact_matrix(A) -> bool:
    return not isinstance(A, np.ndarray)


def as_rows(A) -> tuple:
    if isinstance(A, np.ndarray):
        return tuple(tuple(float(v) for v in row) for row in A)
    return tuple(tuple(row) for row in A)


def identity(d: int, exact: bool = True):
    if exact:
        return tuple(tuple(Fraction(int(i == j)) for j in range(d)) for i in range(d))
    return np.eye(d)


def zeros(d: int, e: int | None = None, exact: bool = True):
    e = d if e is None else e
    if exact:
        return tuple(tuple(Fraction(0) for _ in range(e)) for _ in range(d))
    return np.zeros((d, e))


def transpose(A):
    if isinstance(A, np.ndarray):
        return A.T
    return tuple(zip(*A)) if A else ()


def matmul(A, B):
    if isinstance(A, np.ndarray) or isinstance(B, np.ndarray):
        return np.asarray(A, dtype=float) @ np.asarray(B, dtype=float)
    Bt = list(zip(*B))
    return tuple(tuple(sum(a * b for a, b in zip(row, col)) for col in Bt) for row in A)


def madd(A, B, sign=1):
    if isinstance(A, np.ndarray) or isinstance(B, np.ndarray):
        return np.asarray(A, dtype=float) + sign * np.asarray(B, dtype=float)
    return tuple(tuple(a + sign * b for a, b in zip(ra, rb)) for ra, rb in zip(A, B))


def mscale(c, A):
    if isinstance(A, np.ndarray):
        return float(c) * A
    return tuple(tuple(c * a for a in row) for row in A)


def inverse(A):
    """Inverse by Gauss-Jordan elimination; exact for rational entries.

    Raises ``ZeroDivisionError`` for singular input.
    """
    if isinstance(A, np.ndarray):
        if A.size and abs(np.linalg.det(A)) < 1e-300:
            raise ZeroDivisionError("singular matrix")
        return np.linalg.inv(A)
    d = len(A)
    work = [list(row) + [Fraction(int(i == j)) for j in range(d)] for i, row in enumerate(A)]
    for col in range(d):
        pivot = next((r for r in range(col, d) if work[r][col] != 0), None)
        if pivot is None:
            raise ZeroDivisionError("singular matrix")
        work[col], work[pivot] = work[pivot], work[col]
        pv = work[col][col]
        work[col] = [v / pv for v in work[col]]
        for r in range(d):
            if r != col and work[r][col] != 0:
                f = work[r][col]
                work[r] = [a - f * b for a, b in zip(work[r], work[col])]
    return tuple(tuple(row[d:]) for row in work)


def determinant(A):
    if isinstance(A, np.ndarray):
        return float(np.linalg.det(A))
    d = len(A)
    work = [list(row) for row in A]
    det = Fraction(1)
    for col in range(d):
        pivot = next((r for r in range(col, d) if work[r][col] != 0), None)
        if pivot is None:
            return Fraction(0)
        if pivot != col:
            work[col], work[pivot] = work[pivot], work[col]
            det = -det
        pv = work[col][col]
        det *= pv
        for r in range(col + 1, d):
            if work[r][col] != 0:
                f = work[r][col] / pv
                work[r] = [a - f * b for a, b in zip(work[r], work[col])]
    return det


def submatrix(A, rows: Sequence[int], cols: Sequence[int]):
    if isinstance(A, np.ndarray):
        return A[np.ix_(list(rows), list(cols))]
    return tuple(tuple(A[r][c] for c in cols) for r in rows)


def is_symmetric(A) -> bool:
    if isinstance(A, np.ndarray):
        return bool(np.array_equal(A, A.T))
    d = len(A)
    return all(A[i][j] == A[j][i] for i in range(d) for j in range(i + 1, d))


def is_zero(A) -> bool:
    if isinstance(A, np.ndarray):
        return not A.any()
    return all(v == 0 for row in A for v in row)


def frobenius_sq(A):
    if isinstance(A, np.ndarray):
        return float((A * A).sum())
    return sum(v * v for row in A for v in row)


# ---------------------------------------------------------------------------
# norms


def default_rho(D: int) -> float:
    return 1.0 / (1 + D * (1 + D * math.factorial(D + 2) / 2))


@dataclass(frozen=True)
class ClusterMatrix:
    """A symmetric block together with the lattice points indexing it."""

    entries: object
    members: tuple = ()
    sigma: float = 0.0
    rho: float | None = None

    @property
    def d(self) -> int:
        return len(self.entries)


def matrix_norms(A, members=None, sigma: float = 0.0, rho: float | None = None):
    """Sup norm, weighted sup norm and root-mean-square norm of a symmetric block.

    The weighted norm multiplies entry (i, j) by ``exp(sigma |m_i - m_j|**rho)``
    where m_i are the indexing points.  The bracket
    ``||A|| / sqrt(d) <= |A|_inf <= sqrt(d) ||A||`` is asserted.
    """
    if isinstance(A, ClusterMatrix):
        members = A.members if members is None else members
        sigma, rho = A.sigma, A.rho
        A = A.entries
    if not is_symmetric(A):
        raise AsymmetricInput("matrix is not symmetric")
    d = len(A)
    rows = as_rows(A)
    inf = max((abs(float(v)) for row in rows for v in row), default=0.0)
    if members:
        D = len(members[0])
        r = default_rho(D) if rho is None else rho
        pts = np.asarray(members, dtype=float)
        dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        weights = np.exp(sigma * dist ** r)
        sig = float((np.abs(np.asarray(rows, dtype=float)) * weights).max()) if d else 0.0
    else:
        sig = inf
    rms = math.sqrt(float(frobenius_sq(A)) / d) if d else 0.0
    tol = 1e-12 * max(1.0, inf)
    if d and not (rms / math.sqrt(d) <= inf + tol and inf <= math.sqrt(d) * rms + tol):
        raise InvariantViolation("norm bracket violated", stage="block norms")
    return inf, sig, rms


def rms_norm(A):
    return math.sqrt(float(frobenius_sq(A)) / len(A))


def derivative_inverse_entry(Ainv, i, j, h, l):
    """d A^{-1}(h, l) / d A(i, j) treating entries as independent."""
    return -Ainv[h][i] * Ainv[j][l]


def derivative_rms(A, i, j):
    """d ||A|| / d A(i, j) treating entries as independent."""
    return A[i][j] / (len(A) * rms_norm(A))


# ---------------------------------------------------------------------------
# shifted blocks, divisors and propagators


@dataclass
class DivisorState:
    """Everything a line with index (n, cluster) needs to price its propagator."""

    n: int
    p: int
    delta: object
    y: float
    x: float
    nu: float
    chibar: dict
    scales: tuple
    shifted: object
    shifted_inverse: object
    p_minus_s: object

    def chibar_value(self, i):
        return self.chibar[i]


def _shifted(delta_value, p_minus_s, chibar1, M, d, exact):
    A = mscale(delta_value, identity(d, exact))
    if M is not None and chibar1 != 0:
        A = madd(A, mscale(p_minus_s * chibar1, M))
    return A


def divisor_state(n: int, cluster, M, ctx: FrequencyContext, spec: CutoffSpec | None = None,
                  nu_constant: float | None = None) -> DivisorState:
    """Compute y = p^s2 delta, x = ||shifted^{-1}||^{-1} and the shift nu.

    The shifted matrix is ``delta I + p^{-s} chibar_1(y) M``.  ``nu`` is fixed
    by ``x = |delta + p^{-s1} nu|`` taking the sign of delta.  When
    ``nu_constant`` is given the bound ``|nu| <= 2 nu_constant |M|_inf`` is
    asserted.
    """
    spec = spec or CutoffSpec(gamma=ctx.gamma, exact=ctx.exact)
    p = cluster.p
    d = cluster.d
    exact = ctx.exact
    dv = delta(n, p, ctx)
    y = float(p) ** ctx.s2 * float(dv)
    chibar = {i: chi_bar(y, i, spec) for i in (1, 0, -1)}
    pms = ctx.p_power(p, -ctx.s)
    if M is not None and not exact:
        M = np.asarray(M, dtype=float)
    A = _shifted(dv, pms, chibar[1], M, d, exact)
    try:
        Ainv = inverse(A)
    except ZeroDivisionError:
        raise SingularShiftedMatrix(f"shifted block singular at n={n}, p={p}",
                                    n=n, p=p) from None
    x = 1.0 / math.sqrt(float(frobenius_sq(Ainv)) / d)
    sign = 1.0 if float(dv) >= 0 else -1.0
    nu = (sign * x - float(dv)) * float(p) ** ctx.s1
    if nu_constant is not None and M is not None:
        bound = 2.0 * nu_constant * max(abs(float(v)) for row in as_rows(M) for v in row)
        if abs(nu) > bound + 1e-15:
            raise InvariantViolation(f"eigen-shift bound violated at n={n}, p={p}",
                                     stage="divisor state")
    scales = tuple(nonzero_scales(x, spec)) if chibar[1] != 0 else ()
    return DivisorState(n=n, p=p, delta=dv, y=y, x=x, nu=nu, chibar=chibar, scales=scales,
                        shifted=A, shifted_inverse=Ainv, p_minus_s=pms)


def propagator(n: int, cluster, h: int, i: int, M, ctx: FrequencyContext,
               spec: CutoffSpec | None = None, state: DivisorState | None = None):
    """Propagator on scale h and type i for the block (n, cluster).

    Types -1 and 0 live on scale -1 only and carry ``chibar_i(y) p^{-s}
    shifted^{-1}``; type 1 carries ``chibar_1(y) chi_h(x) p^{-s} shifted^{-1}``.
    Vanishing cutoffs give the zero matrix without touching the inverse.
    """
    spec = spec or CutoffSpec(gamma=ctx.gamma, exact=ctx.exact)
    exact = ctx.exact
    d = cluster.d
    if i not in (-1, 0, 1):
        raise ValueError("type must be -1, 0 or 1")
    if i != 1 and h != -1:
        return zeros(d, exact=exact)
    if state is None:
        dv = delta(n, cluster.p, ctx)
        y = float(cluster.p) ** ctx.s2 * float(dv)
        if chi_bar(y, i, spec) == 0:
            return zeros(d, exact=exact)
        state = divisor_state(n, cluster, M, ctx, spec)
    factor = state.chibar[i]
    if factor == 0:
        return zeros(d, exact=exact)
    if i == 1:
        factor = factor * chi_scale(state.x, h, spec)
        if factor == 0:
            return zeros(d, exact=exact)
    return mscale(factor * state.p_minus_s, state.shifted_inverse)


def low_type_bound(cluster_d_bound: float, gamma, p: int, s: float) -> float:
    """Bound (16 / gamma) C1^(1/2) p^(-3s/4) on the non-small propagators."""
    return 16.0 / float(gamma) * math.sqrt(cluster_d_bound) * p ** (-0.75 * s)


# ---------------------------------------------------------------------------
# resonant block decomposition


@dataclass
class ResonantDecomposition:
    """Block form of a cell matrix for one block multi-index.

    ``order`` lists the indices with label 1, then 0, then -1; ``perm`` is the
    matrix with ``perm[a][order[a]] = 1`` so that ``perm A perm^T`` is in block
    form.  ``S`` and ``A_tilde`` satisfy ``A = S A_tilde S^T``.
    """

    labels: tuple
    order: tuple
    sizes: tuple
    perm: object
    B: object
    A_tilde: object
    S: object
    A11_tilde: object
    A22: object
    A33: object
    bare: dict = field(default_factory=dict)


def _block_matrix(blocks, sizes, exact):
    n = sum(sizes)
    rows = [[Fraction(0) if exact else 0.0 for _ in range(n)] for _ in range(n)]
    offs = [0, sizes[0], sizes[0] + sizes[1]]
    for (bi, bj), blk in blocks.items():
        for r in range(sizes[bi]):
            for c in range(sizes[bj]):
                rows[offs[bi] + r][offs[bj] + c] = blk[r][c]
    if exact:
        return tuple(tuple(r) for r in rows)
    return np.asarray(rows, dtype=float)


def resonant_block_decompose(A, b, p_minus_s=1, check: bool = True) -> ResonantDecomposition:
    """Decompose a cell matrix according to the block labels ``b``.

    ``b[a]`` in {1, 0, -1}.  Requires the (1,3) and (2,3) blocks to vanish
    and the (3,3) block to be diagonal (true whenever the product of the
    cutoffs selected by ``b`` is nonzero).  Returns the factors of
    ``A = S A_tilde S^T`` and the three bare propagators with
    ``sum_i bare[i] == p^{-s} A^{-1}``.
    """
    exact = is_exact_matrix(A)
    d = len(A)
    labels = tuple(int(v) for v in b)
    if len(labels) != d or any(v not in (1, 0, -1) for v in labels):
        raise ValueError("block labels must be a {1,0,-1} vector of matching length")
    groups = [[a for a in range(d) if labels[a] == t] for t in (1, 0, -1)]
    order = tuple(groups[0] + groups[1] + groups[2])
    sizes = tuple(len(g) for g in groups)
    n1, n2, n3 = sizes
    perm = tuple(tuple(Fraction(int(order[r] == c)) for c in range(d)) for r in range(d))
    if not exact:
        perm = np.asarray(perm, dtype=float)
    PA = matmul(matmul(perm, A), transpose(perm))
    idx1 = range(0, n1)
    idx2 = range(n1, n1 + n2)
    idx3 = range(n1 + n2, d)
    A11, A12, A22 = submatrix(PA, idx1, idx1), submatrix(PA, idx1, idx2), submatrix(PA, idx2, idx2)
    A13, A23, A33 = submatrix(PA, idx1, idx3), submatrix(PA, idx2, idx3), submatrix(PA, idx3, idx3)
    if check:
        if not (is_zero(A13) and is_zero(A23)):
            raise InvariantViolation("blocks coupling to label -1 must vanish",
                                     stage="resonant block decomposition")
        off = [A33[r][c] for r in range(n3) for c in range(n3) if r != c]
        if any(v != 0 for v in off):
            raise InvariantViolation("label -1 block must be diagonal",
                                     stage="resonant block decomposition")
    if n2:
        try:
            A22inv = inverse(A22)
        except ZeroDivisionError:
            raise SingularA22("label-0 block is singular") from None
        B = matmul(A12, A22inv)
        A11t = madd(A11, matmul(B, transpose(A12)), -1)
    else:
        A22inv = zeros(0, exact=exact)
        B = zeros(n1, 0, exact=exact)
        A11t = A11
    A_tilde = _block_matrix({(0, 0): A11t, (1, 1): A22, (2, 2): A33}, sizes, exact)
    upper = _block_matrix({(0, 0): identity(n1, exact), (0, 1): B, (1, 1): identity(n2, exact),
                           (2, 2): identity(n3, exact)}, sizes, exact)
    S = matmul(transpose(perm), upper)
    if check and as_rows(matmul(matmul(S, A_tilde), transpose(S))) != as_rows(A) and exact:
        raise InvariantViolation("reconstruction S A~ S^T != A", stage="resonant block decomposition")
    # bare propagators p^{-s} S^{-T} diag(...) S^{-1}
    upper_inv = _block_matrix({(0, 0): identity(n1, exact), (0, 1): mscale(-1, B),
                               (1, 1): identity(n2, exact), (2, 2): identity(n3, exact)},
                              sizes, exact)
    S_inv = matmul(upper_inv, perm)
    bare = {}
    pieces = {}
    if n1:
        try:
            pieces[1] = {(0, 0): inverse(A11t)}
        except ZeroDivisionError:
            pieces[1] = None
    else:
        pieces[1] = {}
    pieces[0] = {(1, 1): A22inv} if n2 else {}
    if n3:
        try:
            pieces[-1] = {(2, 2): inverse(A33)}
        except ZeroDivisionError:
            raise SingularShiftedMatrix("label -1 block has a zero diagonal entry") from None
    else:
        pieces[-1] = {}
    for i, blocks in pieces.items():
        if blocks is None:
            bare[i] = None
            continue
        mid = _block_matrix(blocks, sizes, exact)
        bare[i] = mscale(p_minus_s, matmul(matmul(transpose(S_inv), mid), S_inv))
    return ResonantDecomposition(labels=labels, order=order, sizes=sizes, perm=perm, B=B,
                                 A_tilde=A_tilde, S=S, A11_tilde=A11t, A22=A22, A33=A33,
                                 bare=bare)


def resonant_propagator(dec: ResonantDecomposition, i: int, h: int, chibar_b, chi_h_value):
    """Propagator for one block multi-index: cutoff products times a bare piece."""
    exact = is_exact_matrix(dec.A22) if dec.sizes[1] else True
    d = sum(dec.sizes)
    if i == 1:
        if dec.bare[1] is None:
            if chibar_b * chi_h_value == 0:
                return zeros(d, exact=exact)
            raise SingularSchurBlock("Schur complement is singular")
        return mscale(chibar_b * chi_h_value, dec.bare[1])
    if h != -1:
        return zeros(d, exact=exact)
    return mscale(chibar_b, dec.bare[i])


def resonant_counterterm_from_T(dec: ResonantDecomposition, T):
    """Counterterm supported on the label-1 block cancelling T through G.

    In permuted coordinates the (1,1) block is
    ``-[I, -B, 0] T [I, -B, 0]^T`` and every other block vanishes, so that
    ``X = L + T`` satisfies ``X11 - (B X12^T + X12 B^T) + B X22 B^T = 0``.
    """
    n1, n2, n3 = dec.sizes
    exact = is_exact_matrix(T)
    PT = matmul(matmul(dec.perm, T), transpose(dec.perm))
    left = _block_matrix({(0, 0): identity(n1, exact), (0, 1): mscale(-1, dec.B)},
                         dec.sizes, exact)
    core = matmul(matmul(left, PT), transpose(left))
    L11 = mscale(-1, submatrix(core, range(n1), range(n1)))
    PL = _block_matrix({(0, 0): L11}, dec.sizes, exact)
    return matmul(matmul(transpose(dec.perm), PL), dec.perm)


def cancellation_residual(dec: ResonantDecomposition, L, T):
    """``X11 - (B X12^T + X12 B^T) + B X22 B^T`` for X = L + T."""
    n1, n2, _ = dec.sizes
    X = madd(L, T)
    PX = matmul(matmul(dec.perm, X), transpose(dec.perm))
    X11 = submatrix(PX, range(n1), range(n1))
    X12 = submatrix(PX, range(n1), range(n1, n1 + n2))
    X22 = submatrix(PX, range(n1, n1 + n2), range(n1, n1 + n2))
    B = dec.B
    out = madd(X11, madd(matmul(B, transpose(X12)), matmul(X12, transpose(B))), -1)
    return madd(out, matmul(matmul(B, X22), transpose(B)))


def sandwiched(dec: ResonantDecomposition, L, T):
    """``bare_1 (L + T) bare_1``, zero exactly when the cancellation holds."""
    G = dec.bare[1]
    return matmul(matmul(G, madd(L, T)), G)
