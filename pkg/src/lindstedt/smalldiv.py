"""Frequencies, divisors, dyadic cutoffs and Diophantine checks.

Two arithmetic modes share the code below.  In exact mode the physical
parameters (mu, eps, gamma) are ``Fraction`` objects and the divisors are
exact rationals.  Cutoff profiles are transcendental, so their values are
always evaluated in floating point and, in exact mode, promoted to the
``Fraction`` equal to that float.  Because every telescoping partition reuses
the same promoted values, the partitions of unity still sum to exactly one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import ConfigError, MissingBlock

Number = "Fraction | float"


def _is_exact(value) -> bool:
    return isinstance(value, (int, Fraction))


# ---------------------------------------------------------------------------
# frequency context


@dataclass(frozen=True)
class FrequencyContext:
    """Parameters fixing the frequency and the Diophantine exponents.

    ``omega = D + mu - eps``.  The derived exponents are ``s1 = s - 2 alpha``
    and ``s2 = s1 / 4``.  Exact mode is selected when mu, eps and gamma are
    rationals and the smoothing exponent is an integer.
    """

    D: int
    s: float
    mu: object
    eps: object
    gamma: object = Fraction(1, 200)
    gamma0: object = Fraction(1, 100)
    tau0: float = 2.0
    tau1: float = 3.5
    tau: float = 6.0
    alpha: float = 0.1
    eps0: object = Fraction(1, 10)

    def __post_init__(self):
        if self.D < 2:
            raise ConfigError(f"dimension must be at least 2, got {self.D}")
        if self.s < 0:
            raise ConfigError("smoothing exponent must be non-negative")
        if self.mu < 0:
            raise ConfigError("mu must be non-negative")
        if not self.tau1 > self.tau0 + 1:
            raise ConfigError("need tau1 > tau0 + 1")
        if not self.tau > self.tau0 + 1 + self.D:
            raise ConfigError("need tau > tau0 + 1 + D")
        if not (0 < self.gamma < 1):
            raise ConfigError("gamma must lie in (0, 1)")
        if self.gamma > self.gamma0 / 2:
            raise ConfigError("need gamma <= gamma0 / 2")
        if self.alpha <= 0 or self.s2 >= self.s:
            raise ConfigError("need alpha > 0 and s2 < s")

    @property
    def exact(self) -> bool:
        return (_is_exact(self.mu) and _is_exact(self.eps) and _is_exact(self.gamma)
                and float(self.s).is_integer())

    @property
    def omega(self):
        return self.D + self.mu - self.eps

    @property
    def s1(self) -> float:
        return self.s - 2 * self.alpha

    @property
    def s2(self) -> float:
        return self.s1 / 4

    def with_eps(self, eps) -> "FrequencyContext":
        return replace(self, eps=eps)

    def p_power(self, p: int, exponent):
        """``p ** exponent``; exact when the exponent is an integer in exact mode."""
        if self.exact and float(exponent).is_integer():
            return Fraction(p) ** int(exponent)
        return float(p) ** float(exponent)


def delta(n: int, p: int, ctx: FrequencyContext):
    """Divisor ``-omega n + p + mu`` of the linear operator on the mode (n, p)."""
    return -ctx.omega * n + p + ctx.mu


# ---------------------------------------------------------------------------
# cutoff functions


def _bump_exp(t: float) -> float:
    # 1 at t = 0, 0 at t = 1, strictly decreasing in between
    if t <= 0.0:
        return 1.0
    if t >= 1.0:
        return 0.0
    return math.exp(1.0 - 1.0 / (1.0 - t * t))


def _bump_smoothstep(t: float) -> float:
    if t <= 0.0:
        return 1.0
    if t >= 1.0:
        return 0.0
    return 1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


_PROFILES: dict[str, Callable[[float], float]] = {
    "exp": _bump_exp,
    "smoothstep": _bump_smoothstep,
}

# sup |d bump / dt| for each profile (the exp value is a rounded-up numeric
# maximum), used for the |chi'| <= C / gamma bound
_PROFILE_SLOPE = {"exp": 2.171, "smoothstep": 1.875}


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth step ``chi`` equal to 1 below gamma and 0 above 2 gamma.

    ``argument_scale`` multiplies the argument before the profile is applied;
    the resonant construction uses 32.
    """

    gamma: object
    profile: str = "exp"
    argument_scale: int = 1
    exact: bool = field(default=False)

    def __post_init__(self):
        if self.profile not in _PROFILES:
            raise ConfigError(f"unknown cutoff profile {self.profile!r}")
        if not self.gamma > 0:
            raise ConfigError("cutoff gamma must be positive")

    @classmethod
    def resonant(cls, gamma, profile="exp", exact=False) -> "CutoffSpec":
        return cls(gamma=gamma, profile=profile, argument_scale=32, exact=exact)

    @property
    def slope_constant(self) -> float:
        """C with |chi'(x)| <= C / gamma."""
        return _PROFILE_SLOPE[self.profile] * self.argument_scale

    def promote(self, value: float):
        return Fraction(value) if self.exact else value


def _chi_float(x: float, gamma: float, profile: str) -> float:
    ax = abs(x)
    if ax <= gamma:
        return 1.0
    if ax >= 2.0 * gamma:
        return 0.0
    return _PROFILES[profile]((ax - gamma) / gamma)


def chi(x, spec: CutoffSpec):
    """The basic step: 1 for |x| <= gamma, 0 for |x| >= 2 gamma."""
    value = _chi_float(float(x) * spec.argument_scale, float(spec.gamma), spec.profile)
    return spec.promote(value)


def chi_dyadic(x, k: int, spec: CutoffSpec):
    """``chi(2**k x)``; the building block of every telescoping partition."""
    arg = math.ldexp(float(x), k) * spec.argument_scale
    return spec.promote(_chi_float(arg, float(spec.gamma), spec.profile))


def chi_scale(x, h: int, spec: CutoffSpec):
    """Scale-h piece of the dyadic partition; h = -1 is the large-|x| remainder."""
    if h < -1:
        raise ValueError("scale index must be >= -1")
    if h == -1:
        return 1 - chi_dyadic(x, 0, spec)
    return chi_dyadic(x, h, spec) - chi_dyadic(x, h + 1, spec)


def chi_bar(y, i: int, spec: CutoffSpec):
    """Three-piece partition in the variable y: i=1 near zero, i=-1 far away."""
    if i == 1:
        return chi_dyadic(y, 3, spec)
    if i == 0:
        return chi_dyadic(y, 2, spec) - chi_dyadic(y, 3, spec)
    if i == -1:
        return 1 - chi_dyadic(y, 2, spec)
    raise ValueError("i must be -1, 0 or 1")


def chi_tail(x, h: int, spec: CutoffSpec):
    """Sum of the scale pieces strictly above h + 1, i.e. ``chi(2**(h+2) x)``.

    Equals 1 for |x| <= 2**(-h-2) gamma and 0 for |x| >= 2**(-h-1) gamma.
    """
    return chi_dyadic(x, h + 2, spec)


def chi_family(x, h: int, variant: str, spec: CutoffSpec):
    """Dispatch over the cutoff variants by name: chi, chi_h, chibar, tail."""
    if variant == "chi":
        return chi(x, spec)
    if variant == "chi_h":
        return chi_scale(x, h, spec)
    if variant == "chibar":
        return chi_bar(x, h, spec)
    if variant == "tail":
        return chi_tail(x, h, spec)
    raise ValueError(f"unknown cutoff variant {variant!r}")


def scale_window(h: int, gamma) -> tuple[float, float]:
    """Open interval of |x| on which the scale-h piece can be nonzero."""
    g = float(gamma)
    if h == -1:
        return g, math.inf
    return math.ldexp(g, -h - 1), math.ldexp(g, -h + 1)


def nonzero_scales(x, spec: CutoffSpec) -> list[int]:
    """The (at most two, consecutive) scales with a nonzero piece at x."""
    ax = abs(float(x)) * spec.argument_scale
    if ax == 0.0:
        raise ValueError("no finite scale carries x = 0")
    centre = math.floor(math.log2(float(spec.gamma) / ax))
    return [h for h in range(max(-1, centre - 1), max(-1, centre + 2) + 1)
            if chi_scale(x, h, spec) != 0]


def partition_max_scale(x, spec: CutoffSpec) -> int:
    """Smallest H with ``sum_{h=-1}^{H} chi_h(x) == 1``."""
    ax = abs(float(x)) * spec.argument_scale
    if ax == 0.0:
        raise ValueError("partition needs x != 0")
    h = -1
    while math.ldexp(ax, h + 1) < 2.0 * float(spec.gamma):
        h += 1
    return h


# ---------------------------------------------------------------------------
# Diophantine checks


def _odd_sector_values(D: int, p_max: int) -> set[int]:
    """|m|^2 for vectors with all components odd (the modes reachable from the
    unperturbed set), up to p_max."""
    vals = {D}
    odd = list(range(1, int(math.isqrt(max(p_max, 0))) + 2, 2))
    sq = [o * o for o in odd]
    frontier = {0}
    for _ in range(D):
        frontier = {a + b for a in frontier for b in sq if a + b <= p_max}
    vals |= frontier
    return vals


def _sum_of_squares_values(D: int, p_max: int) -> set[int]:
    sq = [k * k for k in range(0, int(math.isqrt(max(p_max, 0))) + 1)]
    frontier = {0}
    for _ in range(D):
        frontier = {a + b for a in frontier for b in sq if a + b <= p_max}
    return frontier


@dataclass(frozen=True)
class Witness:
    n: int
    p: int
    a: int
    gap: float
    bound: float


def check_mu_nonresonant(mu, gamma0, tau0, n_max: int, D: int, sector: str = "odd"):
    """Strong non-resonance of mu: |(D+mu) n - p - a mu| >= gamma0 / |n|**tau0.

    The scan runs over 0 < |n| <= n_max, a in {0, 1} and every p that is a
    squared length in the chosen ``sector``: ``"odd"`` (odd n and vectors with
    odd components, the only modes the expansion reaches) or ``"all"``
    (every n and every sum of D squares).  The index (1, D) is excluded.
    Returns ``(ok, witness)`` where witness is the first violation or None.
    """
    mu_f = float(mu)
    exact = _is_exact(mu)
    p_max = int((D + mu_f) * n_max + 2)
    if sector == "odd":
        values = _odd_sector_values(D, p_max)
        ns = [n for n in range(1, n_max + 1) if n % 2 == 1]
    elif sector == "all":
        values = _sum_of_squares_values(D, p_max)
        ns = list(range(1, n_max + 1))
    else:
        raise ConfigError(f"unknown sector {sector!r}")
    ordered = sorted(values)
    arr = np.asarray(ordered)
    for n in ns:
        bound = float(gamma0) / n ** float(tau0)
        for a in (0, 1):
            target = (D + mu) * n - a * mu
            tf = float(target)
            k = int(np.searchsorted(arr, tf))
            for idx in (k - 1, k):
                if 0 <= idx < len(ordered):
                    p = ordered[idx]
                    if (n, p) == (1, D):
                        continue
                    gap = abs(target - p) if exact else abs(tf - p)
                    if gap < bound:
                        return False, Witness(n, p, a, float(gap), bound)
    # negative n give |(D+mu)|n| + p + a mu| which is never small
    return True, None


def check_melnikov_first(eps, ctx: FrequencyContext, n_max: int = 200):
    """First Melnikov condition |omega n - p| >= gamma / n**tau1 for 1 <= n <= n_max."""
    c = ctx.with_eps(eps)
    omega = c.omega
    for n in range(1, n_max + 1):
        target = omega * n
        p = round(target)
        gap = abs(target - p)
        bound = float(c.gamma) / n ** c.tau1
        if gap < bound:
            return False, Witness(n, int(p), 0, float(gap), bound)
    return True, None


def omega_indices(n_max: int, ctx: FrequencyContext) -> Iterable[tuple[int, int]]:
    """All (n, p) with 1 <= n <= n_max inside the near-resonant index set."""
    from .lattice import omega_membership

    mu, eps0, D = ctx.mu, ctx.eps0, ctx.D
    for n in range(1, n_max + 1):
        lo = int(math.floor(-0.5 + float(D + mu - eps0) * n))
        hi = int(math.ceil(float(D + mu) * n + 0.5))
        for p in range(max(lo, 1), hi + 1):
            if omega_membership(n, p, mu, eps0, D):
                yield n, p


def check_melnikov_second(eps, M, ctx: FrequencyContext, clusters, n_max: int = 30,
                          cutoff: CutoffSpec | None = None):
    """Second Melnikov condition x_{n,j} >= gamma / n**tau on the index set.

    ``M`` maps (n, cluster key) to a symmetric block; ``None`` means the zero
    counterterm.  A mapping that lacks a block required by the scan raises
    ``MissingBlock``.  Indices outside the near-resonant set are skipped.
    """
    from .blocks import divisor_state

    c = ctx.with_eps(eps)
    spec = cutoff or CutoffSpec(gamma=c.gamma, exact=c.exact)
    for n, p in omega_indices(n_max, c):
        for cluster in clusters.clusters_on_sphere(p):
            key = (n, cluster.key)
            if M is None:
                block = None
            elif isinstance(M, Mapping):
                if key not in M:
                    raise MissingBlock(f"no counterterm block for n={n}, cluster {cluster.key}")
                block = M[key]
            else:
                block = M(n, cluster)
            state = divisor_state(n, cluster, block, c, spec)
            bound = float(c.gamma) / n ** c.tau
            if float(state.x) < bound:
                return False, Witness(n, p, 0, float(state.x), bound)
    return True, None


# ---------------------------------------------------------------------------
# measure sweeps


@dataclass
class SweepResult:
    eps0: float
    grid: np.ndarray
    passed: np.ndarray
    margins: np.ndarray

    @property
    def fraction(self) -> float:
        return float(np.mean(self.passed)) if self.passed.size else float("nan")

    @property
    def excluded_intervals(self) -> list[tuple[float, float]]:
        """Maximal runs of failing grid points, widened to the cell edges."""
        if not self.grid.size:
            return []
        step = float(self.eps0) / self.grid.size
        out: list[tuple[float, float]] = []
        start = None
        for i, ok in enumerate(self.passed):
            if not ok and start is None:
                start = i
            if ok and start is not None:
                out.append((start * step, i * step))
                start = None
        if start is not None:
            out.append((start * step, self.grid.size * step))
        return out

    def rows(self):
        for e, ok, m in zip(self.grid, self.passed, self.margins):
            yield float(e), bool(ok), float(m)


def first_melnikov_margins(eps_grid: np.ndarray, D: int, mu: float, gamma: float,
                           tau1: float, n_max: int) -> np.ndarray:
    """min_n (|omega n - p| - gamma / n**tau1) for every eps in the grid."""
    omega = D + mu - eps_grid
    margin = np.full(eps_grid.shape, np.inf)
    for n in range(1, n_max + 1):
        t = omega * n
        gap = np.abs(t - np.rint(t))
        np.minimum(margin, gap - gamma / n ** tau1, out=margin)
    return margin


def measure_sweep(eps0, grid_size: int, condition, ctx: FrequencyContext | None = None,
                  n_max: int = 1000) -> SweepResult:
    """Fraction of a midpoint grid in (0, eps0) satisfying a predicate.

    ``condition`` is ``"first_melnikov"``, ``"always"`` or a callable mapping
    eps to ``(ok, margin)``.
    """
    if grid_size < 1000:
        raise ConfigError("measure sweeps need at least 1000 grid points")
    e0 = float(eps0)
    grid = (np.arange(grid_size) + 0.5) * (e0 / grid_size)
    if condition == "always":
        return SweepResult(e0, grid, np.ones(grid_size, bool), np.full(grid_size, np.inf))
    if condition == "first_melnikov":
        if ctx is None:
            raise ConfigError("first Melnikov sweep needs a frequency context")
        margins = first_melnikov_margins(grid, ctx.D, float(ctx.mu), float(ctx.gamma),
                                         ctx.tau1, n_max)
        return SweepResult(e0, grid, margins >= 0, margins)
    if callable(condition):
        passed = np.zeros(grid_size, bool)
        margins = np.zeros(grid_size)
        for i, e in enumerate(grid):
            ok, margin = condition(float(e))
            passed[i] = ok
            margins[i] = margin
        return SweepResult(e0, grid, passed, margins)
    raise ConfigError(f"unknown sweep condition {condition!r}")
