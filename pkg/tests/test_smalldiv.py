import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindstedt.errors import ConfigError, MissingBlock
from lindstedt.lattice import ClusterIndex
from lindstedt.smalldiv import (CutoffSpec, FrequencyContext, check_melnikov_first,
                                check_melnikov_second, check_mu_nonresonant, chi, chi_bar,
                                chi_family, chi_scale, chi_tail, delta, measure_sweep,
                                nonzero_scales, partition_max_scale, scale_window)

GAMMA = Fraction(1, 8)
EXACT = CutoffSpec(gamma=GAMMA, exact=True)
FLOAT = CutoffSpec(gamma=0.125)


def test_delta_at_unperturbed_mode_is_eps(exact_ctx):
    assert delta(1, 2, exact_ctx) == exact_ctx.eps


def test_delta_arithmetic():
    ctx = FrequencyContext(D=2, s=1, mu=Fraction(1, 10), eps=Fraction(1, 100))
    assert delta(0, 5, ctx) == Fraction(51, 10)
    res = FrequencyContext(D=2, s=1, mu=0, eps=Fraction(1, 100))
    assert delta(13, 25, res) == Fraction(-87, 100)


@settings(max_examples=50, deadline=None)
@given(st.integers(-40, 40), st.integers(0, 400), st.fractions(0, Fraction(1, 10)))
def test_delta_affine_in_eps(n, p, eps):
    ctx = FrequencyContext(D=2, s=1, mu=Fraction(987, 1597), eps=eps)
    assert delta(n, p, ctx.with_eps(eps + 1)) - delta(n, p, ctx) == n


def test_invalid_contexts():
    with pytest.raises(ConfigError):
        FrequencyContext(D=1, s=1, mu=0, eps=0)
    with pytest.raises(ConfigError):
        FrequencyContext(D=2, s=1, mu=0, eps=0, tau1=2.5)
    with pytest.raises(ConfigError):
        FrequencyContext(D=2, s=1, mu=0, eps=0, gamma=Fraction(1, 10))


def test_cutoff_windows():
    g = FLOAT.gamma
    assert chi(0.5 * g, FLOAT) == 1.0 and chi(3 * g, FLOAT) == 0.0
    assert chi_bar(g / 16, 1, FLOAT) == 1.0 and chi_bar(g / 2, 1, FLOAT) == 0.0
    assert 0.0 < chi(1.5 * g, FLOAT) < 1.0


def test_tail_windows():
    g = FLOAT.gamma
    for h in range(-1, 6):
        assert chi_tail(math.ldexp(g, -h - 2), h, FLOAT) == 1.0
        assert chi_tail(math.ldexp(g, -h - 1), h, FLOAT) == 0.0


def test_family_dispatch():
    x = 0.03
    assert chi_family(x, 2, "chi_h", FLOAT) == chi_scale(x, 2, FLOAT)
    assert chi_family(x, 1, "chibar", FLOAT) == chi_bar(x, 1, FLOAT)
    assert chi_family(x, 0, "tail", FLOAT) == chi_tail(x, 0, FLOAT)
    assert chi_family(x, 0, "chi", FLOAT) == chi(x, FLOAT)
    with pytest.raises(ValueError):
        chi_family(x, 0, "nope", FLOAT)


def test_monotone_profile():
    xs = np.linspace(0, 0.3, 400)
    vals = [chi(x, FLOAT) for x in xs]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-9, 10.0), st.booleans())
def test_partition_of_unity_float(x, neg):
    x = -x if neg else x
    H = partition_max_scale(x, FLOAT)
    assert abs(sum(chi_scale(x, h, FLOAT) for h in range(-1, H + 1)) - 1) <= 1e-12
    assert abs(sum(chi_bar(x, i, FLOAT) for i in (-1, 0, 1)) - 1) <= 1e-12


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-9, 10.0))
def test_partition_of_unity_exact(x):
    H = partition_max_scale(x, EXACT)
    assert sum(chi_scale(x, h, EXACT) for h in range(-1, H + 1)) == 1
    assert sum(chi_bar(x, i, EXACT) for i in (-1, 0, 1)) == 1


@settings(max_examples=300, deadline=None)
@given(st.floats(1e-8, 10.0))
def test_scale_support(x):
    live = [h for h in range(-1, 40) if chi_scale(x, h, FLOAT) != 0]
    assert live == nonzero_scales(x, FLOAT)
    assert 1 <= len(live) <= 2 and live == list(range(live[0], live[0] + len(live)))
    for h in live:
        lo, hi = scale_window(h, FLOAT.gamma)
        assert lo < x < hi


def test_resonant_rescaling():
    spec = CutoffSpec.resonant(0.125)
    for x in (0.001, 0.004, 0.01):
        assert chi_scale(x, 1, spec) == chi_scale(32 * x, 1, FLOAT)


def test_mu_half_passes_to_moderate_order():
    ok, w = check_mu_nonresonant(Fraction(1, 2), Fraction(1, 100), 2.0, 20, 2)
    assert ok and w is None


def test_rational_mu_fails_eventually():
    # (D + 1/2) n - 1/2 is an integer for odd n; 82 = 9^2 + 1^2
    ok, w = check_mu_nonresonant(Fraction(1, 2), Fraction(1, 100), 2.0, 40, 2)
    assert not ok and (w.n, w.p, w.a, w.gap) == (33, 82, 1, 0.0)


def test_zero_mu_is_resonant():
    ok, w = check_mu_nonresonant(0, Fraction(1, 100), 2.0, 20, 2, sector="all")
    assert not ok and w.p == 2 * w.n and w.n >= 2
    ok, w = check_mu_nonresonant(0, Fraction(1, 100), 2.0, 20, 2)
    assert not ok and w.p == 2 * w.n


def test_irrational_surrogate_passes():
    assert check_mu_nonresonant(math.sqrt(2) - 1, 1e-3, 2.0, 100, 2)[0]


def test_first_melnikov(exact_ctx):
    # eps = mu makes omega = 2, an integer
    ok, w = check_melnikov_first(exact_ctx.mu, exact_ctx, 10)
    assert not ok and w.n == 1
    assert check_melnikov_first(Fraction(1, 100), exact_ctx, 0)[0]
    half = FrequencyContext(D=2, s=1, mu=Fraction(1, 2), eps=Fraction(1, 100))
    ok, w = check_melnikov_first(Fraction(0), half, 10)
    assert not ok and w.n == 2


def test_second_melnikov_zero_counterterm(float_ctx):
    clusters = ClusterIndex(2)
    ok2, _ = check_melnikov_second(0.01, None, float_ctx, clusters, n_max=10)
    assert ok2
    with pytest.raises(MissingBlock):
        check_melnikov_second(0.01, {}, float_ctx, clusters, n_max=10)


def test_measure_sweeps(exact_ctx):
    assert measure_sweep(0.1, 1000, "always").fraction == 1.0
    with pytest.raises(ConfigError):
        measure_sweep(0.1, 10, "always")
    fr = [measure_sweep(e, 10000, "first_melnikov", exact_ctx).fraction for e in (0.1, 0.05, 0.01)]
    assert fr == sorted(fr) and fr[-1] > 0.99
    sweep = measure_sweep(0.1, 1000, "first_melnikov", exact_ctx)
    excluded = sum(b - a for a, b in sweep.excluded_intervals)
    assert math.isclose(excluded, 0.1 * (1 - sweep.fraction), rel_tol=1e-9)
