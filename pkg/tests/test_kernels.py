import os
import subprocess
import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lindstedt import _kernels_py, kernels
from lindstedt.series import convolve_exact, convolve_float

coeffs = st.dictionaries(
    st.tuples(st.integers(-3, 3), st.tuples(st.integers(-3, 3), st.integers(-3, 3))),
    st.integers(-5, 5).map(lambda v: Fraction(v, 3)), min_size=1, max_size=6)


@settings(max_examples=60, deadline=None)
@given(coeffs, coeffs, coeffs)
def test_float_convolution_matches_exact(a, b, c):
    exact = {k: v for k, v in convolve_exact(a, b, c).items() if v != 0}
    approx = convolve_float(a, b, c)
    keys = set(exact) | set(approx)
    for k in keys:
        assert approx.get(k, 0.0) == pytest.approx(float(exact.get(k, 0)), abs=1e-12)


def test_empty_inputs():
    assert convolve_float({}, {(1, (1, 1)): 1.0}, {(1, (1, 1)): 1.0}) == {}


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled extension not built")
def test_compiled_matches_fallback():
    from lindstedt import _kernels

    rng = np.random.default_rng(0)
    for _ in range(20):
        n = [int(x) for x in rng.integers(1, 30, 3)]
        ks = [np.ascontiguousarray(rng.integers(-4, 5, size=(m, 3)), dtype=np.int64) for m in n]
        vs = [rng.normal(size=m) for m in n]
        lo = ks[0].min(0) + ks[1].min(0) - ks[2].max(0)
        shape = ks[0].max(0) + ks[1].max(0) - ks[2].min(0) - lo + 1
        args = (ks[0], vs[0], ks[1], vs[1], ks[2], vs[2], lo.astype(np.int64),
                shape.astype(np.int64))
        assert np.allclose(_kernels.cubic_convolve(*args), _kernels_py.cubic_convolve(*args),
                           atol=1e-13)


def test_pure_python_switch():
    env = dict(os.environ, LINDSTEDT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c",
                          "from lindstedt import kernels; print(kernels.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
