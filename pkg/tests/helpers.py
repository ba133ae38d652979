"""Shared generators for the test-suite."""

import random
from fractions import Fraction

import numpy as np

from lindstedt.blocks import determinant, submatrix


def random_symmetric(rng: random.Random, d: int, lo=-9, hi=9, den=7):
    A = [[Fraction(0)] * d for _ in range(d)]
    for a in range(d):
        for b in range(a, d):
            A[a][b] = A[b][a] = Fraction(rng.randint(lo, hi), rng.randint(1, den))
    return A


def random_admissible(rng: random.Random, d: int | None = None):
    """A cell matrix and labels b with no coupling to label -1 and a diagonal -1 block,
    with invertible label-0 block and Schur complement."""
    while True:
        d = d or rng.randint(2, 6)
        b = [rng.choice((1, 0, -1)) for _ in range(d)]
        A = random_symmetric(rng, d)
        for r in range(d):
            for c in range(d):
                if r != c and (b[r] == -1 or b[c] == -1):
                    A[r][c] = Fraction(0)
            if b[r] == -1 and A[r][r] == 0:
                A[r][r] = Fraction(1)
        zero = [r for r in range(d) if b[r] == 0]
        one = [r for r in range(d) if b[r] == 1]
        if zero and determinant(submatrix(A, zero, zero)) == 0:
            continue
        if determinant(A) == 0 or (one and determinant(submatrix(A, one + zero, one + zero)) == 0):
            continue
        return tuple(tuple(r) for r in A), b


def central_difference_check(d: int, rng: np.random.Generator, step: float = 1e-7):
    """Worst relative error of the entrywise derivative formulas of the inverse and
    of the root-mean-square norm against central differences."""
    from lindstedt.blocks import derivative_inverse_entry, derivative_rms, rms_norm

    A = rng.normal(size=(d, d))
    A = A + A.T + 2 * d * np.eye(d)
    Ainv = np.linalg.inv(A)
    worst = 0.0
    fd_grad = np.zeros((d, d))
    grad = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            Ap, Am = A.copy(), A.copy()
            Ap[i, j] += step
            Am[i, j] -= step
            fd_inv = (np.linalg.inv(Ap) - np.linalg.inv(Am)) / (2 * step)
            exact = np.array([[derivative_inverse_entry(Ainv, i, j, h, l) for l in range(d)]
                              for h in range(d)])
            worst = max(worst, np.abs(fd_inv - exact).max() / np.abs(exact).max())
            fd_grad[i, j] = (rms_norm(Ap) - rms_norm(Am)) / (2 * step)
            grad[i, j] = derivative_rms(A, i, j)
    # errors are relative to the largest entry of each derivative array
    return max(worst, np.abs(fd_grad - grad).max() / np.abs(grad).max())
