"""Renormalized Lindstedt series for periodic solutions of a smoothed cubic NLS.

Modules:

* ``lattice``: sphere enumeration, cluster partitions, near-resonant index sets;
* ``smalldiv``: frequencies, divisors, cutoff partitions, Diophantine checks;
* ``blocks``: block matrices, norms, propagators, resonant decompositions;
* ``trees``: labelled trees, values, resonances, counterterms;
* ``series``: recursion oracle, Q equation, compatibility fixpoint, residuals;
* ``bifurcation``: wave packets and the linearized bifurcation matrix;
* ``cli``: command-line pipelines.
"""

__version__ = "0.1.0"
