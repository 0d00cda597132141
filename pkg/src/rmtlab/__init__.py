"""Numerical laboratory for Lyapunov exponents of products of truncated
Haar orthogonal matrices.

Submodules
----------
ensembles   Ginibre / Haar / truncated orthogonal samplers, log-Beta draws.
lyapunov    Lyapunov spectra and frame growth rates over long products.
moments     digamma/trigamma, closed-form moments and bound evaluators.
weingarten  Orthogonal Weingarten calculus on pair matchings.
stats       Empirical CDFs, Kolmogorov-Smirnov distances, standardization.
harness     Experiment configs, seeded parallel runs, result files.
cli         The ``rmtlab`` command line.
"""

__version__ = "0.1.0"
