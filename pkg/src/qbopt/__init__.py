"""Bayesian optimization of quantum control pulses and ramps.

Submodules: ``gp`` (Gaussian-process surrogate), ``bayesopt`` (BO loop),
``baselines`` (SPSA, Nelder-Mead, differential evolution, random search),
``controls`` (ramp and pulse parametrizations), ``bosehubbard`` and
``rydberg`` (simulated systems), ``harness`` (configs, runs, CLI).
"""

__version__ = "0.1.0"
