"""Wasserstein convergence bounds for Markov chains from contractive drift certificates."""
__version__ = "0.1.0"

from . import bounds, certify, distributions, metrics, models  # noqa: E402,F401
