"""gfflab: a numerical laboratory for the lattice Gaussian free field with
square-well pinning, hard-wall conditioning, and the inequality ledger of
the no-wetting argument."""

__version__ = "0.1.0"

from . import bounds, estimators, gaussfield, lattice, mcmc, pinning  # noqa: F401
