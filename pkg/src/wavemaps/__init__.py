"""Numerical study of equivariant wave maps from 2+1 Minkowski space into the two-sphere.

Modules
-------
analytic     closed-form reference solutions and initial data
grid         nested radial meshes, interpolation and snapshots
evolver      leapfrog evolution with subcycled refinement
diagnostics  scale factor, energies and profile collapse
experiments  run classification, bisection, power-law fits, convergence
cli          command-line front end
"""

from .config import ConfigError, SimConfig

__all__ = ["ConfigError", "SimConfig"]
__version__ = "0.1.0"
