"""Numerical laboratory for focusing Gibbs measures on the torus.

Submodules:

* :mod:`gibbslab.field`: Fourier-truncated fields, norms, file formats
* :mod:`gibbslab.measures`: Gaussian and Gibbs measures, samplers
* :mod:`gibbslab.dynamics`: Galerkin NLS and gKdV integrators
* :mod:`gibbslab.soliton`: ground state constants and scaled solitons
* :mod:`gibbslab.orlicz`: the Young function, its conjugate and Luxemburg norms
* :mod:`gibbslab.experiments`: invariance, tail, growth and union-bound studies
* :mod:`gibbslab.cli`: the ``gibbslab`` command
"""

from .field import NormSpec, Symmetry, TorusField
from .measures import GaussianLaw, GibbsSpec, WeightedEnsemble
from .dynamics import EvolutionSpec, Trajectory, evolve
from .orlicz import YoungParams
from .soliton import mass_threshold

__all__ = [
    "EvolutionSpec",
    "GaussianLaw",
    "GibbsSpec",
    "NormSpec",
    "Symmetry",
    "TorusField",
    "Trajectory",
    "WeightedEnsemble",
    "YoungParams",
    "evolve",
    "mass_threshold",
]

__version__ = "0.1.0"
