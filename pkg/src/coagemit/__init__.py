"""Coagulation with particle emission: S_i + S_j -> S_{i+j-ell}.

Submodules:

* ``kinetics``  kinetic equations, moments, interaction mass
* ``markov``    finite-N particle simulator
* ``classes``   reaction classes and reaction numbers
* ``solver``    stiff integration of the deterministic systems
* ``exact``     closed forms, polynomial family, recursion, moment hierarchy
* ``cli``       command-line front end
"""
__version__ = "0.1.0"

from .errors import (CoagError, DivisionByExhaustion, DomainError, Exhausted,  # noqa: F401
                     GelationReached, InvalidInitialDistribution, QuadratureFailure)
from .kinetics import ClusterDistribution, EmissionParams, Kind  # noqa: F401
