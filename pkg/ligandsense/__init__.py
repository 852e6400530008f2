"""
ligandsense
===========
Estimation of the concentrations of several ligand types from the
unbound and bound dwell times of a single receptor type.

The package provides the receptor kinetics and sampling, the
method-of-moments and maximum-likelihood estimators, their analytic
errors and the Cramér-Rao bound, a kinetic-proofreading receptor and the
chemical reaction network that computes the estimate, and the sweeps
that tie these together.
"""
from .utils import *
from .kinetics import *
from .estimators import *
from .theory import *
from .kpr import *
from .crn import *
from .experiments import *
from . import postprocess
