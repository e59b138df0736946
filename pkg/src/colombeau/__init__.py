"""Nonlinear generalized functions and generalized sections as executable objects.

Distributions are embedded through nets of smoothing operators, combined by
nonlinear tensor operations, and tested for moderateness, negligibility and
association by eps-sweeps.
"""

from .asymptotics import (AsymptoticReport, EpsGrid, Seminorm, association_test, moderateness_test,
                          negligibility_noderiv, negligibility_test)
from .distributions import DistributionalSection, delta, heaviside, pair, parse_spec
from .genfun import (GenSection, differential, embed, evaluate, lie_hat, lie_tilde, sigma)
from .mollifiers import KernelNet, Mollifier, eval_kernel, make_mollifier
from .smoothing import convolution_net

__all__ = [
    "AsymptoticReport", "EpsGrid", "Seminorm", "association_test", "moderateness_test", "negligibility_noderiv",
    "negligibility_test", "DistributionalSection", "delta", "heaviside", "pair", "parse_spec", "GenSection",
    "differential", "embed", "evaluate", "lie_hat", "lie_tilde", "sigma", "KernelNet", "Mollifier", "eval_kernel",
    "make_mollifier", "convolution_net",
]
