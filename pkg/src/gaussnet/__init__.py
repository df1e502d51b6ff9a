"""Belief propagation on continuous polytree Bayesian networks.

Every prior, conditional density, message and belief is a finite weighted sum
of Gaussians, so propagation reduces to closed-form weight, mean and variance
updates.
"""

from .gaussian_core import (
    DEFAULT_REDUCTION,
    IDENTITY_REDUCTION,
    GaussianMixture,
    ReductionPolicy,
    WeightedGaussian,
    eval_gaussian,
    mixture_eval_grid,
    mixture_l1_distance,
    mixture_moments,
    mixture_normalize,
    mixture_product,
    mixture_reduce,
    overlap_scale,
    product_pair,
)
from .network import ConditionalMixtureCPD, LinearCPD, Network, NodeSpec, build_network, validate_polytree
from .propagation import (
    DEFAULT_OPTIONS,
    EXACT_OPTIONS,
    VACUOUS,
    InferenceOptions,
    InferenceResult,
    Vacuous,
    propagate,
)

__all__ = [
    "DEFAULT_OPTIONS", "DEFAULT_REDUCTION", "EXACT_OPTIONS", "IDENTITY_REDUCTION", "VACUOUS",
    "ConditionalMixtureCPD", "GaussianMixture", "InferenceOptions", "InferenceResult",
    "LinearCPD", "Network", "NodeSpec", "ReductionPolicy", "Vacuous", "WeightedGaussian",
    "build_network", "eval_gaussian", "mixture_eval_grid", "mixture_l1_distance",
    "mixture_moments", "mixture_normalize", "mixture_product", "mixture_reduce",
    "overlap_scale", "product_pair", "propagate", "validate_polytree",
]
