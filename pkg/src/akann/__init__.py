"""Reference-angle kernels and projection configurations for approximate nearest neighbor search."""

from .configs import (ProjectionConfig, assign_reference, build_config, build_gaussian, build_pol, build_ran,
                      build_sym, estimate_j, read_config, write_config)
from .kernels import AnglePair, KernelContext, k1, k1_cdf, k1_mips, k2, p2_bound
from .linalg import Rotation, SubspaceLayout, make_rng, sample_rotation, sample_uniform_sphere, split_levels
from .special import QuadratureSpec, refangle_lower_bound, reg_inc_beta

__version__ = "0.1.0"

__all__ = [
    "AnglePair", "KernelContext", "ProjectionConfig", "QuadratureSpec", "Rotation", "SubspaceLayout",
    "assign_reference", "build_config", "build_gaussian", "build_pol", "build_ran", "build_sym",
    "estimate_j", "k1", "k1_cdf", "k1_mips", "k2", "make_rng", "p2_bound", "read_config",
    "refangle_lower_bound", "reg_inc_beta", "sample_rotation", "sample_uniform_sphere", "split_levels",
    "write_config",
]
