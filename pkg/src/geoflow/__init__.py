"""Gradual transfer between structural-dynamics domains with geodesic flow kernels."""

__version__ = "0.1.0"

from .chain import ChainResult, ChainSpec, HopRecord, VarianceRule, enumerate_chains, propagate, run_hop, search_chains
from .gfk import FlowKernel, build_kernel, embed, flow_point, kernel_value
from .subspace import Subspace, cs_decompose, fit_pca, principal_angles

__all__ = [
    "ChainResult", "ChainSpec", "FlowKernel", "HopRecord", "Subspace", "VarianceRule",
    "build_kernel", "cs_decompose", "embed", "enumerate_chains", "fit_pca", "flow_point",
    "kernel_value", "principal_angles", "propagate", "run_hop", "search_chains",
]
