"""Heat kernels of nonlocal operators with Hölder jump coefficients.

Submodules: ``jump_kernel`` (coefficients), ``rho_calculus`` (reference
profiles and convolution bounds), ``frozen_kernel`` (x-independent kernels),
``parametrix`` (the Levi construction), ``validator`` (property checks),
``mc_sim`` (SDE Monte Carlo) and ``cli_orchestrator`` (pipeline and CLI).
"""
from .frozen_kernel import SpaceTimeGrid
from .jump_kernel import (JumpKernel, constant_kernel, kappa_from_matrix, kernel_from_config,
                          reference_kernel, tanh_matrix_field)
from .parametrix import KernelField, build_field
from .rho_calculus import RhoProfile, rho

__version__ = "0.1.0"

__all__ = ["SpaceTimeGrid", "JumpKernel", "constant_kernel", "kappa_from_matrix",
           "kernel_from_config", "reference_kernel", "tanh_matrix_field", "KernelField",
           "build_field", "RhoProfile", "rho"]
