"""Markov-modulated affine processes.

Transforms via generalized Riccati systems coupled to a Cauchy problem in the
modulating process, joint path simulation from semimartingale
characteristics, and Fourier-inversion pricing.
"""

from .params import (
    StateSpaceShape,
    TruncationFunction,
    DEFAULT_CHI,
    ComplexDomainPoint,
    XAdmissibleParams,
    AffineField,
    PerStateField,
    PerStateKernel,
    ValidationReport,
    StructuralError,
    validate_params,
    eval_F,
    eval_R,
)
from .kernels import (
    JumpKernel,
    EmptyKernel,
    DiracMixtureKernel,
    UnivariateDensityKernel,
    CGMYKernel,
    SumKernel,
    MomentConditionError,
    SamplerUnavailableError,
)

__version__ = "0.1.0"
