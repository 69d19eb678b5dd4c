"""chs: a desk-scale lab for the stochastic Cahn-Hilliard equation with
stochastic dynamic boundary conditions.

Simulates the pathwise-transformed system on G = (0, pi), checks its
structural properties (mass conservation, cocycle identities, pullback
contraction, convolution regularity), and estimates Lyapunov spectra,
Kaplan-Yorke dimensions and the trace-based attractor-dimension bound with
its eps0 scaling law.
"""

from .grid import DomainSpec, NeumannOperator, SpectralBasis, eigenvalue, r_eps
from .noise import (
    ConvolutionState,
    CovarianceSpec,
    NoisePath,
    conv_step,
    holder_exponent,
    sample_path,
    shift,
    stationary_init,
)
from .dynamics import (
    BlowUpError,
    DiscreteOperators,
    ModelParams,
    Nonlinearity,
    SystemState,
    assemble,
    default_initial_pair,
    double_well,
    energy,
    leps_norm,
    normal_derivative,
    recover_physical,
    solve_flow,
    state_distance,
    step,
    transform_physical,
)
from ._kernels import BACKEND, available_backends

__version__ = "0.1.0"
