"""Commutative POVMs as smearings of sharp observables: triplet reconstruction,
convolution kernels and continuity checks at desk scale."""
from .operators import (
    SpectralDecomposition,
    commutator_norm,
    operator_norm,
    spectral_decompose,
    validate_effect,
)
from .povm import (
    DiscretePOVM,
    DiscretePVM,
    MalformedPOVM,
    OutcomeGrid,
    RingSet,
    check_normalization,
    evaluate,
    integrate,
    is_commutative,
    is_pvm,
    povm_spectrum,
)
from .reconstruction import (
    Generator,
    JointEigenstructure,
    KernelMatrix,
    NonCommuting,
    VonNeumannTriplet,
    build_generator,
    build_triplet,
    cantor_encode,
    check_separation,
    extract_kernel,
    joint_diagonalize,
    smear,
)
from .kernels import (
    ConvolutionKernel,
    IntervalSet,
    KernelProfile,
    kernel_eval,
    kernel_row,
    lipschitz_scan,
    unsharp_position,
    weak_convergence_check,
)
from .analysis import (
    DominatingMeasure,
    KernelModel,
    PropertyReport,
    absolute_continuity_constant,
    dini_check,
    dyadic_family,
    halflines_family,
    norm1_check,
    sigma_additivity_check,
    strong_feller_check,
    uniform_continuity_check,
)
from .random_models import random_commuting_povm, random_pvm

__version__ = "0.1.0"
