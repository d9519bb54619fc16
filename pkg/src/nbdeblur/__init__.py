"""Deblurring of photon-count images under overdispersed (negative binomial)
noise, via ADMM with a weighted anisotropic-isotropic TV penalty."""

__version__ = "0.1.0"

from .admm import (
    AdmmState,
    DivergenceError,
    HistoryRecord,
    MODEL_NB,
    MODEL_POISSON,
    RecoveryResult,
    SolverConfig,
    aitv_value,
    objective_value,
    run_admm,
)
from .grids import (
    CountGrid,
    ImageGrid,
    load_counts,
    load_image,
    save_counts,
    save_image,
)
from .metrics import SsimParams, psnr, ssim
from .noise import (
    NbModelParams,
    NbObservation,
    POISSON,
    nb_neg_log_likelihood,
    nb_sample,
    poisson_neg_log_likelihood,
    poisson_sample,
    simulate_observation,
)
from .operators import (
    BlurKernel,
    SpectralOperator,
    diff_spectra,
    gaussian_kernel,
    spectral_of_kernel,
)
from .phantom import make_phantom
from .prox import (
    CubicCoefficients,
    nb_fidelity_prox,
    poisson_fidelity_prox,
    prox_l1_minus_alpha_l2,
    solve_cubic,
)

__all__ = [
    "AdmmState",
    "BlurKernel",
    "CountGrid",
    "CubicCoefficients",
    "DivergenceError",
    "HistoryRecord",
    "ImageGrid",
    "MODEL_NB",
    "MODEL_POISSON",
    "NbModelParams",
    "NbObservation",
    "POISSON",
    "RecoveryResult",
    "SolverConfig",
    "SpectralOperator",
    "SsimParams",
    "aitv_value",
    "diff_spectra",
    "gaussian_kernel",
    "load_counts",
    "load_image",
    "make_phantom",
    "nb_fidelity_prox",
    "nb_neg_log_likelihood",
    "nb_sample",
    "objective_value",
    "poisson_fidelity_prox",
    "poisson_neg_log_likelihood",
    "poisson_sample",
    "prox_l1_minus_alpha_l2",
    "psnr",
    "run_admm",
    "save_counts",
    "save_image",
    "simulate_observation",
    "solve_cubic",
    "spectral_of_kernel",
    "ssim",
]
