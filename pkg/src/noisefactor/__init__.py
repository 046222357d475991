"""Diffusion sampling with per-component prompt conditioning.

Split an image into linear components that sum back to the original
(frequency bands, gray/color, kernel blur, spatial masks, scalar weights),
condition each component's noise estimate on its own prompt, and denoise
with the recombined estimate. An inverse mode pins a component to a real
image; an analytic Gaussian-mixture oracle stands in for a learned model so
the whole loop is verifiable.
"""

__version__ = "0.1.0"

from .decomp import (
    Component,
    Decomposition,
    convolve2d,
    decomposition_from_config,
    diagonal_kernel,
    gaussian_blur,
    gaussian_kernel,
    make_gray_color,
    make_hybrid,
    make_motion,
    make_scaling,
    make_spatial,
    make_triple,
    scaled_sigma,
)
from .oracle import Mixture, OraclePredictor, mixtures_from_config, posterior_x0, predict_noise, sample_data
from .remote import ProtocolError, RemoteClient, RemoteEndpoint, RemoteError, ServerError
from .sampler import (
    Condition,
    NoisePredictor,
    PredictorError,
    SamplerConfig,
    composite_noise,
    ddim_coefficients,
    ddim_update,
    ddpm_update,
    project_component,
    sample_factorized,
    sample_inverse,
)
from .schedule import Schedule
from .sweep import SweepReport, blur_sweep, sweep_factors
from .tensor import load_image, resample, save_image

__all__ = [
    "__version__",
    "Component",
    "Decomposition",
    "convolve2d",
    "decomposition_from_config",
    "diagonal_kernel",
    "gaussian_blur",
    "gaussian_kernel",
    "make_gray_color",
    "make_hybrid",
    "make_motion",
    "make_scaling",
    "make_spatial",
    "make_triple",
    "scaled_sigma",
    "Mixture",
    "OraclePredictor",
    "mixtures_from_config",
    "posterior_x0",
    "predict_noise",
    "sample_data",
    "ProtocolError",
    "RemoteClient",
    "RemoteEndpoint",
    "RemoteError",
    "ServerError",
    "Condition",
    "NoisePredictor",
    "PredictorError",
    "SamplerConfig",
    "composite_noise",
    "ddim_coefficients",
    "ddim_update",
    "ddpm_update",
    "project_component",
    "sample_factorized",
    "sample_inverse",
    "Schedule",
    "SweepReport",
    "blur_sweep",
    "sweep_factors",
    "load_image",
    "resample",
    "save_image",
]
