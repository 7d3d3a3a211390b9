"""Plug-and-play ADMM restoration for Poisson-noisy images.

Gaussian denoisers are coupled to the Poisson likelihood through ADMM
variable splitting; see :func:`p4ip_run` and :func:`p4ip_multi_run`.
"""

__version__ = "0.1.0"

from .anscombe import (VstPipelineConfig, anscombe_forward, anscombe_inverse_algebraic,
                       anscombe_inverse_unbiased, vst_restore)
from .denoisers import (Denoiser, DenoiserError, ExternalDenoiserSpec, denoiser_by_name,
                        external_denoiser, gaussian_filter_denoiser, nlm_denoiser,
                        tikhonov_prox_denoiser)
from .imaging import (bin_down, bin_up, load_image, load_pgm, load_raster, poisson_sample, psnr,
                      save_raster, scale_to_peak, synthetic_image)
from .likelihood import PoissonNll, nll_grad, nll_value, safe_log, safe_log_d1
from .operators import (LinearOperator, convolution, identity, kernel_by_name,
                        make_cauchy_kernel, make_gaussian_kernel, make_uniform_kernel)
from .optim import LbfgsConfig, minimize
from .solver import (RunReport, SolverError, SolverParams, p4ip_multi_run, p4ip_run,
                     restore_with_binning, transform_curve, x_update_denoise, x_update_general)
