# coding: utf-8

# # Two extensions: several priors, and binning
#
# Several denoisers can share one ADMM run, each with its own split
# variable and weight beta_j.  The result is the mean of the denoised
# iterates.

# In[1]:

from p4ip.denoisers import gaussian_filter_denoiser, nlm_denoiser
from p4ip.experiment import degrade
from p4ip.imaging import psnr, synthetic_image
from p4ip.solver import SolverParams, p4ip_multi_run, p4ip_run, restore_with_binning

peak = 1.0
reference, noisy = degrade(synthetic_image("shapes", 128), peak, "none", seed=21)
params = SolverParams.preset(peak)

single, _ = p4ip_run(noisy, None, nlm_denoiser(), params)
multi, report = p4ip_multi_run(noisy, None, [(nlm_denoiser(), 1.0), (gaussian_filter_denoiser(), 2.0)],
                               params)
print("NLM alone:        %.2f dB" % psnr(reference, single, peak))
print("NLM + Gaussian:   %.2f dB" % psnr(reference, multi, peak))
print("sigmas at k=0:", ["%.2f" % s for s in report.sigmas[0]])


# At extremely low counts, summing 3x3 blocks of photons raises the
# per-pixel intensity ninefold.  Restoration runs on the small image and the
# result is interpolated back, trading resolution for signal.

# In[2]:

peak = 0.2
reference, noisy = degrade(synthetic_image("shapes", 128), peak, "none", seed=22)
params = SolverParams.preset(peak)
plain, _ = p4ip_run(noisy, None, nlm_denoiser(), params)
binned, _ = restore_with_binning(noisy, nlm_denoiser(), params, factor=3)
print("noisy:   %.2f dB" % psnr(reference, noisy, peak))
print("plain:   %.2f dB" % psnr(reference, plain, peak))
print("binned:  %.2f dB" % psnr(reference, binned, peak))
