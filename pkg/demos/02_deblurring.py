# coding: utf-8

# # Deblurring under Poisson noise
#
# With a blur operator H the x-step no longer has a closed form.  It becomes
# a smooth convex problem solved by L-BFGS, warm-started from the previous x.
# Pixels where no photon arrived make the likelihood unbounded below, so the
# solve is kept on x >= 0.

# In[1]:

from p4ip.denoisers import nlm_denoiser
from p4ip.experiment import degrade
from p4ip.imaging import psnr, synthetic_image
from p4ip.operators import convolution
from p4ip.solver import SolverParams, p4ip_run

peak = 2.0
reference, blurred = degrade(synthetic_image("shapes", 128), peak, "gaussian25", seed=12)
H = convolution("gaussian25", shape=blurred.shape)
print("blurred + noisy: %.2f dB" % psnr(reference, blurred, peak))


# In[2]:

params = SolverParams.preset(peak, deblurring=True)
restored, report = p4ip_run(blurred, H, nlm_denoiser(), params)
print("restored:        %.2f dB" % psnr(reference, restored, peak))
print("L-BFGS iterations per outer step:", report.inner_iterations[:10], "...")


# The other two kernels used in the benchmarks work the same way:

# In[3]:

for name in ("cauchy15", "uniform9"):
    ref, y = degrade(synthetic_image("shapes", 128), peak, name, seed=13)
    out, _ = p4ip_run(y, convolution(name), nlm_denoiser(), SolverParams.preset(peak, deblurring=True))
    print("%-9s %.2f -> %.2f dB" % (name, psnr(ref, y, peak), psnr(ref, out, peak)))
