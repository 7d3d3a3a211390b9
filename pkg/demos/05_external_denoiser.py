# coding: utf-8

# # Plugging in an external denoiser
#
# Any program that reads a raster, a noise level and writes a raster can act
# as the prior.  `median_denoiser.py` in this directory is a tiny example; the
# `.ini` file next to it tells the bridge how to call it.

# In[1]:

from pathlib import Path

from p4ip.denoisers import denoiser_by_name
from p4ip.experiment import degrade
from p4ip.imaging import psnr, synthetic_image
from p4ip.solver import SolverParams, p4ip_run

here = Path(__file__).resolve().parent
median = denoiser_by_name(f"ext:{here / 'median_denoiser.ini'}")
print(median, median.command("in.rast", 0.5, "out.rast"))


# Each ADMM iteration now spawns one process, so keep the run short.

# In[2]:

peak = 4.0
reference, noisy = degrade(synthetic_image("disk", 64), peak, "none", seed=5)
out, report = p4ip_run(noisy, None, median, SolverParams.preset(peak, iters=15))
print("%.2f -> %.2f dB in %.1f s" % (psnr(reference, noisy, peak), psnr(reference, out, peak),
                                     report.wall_time))

# From the command line the same prior is `--denoiser ext:demos/median_denoiser.ini`.
