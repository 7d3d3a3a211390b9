#!/usr/bin/env python3
"""usage: median_denoiser.py INPUT SIGMA OUTPUT

Median filter whose window grows with the noise level."""
import sys

from scipy import ndimage

from p4ip.imaging import load_raster, save_raster

src, sigma, dst = sys.argv[1], float(sys.argv[2]), sys.argv[3]
size = 1 + 2 * min(3, int(round(sigma / 2)))
save_raster(ndimage.median_filter(load_raster(src), size=size, mode="reflect"), dst)
