# coding: utf-8

# # The x-step as a variance-stabilising transform
#
# For denoising, the x-update maps each noisy count y to
# ((lam (v-u) - 1) + sqrt((lam (v-u) - 1)^2 + 4 lam y)) / (2 lam).
# At lam = 1/4 and a particular value of v - u this is the Anscombe transform
# shifted by a constant; other values of v - u bend the curve, so the
# transform adapts to the current estimate of the pixel.

# In[1]:

import numpy as np

from p4ip.anscombe import anscombe_forward
from p4ip.solver import ANSCOMBE_LAMBDA, anscombe_matching_offset, transform_curve

y = np.arange(0, 20.01, 0.5)
offset = anscombe_matching_offset()
print("matching v - u = %.6f" % offset)
gap = transform_curve(ANSCOMBE_LAMBDA, offset, y) - anscombe_forward(y)
print("curve - anscombe: min %.15f  max %.15f" % (gap.min(), gap.max()))
print("2 sqrt(3/8)      = %.15f" % (2 * np.sqrt(3 / 8)))


# Larger v - u lifts the curve and makes it flatter in y, i.e. a bright
# estimate trusts the prior more relative to the count.

# In[2]:

for extra in (0, 3, 6, 9):
    c = transform_curve(ANSCOMBE_LAMBDA, offset + extra, y)
    print("v-u = %6.3f   x(0) = %6.3f   x(20) = %6.3f" % (offset + extra, c[0], c[-1]))

# The same table, as CSV, comes from the command line:
#
#     p4ip curve --y-max 20 --step 0.1 --out curve.csv
