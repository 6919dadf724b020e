"""
Learning from partially observed labels
=======================================

Untested analytes are coded -1. They drop out of the loss and receive no
gradient, so the network is only pushed on labels that were measured.
"""

import numpy as np

from ecglab.loss import build_mask, masked_bce, masked_bce_grad

Y = np.array([[1, -1, 0],
              [-1, -1, 1]])
logits = np.array([[2.0, -7.0, 0.5],
                   [9.0, 3.0, -1.0]])

M, Yp = build_mask(Y)
print("mask\n", M.astype(int))
print("loss:", masked_bce(logits, Y))

# any value in a masked slot leaves the loss unchanged
other = logits.copy()
other[Y == -1] = [100.0, -100.0, 0.0]
print("loss with masked slots scrambled:", masked_bce(other, Y))

# the gradient is zero where the label is missing
print("gradient\n", np.round(masked_bce_grad(logits, Y), 4))

# with nothing observed the loss is 0 rather than 0/0
print("all missing:", masked_bce(logits, -np.ones_like(Y)))
