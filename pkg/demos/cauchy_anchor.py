"""Constant coefficient at alpha = 1: the assembled kernel against the Cauchy law."""
import math

import numpy as np

from levikernel import SpaceTimeGrid, build_field, constant_kernel

fld, _ = build_field(constant_kernel(1.0, 1.0), SpaceTimeGrid())
g = fld.grid
w = g.x[:, None] - g.x[None, :]
near = np.abs(w) <= 8
for t in (1 / 16, 1 / 8, 1 / 4, 1 / 2):
    exact = t / ((math.pi * t) ** 2 + w ** 2)
    err = np.max(np.abs(fld.at(t) / exact - 1)[near])
    print(f"t={t:<6g} max relative error {err:.2e}")
