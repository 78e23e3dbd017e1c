import time

import numpy as np

from snls2d.grid import Grid2D
from snls2d.noise import build_bundle
from snls2d.solver import ModelParams, evolve_transformed, gaussian_packet, transform_to_u

grid = Grid2D(N=1024, L=2.0)
params = ModelParams(lam=-1.0, sigma=0.4)

t0 = time.time()
b = build_bundle(grid, 5, 2.0 ** (-7))
gx, gy = b.gradY
sg = float(np.sqrt(gx.values**2 + gy.values**2).max())
sp = float(np.abs(b.pot.values).max())
print(f"bundle build: {time.time() - t0:.1f}s; sup|gradY|={sg:.3f} sup|pot|={sp:.1f}")
kf = 0.5 * np.pi * grid.N / (2.0 * grid.L)
rot = 2.0 * sg * kf + sp
print(f"k_filter={kf:.1f} rot={rot:.0f} dt_stab={2.7 / rot:.2e} dt_acc~{0.7 / rot:.2e}")

v0 = gaussian_packet(grid, width=0.5)
u0 = transform_to_u(v0, b)
t0 = time.time()
traj = evolve_transformed(u0, b, params, 0.01, 2e-4, snapshot_every=10**9,
                          check_initial=False)
el = time.time() - t0
print(f"50 steps at N=1024: {el:.1f}s -> {el / 50 * 1000:.0f} ms/step; "
      f"2500-step run ~ {el / 50 * 2500 / 60:.1f} min")
