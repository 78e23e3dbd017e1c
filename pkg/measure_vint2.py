import numpy as np

from snls2d.grid import Grid2D
from snls2d.noise import build_bundle
from snls2d.solver import ModelParams
from snls2d.diagnostics import rate_study

grid = Grid2D(N=256, L=2.0)
params = ModelParams(lam=-1.0, sigma=0.4)

for k in (3, 5):
    b = build_bundle(grid, 5, 2.0 ** (-k))
    gx, gy = b.gradY
    sg = float(np.sqrt(gx.values**2 + gy.values**2).max())
    print(f"eps=2^-{k}: sup|gradY| = {sg:.3f}  sup|pot| = {np.abs(b.pot.values).max():.2f}")

for kf in (100.0, 140.0, 201.0):
    st = rate_study(grid, "dyadic_v", [1, 2, 3, 4], [5], gamma=1.2,
                    params=params, T=0.1, dt=2.5e-4, k_filter=kf)
    print(f"k_filter={kf:g}: incs = {['%.5g' % m for m in st.means]} "
          f"ratios = {['%.3g' % r for r in st.meta['ratios']]}")
