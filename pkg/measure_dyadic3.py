import time

from snls2d.grid import Grid2D
from snls2d.solver import ModelParams
from snls2d.diagnostics import rate_study

params = ModelParams(lam=-1.0, sigma=0.4)
for N, dt in ((256, 1e-3), (256, 2.5e-4), (512, 1e-3)):
    t0 = time.time()
    grid = Grid2D(N=N, L=2.0)
    st = rate_study(
        grid, "dyadic_v", [1, 2, 3, 4], [5],
        gamma=1.2, params=params, T=0.1, dt=dt,
    )
    print(
        f"N={N} dt={dt:g}: means={['%.4g' % m for m in st.means]} "
        f"ratios={['%.3g' % r for r in st.meta['ratios']]} "
        f"({time.time() - t0:.0f}s)"
    )
