from snls2d.grid import Grid2D
from snls2d.solver import ModelParams
from snls2d.diagnostics import rate_study

grid = Grid2D(N=256, L=2.0)
params = ModelParams(lam=-1.0, sigma=0.4)
for dt in (1e-3, 5e-4, 2.5e-4):
    st = rate_study(grid, "dyadic_v", [1, 2, 3, 4], [5], gamma=1.2,
                    params=params, T=0.1, dt=dt, k_filter=100.0)
    print(f"dt={dt:g}: incs = {['%.5g' % m for m in st.means]}")
