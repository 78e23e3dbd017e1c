import time

import numpy as np

from snls2d.grid import Grid2D
from snls2d.solver import ModelParams
from snls2d.diagnostics import rate_study, global_budget_check

t0 = time.time()
grid = Grid2D(N=256, L=2.0)
params = ModelParams(lam=-1.0, sigma=0.4)
st = rate_study(
    grid, "dyadic_v", [1, 2, 3, 4], [5],
    gamma=1.2, params=params, T=0.1, dt=1e-3,
)
print("dyadic_v fixed-v0:")
print("  means =", ["%.4g" % m for m in st.means])
print("  ratios =", ["%.4g" % r for r in st.meta["ratios"]])
print("  kappa_hat =", "%.4g" % st.meta["kappa_hat"], " r2 =", "%.4g" % st.fit.r_squared)
print("  passed =", st.passed, " elapsed %.1fs" % (time.time() - t0))

t0 = time.time()
gb_grid = Grid2D(N=128, L=2.0)
eps = [2.0 ** (-k) for k in range(1, 5)]
for lam in (0.0, -1.0, 1.0):
    p = ModelParams(lam=lam, sigma=0.3)
    st = global_budget_check(gb_grid, eps, [3, 5, 7, 11], params=p, T=0.1, dt=2e-3)
    print(
        f"budget lam={lam:+.0f}: slope={st.fit.slope:.4f} r2={st.fit.r_squared:.4f} "
        f"passed={st.passed} scope={st.meta['theory_scope'][:9]}"
    )
print("budget elapsed %.1fs" % (time.time() - t0))
