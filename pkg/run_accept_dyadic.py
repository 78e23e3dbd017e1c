import json
import time

from snls2d.grid import Grid2D
from snls2d.solver import ModelParams
from snls2d.diagnostics import rate_study

t0 = time.time()
grid = Grid2D(N=1024, L=2.0)
params = ModelParams(lam=-1.0, sigma=0.4)
st = rate_study(
    grid, "dyadic_v", [3, 4, 5, 6], [5],
    gamma=1.2, params=params, T=0.5, dt=1e-4, precision="single",
)
out = {
    "means": list(st.means),
    "ratios": st.meta["ratios"],
    "kappa_hat": st.meta["kappa_hat"],
    "r_squared": st.fit.r_squared,
    "passed": st.passed,
    "seconds": time.time() - t0,
}
with open("/root/pkg/accept_dyadic.json", "w") as fh:
    json.dump(out, fh, indent=1)
print(out)
