import time

import numpy as np

from snls2d.grid import ComplexField, Grid2D
from snls2d.noise import build_bundle, exp_Y
from snls2d.besov import norm, sobolev_request
from snls2d.solver import (
    ModelParams, evolve, evolve_transformed, gaussian_packet, transform_to_u,
)

grid = Grid2D(N=256, L=2.0)
params = ModelParams(lam=-1.0, sigma=0.4)
req = sobolev_request(1.2, 0.2 * params.delta0)
v0 = gaussian_packet(grid, width=0.5)
T = 0.1

# A: agreement with the dt-converged split-step run at eps = 2^-3
bundle = build_bundle(grid, 5, 2.0 ** (-3))
u0 = transform_to_u(v0, bundle)
ey = exp_Y(bundle.Y_eps, 1.0).values
ref = evolve(u0, bundle, params, T, 1.5625e-5, snapshot_every=10**9,
             check_initial=False).final.u.values * ey
refn = norm(ComplexField(grid, ref), req).value
for dt in (1e-3, 5e-4):
    t0 = time.time()
    vt = evolve_transformed(u0, bundle, params, T, dt, snapshot_every=10**9,
                            check_initial=False).final.u.values * ey
    d = norm(ComplexField(grid, vt - ref), req).value
    print(f"A: dt={dt:g} |v - v_ref|_H1.2 = {d:.4g} (rel {d / refn:.2e}, "
          f"{time.time() - t0:.1f}s)")

# B: self-convergence order at eps = 2^-5 (deep level, the hard case)
bundle5 = build_bundle(grid, 5, 2.0 ** (-5))
u05 = transform_to_u(v0, bundle5)
ey5 = exp_Y(bundle5.Y_eps, 1.0).values
outs = {}
for dt in (1e-3, 5e-4, 2.5e-4, 1.25e-4):
    outs[dt] = evolve_transformed(u05, bundle5, params, T, dt,
                                  snapshot_every=10**9,
                                  check_initial=False).final.u.values * ey5
e1 = norm(ComplexField(grid, outs[1e-3] - outs[1.25e-4]), req).value
e2 = norm(ComplexField(grid, outs[5e-4] - outs[1.25e-4]), req).value
e3 = norm(ComplexField(grid, outs[2.5e-4] - outs[1.25e-4]), req).value
print(f"B: errors vs finest: {e1:.4g} {e2:.4g} {e3:.4g}; "
      f"ratios {e1 / e2:.2f} {e2 / e3:.2f} (order-4 would be ~16)")

# C: weighted-mass drift over the run at eps = 2^-5
e2m = exp_Y(bundle5.Y_eps, -2.0).values
traj = evolve_transformed(u05, bundle5, params, T, 1e-3, snapshot_every=10,
                          check_initial=False)
masses = [
    float(grid.h**2 * ((st.u.values.real**2 + st.u.values.imag**2)).sum())
    for st in traj.states
]
print(f"C: u-mass drift rel = {abs(masses[-1] - masses[0]) / masses[0]:.3e}")

# D: filter insensitivity at the deepest resolvable pair
from snls2d.diagnostics import rate_study

for kf in (100.0, 140.0, 201.0):
    st = rate_study(grid, "dyadic_v", [3, 4], [5], gamma=1.2, params=params,
                    T=T, dt=5e-4, k_filter=kf)
    print(f"D: k_filter={kf:g}: incs = {['%.5g' % m for m in st.means]}")
