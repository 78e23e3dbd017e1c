import time

import numpy as np

from snls2d.grid import Grid2D
from snls2d.noise import build_bundle, exp_Y
from snls2d.besov import norm, sobolev_request
from snls2d.solver import ModelParams, evolve, gaussian_packet, transform_to_u
from snls2d.grid import ComplexField

grid = Grid2D(N=512, L=2.0)
params = ModelParams(lam=-1.0, sigma=0.4)
req = sobolev_request(1.2, 0.2 * params.delta0)
v0 = gaussian_packet(grid, width=0.5)
T = 0.1

for k in (3, 5):
    eps = 2.0 ** (-k)
    bundle = build_bundle(grid, 5, eps)
    u0 = transform_to_u(v0, bundle)
    ey = exp_Y(bundle.Y_eps, 1.0).values
    vts = {}
    for dt in (1e-3, 2.5e-4, 6.25e-5, 1.5625e-5):
        t0 = time.time()
        traj = evolve(u0, bundle, params, T, dt, snapshot_every=10**9,
                      check_initial=False)
        vts[dt] = traj.final.u.values * ey
        el = time.time() - t0
    ref = vts[1.5625e-5]
    base = norm(ComplexField(grid, ref), req).value
    for dt in (1e-3, 2.5e-4, 6.25e-5):
        d = norm(ComplexField(grid, vts[dt] - ref), req).value
        print(f"k={k} dt={dt:g}: |v_dt - v_ref|_H1.2 = {d:.4g}  (ref norm {base:.4g})")
