import time

import numpy as np

from snls2d.grid import ComplexField, Grid2D
from snls2d.noise import build_bundle, build_mollifier, exp_Y, sample_white_noise
from snls2d.besov import norm, sobolev_request
from snls2d.solver import ModelParams, evolve, gaussian_packet, transform_to_u

grid = Grid2D(N=256, L=2.0)
params = ModelParams(lam=-1.0, sigma=0.4)
req = sobolev_request(1.2, 0.2 * params.delta0)
v0 = gaussian_packet(grid, width=0.5)
T = 0.1
xi = sample_white_noise(grid, 5).xi
ks = [1, 2, 3, 4, 5]

finals = {}
for dt in (2.5e-4, 6.25e-5, 1.5625e-5):
    t0 = time.time()
    vs = {}
    for k in ks:
        eps = 2.0 ** (-k)
        bundle = build_bundle(grid, 5, eps, mollifier=build_mollifier(grid, eps), xi=xi)
        u0 = transform_to_u(v0, bundle)
        traj = evolve(u0, bundle, params, T, dt, snapshot_every=10**9,
                      check_initial=False)
        vs[k] = traj.final.u.values * exp_Y(bundle.Y_eps, 1.0).values
    incs = [norm(ComplexField(grid, vs[k + 1] - vs[k]), req).value for k in ks[:-1]]
    finals[dt] = vs
    print(f"dt={dt:g}: incs(final-time) = {['%.4g' % v for v in incs]}"
          f"  ({time.time() - t0:.0f}s)")

# spectral profile of the finest-dt difference at the deepest pair
vs = finals[1.5625e-5]
diff = vs[5] - vs[4]
spec = np.fft.fft2(diff)
kx = np.fft.fftfreq(grid.N, d=1.0 / grid.N) * (np.pi / grid.L)
KX, KY = np.meshgrid(kx, kx, indexing="ij")
kk = np.sqrt(KX**2 + KY**2)
power = np.abs(spec) ** 2 * (1.0 + kk**2) ** 1.2
edges = [0, 25, 50, 100, 200, 400, 1e9]
tot = power.sum()
for lo, hi in zip(edges[:-1], edges[1:]):
    m = (kk >= lo) & (kk < hi)
    print(f"  H^1.2 mass in k=[{lo},{hi}): {power[m].sum() / tot:.4f}")
