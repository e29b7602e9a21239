"""Single-particle gaps of a small Fermi-Hubbard lattice, read off a ground-state correlator.

The default 1x3 lattice (6 modes, d = 64) runs in about a second. Pass
``--Lx 2 --Ly 3`` for the 12-mode lattice (d = 4096). That needs a few
minutes and about 2 GB.

The observable is A = B = (c_0 + c_0^dag)/2, whose ground-state correlator
only oscillates at energies E_m - E_0 of states reachable by adding or
removing one fermion. MUSIC should find those gaps and nothing else.

    python3 demos/ground_spectrum_fermi_hubbard.py --h-U 6
"""
import argparse
import time

import numpy as np

from tqsim.greens import delta_from_music_frequency, lehmann_exact
from tqsim.models import FHParams, build_fermi_hubbard, rescale_to_norm
from tqsim.music import frequency_grid, music
from tqsim.operators import majorana_parts
from tqsim.states import eigendecompose_with_parity
from tqsim.tqs import ground_manifold, ground_state_correlator

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--Lx", type=int, default=1)
parser.add_argument("--Ly", type=int, default=3)
parser.add_argument("--h-U", type=float, default=6.0, dest="h_U")
parser.add_argument("--t-max", type=float, default=200 * np.pi)
parser.add_argument("--noise", type=float, default=0.0, help="relative Gaussian noise on the samples")
args = parser.parse_args()

t0 = time.perf_counter()
dt = np.pi / 20
times = dt * np.arange(1, int(round(args.t_max / dt)) + 1)

# scale H to spectral norm pi so every gap lies inside the MUSIC window
lh = rescale_to_norm(build_fermi_hubbard(FHParams(args.Lx, args.Ly, args.h_U)), np.pi)
es = eigendecompose_with_parity(lh.H, lh.P)
level, parity, E0 = ground_manifold(es, degenerate="manifold")
print(f"{lh.name}: d = {lh.dim}, H scaled by {lh.gamma:.4f}")
print(f"ground level: E0 = {E0:.6f}, {len(level)}-fold, parity {parity:+d}")

A = majorana_parts(0, lh.n_sites)[0]
series = ground_state_correlator(es, lh.P, A, A, times, degenerate="manifold")
values = series.values
if args.noise:
    rng = np.random.default_rng(0)
    values = values + args.noise * (rng.normal(size=len(values)) + 1j * rng.normal(size=len(values))) / np.sqrt(2)

# --- exact gaps with their weights ------------------------------------------
w0 = np.zeros(es.dim)
w0[level] = 1.0 / len(level)
exact = lehmann_exact(es, w0, A, A, merge_tol=1e-8).significant(1e-10)
print(f"{len(exact)} gaps carry weight; total weight {exact.weights.sum().real:.4f} (= <A^2> = 1/4)")

# --- MUSIC ----------------------------------------------------------------------
res = music(values, threshold=1.0, omegas=frequency_grid())
est = res.estimates
# shallow minima are ripples of the background; only deep ones count as lines
deep = est.R_values < np.median(res.R) / 2
found = delta_from_music_frequency(est.frequencies[deep], dt)
R_found = est.R_values[deep]
print(f"MUSIC: rank {res.noise.retained_rank}, {len(found)} deep minima")

tol = 2 * np.pi / times[-1]
print(f"\n{'gap':>9s} {'weight':>9s} {'MUSIC':>9s} {'R':>9s}   (tolerance {tol:.4f})")
matched = 0
for d, w in zip(exact.deltas, exact.weights.real):
    k = np.argmin(np.abs(found - d)) if len(found) else None
    ok = k is not None and abs(found[k] - d) <= tol
    matched += ok
    if ok:
        print(f"{d:9.4f} {w:9.2e} {found[k]:9.4f} {R_found[k]:9.2e}")
    else:
        print(f"{d:9.4f} {w:9.2e} {'-':>9s} {'-':>9s}   missed")
spurious = [f for f in found if np.min(np.abs(exact.deltas - f)) > tol]
print(f"\nmatched {matched}/{len(exact)} gaps, {len(spurious)} spurious deep minima")
print(f"elapsed {time.perf_counter() - t0:.1f} s")
