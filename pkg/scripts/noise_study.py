"""Noisy versus noiseless |g> echo on the blockade-restricted Rydberg model.

usage: python scripts/noise_study.py [n_trajectories] [seed]
"""
import sys
import time

import numpy as np

from rydscramble.analysis import velocity_from_grid
from rydscramble.experiment import EchoExperiment, run_otoc
from rydscramble.noise import NoiseModel, run_noisy_echo

m = int(sys.argv[1]) if len(sys.argv) > 1 else 300
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
exp = EchoExperiment(model="rydberg", basis="blockaded", initial="g")
clean = run_otoc(exp)
t0 = time.perf_counter()
res = run_noisy_echo(exp, NoiseModel(n_trajectories=m, master_seed=seed))
noisy = res.grid()
print(f"{m} trajectories in {time.perf_counter() - t0:.0f} s, discard rate {res.discard_rate:.3f}")
for name, g in (("noiseless", clean), ("noisy", noisy)):
    r = velocity_from_grid(g, "linear")
    print(f"{name:9s} v = {r.velocity:.3f} +- {r.velocity_stderr:.3f}  R2 {r.r_squared:.3f}  "
          f"peak C at site 7 {g.c_values[6].max():.3f}")
ratio = noisy.c_values[6].max() / clean.c_values[6].max()
print(f"contrast ratio at the addressed site: {ratio:.3f}; mean SE {np.mean(noisy.stderr):.4f}")
