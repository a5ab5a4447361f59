"""Fitted velocities for |g> and Z2 under the PXP and full Rydberg models, N=13.

usage: python scripts/velocity_table.py [--pxp-only]
"""
import argparse

from rydscramble.analysis import FitError, velocity_from_grid
from rydscramble.experiment import EchoExperiment, run_otoc

ap = argparse.ArgumentParser()
ap.add_argument("--pxp-only", action="store_true")
ap.add_argument("--n-sites", type=int, default=13)
args = ap.parse_args()

models = ["pxp"] if args.pxp_only else ["pxp", "rydberg"]
print(f"{'model':8s} {'state':5s} {'subtract':8s} {'shape':6s} {'v':>7s} {'se':>6s} {'R2':>6s} {'alpha':>6s}")
for model in models:
    for init in ("g", "Z2"):
        n = args.n_sites
        grid = run_otoc(EchoExperiment(n_sites=n, operator_site=(n + 1) // 2, model=model, initial=init))
        for sub in (False, True):
            for shape in ("linear", "log", "power"):
                try:
                    r = velocity_from_grid(grid, shape, subtract=sub)
                except FitError as exc:
                    print(model, init, sub, shape, "fit failed:", exc)
                    continue
                a = "" if r.exponent is None else f"{r.exponent:6.3f}"
                print(f"{model:8s} {init:5s} {str(sub):8s} {shape:6s} {r.velocity:7.3f} "
                      f"{r.velocity_stderr:6.3f} {r.r_squared:6.3f} {a:>6s}")
