"""PXP |g> velocity at N = 13 and 19 over the default window."""
from rydscramble.analysis import finite_size_check
from rydscramble.experiment import EchoExperiment

entries, spread = finite_size_check(EchoExperiment(initial="g"), [13, 19])
for e in entries:
    print(f"N={e.n_sites:2d}  v = {e.fit.velocity:.3f} +- {e.fit.velocity_stderr:.3f}  "
          f"R2 {e.fit.r_squared:.3f}  boundary reached: {e.boundary_reached}")
print(f"relative spread {spread:.3%}")
