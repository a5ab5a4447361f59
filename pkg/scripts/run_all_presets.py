"""Run every named preset into OUT/<preset>/ (default OUT=out)."""
import sys
import time
from dataclasses import replace
from pathlib import Path

from rydscramble.cli import run
from rydscramble.config import PRESETS, preset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "out")
names = sys.argv[2:] or list(PRESETS)
for name in names:
    t0 = time.perf_counter()
    cfg = replace(preset(name), output_dir=str(out / name))
    man = run(cfg)
    print(f"{name:10s} {time.perf_counter() - t0:7.1f} s  {man['summary']}")
