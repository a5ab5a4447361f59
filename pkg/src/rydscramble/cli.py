"""Command-line driver.

    rydscramble run CONFIG.yaml [--seed N] [--threads N] [--out-dir DIR]
    rydscramble preset NAME [--emit-config] [--seed N] [--threads N] [--out-dir DIR]

Exit codes: 0 success, 1 runtime error, 2 invalid configuration.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
import traceback
from dataclasses import replace
from pathlib import Path

THREADS_ENV = "RYDSCRAMBLE_THREADS"

log = logging.getLogger("rydscramble")


def _set_threads(n: int | None):
    """BLAS thread count; must run before numpy is first imported."""
    n = n or (int(os.environ[THREADS_ENV]) if os.environ.get(THREADS_ENV) else None)
    if not n:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)


def code_version() -> str:
    from . import __version__

    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"], cwd=Path(__file__).parent,
            capture_output=True, text=True, timeout=5,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        rev = ""
    return f"{__version__}+{rev}" if rev else __version__


# --------------------------------------------------------------------------
# config -> library objects


def to_experiment(cfg):
    from .evolution import Propagator
    from .experiment import EchoExperiment

    basis = cfg.model.basis
    if basis is None and cfg.noise is not None and cfg.model.kind == "rydberg":
        # trajectory runs use the Rydberg model restricted to the blockaded sector
        basis = "blockaded"
    p = cfg.propagator
    return EchoExperiment(
        n_sites=cfg.geometry.n_sites,
        model=cfg.model.kind,
        initial=cfg.echo.initial,
        operator=cfg.echo.operator,
        operator_site=cfg.echo.operator_site,
        rabi_mhz=cfg.drive.rabi_mhz,
        detuning_mhz=cfg.drive.detuning_mhz,
        compensation=cfg.model.compensation,
        spacing_um=cfg.geometry.spacing_um,
        v_nn_mhz=cfg.interaction.v_nn_mhz,
        max_range=cfg.interaction.max_range,
        ac_stark_mhz=None if cfg.drive.ac_stark_mhz is None else tuple(cfg.drive.ac_stark_mhz),
        basis=basis,
        t_start_us=cfg.time.start_us,
        t_stop_us=cfg.time.stop_us,
        t_step_us=cfg.time.step_us,
        combine_neel=cfg.echo.combine_neel,
        reversal=cfg.model.reversal,
        propagator=Propagator(p.method, p.tolerance, p.krylov_dim, p.step_us, p.dense_max_dim),
    )


def to_noise(cfg):
    from .noise import NoiseModel, PreparationMixture

    if cfg.noise is None:
        return None, None
    n = cfg.noise
    model = NoiseModel(
        n.position_sigma_fraction, n.doppler_sigma_khz, n.depolarization_khz, n.dephasing_khz,
        n.n_trajectories, cfg.master_seed, n.depolarization_kind,
        None if n.doppler_site_multiplier is None else tuple(n.doppler_site_multiplier),
        n.imprint_angle_sigma,
    )
    mix = PreparationMixture(tuple((m.config, m.probability) for m in cfg.mixture))
    return model, mix


# --------------------------------------------------------------------------
# experiment kinds; each returns (summary dict, list of written files)


def _write_json(path: Path, obj) -> Path:
    path.write_text(json.dumps(obj, indent=1, default=_json_default))
    return path


def _json_default(o):
    import numpy as np

    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if hasattr(o, "value"):
        return o.value
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _fits(grid, cfg, out: Path, written: list, summary: dict, tag=""):
    from .analysis import FitError, velocity_from_grid

    a = cfg.analysis
    for shape in a.shapes:
        try:
            rep = velocity_from_grid(grid, shape, tuple(a.window), a.subtract_background,
                                     a.reference_sites, a.snr_floor)
        except FitError as exc:
            summary[f"fit{tag}_{shape}"] = f"failed: {exc}"
            continue
        written.append(_write_json(out / f"fit{tag}_{shape}.json", rep.to_dict()))
        summary[f"velocity{tag}_{shape}"] = rep.velocity
        summary[f"r_squared{tag}_{shape}"] = rep.r_squared


def _run_basis(cfg, out):
    from .lattice import build_basis

    exp = to_experiment(cfg)
    b = build_basis(cfg.geometry.n_sites, exp.basis_kind())
    summary = {"n_sites": b.n_sites, "kind": b.kind.value, "dimension": b.dim}
    print(f"dimension: {b.dim}")
    return summary, [_write_json(out / "basis.json", summary)]


def _run_evolve(cfg, out):
    import numpy as np

    from .evolution import densities
    from .experiment import run_forward
    from .otoc import write_grid_csv

    exp = to_experiment(cfg)
    times, amps, basis = run_forward(exp)
    i0 = basis.index_of(exp.initial_config())
    fid = np.abs(amps[:, i0]) ** 2
    files = [write_grid_csv(out / "density.csv", times, densities(basis, amps).T)]
    files.append(write_grid_csv(out / "fidelity.csv", times, fid[None, :], ["0"], label="row"))
    return {"final_fidelity": float(fid[-1])}, files


def _run_echo(cfg, out):
    import numpy as np

    from .experiment import run_otoc
    from .otoc import write_grid_csv, write_grid_json

    exp = to_experiment(cfg)
    model, mix = to_noise(cfg)
    if model is None:
        grid = run_otoc(exp)
    else:
        from .noise import noisy_otoc

        grid = noisy_otoc(exp, model, mix)
    files = [write_grid_csv(out / "c_grid.csv", grid.times_us, grid.c_values)]
    if grid.f_values is not None:
        files.append(write_grid_csv(out / "f_grid.csv", grid.times_us, grid.f_values))
    if grid.stderr is not None:
        files.append(write_grid_csv(out / "c_stderr.csv", grid.times_us, grid.stderr))
    files.append(write_grid_json(out / "otoc.json", grid))
    summary = {"c_max": float(np.max(grid.c_values))}
    if "discard_rate" in grid.meta:
        summary["discard_rate"] = grid.meta["discard_rate"]
    _fits(grid, cfg, out, files, summary)
    return summary, files


def _run_forward(cfg, out):
    from .evolution import apply_operator, densities, forward_scan
    from .experiment import run_forward
    from .lattice import StateVector, product_state
    from .otoc import OTOCGrid, density_difference, domain_wall_correlator, write_grid_csv

    exp = to_experiment(cfg)
    times, amps, basis = run_forward(exp)
    dens = densities(basis, amps).T
    files = [write_grid_csv(out / "density.csv", times, dens)]
    files.append(write_grid_csv(out / "domain_wall.csv", times, domain_wall_correlator(basis, amps),
                                label="bond"))
    summary = {}
    site = cfg.forward.compare_flip_site
    if site is not None:
        _, hf, _ = exp.hamiltonians()
        psi = product_state(basis, exp.initial_config())
        flipped = StateVector(basis, apply_operator(basis, psi.amplitudes, "sigma_x", site))
        amps_b = forward_scan(flipped, hf, times, exp.propagator)
        chi = density_difference(densities(basis, amps_b).T, dens)
        files.append(write_grid_csv(out / "chi.csv", times, chi))
        files.append(write_grid_csv(out / "domain_wall_flipped.csv", times,
                                    domain_wall_correlator(basis, amps_b), label="bond"))
        grid = OTOCGrid(times, chi, rabi_mhz=exp.rabi_mhz, addressed_site=site)
        cfg2 = replace(cfg, analysis=replace(cfg.analysis, subtract_background=False))
        _fits(grid, cfg2, out, files, summary, tag="_chi")
    return summary, files


def _run_compensation(cfg, out):
    from .analysis import optimize_compensation

    exp = to_experiment(cfg)
    c = cfg.compensation_scan
    summary, files = {}, []
    for init in c.initials:
        rep = optimize_compensation(replace(exp, initial=init), c.detunings_mhz, c.window_us)
        lines = ["detuning_mhz,distance"] + [f"{d:.9g},{x:.9g}" for d, x in zip(rep.detunings_mhz, rep.distances)]
        p = out / f"compensation_{init}.csv"
        p.write_text("\n".join(lines) + "\n")
        files.append(p)
        summary[f"best_detuning_mhz_{init}"] = rep.best_detuning_mhz
    return summary, files


def _run_fit(cfg, out):
    from .otoc import OTOCGrid, read_grid_csv

    times, _, vals = read_grid_csv(cfg.fit.input)
    site = cfg.fit.addressed_site or cfg.echo.operator_site
    grid = OTOCGrid(times, vals, rabi_mhz=cfg.drive.rabi_mhz, addressed_site=site)
    summary, files = {}, []
    _fits(grid, cfg, out, files, summary)
    return summary, files


def _run_spectrum(cfg, out):
    import numpy as np

    from .lattice import product_state
    from .scars import eigenstate_velocities, spectrum_overlap
    from .experiment import resolve_initial

    exp = to_experiment(cfg)
    basis, h, _ = exp.hamiltonians()
    ref = product_state(basis, resolve_initial(cfg.spectrum.reference, exp.n_sites))
    rep = spectrum_overlap(h, ref, exp.rabi_mhz, cfg.spectrum.n_towers)
    lines = ["index,energy_rad_per_us,overlap,scar"]
    vel = None
    if cfg.spectrum.eigenstate_velocities:
        vel = [p.velocity for p in eigenstate_velocities(exp, rep, window=tuple(cfg.analysis.window))]
        lines[0] += ",velocity"
    for n, (e, o, f) in enumerate(zip(rep.energies, rep.overlaps, rep.scar_flags)):
        row = f"{n},{e:.9g},{o:.9g},{int(f)}"
        if vel is not None:
            row += f",{vel[n]:.9g}"
        lines.append(row)
    p = out / "spectrum.csv"
    p.write_text("\n".join(lines) + "\n")
    summary = {"n_scars": int(rep.scar_flags.sum()), "dimension": int(h.dim)}
    if vel is not None:
        v = np.asarray(vel)
        summary["mean_velocity_scar"] = float(np.nanmean(v[rep.scar_flags]))
        summary["mean_velocity_bulk"] = float(np.nanmean(v[~rep.scar_flags]))
    return summary, [p]


def _run_scatter(cfg, out):
    from .scars import blockaded_product_states, spectrum_for, velocity_scatter

    exp = to_experiment(cfg)
    states = cfg.scatter.states or [str(s) for s in blockaded_product_states(exp.n_sites)]
    rep = spectrum_for(exp, cfg.spectrum.reference)
    pts = velocity_scatter(states, exp, rep, tuple(cfg.analysis.window))
    lines = ["state,scar_weight,velocity"] + [f"{p.label},{p.scar_weight:.9g},{p.velocity:.9g}" for p in pts]
    p = out / "scatter.csv"
    p.write_text("\n".join(lines) + "\n")
    return {"n_states": len(pts)}, [p]


def _run_cluster(cfg, out):
    from dataclasses import asdict

    from .otoc import write_grid_csv
    from .scars import cluster_freezing

    exp = to_experiment(cfg)
    grid, rep = cluster_freezing(exp.initial, exp, cfg.cluster.perturbation_site,
                                 reversal=cfg.cluster.reversal)
    files = [write_grid_csv(out / "c_grid.csv", grid.times_us, grid.c_values)]
    d = {**asdict(rep), "ratios": rep.ratios()}
    files.append(_write_json(out / "freezing.json", d))
    return rep.ratios(), files


RUNNERS = {
    "basis": _run_basis,
    "evolve": _run_evolve,
    "echo-otoc": _run_echo,
    "forward-density": _run_forward,
    "compensation-scan": _run_compensation,
    "fit": _run_fit,
    "spectrum": _run_spectrum,
    "scatter": _run_scatter,
    "cluster": _run_cluster,
}


def run(cfg) -> dict:
    """Run one configuration, write outputs plus manifest.json, return the manifest."""
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary, files = RUNNERS[cfg.experiment](cfg, out)
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.to_dict(),
        "code_version": code_version(),
        "master_seed": cfg.master_seed,
        "outputs": sorted(Path(f).name for f in files),
        "summary": summary,
    }
    _write_json(out / "manifest.json", manifest)
    return manifest


def _error_module(exc: BaseException) -> str:
    mod = "rydscramble"
    for frame in traceback.extract_tb(exc.__traceback__):
        if "rydscramble" in frame.filename:
            mod = Path(frame.filename).stem
    return mod


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="rydscramble", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run a configuration file")
    r.add_argument("config")
    r.add_argument("--seed", type=int)
    r.add_argument("--threads", type=int)
    r.add_argument("--out-dir")
    p = sub.add_parser("preset", help="resolve a named preset")
    p.add_argument("name")
    p.add_argument("--emit-config", action="store_true", help="print the resolved YAML config and exit")
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out-dir")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _set_threads(args.threads)

    from .config import ConfigError, UnknownPresetError, load_config, preset

    try:
        if args.cmd == "run":
            cfg = load_config(args.config)
        else:
            cfg = preset(args.name)
        if args.seed is not None:
            cfg = replace(cfg, master_seed=args.seed)
        if args.out_dir:
            cfg = replace(cfg, output_dir=args.out_dir)
    except UnknownPresetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.cmd == "preset" and args.emit_config:
        sys.stdout.write(cfg.to_yaml())
        return 0
    try:
        manifest = run(cfg)
    except Exception as exc:  # noqa: BLE001 - reported with context, exit 1
        print(f"error in {_error_module(exc)} ({cfg.experiment}): {type(exc).__name__}: {exc}",
              file=sys.stderr)
        if args.verbose:
            traceback.print_exc()
        return 1
    print(json.dumps(manifest["summary"], default=_json_default))
    return 0


if __name__ == "__main__":
    sys.exit(main())
