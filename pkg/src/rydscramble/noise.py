"""Stochastic-trajectory model of experimental imperfections.

Each trajectory draws quenched position and Doppler disorder plus a list of
single-atom Pauli jumps on the echo clock [0, 2 t_max].  An echo of
half-time t uses the jumps with time < 2t (forward leg before t, backward leg
after).  All draws come from ``SeedSequence([master_seed, index])``, so a
trajectory is fully determined by its index.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .evolution import Operator, apply_operator, evolve_with_events
from .experiment import EchoExperiment
from .lattice import Basis, SpinConfiguration, as_config, neel_state, product_state
from .otoc import EchoResult, OTOCGrid, combine_neel_scans

log = logging.getLogger(__name__)


class JumpKind(str, enum.Enum):
    DEPHASE = "dephase"
    DEPOLARIZE = "depolarize"


class DiscardedTrajectory(RuntimeError):
    """A jump annihilated the state (zero norm after projection)."""


@dataclass(frozen=True)
class NoiseModel:
    position_sigma_fraction: float = 0.05
    doppler_sigma_khz: float = 40.0
    depolarization_khz: float = 20.0
    dephasing_khz: float = 40.0
    n_trajectories: int = 300
    master_seed: int = 0
    # "pauli": uniform sigma_x/y/z; "decay": sigma^- (r -> g) only
    depolarization_kind: str = "pauli"
    # optional per-site multiplier on the Doppler width (no default claim)
    doppler_site_multiplier: tuple[float, ...] | None = None
    # std of the mid-echo rotation angle error, radians (0: perfect sigma_z)
    imprint_angle_sigma: float = 0.0

    def __post_init__(self):
        for name in ("position_sigma_fraction", "doppler_sigma_khz", "depolarization_khz",
                     "dephasing_khz", "imprint_angle_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_trajectories < 1:
            raise ValueError("n_trajectories must be >= 1")
        if self.depolarization_kind not in ("pauli", "decay"):
            raise ValueError("depolarization_kind must be 'pauli' or 'decay'")

    @classmethod
    def noiseless(cls, n_trajectories: int = 1, master_seed: int = 0) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0, n_trajectories, master_seed)


@dataclass(frozen=True)
class PreparationMixture:
    """Erroneous starting configurations with probabilities; the rest is the target."""

    components: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        probs = [p for _, p in self.components]
        if any(p < 0 for p in probs):
            raise ValueError("mixture probabilities must be >= 0")
        if sum(probs) > 1 + 1e-12:
            raise ValueError(f"mixture probabilities sum to {sum(probs)} > 1")
        for cfg, _ in self.components:
            as_config(cfg)

    def residual(self) -> float:
        return max(0.0, 1.0 - sum(p for _, p in self.components))

    def draw(self, target: SpinConfiguration, u: float) -> SpinConfiguration:
        acc = 0.0
        for cfg, p in self.components:
            acc += p
            if u < acc:
                return as_config(cfg)
        return target


@dataclass(frozen=True)
class Jump:
    time_us: float
    kind: JumpKind
    site: int  # 1-based
    draw: float


@dataclass
class TrajectoryParams:
    offsets_um: np.ndarray
    positions_um: np.ndarray
    site_shift_mhz: np.ndarray
    jumps: list
    imprint_angle: float
    prep_draw: float


def _poisson_times(rng: np.random.Generator, rate_per_us: float, duration: float) -> list[float]:
    out = []
    if rate_per_us <= 0 or duration <= 0:
        return out
    t = rng.exponential(1.0 / rate_per_us)
    while t < duration:
        out.append(float(t))
        t += rng.exponential(1.0 / rate_per_us)
    return out


def sample_trajectory_params(model: NoiseModel, geometry, trajectory_index: int,
                             duration_us: float = 3.2) -> TrajectoryParams:
    """Disorder and jump schedule for one trajectory over ``duration_us`` of echo clock."""
    rng = np.random.default_rng(np.random.SeedSequence([int(model.master_seed), int(trajectory_index)]))
    n = geometry.n_sites
    offsets = rng.normal(0.0, model.position_sigma_fraction * geometry.spacing, n)
    shifts = rng.normal(0.0, model.doppler_sigma_khz * 1e-3, n)
    if model.doppler_site_multiplier is not None:
        shifts = shifts * np.asarray(model.doppler_site_multiplier, dtype=float)
    angle = float(rng.normal(0.0, model.imprint_angle_sigma)) if model.imprint_angle_sigma else 0.0
    jumps = []
    for kind, khz in ((JumpKind.DEPOLARIZE, model.depolarization_khz),
                      (JumpKind.DEPHASE, model.dephasing_khz)):
        for site in range(1, n + 1):
            for t in _poisson_times(rng, khz * 1e-3, duration_us):
                jumps.append(Jump(t, kind, site, float(rng.random())))
    jumps.sort(key=lambda j: (j.time_us, j.site, j.kind.value))
    prep = float(rng.random())
    pos = np.asarray(geometry.positions) + offsets
    return TrajectoryParams(offsets, pos, shifts, jumps, angle, prep)


def apply_jump(basis: Basis, amps: np.ndarray, kind: JumpKind | str, site: int, draw: float,
               depolarization_kind: str = "pauli") -> np.ndarray:
    """Dephase = sigma_z; Depolarize = sigma_x, sigma_y or sigma_z picked by ``draw``.

    In the blockaded basis, flips that would leave the basis are projected out
    and the state renormalized.
    """
    kind = JumpKind(kind)
    if kind is JumpKind.DEPHASE:
        return apply_operator(basis, amps, Operator.SIGMA_Z, site)
    if depolarization_kind == "decay":
        i = site - 1
        mask = basis.site_mask(i)
        out = np.zeros_like(amps)
        tgt = basis.flip_table[mask, i]
        out[tgt] = amps[mask]
    else:
        op = (Operator.SIGMA_X, Operator.SIGMA_Y, Operator.SIGMA_Z)[min(int(draw * 3), 2)]
        out = apply_operator(basis, amps, op, site, project=True)
    nrm = np.linalg.norm(out)
    if nrm < 1e-12:
        raise DiscardedTrajectory(f"{kind.value} jump at site {site} left a zero-norm state")
    return out / nrm


def _imprint(basis: Basis, amps: np.ndarray, site: int, angle_error: float) -> np.ndarray:
    """exp(-i (pi + err) sigma_z / 2) up to the global phase -i."""
    z = np.where(basis.site_mask(site - 1), 1.0, -1.0)
    th = (np.pi + angle_error) / 2
    # i * exp(-i th z) = i cos(th) + sin(th) z
    return amps * (1j * np.cos(th) + np.sin(th) * z)


@dataclass
class NoisyEchoResult:
    times_us: np.ndarray
    density: np.ndarray
    density_stderr: np.ndarray
    c_values: np.ndarray
    c_stderr: np.ndarray
    density0: np.ndarray
    n_used: int
    n_discarded: int
    rabi_mhz: float
    addressed_site: int
    meta: dict = field(default_factory=dict)

    @property
    def discard_rate(self) -> float:
        tot = self.n_used + self.n_discarded
        return self.n_discarded / tot if tot else 0.0

    def grid(self) -> OTOCGrid:
        return OTOCGrid(self.times_us, self.c_values, 1 - 2 * self.c_values, self.c_stderr,
                        self.rabi_mhz, self.addressed_site,
                        {**self.meta, "discard_rate": self.discard_rate})

    def echo(self) -> EchoResult:
        return EchoResult(self.times_us, self.density, self.density0, self.density_stderr,
                          self.rabi_mhz, self.addressed_site, dict(self.meta))


def _trajectory(exp: EchoExperiment, model: NoiseModel, mixture: PreparationMixture,
                target: SpinConfiguration, index: int):
    times = exp.times()
    geo0 = exp.geometry()
    tp = sample_trajectory_params(model, geo0, index, 2 * float(times.max()))
    geo = geo0.displaced(tp.offsets_um) if np.any(tp.offsets_um) else geo0
    shifts = tp.site_shift_mhz if np.any(tp.site_shift_mhz) else None
    basis, hf, hb = exp.hamiltonians(geo, shifts)
    cfg = mixture.draw(target, tp.prep_draw)
    psi = product_state(basis, cfg)
    n0 = np.asarray(cfg.bits, dtype=float)
    jump_fn = lambda j, a: apply_jump(basis, a, j.kind, j.site, j.draw, model.depolarization_kind)  # noqa: E731
    events = [(j.time_us, partial(jump_fn, j)) for j in tp.jumps]
    if tp.imprint_angle and Operator(exp.operator) is Operator.SIGMA_Z:
        # the mid-echo operator is a slightly wrong z rotation
        mid = partial(_imprint, basis, site=exp.operator_site, angle_error=tp.imprint_angle)
    else:
        mid = partial(apply_operator, basis, op=exp.operator, site=exp.operator_site)
    dens = np.empty((exp.n_sites, times.size))
    for k, t in enumerate(times):
        a = evolve_with_events(hf, psi.amplitudes, 0.0, t, events, exp.propagator)
        a = mid(a)
        a = evolve_with_events(hb, a, t, 2 * t, events, exp.propagator)
        dens[:, k] = (np.abs(a) ** 2) @ basis.occupations
    return dens, np.abs(dens - n0[:, None]), n0


def run_noisy_echo(exp: EchoExperiment, model: NoiseModel,
                   mixture: PreparationMixture | None = None,
                   initial: SpinConfiguration | str | None = None) -> NoisyEchoResult:
    """Trajectory-averaged echo densities and C values with standard errors sigma / sqrt(M).

    C is formed per trajectory against that trajectory's starting
    configuration and then averaged (weighted averaging over preparations).
    """
    mixture = mixture or PreparationMixture()
    target = exp.initial_config() if initial is None else as_config(initial)
    dens, cs, n0s, discarded = [], [], [], 0
    for idx in range(model.n_trajectories):
        try:
            d, c, n0 = _trajectory(exp, model, mixture, target, idx)
        except DiscardedTrajectory as exc:
            log.debug("trajectory %d discarded: %s", idx, exc)
            discarded += 1
            continue
        dens.append(d)
        cs.append(c)
        n0s.append(n0)
    if not dens:
        raise DiscardedTrajectory("every trajectory was discarded")
    D, C = np.stack(dens), np.stack(cs)
    M = len(dens)

    def se(x):
        return x.std(axis=0, ddof=1) / np.sqrt(M) if M > 1 else np.zeros(x.shape[1:])

    return NoisyEchoResult(
        exp.times(), D.mean(axis=0), se(D), C.mean(axis=0), se(C), np.mean(n0s, axis=0),
        M, discarded, exp.rabi_mhz, exp.operator_site,
        {"initial": str(target), "model": exp.model, "n_trajectories": model.n_trajectories,
         "master_seed": model.master_seed},
    )


def noisy_otoc(exp: EchoExperiment, model: NoiseModel,
               mixture: PreparationMixture | None = None) -> OTOCGrid:
    """Noisy C grid; Z2 runs are merged with a Z2bar run as in the noiseless pipeline."""
    res = run_noisy_echo(exp, model, mixture)
    grid = res.grid()
    if exp.combine_neel and exp.initial.strip().lower() == "z2":
        other = run_noisy_echo(exp, model, mixture, neel_state(exp.n_sites, "Z2bar")).grid()
        grid = combine_neel_scans(grid, other)
    return grid
