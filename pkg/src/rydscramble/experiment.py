"""Echo-experiment description and the noiseless OTOC pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .evolution import (
    DEFAULT_PROPAGATOR,
    Operator,
    Propagator,
    densities,
    echo_scan,
    forward_scan,
)
from .hamiltonian import (
    DriveParams,
    HamiltonianMatrix,
    InteractionParams,
    build_pxp,
    build_rydberg,
    compensation_detuning,
)
from .lattice import (
    Basis,
    BasisKind,
    ChainGeometry,
    SpinConfiguration,
    as_config,
    build_basis,
    neel_state,
    product_state,
)
from .otoc import EchoResult, OTOCGrid, combine_neel_scans, compute_c


def time_grid(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive grid start, start + step, ..., stop."""
    if step <= 0 or stop < start or start < 0:
        raise ValueError(f"bad time grid ({start}, {stop}, {step})")
    n = int(np.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 12)


def resolve_initial(name: str, n_sites: int) -> SpinConfiguration:
    """'g', 'Z2', 'Z2bar' or an explicit g/r string."""
    key = name.strip()
    if key.lower() == "g":
        return SpinConfiguration.ground(n_sites)
    if key.lower() in ("z2", "z2bar"):
        return neel_state(n_sites, key)
    cfg = as_config(key)
    if cfg.n_sites != n_sites:
        raise ValueError(f"initial configuration {key!r} has {cfg.n_sites} sites, chain has {n_sites}")
    return cfg


@dataclass(frozen=True)
class EchoExperiment:
    """One ZZ-OTOC measurement: chain, drive, echo operator and time grid.

    ``model`` is 'pxp' (ideal reversal, blockaded basis) or 'rydberg' (full
    van der Waals model, reversal by flipping the drive sign).  With
    ``compensation`` on, the Rydberg runs use a constant detuning of
    2 V_NNN in both legs on top of ``detuning_mhz``.
    """

    n_sites: int = 13
    model: str = "pxp"
    initial: str = "g"
    operator: str = "sigma_z"
    operator_site: int = 7
    rabi_mhz: float = 2.5
    detuning_mhz: float = 0.0
    compensation: bool = True
    spacing_um: float = 6.0
    v_nn_mhz: float = 12.0
    max_range: int | None = None
    ac_stark_mhz: tuple[float, ...] | None = None
    basis: str | None = None
    t_start_us: float = 0.0
    t_stop_us: float = 1.6
    t_step_us: float = 0.02
    combine_neel: bool = True
    # rydberg only: "flip" negates the drive (experimental reversal),
    # "exact" uses -H for the backward leg
    reversal: str = "flip"
    propagator: Propagator = field(default=DEFAULT_PROPAGATOR)

    def __post_init__(self):
        if self.model not in ("pxp", "rydberg"):
            raise ValueError(f"model must be 'pxp' or 'rydberg', got {self.model!r}")
        if self.rabi_mhz <= 0:
            raise ValueError("rabi_mhz must be > 0")
        if not 1 <= self.operator_site <= self.n_sites:
            raise ValueError(f"operator_site {self.operator_site} outside 1..{self.n_sites}")
        Operator(self.operator)
        if self.reversal not in ("flip", "exact"):
            raise ValueError(f"reversal must be 'flip' or 'exact', got {self.reversal!r}")

    # --- resolved pieces
    def times(self) -> np.ndarray:
        return time_grid(self.t_start_us, self.t_stop_us, self.t_step_us)

    def geometry(self) -> ChainGeometry:
        return ChainGeometry.regular(self.n_sites, self.spacing_um)

    def interaction(self) -> InteractionParams:
        return InteractionParams(self.v_nn_mhz, max_range=self.max_range)

    def total_detuning(self) -> float:
        if self.model == "rydberg" and self.compensation:
            return self.detuning_mhz + compensation_detuning(self.interaction(), self.spacing_um)
        return self.detuning_mhz

    def drive(self) -> DriveParams:
        return DriveParams(self.rabi_mhz, self.total_detuning(), self.ac_stark_mhz)

    def basis_kind(self) -> BasisKind:
        if self.basis is not None:
            return BasisKind(self.basis)
        return BasisKind.BLOCKADED if self.model == "pxp" else BasisKind.FULL

    def build_basis(self) -> Basis:
        return _cached_basis(self.n_sites, self.basis_kind())

    def initial_config(self) -> SpinConfiguration:
        return resolve_initial(self.initial, self.n_sites)

    def hamiltonians(
        self, geometry: ChainGeometry | None = None, site_shift_mhz=None, basis: Basis | None = None
    ) -> tuple[Basis, HamiltonianMatrix, HamiltonianMatrix]:
        """(basis, H_forward, H_backward)."""
        basis = basis or self.build_basis()
        if self.model == "pxp":
            h = build_pxp(basis, DriveParams(self.rabi_mhz))
            return basis, h, -h
        drive = self.drive()
        if site_shift_mhz is not None:
            drive = replace(drive, site_shift_mhz=tuple(float(x) for x in site_shift_mhz))
        h = build_rydberg(basis, geometry or self.geometry(), drive, self.interaction())
        if self.reversal == "exact":
            return basis, h, -h
        # the flipped-drive Hamiltonian shares H's spectrum up to a sign pattern
        return basis, h, h.coupling_flipped()

    def normalized(self, times_us) -> np.ndarray:
        return np.asarray(times_us) * self.rabi_mhz


_BASES: dict = {}


def _cached_basis(n_sites: int, kind: BasisKind) -> Basis:
    key = (n_sites, kind)
    if key not in _BASES:
        _BASES[key] = build_basis(n_sites, kind)
    return _BASES[key]


def run_echo(exp: EchoExperiment, initial: SpinConfiguration | str | None = None) -> EchoResult:
    """Noiseless echo densities for every half-time on the grid."""
    cfg = exp.initial_config() if initial is None else as_config(initial)
    basis, hf, hb = exp.hamiltonians()
    psi = product_state(basis, cfg)
    times = exp.times()
    amps = echo_scan(psi, hf, hb, times, exp.operator, exp.operator_site, exp.propagator)
    return EchoResult(
        times,
        densities(basis, amps).T,
        np.asarray(cfg.bits, dtype=float),
        None,
        exp.rabi_mhz,
        exp.operator_site,
        {"initial": str(cfg), "model": exp.model, "dimension": basis.dim},
    )


def run_otoc(exp: EchoExperiment) -> OTOCGrid:
    """C grid for the experiment; Z2 runs are merged with the Z2bar scan when asked."""
    cfg = exp.initial_config()
    grid = compute_c(run_echo(exp, cfg))
    if exp.combine_neel and exp.initial.strip().lower() == "z2":
        other = compute_c(run_echo(exp, neel_state(exp.n_sites, "Z2bar")))
        grid = combine_neel_scans(grid, other)
    return grid


def run_forward(
    exp: EchoExperiment, initial: SpinConfiguration | str | None = None, times=None
) -> tuple[np.ndarray, np.ndarray, Basis]:
    """Forward evolution: (times, amplitudes (n_times, dim), basis)."""
    cfg = exp.initial_config() if initial is None else as_config(initial)
    basis, hf, _ = exp.hamiltonians()
    times = exp.times() if times is None else np.asarray(times, dtype=float)
    amps = forward_scan(product_state(basis, cfg), hf, times, exp.propagator)
    return times, amps, basis
