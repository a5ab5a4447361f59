"""Eigenstate overlaps with a reference state, scar-tower flags, velocity scatter and
Rydberg-cluster freezing."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .analysis import DEFAULT_WINDOW, FitError, FitReport, Shape, velocity_from_grid
from .experiment import EchoExperiment, run_otoc
from .hamiltonian import TWO_PI, HamiltonianMatrix
from .lattice import SpinConfiguration, StateVector, as_config, find_clusters, neel_state, product_state
from .otoc import OTOCGrid, commutator_otoc

log = logging.getLogger(__name__)

DENSE_CAP = 5000


class SpectrumSizeError(ValueError):
    pass


@dataclass
class SpectrumReport:
    energies: np.ndarray  # rad/us, ascending
    overlaps: np.ndarray
    scar_flags: np.ndarray
    eigenvectors: np.ndarray = field(repr=False, default=None)
    window: float = 0.0

    @property
    def scar_indices(self) -> np.ndarray:
        return np.flatnonzero(self.scar_flags)

    def weight_of(self, state: StateVector | np.ndarray) -> float:
        """Probability of ``state`` inside the flagged eigenstates."""
        amps = state.amplitudes if isinstance(state, StateVector) else np.asarray(state)
        c = self.eigenvectors[:, self.scar_flags].T @ amps
        return float(np.sum(np.abs(c) ** 2))


def tower_tops(energies: np.ndarray, overlaps: np.ndarray, window: float, n_towers: int) -> np.ndarray:
    """Greedy pick of locally maximal overlaps.

    Repeatedly flags the largest remaining overlap and suppresses every
    eigenstate within ``window`` in energy of it, up to ``n_towers`` picks.
    """
    flags = np.zeros(len(energies), dtype=bool)
    free = np.ones(len(energies), dtype=bool)
    for k in np.argsort(-overlaps, kind="stable"):
        if flags.sum() >= n_towers:
            break
        if not free[k]:
            continue
        flags[k] = True
        free &= np.abs(energies - energies[k]) >= window
    return flags


def spectrum_overlap(
    h: HamiltonianMatrix,
    reference: StateVector,
    rabi_mhz: float | None = None,
    n_towers: int | None = None,
    window: float | None = None,
    dim_cap: int = DENSE_CAP,
) -> SpectrumReport:
    """Full diagonalization and |<E_n|ref>|^2 with tower-top scar flags.

    The suppression window defaults to Omega/2 in rad/us (``rabi_mhz`` gives
    Omega; otherwise it is read from the Hamiltonian's coupling, which is
    Omega/2) and the number of towers to N + 1.
    """
    if h.dim > dim_cap:
        raise SpectrumSizeError(
            f"dense diagonalization of dimension {h.dim} exceeds the cap {dim_cap}; use a smaller chain"
        )
    E, V = h.eigh
    ov = np.abs(V.T @ reference.amplitudes) ** 2
    if window is None:
        omega = TWO_PI * rabi_mhz if rabi_mhz is not None else 2 * abs(h.coupling)
        window = omega / 2
    if n_towers is None:
        n_towers = h.basis.n_sites + 1
    flags = tower_tops(E, ov, window, n_towers)
    return SpectrumReport(E, ov, flags, V, window)


def spectrum_for(exp: EchoExperiment, reference: str | SpinConfiguration = "Z2") -> SpectrumReport:
    basis, h, _ = exp.hamiltonians()
    from .experiment import resolve_initial

    ref = resolve_initial(reference, exp.n_sites) if isinstance(reference, str) else reference
    return spectrum_overlap(h, product_state(basis, ref), exp.rabi_mhz)


def scar_weight(report: SpectrumReport, state: StateVector) -> float:
    return report.weight_of(state)


@dataclass
class ScatterPoint:
    label: str
    scar_weight: float
    velocity: float
    fit: FitReport | None = None


def _fit_or_nan(grid: OTOCGrid, window, subtract) -> tuple[float, FitReport | None]:
    try:
        r = velocity_from_grid(grid, Shape.LINEAR, window, subtract=subtract)
        return r.velocity, r
    except FitError as exc:
        log.info("fit failed: %s", exc)
        return float("nan"), None


def velocity_scatter(
    initial_states: Sequence[SpinConfiguration | str],
    exp: EchoExperiment,
    report: SpectrumReport | None = None,
    window=DEFAULT_WINDOW,
    subtract: bool = False,
) -> list[ScatterPoint]:
    """(scar weight, fitted velocity) for each product state."""
    report = report or spectrum_for(exp)
    basis = exp.build_basis()
    out = []
    for s in initial_states:
        cfg = as_config(s)
        w = report.weight_of(product_state(basis, cfg))
        grid = run_otoc(replace(exp, initial=str(cfg), combine_neel=False))
        v, fit = _fit_or_nan(grid, window, subtract)
        out.append(ScatterPoint(str(cfg), w, v, fit))
    return out


def eigenstate_velocities(
    exp: EchoExperiment,
    report: SpectrumReport,
    indices: Sequence[int] | None = None,
    window=DEFAULT_WINDOW,
) -> list[ScatterPoint]:
    """Velocity of the commutator OTOC started from eigenstates (default: all).

    Eigenstates are not sigma_z product states, so C comes from the
    commutator definition rather than density differences.
    """
    basis, hf, hb = exp.hamiltonians()
    times = exp.times()
    idx = range(len(report.energies)) if indices is None else indices
    out = []
    for n in idx:
        psi = StateVector(basis, report.eigenvectors[:, n].astype(complex))
        c = commutator_otoc(hf, psi, times, exp.operator_site, hb)
        grid = OTOCGrid(times, c, rabi_mhz=exp.rabi_mhz, addressed_site=exp.operator_site)
        v, fit = _fit_or_nan(grid, window, False)
        out.append(ScatterPoint(f"E{n}", float(report.overlaps[n]), v, fit))
    return out


def blockaded_product_states(n_sites: int) -> list[SpinConfiguration]:
    from .lattice import build_basis

    return build_basis(n_sites, "blockaded").states


@dataclass
class FreezingReport:
    clusters: list
    perturbation_site: int
    cluster_mean: float  # time-averaged C on cluster sites
    adjacent_mean: float
    far_field_mean: float
    far_field_max: float
    baseline_peak: float
    trapped: bool
    enclosed: tuple | None

    def ratios(self) -> dict:
        b = self.baseline_peak or 1.0
        return {
            "cluster": self.cluster_mean / b,
            "adjacent": self.adjacent_mean / b,
            "far_field": self.far_field_mean / b,
            "far_field_max": self.far_field_max / b,
        }


def cluster_freezing(
    initial: SpinConfiguration | str,
    exp: EchoExperiment,
    perturbation_site: int | None = None,
    baseline: OTOCGrid | None = None,
    reversal: str = "exact",
) -> tuple[OTOCGrid, FreezingReport]:
    """Echo from a configuration holding Rydberg clusters, compared with the cluster-free chain.

    The baseline is the same experiment started from the configuration with
    every cluster atom returned to g.  When the perturbation sits strictly
    between two clusters, the far field is everything outside that enclosed
    stretch; otherwise it is every site that is neither in nor next to a
    cluster.  ``reversal="exact"`` runs the backward leg with -H so the grid
    shows operator spreading only; "flip" adds the drive-flip echo error.
    """
    cfg = as_config(initial)
    clusters = find_clusters(cfg)
    if not clusters:
        raise ValueError(f"{cfg} contains no Rydberg cluster (two or more adjacent r)")
    exp = replace(exp, model="rydberg", basis="full", combine_neel=False, reversal=reversal)
    site = perturbation_site or exp.operator_site
    exp = replace(exp, operator_site=site, initial=str(cfg))
    grid = run_otoc(exp)
    if baseline is None:
        bits = list(cfg.bits)
        for a, b in clusters:
            for i in range(a - 1, b):
                bits[i] = 0
        baseline = run_otoc(replace(exp, initial=str(SpinConfiguration(tuple(bits)))))
    n = cfg.n_sites
    in_cluster = np.zeros(n, dtype=bool)
    for a, b in clusters:
        in_cluster[a - 1:b] = True
    adjacent = np.zeros(n, dtype=bool)
    for a, b in clusters:
        for j in (a - 2, b):
            if 0 <= j < n and not in_cluster[j]:
                adjacent[j] = True
    enclosed = None
    left = [c for c in clusters if c[1] < site]
    right = [c for c in clusters if c[0] > site]
    if left and right:
        enclosed = (left[-1][1] + 1, right[0][0] - 1)
        far = np.ones(n, dtype=bool)
        far[enclosed[0] - 1:enclosed[1]] = False
    else:
        far = ~(in_cluster | adjacent)
        far[site - 1] = False
    tavg = grid.c_values.mean(axis=1)

    def mean(mask):
        return float(tavg[mask].mean()) if mask.any() else 0.0

    rep = FreezingReport(
        clusters,
        site,
        mean(in_cluster),
        mean(adjacent),
        mean(far),
        float(grid.c_values[far].max()) if far.any() else 0.0,
        float(baseline.c_values.max()),
        enclosed is not None,
        enclosed,
    )
    return grid, rep
