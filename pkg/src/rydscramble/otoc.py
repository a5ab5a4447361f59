"""ZZ-OTOC observables from echo densities, plus forward-dynamics diagnostics.

Grids are stored as ``(n_sites, n_times)`` arrays, matching the CSV layout
(one row per site, one column per time point).
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .evolution import rmatmul
from .hamiltonian import HamiltonianMatrix
from .lattice import Basis, StateVector, check_same_basis

EIGEN_TOL = 0.02


class PreconditionError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


@dataclass
class EchoResult:
    """Site-resolved densities after echoes of half-time t (rows = sites)."""

    times_us: np.ndarray
    density: np.ndarray
    density0: np.ndarray
    stderr: np.ndarray | None = None
    rabi_mhz: float | None = None
    addressed_site: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times_us = np.asarray(self.times_us, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        self.density0 = np.asarray(self.density0, dtype=float)
        if self.density.shape != (self.density0.size, self.times_us.size):
            raise ValueError(
                f"density shape {self.density.shape} does not match "
                f"({self.density0.size} sites, {self.times_us.size} times)"
            )

    @property
    def sites(self) -> np.ndarray:
        return np.arange(1, self.density0.size + 1)

    @property
    def n_sites(self) -> int:
        return self.density0.size


@dataclass
class OTOCGrid:
    times_us: np.ndarray
    c_values: np.ndarray
    f_values: np.ndarray | None = None
    stderr: np.ndarray | None = None
    rabi_mhz: float | None = None
    addressed_site: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times_us = np.asarray(self.times_us, dtype=float)
        self.c_values = np.asarray(self.c_values, dtype=float)
        if self.c_values.ndim != 2 or self.c_values.shape[1] != self.times_us.size:
            raise ValueError(f"c_values shape {self.c_values.shape} inconsistent with time grid")

    @property
    def sites(self) -> np.ndarray:
        return np.arange(1, self.n_sites + 1)

    @property
    def n_sites(self) -> int:
        return self.c_values.shape[0]

    def normalized_times(self) -> np.ndarray:
        """Omega T / 2 pi for each half-time T."""
        if self.rabi_mhz is None:
            raise ValueError("grid has no rabi_mhz; cannot normalize time")
        return self.times_us * abs(self.rabi_mhz)

    def with_values(self, c_values, **kw) -> "OTOCGrid":
        return replace(self, c_values=np.asarray(c_values, dtype=float), **kw)

    def window(self, t_max_us: float) -> "OTOCGrid":
        keep = self.times_us <= t_max_us + 1e-12
        return replace(
            self,
            times_us=self.times_us[keep],
            c_values=self.c_values[:, keep],
            f_values=None if self.f_values is None else self.f_values[:, keep],
            stderr=None if self.stderr is None else self.stderr[:, keep],
        )


def check_eigen_densities(density0, tol: float = EIGEN_TOL) -> None:
    d0 = np.asarray(density0)
    bad = np.minimum(np.abs(d0), np.abs(d0 - 1)) > tol
    if np.any(bad):
        sites = (np.flatnonzero(bad) + 1).tolist()
        raise PreconditionError(
            "density-difference OTOC needs an initial sigma_z product state "
            f"(eigenstate of the measured operator); sites {sites} have initial densities "
            f"{d0[bad].round(4).tolist()}"
        )


def compute_c(echo: EchoResult, tol: float = EIGEN_TOL) -> OTOCGrid:
    """C_i(t) = |<n_i(2t)> - <n_i(0)>| and F = (-1)^(n_i(0)+1) (2<n_i(2t)> - 1)."""
    check_eigen_densities(echo.density0, tol)
    n0 = np.round(echo.density0)[:, None]
    c = np.abs(echo.density - echo.density0[:, None])
    sign = np.where(n0 > 0.5, 1.0, -1.0)
    f = sign * (2 * echo.density - 1)
    return OTOCGrid(
        echo.times_us, c, f, echo.stderr, echo.rabi_mhz, echo.addressed_site, dict(echo.meta)
    )


def _check_grids(a: OTOCGrid, b: OTOCGrid):
    if a.c_values.shape != b.c_values.shape or not np.allclose(a.times_us, b.times_us):
        raise GridMismatchError(
            f"grids differ: {a.c_values.shape} vs {b.c_values.shape} or time axes differ"
        )


def combine_neel_scans(scan_z2: OTOCGrid, scan_z2bar: OTOCGrid) -> OTOCGrid:
    """Odd (1-based) sites from the Z2 scan, even sites from the Z2bar scan."""
    _check_grids(scan_z2, scan_z2bar)
    c = scan_z2.c_values.copy()
    c[1::2] = scan_z2bar.c_values[1::2]

    def merge(x, y):
        if x is None or y is None:
            return None
        out = x.copy()
        out[1::2] = y[1::2]
        return out

    return replace(
        scan_z2,
        c_values=c,
        f_values=merge(scan_z2.f_values, scan_z2bar.f_values),
        stderr=merge(scan_z2.stderr, scan_z2bar.stderr),
        meta={**scan_z2.meta, "combined": "Z2 odd sites + Z2bar even sites"},
    )


def density_difference(forward_a: np.ndarray, forward_b: np.ndarray) -> np.ndarray:
    """chi = |<n>_a - <n>_b| elementwise."""
    a, b = np.asarray(forward_a, dtype=float), np.asarray(forward_b, dtype=float)
    if a.shape != b.shape:
        raise GridMismatchError(f"density grids differ in shape: {a.shape} vs {b.shape}")
    return np.abs(a - b)


def pair_correlator(basis: Basis, amps: np.ndarray, occupied: bool = False) -> np.ndarray:
    """<n_i n_{i+1}> for each bond and each amplitude row -> (n_sites - 1, n_rows).

    ``occupied=False`` gives the gg projector, ``True`` the rr projector.
    """
    amps = np.atleast_2d(amps)
    occ = basis.occupations.astype(float)
    x = occ if occupied else 1.0 - occ
    bonds = x[:, :-1] * x[:, 1:]
    return bonds.T @ (np.abs(amps.T) ** 2)


def domain_wall_correlator(basis: Basis, state_history: np.ndarray) -> np.ndarray:
    """<n_i^g n_{i+1}^g> for bonds (i, i+1); rows = bonds, columns = times."""
    return pair_correlator(basis, state_history, occupied=False)


def rydberg_pair_correlator(basis: Basis, state_history: np.ndarray) -> np.ndarray:
    return pair_correlator(basis, state_history, occupied=True)


def sample_densities(
    basis: Basis, amps: np.ndarray, shots: int, rng: np.random.Generator
) -> np.ndarray:
    """Finite-shot density estimates for each amplitude row -> (n_sites, n_rows)."""
    amps = np.atleast_2d(amps)
    occ = basis.occupations.astype(float)
    out = np.empty((basis.n_sites, amps.shape[0]))
    for k, row in enumerate(amps):
        p = np.abs(row) ** 2
        counts = rng.multinomial(shots, p / p.sum())
        out[:, k] = counts @ occ / shots
    return out


def commutator_otoc(
    h_forward: HamiltonianMatrix,
    state: StateVector,
    times_us,
    w_site: int,
    h_backward: HamiltonianMatrix | None = None,
) -> np.ndarray:
    """(1/4) <|[W(t), V_j]|^2> with W = sigma_z(w_site), V_j = sigma_z(j), dense.

    W(t) is built as U_b(t) W U_f(t) with U_f = e^{-iH_f t} and
    U_b = e^{-iH_b t}; for an exact reversal (H_b = -H_f) this is the usual
    Heisenberg operator.  Returns ``(n_sites, n_times)``.
    """
    check_same_basis(h_forward.basis, state.basis)
    basis = state.basis
    Ef, Vf = h_forward.eigh
    if h_backward is None:
        h_backward = -h_forward
    Eb, Vb = h_backward.eigh
    z = np.where(basis.occupations.astype(bool), 1.0, -1.0)  # (dim, n_sites)
    w = z[:, w_site - 1][:, None]
    psi = state.amplitudes
    # columns: |psi>, V_1|psi>, ..., V_N|psi>
    X = np.column_stack([psi, z * psi[:, None]])
    cf = rmatmul(Vf.T, X)
    out = np.empty((basis.n_sites, len(times_us)))
    for k, t in enumerate(np.asarray(times_us, dtype=float)):
        Y = w * rmatmul(Vf, np.exp(-1j * Ef * t)[:, None] * cf)
        Y = rmatmul(Vb, np.exp(-1j * Eb * t)[:, None] * rmatmul(Vb.T, Y))
        m = Y[:, 1:] - z * Y[:, :1]  # W(t) V_j psi - V_j W(t) psi
        out[:, k] = 0.25 * np.sum(np.abs(m) ** 2, axis=0)
    return out


# --------------------------------------------------------------------------
# I/O


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def write_grid_csv(path, times_us, values, row_labels=None, label="site") -> Path:
    """First column: site (or bond) index; header: times in us; 9 significant digits."""
    path = Path(path)
    values = np.asarray(values)
    if row_labels is None:
        row_labels = range(1, values.shape[0] + 1)
    with path.open("w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([label, *(_fmt(t) for t in times_us)])
        for lab, row in zip(row_labels, values):
            wr.writerow([lab, *(_fmt(v) for v in row)])
    return path


def read_grid_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns (times, row labels, values)."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    times = np.array([float(x) for x in rows[0][1:]])
    labels = np.array([int(r[0]) for r in rows[1:]])
    vals = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
    return times, labels, vals


def grid_to_dict(grid: OTOCGrid) -> dict:
    d = {
        "axes": {"site": grid.sites.tolist(), "time_us": grid.times_us.tolist()},
        "rabi_mhz": grid.rabi_mhz,
        "addressed_site": grid.addressed_site,
        "c_values": grid.c_values.tolist(),
        "meta": grid.meta,
    }
    if grid.f_values is not None:
        d["f_values"] = grid.f_values.tolist()
    if grid.stderr is not None:
        d["stderr"] = grid.stderr.tolist()
    return d


def grid_from_dict(d: dict) -> OTOCGrid:
    opt = lambda k: None if d.get(k) is None else np.asarray(d[k])  # noqa: E731
    return OTOCGrid(
        np.asarray(d["axes"]["time_us"]),
        np.asarray(d["c_values"]),
        opt("f_values"),
        opt("stderr"),
        d.get("rabi_mhz"),
        d.get("addressed_site"),
        d.get("meta", {}),
    )


def write_grid_json(path, grid: OTOCGrid) -> Path:
    path = Path(path)
    path.write_text(json.dumps(grid_to_dict(grid), indent=1))
    return path
