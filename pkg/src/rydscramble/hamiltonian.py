"""PXP and full Rydberg Hamiltonians.

Inputs are cyclic frequencies in MHz; matrix entries are angular frequencies
in rad/us (hbar = 1).  The factor 2*pi is applied only here.

Every Hamiltonian in this package has the form

    H = diag + coupling * sum_i X_i

where X_i flips site i and, in the blockaded basis, only flips that stay in
the basis survive (which is exactly the PXP structure).  ``HamiltonianMatrix``
stores that pair and exposes a fast matvec plus a CSR view.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from ._kernels import flip_matvec
from .lattice import Basis, BasisKind, ChainGeometry, check_same_basis

TWO_PI = 2.0 * np.pi


class ParameterError(ValueError):
    pass


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class DriveParams:
    """Global drive. ``rabi_mhz`` is negative after a phase flip."""

    rabi_mhz: float
    detuning_mhz: float = 0.0
    ac_stark_mhz: tuple[float, ...] | None = None
    # per-site detuning offsets, e.g. quenched Doppler shifts
    site_shift_mhz: tuple[float, ...] | None = None

    def ac_stark(self, n_sites: int) -> np.ndarray:
        return _site_vector(self.ac_stark_mhz, n_sites, "ac_stark_mhz")

    def site_shift(self, n_sites: int) -> np.ndarray:
        return _site_vector(self.site_shift_mhz, n_sites, "site_shift_mhz")

    def is_resonant(self) -> bool:
        vals = [self.detuning_mhz, *(self.ac_stark_mhz or ()), *(self.site_shift_mhz or ())]
        return all(v == 0 for v in vals)


def _site_vector(values, n_sites, name):
    if values is None:
        return np.zeros(n_sites)
    arr = np.asarray(values, dtype=float)
    if arr.shape != (n_sites,):
        raise ParameterError(f"{name} has length {arr.size}, expected {n_sites}")
    return arr


@dataclass(frozen=True)
class InteractionParams:
    """van der Waals couplings V(r) = v_nn_mhz * (reference_spacing_um / r)**6.

    ``v_nn_mhz`` is the pair interaction at the reference distance, so a chain
    stretched to three times that spacing sees V_NN / 729.  ``max_range``
    truncates couplings to pairs at most that many lattice indices apart
    (1 = nearest neighbours only); None keeps every pair.
    """

    v_nn_mhz: float = 12.0
    power: int = 6
    max_range: int | None = None
    reference_spacing_um: float = 6.0

    def __post_init__(self):
        if self.v_nn_mhz < 0:
            raise ParameterError("v_nn_mhz must be >= 0")
        if self.power != 6:
            raise ParameterError("only the 1/r^6 van der Waals form is supported")
        if self.max_range is not None and self.max_range < 1:
            raise ParameterError("max_range must be >= 1 or None")
        if self.reference_spacing_um <= 0:
            raise ParameterError("reference_spacing_um must be positive")

    def strength(self, r: float) -> float:
        return self.v_nn_mhz * (self.reference_spacing_um / r) ** self.power

    def nnn_mhz(self, spacing: float | None = None) -> float:
        """Next-nearest-neighbour coupling on a regular chain (0 if truncated)."""
        if self.max_range is not None and self.max_range < 2:
            return 0.0
        return self.strength(2.0 * (spacing or self.reference_spacing_um))


@dataclass(eq=False)
class HamiltonianMatrix:
    """``diag`` and ``coupling`` in rad/us."""

    basis: Basis
    diag: np.ndarray = field(repr=False)
    coupling: float = 0.0

    def __post_init__(self):
        self.diag = np.ascontiguousarray(self.diag, dtype=float)
        if self.diag.shape != (self.basis.dim,):
            raise ValueError("diagonal length does not match basis dimension")

    @property
    def dim(self) -> int:
        return self.basis.dim

    def matvec(self, v: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        return flip_matvec(self.basis, self.diag, self.coupling, v, out)

    def __matmul__(self, v):
        if np.ndim(v) == 1:
            return self.matvec(v)
        return self.matrix @ v

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        n = self.basis.dim
        if self.coupling == 0:
            return sp.diags(self.diag).tocsr()
        table = self.basis.flip_table
        rows = np.repeat(np.arange(n), table.shape[1])
        cols = table.reshape(-1)
        keep = cols >= 0
        off = sp.csr_matrix(
            (np.full(int(keep.sum()), self.coupling), (rows[keep], cols[keep])), shape=(n, n)
        )
        return (off + sp.diags(self.diag)).tocsr()

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense eigendecomposition (real symmetric), cached.

        Matrices made by ``-h`` or ``h.coupling_flipped()`` reuse the parent's.
        """
        origin = self.__dict__.get("_origin")
        if origin is not None:
            parent, how = origin
            w, v = parent.eigh
            if how == "neg":
                return -w[::-1], v[:, ::-1]
            return w, self.basis.parity[:, None] * v
        return np.linalg.eigh(self.dense())

    def __neg__(self) -> "HamiltonianMatrix":
        out = HamiltonianMatrix(self.basis, -self.diag, -self.coupling)
        out.__dict__["_origin"] = (self, "neg")
        return out

    def __add__(self, other: "HamiltonianMatrix") -> "HamiltonianMatrix":
        check_same_basis(self.basis, other.basis)
        return HamiltonianMatrix(self.basis, self.diag + other.diag, self.coupling + other.coupling)

    def __sub__(self, other: "HamiltonianMatrix") -> "HamiltonianMatrix":
        return self + (-other)

    def scaled(self, factor: float) -> "HamiltonianMatrix":
        return HamiltonianMatrix(self.basis, factor * self.diag, factor * self.coupling)

    def coupling_flipped(self) -> "HamiltonianMatrix":
        """Same diagonal, negated drive.

        Equal to Z H Z with Z = prod_i sigma_z, so a cached eigenbasis carries
        over with a sign pattern.
        """
        out = HamiltonianMatrix(self.basis, self.diag, -self.coupling)
        out.__dict__["_origin"] = (self, "flip")
        return out

    def hermiticity_error(self) -> float:
        m = self.matrix
        d = m - m.conj().T
        scale = abs(m).max() if m.nnz else 1.0
        return float(abs(d).max() / scale) if d.nnz else 0.0

    def norm_bound(self) -> float:
        """Upper bound on the spectral radius: max absolute row sum."""
        n_flips = self.basis.n_sites if self.basis.kind is BasisKind.FULL else (
            (self.basis.flip_table >= 0).sum(axis=1)
        )
        return float(np.max(np.abs(self.diag) + abs(self.coupling) * n_flips))

    def expectation(self, amplitudes: np.ndarray) -> float:
        return float(np.vdot(amplitudes, self.matvec(amplitudes)).real)


def build_pxp(basis: Basis, drive: DriveParams) -> HamiltonianMatrix:
    """(Omega/2) sum_i P_{i-1} X_i P_{i+1} with identity beyond the chain ends."""
    if basis.kind is not BasisKind.BLOCKADED:
        raise ValueError("PXP Hamiltonian requires the blockaded basis")
    if not drive.is_resonant():
        raise ParameterError("PXP model assumes resonant driving; all detunings must be zero")
    return HamiltonianMatrix(basis, np.zeros(basis.dim), TWO_PI * drive.rabi_mhz / 2.0)


def pair_couplings_mhz(geometry: ChainGeometry, interaction: InteractionParams) -> np.ndarray:
    """Symmetric matrix of V(r_ij) in MHz (zero diagonal)."""
    n = geometry.n_sites
    pos = np.asarray(geometry.positions, dtype=float)
    V = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if interaction.max_range is not None and j - i > interaction.max_range:
                continue
            r = abs(pos[j] - pos[i])
            if r < 1e-9:
                raise GeometryError(f"sites {i + 1} and {j + 1} coincide")
            V[i, j] = V[j, i] = interaction.strength(r)
    return V


def rydberg_diagonal(
    basis: Basis, geometry: ChainGeometry, drive: DriveParams, interaction: InteractionParams
) -> np.ndarray:
    n = basis.n_sites
    occ = basis.occupations.astype(float)
    det = drive.detuning_mhz + drive.site_shift(n) - drive.ac_stark(n)
    diag = -occ @ det
    V = pair_couplings_mhz(geometry, interaction)
    # sum_{i<j} V_ij n_i n_j = 0.5 n^T V n
    diag += 0.5 * np.einsum("ki,ki->k", occ @ V, occ)
    return TWO_PI * diag


def build_rydberg(
    basis: Basis, geometry: ChainGeometry, drive: DriveParams, interaction: InteractionParams
) -> HamiltonianMatrix:
    """Full Rydberg Hamiltonian with every pair coupled through the actual positions.

    Meant for the full basis.  On the blockaded basis the result is the
    restriction P H P of the full operator.
    """
    if geometry.n_sites != basis.n_sites:
        raise GeometryError(f"geometry has {geometry.n_sites} sites, basis has {basis.n_sites}")
    diag = rydberg_diagonal(basis, geometry, drive, interaction)
    return HamiltonianMatrix(basis, diag, TWO_PI * drive.rabi_mhz / 2.0)


def restrict(h: HamiltonianMatrix, sub: Basis) -> HamiltonianMatrix:
    """P H P onto a sub-basis (full -> blockaded)."""
    if sub.same_as(h.basis):
        return h
    idx = h.basis.indices_of_codes(sub.codes)
    if np.any(idx < 0):
        raise ValueError("sub-basis is not contained in the Hamiltonian's basis")
    return HamiltonianMatrix(sub, h.diag[idx], h.coupling)


def compensation_detuning(interaction: InteractionParams, spacing: float | None = None) -> float:
    """2 * V_NNN in MHz for a regular chain of the given spacing."""
    return 2.0 * interaction.nnn_mhz(spacing)


def flip_drive_sign(drive: DriveParams) -> DriveParams:
    return replace(drive, rabi_mhz=-drive.rabi_mhz)
