"""Chain geometry, computational bases and product states.

Configurations are strings over ``{g, r}`` with site 1 leftmost.  Internally a
configuration is an integer code whose most significant bit is site 1, so
lexicographic order of the strings (``g < r``) coincides with numeric order of
the codes.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

MAX_SITES = 24


class ConstraintError(ValueError):
    """A configuration or operation violates the Rydberg blockade."""


class BasisSizeError(ValueError):
    pass


class BasisMismatchError(ValueError):
    pass


class BasisKind(str, enum.Enum):
    FULL = "full"
    BLOCKADED = "blockaded"


@dataclass(frozen=True)
class ChainGeometry:
    """Open 1D chain; ``positions`` in micrometers."""

    n_sites: int
    spacing: float = 6.0
    positions: tuple[float, ...] = ()

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"n_sites must be positive, got {self.n_sites}")
        if not self.positions:
            object.__setattr__(
                self, "positions", tuple(float(i * self.spacing) for i in range(self.n_sites))
            )
        if len(self.positions) != self.n_sites:
            raise ValueError("positions must have n_sites entries")

    @classmethod
    def regular(cls, n_sites: int, spacing: float = 6.0) -> "ChainGeometry":
        return cls(n_sites, spacing)

    def displaced(self, offsets: Sequence[float]) -> "ChainGeometry":
        """Copy with per-site offsets added (order is not enforced here)."""
        pos = np.asarray(self.positions) + np.asarray(offsets, dtype=float)
        return ChainGeometry(self.n_sites, self.spacing, tuple(float(x) for x in pos))

    def distance(self, i: int, j: int) -> float:
        return abs(self.positions[j] - self.positions[i])


@dataclass(frozen=True)
class SpinConfiguration:
    bits: tuple[int, ...]

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError(f"bits must be 0 (g) or 1 (r): {self.bits}")

    @classmethod
    def from_string(cls, s: str) -> "SpinConfiguration":
        s = s.strip()
        if not s or set(s) - {"g", "r"}:
            raise ValueError(f"configuration must be a nonempty string over {{g, r}}: {s!r}")
        return cls(tuple(int(c == "r") for c in s))

    @classmethod
    def from_code(cls, code: int, n_sites: int) -> "SpinConfiguration":
        return cls(tuple((int(code) >> (n_sites - 1 - i)) & 1 for i in range(n_sites)))

    @classmethod
    def ground(cls, n_sites: int) -> "SpinConfiguration":
        return cls((0,) * n_sites)

    @property
    def n_sites(self) -> int:
        return len(self.bits)

    @property
    def code(self) -> int:
        c = 0
        for b in self.bits:
            c = (c << 1) | b
        return c

    def flipped(self, site: int) -> "SpinConfiguration":
        """Flip the 0-based ``site``."""
        b = list(self.bits)
        b[site] ^= 1
        return SpinConfiguration(tuple(b))

    def is_blockade_allowed(self) -> bool:
        return not any(a and b for a, b in zip(self.bits, self.bits[1:]))

    def __str__(self) -> str:
        return "".join("r" if b else "g" for b in self.bits)


def as_config(config: SpinConfiguration | str) -> SpinConfiguration:
    if isinstance(config, SpinConfiguration):
        return config
    return SpinConfiguration.from_string(config)


def fibonacci(n: int) -> int:
    """F(n) with F(1) = F(2) = 1."""
    a, b = 0, 1
    for _ in range(n):
        a, b = b, a + b
    return a


@dataclass(frozen=True, eq=False)
class Basis:
    kind: BasisKind
    n_sites: int
    codes: np.ndarray = field(repr=False)

    def __len__(self) -> int:
        return len(self.codes)

    @property
    def dim(self) -> int:
        return len(self.codes)

    @property
    def states(self) -> list[SpinConfiguration]:
        return [SpinConfiguration.from_code(c, self.n_sites) for c in self.codes]

    @cached_property
    def occupations(self) -> np.ndarray:
        """``(dim, n_sites)`` array of Rydberg occupations n_i^r."""
        shifts = np.arange(self.n_sites - 1, -1, -1, dtype=np.int64)
        return ((self.codes[:, None] >> shifts) & 1).astype(np.int8)

    @cached_property
    def flip_table(self) -> np.ndarray:
        """``(dim, n_sites)`` ordinal of the state with site i flipped, or -1."""
        cols = []
        for i in range(self.n_sites):
            cols.append(self.indices_of_codes(self.codes ^ (1 << (self.n_sites - 1 - i))))
        return np.ascontiguousarray(np.stack(cols, axis=1))

    @cached_property
    def parity(self) -> np.ndarray:
        """Eigenvalues of prod_i sigma_z^(i) on each basis state."""
        n_g = self.n_sites - self.occupations.sum(axis=1)
        return np.where(n_g % 2 == 0, 1.0, -1.0)

    def site_mask(self, site: int) -> np.ndarray:
        """Boolean mask of basis states with r at 0-based ``site``."""
        return ((self.codes >> (self.n_sites - 1 - site)) & 1).astype(bool)

    def contains_code(self, code: int) -> bool:
        if self.kind is BasisKind.FULL:
            return 0 <= code < (1 << self.n_sites)
        k = np.searchsorted(self.codes, code)
        return bool(k < len(self.codes) and self.codes[k] == code)

    def index_of(self, config: SpinConfiguration | str) -> int:
        config = as_config(config)
        if config.n_sites != self.n_sites:
            raise ValueError(f"configuration has {config.n_sites} sites, basis has {self.n_sites}")
        code = config.code
        if not self.contains_code(code):
            raise ConstraintError(f"{config} has adjacent Rydberg atoms; not in blockaded basis")
        return code if self.kind is BasisKind.FULL else int(np.searchsorted(self.codes, code))

    def indices_of_codes(self, codes: np.ndarray) -> np.ndarray:
        """Vectorized ordinal lookup; -1 where a code is outside the basis."""
        codes = np.asarray(codes, dtype=np.int64)
        if self.kind is BasisKind.FULL:
            return codes.copy()
        k = np.searchsorted(self.codes, codes)
        k = np.minimum(k, len(self.codes) - 1)
        return np.where(self.codes[k] == codes, k, -1)

    def same_as(self, other: "Basis") -> bool:
        return self is other or (
            self.kind is other.kind and self.n_sites == other.n_sites
        )


def build_basis(n_sites: int, kind: BasisKind | str = BasisKind.FULL, max_sites: int = MAX_SITES) -> Basis:
    kind = BasisKind(kind)
    if n_sites < 1:
        raise ValueError("n_sites must be >= 1")
    if n_sites > max_sites:
        raise BasisSizeError(f"n_sites={n_sites} exceeds the configured cap of {max_sites} sites")
    codes = np.arange(1 << n_sites, dtype=np.int64)
    if kind is BasisKind.BLOCKADED:
        codes = codes[(codes & (codes >> 1)) == 0]
    return Basis(kind, n_sites, codes)


@dataclass(eq=False)
class StateVector:
    basis: Basis
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (self.basis.dim,):
            raise ValueError(
                f"amplitude vector has shape {self.amplitudes.shape}, basis dimension is {self.basis.dim}"
            )

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def densities(self) -> np.ndarray:
        """<n_i^r> for every site."""
        return self.probabilities() @ self.basis.occupations

    def overlap(self, other: "StateVector") -> complex:
        check_same_basis(self.basis, other.basis)
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.overlap(other)) ** 2

    def copy_with(self, amplitudes: np.ndarray) -> "StateVector":
        return StateVector(self.basis, amplitudes)


def check_same_basis(a: Basis, b: Basis) -> None:
    if not a.same_as(b):
        raise BasisMismatchError(
            f"basis mismatch: {a.kind.value}/{a.n_sites} vs {b.kind.value}/{b.n_sites}"
        )


def product_state(basis: Basis, config: SpinConfiguration | str) -> StateVector:
    amps = np.zeros(basis.dim, dtype=complex)
    amps[basis.index_of(config)] = 1.0
    return StateVector(basis, amps)


def neel_state(n_sites: int, phase: str = "Z2") -> SpinConfiguration:
    """``Z2`` has r on odd (1-based) sites, ``Z2bar`` on even sites."""
    key = phase.lower()
    if key not in ("z2", "z2bar"):
        raise ValueError(f"phase must be 'Z2' or 'Z2bar', got {phase!r}")
    first = 1 if key == "z2" else 0
    return SpinConfiguration(tuple(first if i % 2 == 0 else 1 - first for i in range(n_sites)))


def find_clusters(config: SpinConfiguration | str) -> list[tuple[int, int]]:
    """Maximal runs of >= 2 adjacent r, as 1-based inclusive (start, end)."""
    bits = as_config(config).bits
    runs = []
    start = None
    for i, b in enumerate(list(bits) + [0]):
        if b and start is None:
            start = i
        elif not b and start is not None:
            if i - start >= 2:
                runs.append((start + 1, i))
            start = None
    return runs


def parse_configs(strings: Iterable[str]) -> list[SpinConfiguration]:
    return [SpinConfiguration.from_string(s) for s in strings]
