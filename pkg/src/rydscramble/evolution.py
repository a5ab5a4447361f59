"""Unitary propagation and the Loschmidt-echo protocol."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .hamiltonian import HamiltonianMatrix
from .lattice import Basis, BasisKind, ConstraintError, StateVector, check_same_basis

log = logging.getLogger(__name__)


class Method(str, enum.Enum):
    AUTO = "auto"
    DENSE = "dense"
    KRYLOV = "krylov"


@dataclass(frozen=True)
class Propagator:
    """How e^{-iHt} is applied.

    ``step_us`` caps a single Krylov step; ``None`` lets the error estimate
    alone choose the step.
    """

    method: Method = Method.AUTO
    tolerance: float = 1e-10
    krylov_dim: int = 30
    step_us: float | None = 0.01
    dense_max_dim: int = 4096

    def resolve(self, dim: int) -> Method:
        m = Method(self.method)
        if m is Method.AUTO:
            return Method.DENSE if dim <= self.dense_max_dim else Method.KRYLOV
        return m


DEFAULT_PROPAGATOR = Propagator()


class Operator(str, enum.Enum):
    SIGMA_Z = "sigma_z"
    SIGMA_X = "sigma_x"
    SIGMA_Y = "sigma_y"
    NONE = "none"


@dataclass(frozen=True)
class EchoSchedule:
    forward_time_us: float
    operator: Operator = Operator.SIGMA_Z
    operator_site: int = 7  # 1-based
    backward_time_us: float | None = None

    def __post_init__(self):
        if self.forward_time_us < 0 or (self.backward_time_us or 0) < 0:
            raise ValueError("echo times must be >= 0")
        object.__setattr__(self, "operator", Operator(self.operator))
        if self.operator_site < 1:
            raise ValueError("operator_site is 1-based")

    @property
    def backward(self) -> float:
        return self.forward_time_us if self.backward_time_us is None else self.backward_time_us


# --------------------------------------------------------------------------
# Krylov-Lanczos


def rmatmul(a: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Real matrix times complex array without upcasting the matrix."""
    if np.iscomplexobj(a):
        return a @ x
    return a @ x.real + 1j * (a @ x.imag)


def _small_expm(alpha, beta, dt):
    ev, U = eigh_tridiagonal(alpha, beta) if len(alpha) > 1 else (alpha.copy(), np.ones((1, 1)))
    return U @ (np.exp(-1j * ev * dt) * U[0])


def krylov_expm(
    h: HamiltonianMatrix,
    v: np.ndarray,
    t: float,
    krylov_dim: int = 30,
    tolerance: float = 1e-10,
    max_step: float | None = None,
) -> np.ndarray:
    """e^{-iHt} v by restarted Lanczos with adaptive step size.

    The step error is estimated as beta_m |[e^{-iT dt}]_{m,1}| times the
    vector norm; steps are shrunk until that is below ``tolerance``.
    """
    out = np.array(v, dtype=complex)
    if t == 0:
        return out
    m = max(2, min(krylov_dim, h.dim))
    dt = min(t, max_step or t, 0.5 * m / max(h.norm_bound(), 1e-12))
    done = 0.0
    Q = np.empty((m, h.dim), dtype=complex)
    w = np.empty(h.dim, dtype=complex)
    while t - done > 1e-15 * max(t, 1.0):
        dt = min(dt, t - done)
        if max_step:
            dt = min(dt, max_step)
        beta0 = np.linalg.norm(out)
        if beta0 == 0:
            return out
        Q[0] = out / beta0
        alpha = np.zeros(m)
        beta = np.zeros(m)
        k = m
        happy = False
        for j in range(m):
            h.matvec(Q[j], w)
            alpha[j] = np.vdot(Q[j], w).real
            w -= alpha[j] * Q[j]
            if j:
                w -= beta[j - 1] * Q[j - 1]
            # one pass of local reorthogonalization against the last two vectors
            for q in Q[max(0, j - 1): j + 1]:
                w -= np.vdot(q, w) * q
            beta[j] = np.linalg.norm(w)
            if beta[j] < 1e-12 * max(1.0, abs(alpha[j])):
                k = j + 1
                happy = True
                break
            if j + 1 < m:
                Q[j + 1] = w / beta[j]
            if j >= 7 and j % 4 == 3 and j + 1 < m:
                y = _small_expm(alpha[: j + 1], beta[:j], dt)
                if beta[j] * abs(y[-1]) * beta0 <= tolerance:
                    k = j + 1
                    break
        a, b = alpha[:k], beta[: k - 1]
        while True:
            y = _small_expm(a, b, dt)
            err = 0.0 if happy else beta[k - 1] * abs(y[-1]) * beta0
            if err <= tolerance or dt < 1e-9:
                break
            dt *= 0.5
        out = beta0 * (y @ Q[:k])
        done += dt
        if k == m and err > 0.1 * tolerance:
            continue
        dt *= 1.5
    return out


# --------------------------------------------------------------------------
# propagation


def _dense_evolve(h: HamiltonianMatrix, amps: np.ndarray, t) -> np.ndarray:
    E, V = h.eigh
    c = V.T @ amps if not np.iscomplexobj(amps) else rmatmul(V.T, amps)
    return rmatmul(V, np.exp(-1j * E * t) * c)


def evolve_amplitudes(
    h: HamiltonianMatrix, amps: np.ndarray, t: float, propagator: Propagator = DEFAULT_PROPAGATOR
) -> np.ndarray:
    if t < 0:
        raise ValueError("evolution time must be >= 0")
    if t == 0:
        return np.array(amps, dtype=complex)
    if propagator.resolve(h.dim) is Method.DENSE:
        return _dense_evolve(h, amps, t)
    return krylov_expm(h, amps, t, propagator.krylov_dim, propagator.tolerance, propagator.step_us)


def evolve(
    state: StateVector, h: HamiltonianMatrix, t_us: float, propagator: Propagator = DEFAULT_PROPAGATOR
) -> StateVector:
    """e^{-iHt}|psi>."""
    check_same_basis(state.basis, h.basis)
    return StateVector(state.basis, evolve_amplitudes(h, state.amplitudes, t_us, propagator))


# --------------------------------------------------------------------------
# local operators; ``site`` is 1-based throughout the public API


def _check_site(basis: Basis, site: int) -> int:
    if not 1 <= site <= basis.n_sites:
        raise IndexError(f"site {site} outside chain 1..{basis.n_sites}")
    return site - 1


def sigma_z_diagonal(basis: Basis, site: int) -> np.ndarray:
    """+1 on r, -1 on g at the 1-based ``site``."""
    i = _check_site(basis, site)
    return np.where(basis.site_mask(i), 1.0, -1.0)


def _flip(basis: Basis, amps: np.ndarray, site: int, project: bool) -> np.ndarray:
    i = _check_site(basis, site)
    target = basis.flip_table[:, i]
    out = np.zeros_like(amps)
    ok = target >= 0
    if not project and np.any(np.abs(amps[~ok]) > 1e-12):
        raise ConstraintError(
            f"sigma_x at site {site} would create adjacent Rydberg atoms outside the blockaded basis"
        )
    out[target[ok]] = amps[ok]
    return out


def apply_operator(
    basis: Basis, amps: np.ndarray, op: Operator | str, site: int, project: bool = False
) -> np.ndarray:
    """Apply a single-site Pauli to ``amps`` (first axis indexes the basis)."""
    op = Operator(op)
    if op is Operator.NONE:
        return np.array(amps, dtype=complex)
    if op is Operator.SIGMA_Z:
        z = sigma_z_diagonal(basis, site)
        return amps * (z if amps.ndim == 1 else z[:, None])
    out = _flip(basis, amps, site, project)
    if op is Operator.SIGMA_Y:
        # sigma_y|g> = i|r>, sigma_y|r> = -i|g>, with |r> the +1 sigma_z state
        z = sigma_z_diagonal(basis, site)
        out = out * (1j * z if out.ndim == 1 else 1j * z[:, None])
    return out


def apply_sigma_z(state: StateVector, site: int) -> StateVector:
    return state.copy_with(apply_operator(state.basis, state.amplitudes, Operator.SIGMA_Z, site))


def apply_sigma_x(state: StateVector, site: int, project: bool = False) -> StateVector:
    return state.copy_with(
        apply_operator(state.basis, state.amplitudes, Operator.SIGMA_X, site, project)
    )


def apply_sigma_y(state: StateVector, site: int, project: bool = False) -> StateVector:
    return state.copy_with(
        apply_operator(state.basis, state.amplitudes, Operator.SIGMA_Y, site, project)
    )


# --------------------------------------------------------------------------
# echoes

Event = tuple[float, Callable[[np.ndarray], np.ndarray]]


def evolve_with_events(h, amps, t0, t1, events, propagator):
    """Evolve from t0 to t1 applying each (time, fn) with t0 <= time < t1 in order."""
    now = t0
    for when, fn in events:
        if when < t0 or when >= t1:
            continue
        amps = evolve_amplitudes(h, amps, when - now, propagator)
        amps = fn(amps)
        now = when
    return evolve_amplitudes(h, amps, t1 - now, propagator)


def loschmidt_echo(
    initial: StateVector,
    h_forward: HamiltonianMatrix,
    h_backward: HamiltonianMatrix,
    schedule: EchoSchedule,
    propagator: Propagator = DEFAULT_PROPAGATOR,
    events: Sequence[Event] = (),
) -> StateVector:
    """e^{-i H_b t_b} W e^{-i H_f t_f} |psi>.

    ``events`` are (time since start, fn) pairs applied along the way, e.g.
    stochastic jumps; the forward leg covers [0, t_f) and the backward leg
    [t_f, t_f + t_b).
    """
    for h in (h_forward, h_backward):
        check_same_basis(initial.basis, h.basis)
    events = sorted(events, key=lambda e: e[0])
    tf, tb = schedule.forward_time_us, schedule.backward
    amps = evolve_with_events(h_forward, initial.amplitudes, 0.0, tf, events, propagator)
    amps = apply_operator(initial.basis, amps, schedule.operator, schedule.operator_site)
    amps = evolve_with_events(h_backward, amps, tf, tf + tb, events, propagator)
    return initial.copy_with(amps)


def forward_scan(
    initial: StateVector,
    h: HamiltonianMatrix,
    times: Sequence[float],
    propagator: Propagator = DEFAULT_PROPAGATOR,
) -> np.ndarray:
    """Amplitudes at each of the (sorted) ``times``; shape (len(times), dim)."""
    check_same_basis(initial.basis, h.basis)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) < 0) or (times.size and times[0] < 0):
        raise ValueError("times must be sorted and non-negative")
    if propagator.resolve(h.dim) is Method.DENSE:
        E, V = h.eigh
        c = rmatmul(V.T, initial.amplitudes.astype(complex))
        out = rmatmul(V, np.exp(-1j * np.outer(E, times)) * c[:, None]).T
        out[times == 0] = initial.amplitudes  # exact, not reconstructed through V
        return out
    out = np.empty((times.size, h.dim), dtype=complex)
    amps, now = initial.amplitudes.astype(complex), 0.0
    for k, t in enumerate(times):
        amps = evolve_amplitudes(h, amps, t - now, propagator)
        now = t
        out[k] = amps
    return out


def echo_scan(
    initial: StateVector,
    h_forward: HamiltonianMatrix,
    h_backward: HamiltonianMatrix,
    times: Sequence[float],
    operator: Operator | str = Operator.SIGMA_Z,
    site: int = 7,
    propagator: Propagator = DEFAULT_PROPAGATOR,
) -> np.ndarray:
    """Final echo amplitudes for every half-time t; shape (len(times), dim).

    Symmetric echoes (t_b = t_f).  The dense path batches all times into
    matrix products; the Krylov path steps forward incrementally and runs each
    backward leg separately.
    """
    for h in (h_forward, h_backward):
        check_same_basis(initial.basis, h.basis)
    times = np.asarray(times, dtype=float)
    basis = initial.basis
    fwd = forward_scan(initial, h_forward, times, propagator)
    mid = apply_operator(basis, fwd.T, operator, site).T
    if propagator.resolve(h_backward.dim) is Method.DENSE:
        E, V = h_backward.eigh
        g = rmatmul(V.T, mid.T)
        g *= np.exp(-1j * np.outer(E, times))
        return rmatmul(V, g).T
    out = np.empty_like(mid)
    for k, t in enumerate(times):
        out[k] = evolve_amplitudes(h_backward, mid[k], t, propagator)
    return out


def densities(basis: Basis, amps: np.ndarray) -> np.ndarray:
    """<n_i^r> for amplitude rows (..., dim) -> (..., n_sites)."""
    return (np.abs(amps) ** 2) @ basis.occupations


def is_full(basis: Basis) -> bool:
    return basis.kind is BasisKind.FULL
