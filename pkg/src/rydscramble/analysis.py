"""Wavefront extraction, line-shape fits, decay envelopes and the compensation scan."""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import curve_fit

from .otoc import OTOCGrid

log = logging.getLogger(__name__)

EXACT_SNR_FLOOR = 0.02
DEFAULT_WINDOW = (0.0, 3.0)  # normalized time Omega T / 2 pi


class FitError(ValueError):
    pass


class Shape(str, enum.Enum):
    LINEAR = "linear"
    LOG = "log"
    POWER = "power"


@dataclass
class Wavefront:
    """Half-maximum wavefront. ``points`` rows are (time_us, distance)."""

    points: np.ndarray
    sides: np.ndarray  # (n_points, 2): left and right distances
    excluded: list = field(default_factory=list)  # (time_us, reason)
    addressed_site: int = 0
    max_distance: float = 0.0

    def __iter__(self):
        return iter(map(tuple, self.points))

    def __len__(self):
        return len(self.points)

    @property
    def reached_boundary(self) -> bool:
        return any(r == "boundary" for _, r in self.excluded)


@dataclass
class FitReport:
    shape: Shape
    velocity: float  # sites per normalized time
    velocity_per_us: float
    velocity_stderr: float
    r_squared: float
    wavefront_points: list
    excluded_points: list = field(default_factory=list)
    exponent: float | None = None
    exponent_stderr: float | None = None
    rabi_mhz: float | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["shape"] = self.shape.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def subtract_background(grid: OTOCGrid, reference_sites: Sequence[int]) -> OTOCGrid:
    """Remove the per-time mean over ``reference_sites`` (1-based), clamped at zero."""
    ref = [int(s) for s in reference_sites]
    if not ref:
        raise ValueError("reference site set is empty")
    for s in ref:
        if not 1 <= s <= grid.n_sites:
            raise IndexError(f"reference site {s} outside 1..{grid.n_sites}")
    bg = grid.c_values[np.asarray(ref) - 1].mean(axis=0)
    out = np.clip(grid.c_values - bg[None, :], 0.0, None)
    return grid.with_values(out, meta={**grid.meta, "background_sites": ref})


def default_reference_sites(n_sites: int) -> list[int]:
    return [1, n_sites] if n_sites > 1 else [1]


def _side_crossing(vals: np.ndarray, half: float, floor: float = 0.0) -> float:
    """Outermost half-max crossing along one side; vals[0] is the addressed site.

    Returns len(vals) - 1 when the signal stays above half all the way out,
    and 0 when nothing beyond the addressed site rises above ``floor``.
    """
    R = len(vals) - 1
    if R == 0 or np.max(vals[1:]) < floor:
        return 0.0
    for m in range(R, -1, -1):
        if vals[m] >= half:
            if m == R:
                return float(R)
            return m + (vals[m] - half) / (vals[m] - vals[m + 1])
    return 0.0


def extract_wavefront(
    grid: OTOCGrid,
    addressed_site: int | None = None,
    snr_floor: float | None = None,
    combine: str = "mean",
) -> Wavefront:
    """Half-maximum wavefront of each time slice.

    Distances run outward from ``addressed_site`` on both sides; the two sides
    are averaged (``combine="sum"`` returns the full width instead).  A side
    with no signal beyond the addressed site contributes distance 0.  Slices
    at t = 0, below the signal floor, or whose crossing sits at the chain end
    on either side are excluded with a reason.
    """
    a = addressed_site or grid.addressed_site
    if a is None:
        raise ValueError("addressed_site is required")
    n = grid.n_sites
    i0 = a - 1
    left = grid.c_values[i0::-1]  # distance 0..a-1
    right = grid.c_values[i0:]  # distance 0..n-a
    pts, sides, excluded = [], [], []
    for k, t in enumerate(grid.times_us):
        col = grid.c_values[:, k]
        peak = float(col.max())
        if snr_floor is None:
            floor = EXACT_SNR_FLOOR if grid.stderr is None else 3.0 * float(np.mean(grid.stderr[:, k]))
        else:
            floor = snr_floor
        if t <= 0:
            excluded.append((float(t), "zero time"))
            continue
        if peak <= 0 or peak < floor:
            excluded.append((float(t), "below snr floor"))
            continue
        half = peak / 2
        ds = []
        for side in (left[:, k], right[:, k]):
            ds.append(_side_crossing(side, half, floor))
        edge = [len(left) - 1, len(right) - 1]
        if any(len(s) > 1 and d >= e - 1e-12 for d, e, s in zip(ds, edge, (left, right))):
            excluded.append((float(t), "boundary"))
            continue
        d = float(np.sum(ds)) if combine == "sum" else float(np.mean(ds))
        pts.append((float(t), d))
        sides.append(ds)
    if not pts:
        reasons = {}
        for _, r in excluded:
            reasons[r] = reasons.get(r, 0) + 1
        raise FitError(f"every time slice was excluded: {reasons}")
    return Wavefront(
        np.asarray(pts), np.asarray(sides), excluded, a, float(min(a - 1, n - a))
    )


def _r2(d, pred):
    ss_tot = float(((d - d.mean()) ** 2).sum())
    ss_res = float(((d - pred) ** 2).sum())
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else (1.0 if ss_res < 1e-24 else 0.0)


def _through_origin(x, d, w):
    sxx = float(np.sum(w * x * x))
    v = float(np.sum(w * x * d)) / sxx
    dof = max(len(d) - 1, 1)
    se = float(np.sqrt(np.sum(w * (d - v * x) ** 2) / dof / sxx))
    return v, se


def fit_velocity(
    points,
    shape: Shape | str = Shape.LINEAR,
    rabi_mhz: float = 1.0,
    window: tuple[float, float] | None = None,
    weights=None,
    excluded: Sequence | None = None,
) -> FitReport:
    """Least-squares fit of d(t) in normalized time t = rabi_mhz * time_us.

    Linear d = v t and Log d = v log(t + 1) are one-parameter fits through the
    origin; Power d = v t^alpha has two parameters.  ``weights`` (per point)
    switch to weighted least squares.  Standard errors are OLS parameter errors.
    """
    shape = Shape(shape)
    excluded = list(excluded or [])
    if isinstance(points, Wavefront):
        excluded = excluded + list(points.excluded)
        points = points.points
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    t = P[:, 0] * rabi_mhz
    d = P[:, 1]
    w = np.ones_like(d) if weights is None else np.asarray(weights, dtype=float)
    if window is not None:
        lo, hi = window
        keep = (t >= lo - 1e-12) & (t <= hi + 1e-12)
        excluded += [(float(x), "outside window") for x in P[~keep, 0]]
        t, d, w, P = t[keep], d[keep], w[keep], P[keep]
    if len(d) < 3:
        raise FitError(f"need at least 3 wavefront points, have {len(d)}")
    if np.ptp(t) == 0:
        raise FitError("degenerate design: all points at one time")
    alpha = alpha_se = None
    if shape is Shape.LINEAR:
        v, se = _through_origin(t, d, w)
        pred = v * t
    elif shape is Shape.LOG:
        x = np.log(t + 1.0)
        v, se = _through_origin(x, d, w)
        pred = v * x
    else:
        v0, _ = _through_origin(t, d, w)
        try:
            popt, pcov = curve_fit(
                lambda x, v, a: v * np.power(x, a), t, d, p0=(v0, 1.0), sigma=1 / np.sqrt(w),
                maxfev=20000,
            )
        except RuntimeError as exc:
            raise FitError(f"power-law fit did not converge: {exc}") from exc
        v, alpha = map(float, popt)
        se, alpha_se = map(float, np.sqrt(np.diag(pcov)))
        pred = v * t**alpha
    return FitReport(
        shape,
        float(v),
        float(v * rabi_mhz),
        float(se),
        _r2(d, pred),
        [tuple(map(float, p)) for p in P],
        excluded,
        alpha,
        alpha_se,
        rabi_mhz,
    )


def velocity_from_grid(
    grid: OTOCGrid,
    shape: Shape | str = Shape.LINEAR,
    window: tuple[float, float] | None = DEFAULT_WINDOW,
    subtract: bool = True,
    reference_sites: Sequence[int] | None = None,
    snr_floor: float | None = None,
) -> FitReport:
    """Background subtraction, wavefront extraction and fit in one call."""
    if grid.rabi_mhz is None:
        raise ValueError("grid needs rabi_mhz for normalized fitting")
    if subtract:
        grid = subtract_background(grid, reference_sites or default_reference_sites(grid.n_sites))
    wf = extract_wavefront(grid, grid.addressed_site, snr_floor)
    return fit_velocity(wf, shape, abs(grid.rabi_mhz), window)


# --------------------------------------------------------------------------
# decay envelope


@dataclass
class DecayReport:
    peak_times_us: list
    peak_values: list
    slope_per_us: float  # d ln C_peak / dt
    timescale_us: float  # -1 / slope, inf for a non-decaying envelope
    amplitude: float
    r_squared: float


def local_maxima(y: np.ndarray) -> list[int]:
    """Indices exceeding both neighbours; a flat-topped peak reports its first index."""
    y = np.asarray(y, dtype=float)
    out = []
    k = 1
    while k < len(y) - 1:
        if y[k] > y[k - 1]:
            j = k
            while j + 1 < len(y) and y[j + 1] == y[k]:
                j += 1
            if j + 1 < len(y) and y[j + 1] < y[k]:
                out.append(k)
            k = j + 1
        else:
            k += 1
    return out


def fit_decay_envelope(grid: OTOCGrid, min_prominence: float = 0.0) -> DecayReport:
    """Envelope max_i C_i(t), its local maxima, and a fit of ln(peak) linear in time.

    A constant envelope has no interior maxima; it is then treated as a flat
    peak sequence with zero slope.
    """
    env = grid.c_values.max(axis=0)
    t = grid.times_us
    if np.ptp(env) == 0 and len(env) >= 2:
        return DecayReport([float(t[0]), float(t[-1])], [float(env[0])] * 2, 0.0, np.inf,
                           float(env[0]), 1.0)
    idx = local_maxima(env)
    if min_prominence > 0:
        idx = [i for i in idx if env[i] - min(env[: i + 1].min(), env[i:].min()) >= min_prominence]
    if len(idx) < 2:
        raise FitError(f"found {len(idx)} envelope peaks; need at least 2")
    tp, cp = t[idx], env[idx]
    if np.any(cp <= 0):
        raise FitError("non-positive envelope peak")
    y = np.log(cp)
    A = np.vstack([np.ones_like(tp), tp]).T
    (c0, slope), *_ = np.linalg.lstsq(A, y, rcond=None)
    tau = -1.0 / slope if slope < 0 else np.inf
    return DecayReport(tp.tolist(), cp.tolist(), float(slope), float(tau), float(np.exp(c0)),
                       _r2(y, c0 + slope * tp))


# --------------------------------------------------------------------------
# compensation scan and finite-size check


@dataclass
class CompensationReport:
    best_detuning_mhz: float
    detunings_mhz: list
    distances: list
    window_us: float


def optimize_compensation(exp, detuning_grid: Sequence[float], window_us: float | None = None,
                          reference: OTOCGrid | None = None) -> CompensationReport:
    """Frobenius distance between full-Rydberg and ideal PXP C grids versus detuning.

    ``exp`` is an ``EchoExperiment``; its time grid is cut at ``window_us``
    (default: the end of the default velocity-fitting window).
    """
    from .experiment import run_otoc

    grid = list(map(float, detuning_grid))
    if not grid:
        raise ValueError("detuning grid is empty")
    if window_us is None:
        window_us = DEFAULT_WINDOW[1] / exp.rabi_mhz
    exp = replace(exp, t_stop_us=min(exp.t_stop_us, window_us))
    if reference is None:
        reference = run_otoc(replace(exp, model="pxp", basis=None))
    dist = []
    for delta in grid:
        g = run_otoc(replace(exp, model="rydberg", compensation=False, detuning_mhz=delta, basis=None))
        dist.append(float(np.linalg.norm(g.c_values - reference.c_values)))
        log.info("compensation %.4f MHz: distance %.5f", delta, dist[-1])
    best = grid[int(np.argmin(dist))]
    return CompensationReport(best, grid, dist, float(window_us))


@dataclass
class FiniteSizeEntry:
    n_sites: int
    fit: FitReport
    boundary_reached: bool


def finite_size_check(exp, sizes: Sequence[int], window: tuple[float, float] = DEFAULT_WINDOW,
                      subtract: bool = False) -> tuple[list[FiniteSizeEntry], float]:
    """Fit the same experiment at several chain lengths (addressing the centre).

    Returns the per-size entries and the relative spread (max - min) / mean of
    the fitted velocities.  An entry is flagged when its wavefront reached the
    chain end inside the window.
    """
    from .experiment import run_otoc

    out = []
    for n in sizes:
        e = replace(exp, n_sites=n, operator_site=(n + 1) // 2,
                    t_stop_us=min(exp.t_stop_us, window[1] / exp.rabi_mhz))
        grid = run_otoc(e)
        if subtract:
            grid = subtract_background(grid, default_reference_sites(n))
        wf = extract_wavefront(grid, e.operator_site)
        fit = fit_velocity(wf, Shape.LINEAR, e.rabi_mhz, window)
        hit = wf.reached_boundary or bool(np.any(wf.points[:, 1] >= (n - 1) / 2 - 1e-9))
        if hit:
            log.warning("N=%d: wavefront reached the boundary inside the window", n)
        out.append(FiniteSizeEntry(n, fit, hit))
    v = np.array([e.fit.velocity for e in out])
    spread = float(np.ptp(v) / np.mean(v)) if len(v) > 1 and np.mean(v) != 0 else 0.0
    return out, spread
