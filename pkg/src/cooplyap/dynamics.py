"""Simplex dynamics driven by an environment.

The linear cooperative system y' = A(w_t) y is followed in mass-normalized
coordinates: theta = y / <y, 1> lives on the unit simplex and obeys

    theta' = A(w_t) theta - <A(w_t) theta, 1> theta,

while the removed mass grows at rate <A(w_t) theta, 1>, whose time integral
is the log growth factor.  Integration is classical fixed-step RK4; the log
growth advances through the same stage values, so for a pure time integrand
the accumulation is exactly Simpson's rule.  Environment handling per kind:

* periodic / quasi_periodic: the matrix is evaluated at the exact stage
  times, keeping the full fourth order of the step;
* markov_switch: steps are split exactly at the jump times, so every RK4
  step sees one constant matrix;
* circle_diffusion: the matrix is frozen per step at the step's left
  endpoint and the step size is clamped to the path grid.

After every step the simplex state is clipped (coordinates in [-1e-10, 0)
are zeroed, anything lower is an error) and renormalized to unit mass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .core_linalg import SimplexPoint, _hilbert_distance_rows
from .environment import (
    CircleDiffusionEnvironment,
    EnvironmentSpec,
    MarkovSwitchEnvironment,
    MetzlerMatrix,
    PeriodicEnvironment,
    QuasiPeriodicEnvironment,
)
from .errors import NumericalBlowupError

VECTOR_CLIP_FLOOR = -1e-10
MATRIX_CLIP_FLOOR = -1e-12


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Sampled normalized trajectory.

    ``times`` increases strictly from 0; each row of ``thetas`` lies on the
    unit simplex; ``log_growth[k]`` is the accumulated log mass growth over
    [0, times[k]]; ``growth_average[k]`` is log_growth[k] / times[k] (the
    instantaneous growth rate at k = 0).
    """

    times: np.ndarray
    thetas: np.ndarray
    log_growth: np.ndarray
    growth_average: np.ndarray

    def __post_init__(self):
        for arr in (self.times, self.thetas, self.log_growth, self.growth_average):
            arr.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.thetas.shape[1]

    def theta_point(self, k: int) -> SimplexPoint:
        return SimplexPoint(self.thetas[k])

    @property
    def final_theta(self) -> np.ndarray:
        return self.thetas[-1]


@dataclass(frozen=True, eq=False)
class FundamentalMatrix:
    """Column-normalized fundamental solution at a given time.

    The true solution of M' = A(w_t) M, M(0) = Id, is recovered as
    ``matrix * exp(column_log_scales)`` columnwise; keeping the scales in
    log form avoids overflow on long horizons.  Entries are nonnegative and
    the diagonal is strictly positive (cooperative flows preserve both).
    """

    time: float
    matrix: np.ndarray
    column_log_scales: np.ndarray

    def __post_init__(self):
        if self.matrix.min() < 0.0:
            raise NumericalBlowupError(
                f"fundamental matrix has negative entry {self.matrix.min():g}"
            )
        if np.diag(self.matrix).min() <= 0.0:
            raise NumericalBlowupError(
                "fundamental matrix lost diagonal positivity (horizon too long "
                "for the contraction scale?)"
            )
        self.matrix.setflags(write=False)
        self.column_log_scales.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        """Unnormalized matrix; may overflow for large log scales."""
        return self.matrix * np.exp(self.column_log_scales)[None, :]


def projective_vector_field(matrix, theta) -> np.ndarray:
    """Tangent field of the mass-normalized flow: A theta - <A theta, 1> theta."""
    a = matrix.entries if isinstance(matrix, MetzlerMatrix) else np.asarray(matrix, dtype=float)
    th = theta.coords if isinstance(theta, SimplexPoint) else np.asarray(theta, dtype=float)
    if a.shape != (th.size, th.size):
        raise ValueError(f"matrix shape {a.shape} does not match state dimension {th.size}")
    image = a @ th
    return image - image.sum() * th


def _plan(horizon: float, step: float) -> tuple[int, bool]:
    n_full = int(math.floor(horizon / step + 1e-9))
    tail = (horizon - n_full * step) > step * 1e-9
    return n_full, tail


def _n_records(n_full: int, tail: bool, thin: int) -> int:
    n = 1 + n_full // thin
    if tail or n_full % thin != 0:
        n += 1
    return n


def _check_run_args(spec, horizon, step, thin):
    if not isinstance(spec, EnvironmentSpec):
        raise TypeError(f"expected an environment spec, got {type(spec).__name__}")
    if not (math.isfinite(horizon) and horizon > 0):
        raise ValueError(f"horizon must be positive and finite, got {horizon!r}")
    if not (math.isfinite(step) and step > 0):
        raise ValueError(f"step must be positive and finite, got {step!r}")
    if step >= horizon:
        raise ValueError(f"step {step!r} must be smaller than horizon {horizon!r}")
    if not isinstance(thin, int) or thin < 1:
        raise ValueError(f"thin must be a positive integer, got {thin!r}")


def _fourier_args(spec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    fmap = spec.matrix_map
    return (
        np.ascontiguousarray(fmap.base),
        np.ascontiguousarray(fmap.cos_coeffs),
        np.ascontiguousarray(fmap.sin_coeffs),
    )


def _smooth_motion(spec) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(spec, PeriodicEnvironment):
        phases0 = np.array([spec.initial_phase])
        speeds = np.array([1.0 / spec.timescale])
    else:
        phases0 = np.asarray(spec.initial_phases, dtype=float)
        speeds = np.asarray(spec.frequencies, dtype=float) / spec.timescale
    return phases0, speeds


def _markov_segments(spec, seed, horizon):
    if seed is None:
        raise ValueError("markov_switch integration needs a seed")
    path = spec.path(seed)
    jumps, states = path.segments_until(horizon / spec.timescale)
    return jumps * spec.timescale, states


def _frozen_phases(spec, seed, n_steps, step):
    if seed is None:
        raise ValueError("circle_diffusion integration needs a seed")
    path = spec.path(seed)
    lefts = np.arange(n_steps, dtype=float) * step
    return np.ascontiguousarray(path.values_at(lefts / spec.timescale))


def _status_to_error(status: int, floor: float):
    if status == 1:
        raise NumericalBlowupError(
            f"a coordinate fell below the clip floor {floor:g} during integration"
        )
    if status == 2:
        raise NumericalBlowupError("renormalization mass became nonpositive")


def integrate(
    spec: EnvironmentSpec,
    seed: int | None,
    theta0=None,
    *,
    horizon: float,
    step: float,
    thin: int = 1,
) -> TrajectoryRecord:
    """Integrate the simplex flow over [0, horizon], sampling every
    ``thin`` steps (the initial and final states are always recorded)."""
    return _integrate_with_trap(spec, seed, theta0, horizon=horizon, step=step, thin=thin)[0]


def _integrate_with_trap(
    spec: EnvironmentSpec,
    seed: int | None,
    theta0=None,
    *,
    horizon: float,
    step: float,
    thin: int = 1,
) -> tuple[TrajectoryRecord, np.ndarray]:
    """As :func:`integrate`, but also returns the full-resolution trapezoid
    of the growth integrand accumulated up to each record time."""
    _check_run_args(spec, horizon, step, thin)
    start = SimplexPoint.barycenter(spec.dim) if theta0 is None else (
        theta0 if isinstance(theta0, SimplexPoint) else SimplexPoint(np.asarray(theta0, dtype=float))
    )
    if start.dim != spec.dim:
        raise ValueError(f"theta0 has dimension {start.dim}, system needs {spec.dim}")
    theta = start.coords.copy()

    if isinstance(spec, (PeriodicEnvironment, QuasiPeriodicEnvironment)):
        n_full, tail = _plan(horizon, step)
        base, cosc, sinc = _fourier_args(spec)
        phases0, speeds = _smooth_motion(spec)
        rec_t, rec_theta, rec_ell, rec_trap = _alloc_vec(_n_records(n_full, tail, thin), spec.dim)
        status = _kernels.drive_smooth_vec(
            base, cosc, sinc, phases0, speeds, theta, horizon, step,
            n_full, 1 if tail else 0, thin, VECTOR_CLIP_FLOOR,
            rec_t, rec_theta, rec_ell, rec_trap,
        )
        _status_to_error(status, VECTOR_CLIP_FLOOR)
        a_init = spec.matrix_map.evaluate(phases0)
    elif isinstance(spec, MarkovSwitchEnvironment):
        n_full, tail = _plan(horizon, step)
        jumps, states = _markov_segments(spec, seed, horizon)
        mats = np.ascontiguousarray(spec.matrices_array())
        rec_t, rec_theta, rec_ell, rec_trap = _alloc_vec(_n_records(n_full, tail, thin), spec.dim)
        status = _kernels.drive_markov_vec(
            mats, states, jumps, theta, horizon, step,
            n_full, 1 if tail else 0, thin, VECTOR_CLIP_FLOOR,
            rec_t, rec_theta, rec_ell, rec_trap,
        )
        _status_to_error(status, VECTOR_CLIP_FLOOR)
        a_init = mats[states[0]]
    elif isinstance(spec, CircleDiffusionEnvironment):
        eff_step = min(step, spec.grid_step * min(1.0, spec.timescale))
        n_full, tail = _plan(horizon, eff_step)
        base, cosc, sinc = _fourier_args(spec)
        svals = _frozen_phases(spec, seed, n_full + (1 if tail else 0), eff_step)
        rec_t, rec_theta, rec_ell, rec_trap = _alloc_vec(_n_records(n_full, tail, thin), spec.dim)
        status = _kernels.drive_frozen_vec(
            base, cosc, sinc, svals, theta, horizon, eff_step,
            n_full, 1 if tail else 0, thin, VECTOR_CLIP_FLOOR,
            rec_t, rec_theta, rec_ell, rec_trap,
        )
        _status_to_error(status, VECTOR_CLIP_FLOOR)
        a_init = spec.matrix_map.evaluate(svals[:1, None])[0]
    else:
        raise TypeError(f"unknown environment spec {type(spec).__name__}")

    growth_avg = np.empty_like(rec_ell)
    growth_avg[0] = float(a_init.sum(axis=0) @ start.coords)
    np.divide(rec_ell[1:], rec_t[1:], out=growth_avg[1:])
    return TrajectoryRecord(rec_t, rec_theta, rec_ell, growth_avg), rec_trap


def _alloc_vec(n_records: int, dim: int):
    return (
        np.empty(n_records),
        np.empty((n_records, dim)),
        np.empty(n_records),
        np.empty(n_records),
    )


def matrix_trajectory(
    spec: EnvironmentSpec,
    seed: int | None,
    *,
    horizon: float,
    step: float,
    thin: int = 1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sampled fundamental solution: (times, column-normalized matrices,
    per-column log scales).  Same stepping rules as :func:`integrate`."""
    _check_run_args(spec, horizon, step, thin)
    d = spec.dim
    m = np.eye(d)

    if isinstance(spec, (PeriodicEnvironment, QuasiPeriodicEnvironment)):
        n_full, tail = _plan(horizon, step)
        base, cosc, sinc = _fourier_args(spec)
        phases0, speeds = _smooth_motion(spec)
        rec_t, rec_m, rec_scale = _alloc_mat(_n_records(n_full, tail, thin), d)
        status = _kernels.drive_smooth_mat(
            base, cosc, sinc, phases0, speeds, m, horizon, step,
            n_full, 1 if tail else 0, thin, MATRIX_CLIP_FLOOR, rec_t, rec_m, rec_scale,
        )
    elif isinstance(spec, MarkovSwitchEnvironment):
        n_full, tail = _plan(horizon, step)
        jumps, states = _markov_segments(spec, seed, horizon)
        mats = np.ascontiguousarray(spec.matrices_array())
        rec_t, rec_m, rec_scale = _alloc_mat(_n_records(n_full, tail, thin), d)
        status = _kernels.drive_markov_mat(
            mats, states, jumps, m, horizon, step,
            n_full, 1 if tail else 0, thin, MATRIX_CLIP_FLOOR, rec_t, rec_m, rec_scale,
        )
    elif isinstance(spec, CircleDiffusionEnvironment):
        eff_step = min(step, spec.grid_step * min(1.0, spec.timescale))
        n_full, tail = _plan(horizon, eff_step)
        base, cosc, sinc = _fourier_args(spec)
        svals = _frozen_phases(spec, seed, n_full + (1 if tail else 0), eff_step)
        rec_t, rec_m, rec_scale = _alloc_mat(_n_records(n_full, tail, thin), d)
        status = _kernels.drive_frozen_mat(
            base, cosc, sinc, svals, m, horizon, eff_step,
            n_full, 1 if tail else 0, thin, MATRIX_CLIP_FLOOR, rec_t, rec_m, rec_scale,
        )
    else:
        raise TypeError(f"unknown environment spec {type(spec).__name__}")
    _status_to_error(status, MATRIX_CLIP_FLOOR)
    return rec_t, rec_m, rec_scale


def _alloc_mat(n_records: int, dim: int):
    return np.empty(n_records), np.empty((n_records, dim, dim)), np.empty((n_records, dim))


def fundamental_matrix(
    spec: EnvironmentSpec,
    seed: int | None,
    *,
    horizon: float,
    step: float,
) -> FundamentalMatrix:
    """Fundamental solution at ``horizon`` with per-column log scaling."""
    if horizon == 0:
        d = spec.dim
        return FundamentalMatrix(0.0, np.eye(d), np.zeros(d))
    n_full, _ = _plan(horizon, step)
    times, mats, scales = matrix_trajectory(
        spec, seed, horizon=horizon, step=step, thin=max(1, n_full + 1)
    )
    return FundamentalMatrix(float(times[-1]), mats[-1].copy(), scales[-1].copy())


def synchronized_pair_distance(
    spec: EnvironmentSpec,
    seed: int | None,
    theta_a,
    theta_b,
    *,
    horizon: float,
    step: float,
    thin: int = 1,
) -> list[tuple[float, float]]:
    """Hilbert distance between two trajectories driven by one realization.

    Both starts must be distinct interior simplex points; the same seed
    (hence the same environment path) drives both runs.
    """
    pa = theta_a if isinstance(theta_a, SimplexPoint) else SimplexPoint(np.asarray(theta_a, dtype=float))
    pb = theta_b if isinstance(theta_b, SimplexPoint) else SimplexPoint(np.asarray(theta_b, dtype=float))
    if pa.dim != pb.dim:
        raise ValueError("the two starting points must share a dimension")
    if np.array_equal(pa.coords, pb.coords):
        raise ValueError("starting points must be distinct")
    if pa.coords.min() <= 0.0 or pb.coords.min() <= 0.0:
        raise ValueError("starting points must be interior (strictly positive coordinates)")
    rec_a = integrate(spec, seed, pa, horizon=horizon, step=step, thin=thin)
    rec_b = integrate(spec, seed, pb, horizon=horizon, step=step, thin=thin)
    if min(rec_a.thetas.min(), rec_b.thetas.min()) <= 0.0:
        raise ValueError(
            "a trajectory touched the simplex boundary; Hilbert distance is undefined there"
        )
    dists = _hilbert_distance_rows(rec_a.thetas, rec_b.thetas)
    return list(zip(rec_a.times.tolist(), dists.tolist()))


def write_trajectory_csv(record: TrajectoryRecord, file) -> None:
    """Write samples as CSV with columns time, theta_1..theta_d, log_rho,
    running_avg (17 significant digits)."""
    own = isinstance(file, (str, bytes))
    fh = open(file, "w", encoding="utf-8", newline="") if own else file
    try:
        names = ",".join(f"theta_{i + 1}" for i in range(record.dim))
        fh.write(f"time,{names},log_rho,running_avg\n")
        for k in range(record.times.size):
            coords = ",".join(format(v, ".17g") for v in record.thetas[k])
            fh.write(
                f"{format(record.times[k], '.17g')},{coords},"
                f"{format(record.log_growth[k], '.17g')},"
                f"{format(record.growth_average[k], '.17g')}\n"
            )
    finally:
        if own:
            fh.close()
