"""Timescale sweeps, fast/slow limit predictions, occupation concentration.

With the environment observed at timescale T (state at time t is the
intrinsic state at t/T), the top exponent converges to computable limits at
both extremes:

* T -> 0 (fast): the environment averages out and the exponent approaches
  the spectral abscissa of the averaged matrix;
* T -> oo (slow): the environment freezes and the exponent approaches the
  invariant-measure average of the pointwise spectral abscissa.

The concentration statistic quantifies the corresponding collapse of the
simplex occupation: the time-averaged l1 distance of theta to the relevant
reference direction (the averaged matrix's dominant direction in fast mode,
the frozen matrix's dominant direction in slow mode).
"""

from __future__ import annotations

import dataclasses
import math
import warnings
from dataclasses import dataclass

import numpy as np

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

from .core_linalg import (
    SimplexPoint,
    _dominant_direction_batch,
    _power_iteration_batch,
    _strongly_connected_batch,
    dominant_direction,
    is_irreducible,
    perron_eigenpair,
    spectral_abscissa,
)
from .dynamics import TrajectoryRecord, _integrate_with_trap
from .environment import (
    CircleDiffusionEnvironment,
    EnvironmentSpec,
    MarkovSwitchEnvironment,
    PeriodicEnvironment,
    QuasiPeriodicEnvironment,
    _adaptive_uniform_average,
    average_matrix,
    invariant_measure,
)
from .errors import ReducibilityError
from .lyapunov import (
    METHOD_ERGODIC_AVERAGE,
    LambdaEstimate,
    _auto_thin,
    _rate_and_gap,
)
from .seeds import derive_seed


def predict_fast_limit(spec: EnvironmentSpec) -> tuple[float, SimplexPoint]:
    """Limit of the exponent and of the simplex concentration point as the
    timescale goes to 0: the Perron pair of the averaged matrix."""
    pair = perron_eigenpair(average_matrix(spec))
    return pair.value, pair.direction


def _reducible_state_warning(count, total, where):
    warnings.warn(
        f"{count} of {total} {where} carry a reducible matrix; using the "
        f"spectral abscissa of the reducible blocks there (the slow-limit "
        f"formula assumes irreducibility on the support)",
        stacklevel=3,
    )


def predict_slow_limit(spec: EnvironmentSpec, *, require_irreducible: bool = False) -> float:
    """Limit of the exponent as the timescale goes to infinity: the
    invariant-measure average of the pointwise spectral abscissa.

    The limit formula is derived under irreducibility of the matrix at every
    environment state.  Reducible states are handled through their block
    structure and reported with a warning by default; pass
    ``require_irreducible=True`` to turn them into an error instead.
    """
    if isinstance(spec, MarkovSwitchEnvironment):
        mu = invariant_measure(spec)
        mats = spec.matrices_array()
        reducible = [i for i in range(spec.n_states) if not is_irreducible(mats[i])]
        if reducible and require_irreducible:
            raise ReducibilityError(
                f"matrix of state {reducible[0] + 1} is reducible; the slow-limit "
                f"formula assumes irreducibility at every state"
            )
        if reducible:
            _reducible_state_warning(len(reducible), spec.n_states, "switch states")
        values = np.array([spectral_abscissa(m) for m in mats])
        return float(mu @ values)

    warned = [False]

    def pointwise_abscissa(phases: np.ndarray) -> np.ndarray:
        mats = spec.matrix_map.evaluate(phases)
        ok = _strongly_connected_batch(mats)
        values = np.empty(mats.shape[0])
        if ok.any():
            values[ok], _ = _power_iteration_batch(mats[ok])
        bad = ~ok
        if bad.any():
            if require_irreducible:
                idx = int(np.argmax(bad))
                raise ReducibilityError(
                    f"matrix at environment state {tuple(phases[idx])} is reducible; "
                    f"the slow-limit formula assumes irreducibility on the support"
                )
            if not warned[0]:
                _reducible_state_warning(int(bad.sum()), mats.shape[0], "grid states")
                warned[0] = True
            values[bad] = [spectral_abscissa(m) for m in mats[bad]]
        return values

    return float(_adaptive_uniform_average(spec.matrix_map.n_coords, pointwise_abscissa))


def _with_timescale(spec: EnvironmentSpec, timescale: float) -> EnvironmentSpec:
    if spec.timescale == timescale:
        return spec
    return dataclasses.replace(spec, timescale=float(timescale))


def _slow_reference_directions(spec: EnvironmentSpec, seed, times: np.ndarray) -> np.ndarray:
    """Dominant direction of the frozen matrix at each sample time."""
    t_scale = spec.timescale
    if isinstance(spec, MarkovSwitchEnvironment):
        per_state = _dominant_direction_batch(spec.matrices_array())
        path = spec.path(seed)
        jumps, states = path.segments_until(times[-1] / t_scale)
        idx = np.searchsorted(jumps * t_scale, times, side="right")
        return per_state[states[idx]]
    if isinstance(spec, (PeriodicEnvironment, QuasiPeriodicEnvironment)):
        if isinstance(spec, PeriodicEnvironment):
            phases = (spec.initial_phase + times / t_scale)[:, None]
        else:
            freqs = np.asarray(spec.frequencies)
            phases = np.asarray(spec.initial_phases)[None, :] + times[:, None] * freqs[None, :] / t_scale
        return _dominant_direction_batch(spec.matrix_map.evaluate(phases % 1.0))
    if isinstance(spec, CircleDiffusionEnvironment):
        svals = spec.path(seed).values_at(times / t_scale)
        return _dominant_direction_batch(spec.matrix_map.evaluate(svals[:, None]))
    raise TypeError(f"unknown environment spec {type(spec).__name__}")


def _concentration_from_record(
    spec: EnvironmentSpec,
    seed,
    record: TrajectoryRecord,
    burn_in: float,
    mode: str,
) -> float:
    if mode == "fast":
        ref = dominant_direction(average_matrix(spec)).coords[None, :]
    else:
        ref = _slow_reference_directions(spec, seed, record.times)
    dist = np.abs(record.thetas - ref).sum(axis=1)
    b = int(np.searchsorted(record.times, burn_in - 1e-12 * max(1.0, burn_in)))
    if record.times.size - b < 2:
        raise ValueError("fewer than two samples after burn-in")
    window = record.times[-1] - record.times[b]
    return float(_trapezoid(dist[b:], record.times[b:]) / window)


def occupation_concentration(
    spec: EnvironmentSpec,
    timescale: float,
    seed: int | None,
    horizon: float,
    step: float,
    burn_in: float | None = None,
    *,
    mode: str = "auto",
) -> float:
    """Time-averaged l1 distance of theta to its predicted concentration
    point: D = (1/(horizon-burn_in)) integral of ||theta_u - theta_ref(w_u)||_1.

    ``mode`` picks the reference: "fast" uses the averaged matrix's dominant
    direction (the T -> 0 concentration point), "slow" the frozen pointwise
    dominant direction (T -> oo), and "auto" switches at timescale 1.
    """
    if mode not in ("auto", "fast", "slow"):
        raise ValueError(f"mode must be 'auto', 'fast' or 'slow', got {mode!r}")
    if mode == "auto":
        mode = "fast" if timescale <= 1.0 else "slow"
    if burn_in is None:
        burn_in = 0.1 * horizon
    if not (0.0 <= burn_in < horizon):
        raise ValueError(f"need horizon > burn_in >= 0, got {horizon!r}, {burn_in!r}")
    run_spec = _with_timescale(spec, timescale)
    record, _ = _integrate_with_trap(
        run_spec, seed, None, horizon=horizon, step=step, thin=_auto_thin(horizon, step)
    )
    return _concentration_from_record(run_spec, seed, record, burn_in, mode)


@dataclass(frozen=True)
class RegimeSweepResult:
    """Per-timescale exponent estimates bracketed by the two limit values."""

    T_values: tuple[float, ...]
    lambda_hats: tuple[LambdaEstimate, ...]
    fast_limit: float
    slow_limit: float
    concentration: tuple[float, ...]

    def __post_init__(self):
        n = len(self.T_values)
        if len(self.lambda_hats) != n or len(self.concentration) != n:
            raise ValueError("sweep columns must share a length")
        if any(t2 <= t1 for t1, t2 in zip(self.T_values, self.T_values[1:])):
            raise ValueError("T_values must be strictly increasing")
        if any(t <= 0 for t in self.T_values):
            raise ValueError("T_values must be positive")


def log_spaced_timescales(t_min: float, t_max: float, points_per_decade: int = 5) -> list[float]:
    """Log-spaced timescale grid, endpoints included."""
    if not (0 < t_min < t_max):
        raise ValueError(f"need 0 < t_min < t_max, got {t_min!r}, {t_max!r}")
    if points_per_decade < 1:
        raise ValueError(f"points_per_decade must be >= 1, got {points_per_decade!r}")
    decades = math.log10(t_max / t_min)
    n = max(2, int(round(decades * points_per_decade)) + 1)
    return [float(t) for t in np.geomspace(t_min, t_max, n)]


def sweep_lambda(
    spec: EnvironmentSpec,
    T_values,
    seed: int,
    horizon_per_T: float,
    step: float,
) -> RegimeSweepResult:
    """Estimate the exponent across timescales with derived per-point seeds.

    Each point k runs the sampled-integrand average under seed
    derive_seed(seed, k) over horizon max(horizon_per_T, 100 T), so slow
    regimes still see on the order of 100 environment transitions; the
    concentration statistic is computed from the same trajectory.
    """
    t_list = [float(t) for t in T_values]
    ests: list[LambdaEstimate] = []
    concs: list[float] = []
    for k, t_val in enumerate(t_list):
        run_spec = _with_timescale(spec, t_val)
        seed_k = derive_seed(seed, k)
        horizon = max(horizon_per_T, 100.0 * t_val)
        burn_in = 0.1 * horizon
        record, trap = _integrate_with_trap(
            run_spec, seed_k, None, horizon=horizon, step=step,
            thin=_auto_thin(horizon, step),
        )
        value, gap = _rate_and_gap(record.times, trap, burn_in)
        ests.append(LambdaEstimate(
            value=value,
            method=METHOD_ERGODIC_AVERAGE,
            horizon=horizon,
            step=float(step),
            burn_in=burn_in,
            half_split_gap=gap,
            seed=seed_k,
        ))
        mode = "fast" if t_val <= 1.0 else "slow"
        concs.append(_concentration_from_record(run_spec, seed_k, record, burn_in, mode))
    fast_limit, _ = predict_fast_limit(spec)
    slow_limit = predict_slow_limit(spec)
    return RegimeSweepResult(
        T_values=tuple(t_list),
        lambda_hats=tuple(ests),
        fast_limit=fast_limit,
        slow_limit=slow_limit,
        concentration=tuple(concs),
    )


def write_sweep_csv(result: RegimeSweepResult, file) -> None:
    """Write one row per timescale with 17 significant digits."""
    own = isinstance(file, (str, bytes))
    fh = open(file, "w", encoding="utf-8", newline="") if own else file
    try:
        fh.write(
            "T,lambda_hat,half_split_gap,fast_limit,slow_limit,"
            "concentration,seed,horizon,step\n"
        )
        for t_val, est, conc in zip(result.T_values, result.lambda_hats, result.concentration):
            seed_text = "" if est.seed is None else str(est.seed)
            row = [
                format(t_val, ".17g"),
                format(est.value, ".17g"),
                format(est.half_split_gap, ".17g"),
                format(result.fast_limit, ".17g"),
                format(result.slow_limit, ".17g"),
                format(conc, ".17g"),
                seed_text,
                format(est.horizon, ".17g"),
                format(est.step, ".17g"),
            ]
            fh.write(",".join(row) + "\n")
    finally:
        if own:
            fh.close()
