"""Driving environment processes and their matrix maps.

An environment is a stationary process on a compact state space together
with a map assigning a Metzler matrix to every state.  Four kinds are
supported:

* ``periodic``        -- rotation at unit speed on the circle,
* ``quasi_periodic``  -- linear flow on a torus with fixed frequencies,
* ``markov_switch``   -- an irreducible continuous-time Markov chain on
                         finitely many states,
* ``circle_diffusion``-- Brownian motion on the circle, simulated by
                         Euler-Maruyama on the universal cover.

Every kind carries a ``timescale`` T: the observed process is the intrinsic
one run at speed 1/T, i.e. the state at observed time t is the intrinsic
state at u = t/T.  Large T means slow switching, small T fast switching.
Randomness is reproducible: a path is a pure function of (spec, seed), no
matter in which order it is queried.

For the continuous kinds the matrix map is a trigonometric polynomial,
``A(s) = A0 + sum_k C_k cos(2 pi k s) + D_k sin(2 pi k s)`` per torus
coordinate, so its space average is A0 exactly; this is cross-checked
against a 4096-point trapezoid rule whenever the average is requested.
"""

from __future__ import annotations

import math
import warnings
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from .core_linalg import MetzlerMatrix, OFFDIAG_CLAMP, is_irreducible
from .errors import (
    InvalidMatrixError,
    NumericalError,
    ReducibilityError,
)
from .seeds import derive_seed

_VALIDATION_STATES = 1024
_AVERAGE_QUAD_POINTS = 4096
_RATIONAL_WINDOW = 20
_RATIONAL_TOL = 1e-9
_DIFFUSION_BLOCK = 8192
_DIFFUSION_GRID_CAP = 200_000_000


# ---------------------------------------------------------------------------
# environment states


@dataclass(frozen=True)
class CirclePoint:
    """Point of the unit circle, stored as an angle in [0, 1)."""

    angle: float

    def __post_init__(self):
        if not math.isfinite(self.angle):
            raise ValueError("circle point must be finite")
        object.__setattr__(self, "angle", self.angle % 1.0)


@dataclass(frozen=True)
class TorusPoint:
    """Point of the n-torus, stored as angles in [0, 1)^n."""

    angles: tuple[float, ...]

    def __post_init__(self):
        reduced = tuple(a % 1.0 for a in self.angles)
        if not reduced or not all(math.isfinite(a) for a in reduced):
            raise ValueError("torus point must be a nonempty finite tuple")
        object.__setattr__(self, "angles", reduced)


@dataclass(frozen=True)
class DiscreteState:
    """State of a finite chain, 1-based index."""

    index: int

    def __post_init__(self):
        if not isinstance(self.index, int) or self.index < 1:
            raise ValueError(f"discrete state index must be a positive integer, got {self.index!r}")


EnvState = CirclePoint | TorusPoint | DiscreteState


@dataclass(frozen=True)
class UniformMeasure:
    """Symbolic marker for the normalized uniform measure on a circle/torus."""

    space: str


# ---------------------------------------------------------------------------
# matrix maps


@dataclass(frozen=True, eq=False)
class FourierMatrixMap:
    """Trigonometric-polynomial matrix map on the circle or torus.

    ``A(s) = base + sum_i sum_k (cos_coeffs[i,k] cos(2 pi (k+1) s_i)
                                 + sin_coeffs[i,k] sin(2 pi (k+1) s_i))``

    where i runs over torus coordinates and k over harmonics.
    """

    base: np.ndarray
    cos_coeffs: np.ndarray
    sin_coeffs: np.ndarray

    def __post_init__(self):
        base = np.array(self.base, dtype=float, copy=True)
        if base.ndim != 2 or base.shape[0] != base.shape[1]:
            raise InvalidMatrixError(f"base must be square, got shape {base.shape}")
        d = base.shape[0]
        cos_c = np.array(self.cos_coeffs, dtype=float, copy=True)
        sin_c = np.array(self.sin_coeffs, dtype=float, copy=True)
        if cos_c.ndim != 4 or cos_c.shape[2:] != (d, d):
            raise InvalidMatrixError(
                f"cos coefficients must have shape (coords, harmonics, {d}, {d})"
            )
        if sin_c.shape != cos_c.shape:
            raise InvalidMatrixError(
                f"sin coefficients shape {sin_c.shape} != cos coefficients shape {cos_c.shape}"
            )
        if cos_c.shape[0] < 1:
            raise InvalidMatrixError("matrix map needs at least one coordinate")
        for arr in (base, cos_c, sin_c):
            if not np.all(np.isfinite(arr)):
                raise InvalidMatrixError("matrix map coefficients must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "cos_coeffs", cos_c)
        object.__setattr__(self, "sin_coeffs", sin_c)

    @property
    def dim(self) -> int:
        return self.base.shape[0]

    @property
    def n_coords(self) -> int:
        return self.cos_coeffs.shape[0]

    @property
    def n_harmonics(self) -> int:
        return self.cos_coeffs.shape[1]

    @staticmethod
    def constant(base, n_coords: int = 1) -> "FourierMatrixMap":
        arr = np.asarray(base, dtype=float)
        d = arr.shape[0]
        empty = np.zeros((n_coords, 0, d, d))
        return FourierMatrixMap(arr, empty, empty)

    def evaluate(self, phases) -> np.ndarray:
        """Matrix values at torus points ``phases`` of shape (..., n_coords)."""
        ph = np.asarray(phases, dtype=float)
        if ph.shape[-1:] != (self.n_coords,):
            raise ValueError(
                f"phases must have trailing dimension {self.n_coords}, got shape {ph.shape}"
            )
        kvec = np.arange(1, self.n_harmonics + 1, dtype=float)
        ang = 2.0 * np.pi * kvec * ph[..., :, None]  # (..., n, K)
        out = np.einsum("...nk,nkij->...ij", np.cos(ang), self.cos_coeffs)
        out += np.einsum("...nk,nkij->...ij", np.sin(ang), self.sin_coeffs)
        out += self.base
        return out


def _validation_grid(n_coords: int) -> np.ndarray:
    per_axis = max(2, math.ceil(_VALIDATION_STATES ** (1.0 / n_coords)))
    axes = [np.arange(per_axis) / per_axis for _ in range(n_coords)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, n_coords)


def _validate_map_metzler(matrix_map: FourierMatrixMap) -> None:
    grid = _validation_grid(matrix_map.n_coords)
    values = matrix_map.evaluate(grid)
    d = matrix_map.dim
    off_mask = ~np.eye(d, dtype=bool)
    off = np.where(off_mask, values, 0.0)
    worst = off.min()
    if worst < -OFFDIAG_CLAMP:
        idx = np.unravel_index(np.argmin(off), off.shape)
        state = tuple(float(c) for c in grid[idx[0]])
        raise InvalidMatrixError(
            f"matrix map is not Metzler: entry ({idx[1]},{idx[2]}) = {worst:g} "
            f"at sample state {state}"
        )


# ---------------------------------------------------------------------------
# specs


class EnvironmentSpec:
    """Base class; see the concrete kinds below."""

    kind: str = ""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def _check_timescale(self):
        t = self.timescale
        if not (isinstance(t, (int, float)) and math.isfinite(t) and t > 0):
            raise ValueError(f"timescale must be a positive finite number, got {t!r}")
        object.__setattr__(self, "timescale", float(t))


@dataclass(frozen=True, eq=False)
class PeriodicEnvironment(EnvironmentSpec):
    """Unit-speed rotation of the circle; state at intrinsic time u is
    ``initial_phase + u (mod 1)``."""

    matrix_map: FourierMatrixMap
    initial_phase: float = 0.0
    timescale: float = 1.0

    kind = "periodic"

    def __post_init__(self):
        self._check_timescale()
        if self.matrix_map.n_coords != 1:
            raise InvalidMatrixError("periodic environment needs a single-coordinate map")
        if not math.isfinite(self.initial_phase):
            raise ValueError("initial_phase must be finite")
        object.__setattr__(self, "initial_phase", float(self.initial_phase) % 1.0)
        _validate_map_metzler(self.matrix_map)

    @property
    def dim(self) -> int:
        return self.matrix_map.dim


@dataclass(frozen=True, eq=False)
class QuasiPeriodicEnvironment(EnvironmentSpec):
    """Linear torus flow: coordinate i moves at intrinsic speed
    ``frequencies[i]``.  Unique ergodicity needs rationally independent
    frequencies; a cheap heuristic scans integer combinations with
    coefficients up to 20 in absolute value and warns on a near-vanishing
    combination."""

    matrix_map: FourierMatrixMap
    frequencies: tuple[float, ...]
    initial_phases: tuple[float, ...]
    timescale: float = 1.0

    kind = "quasi_periodic"

    def __post_init__(self):
        self._check_timescale()
        freqs = tuple(float(f) for f in self.frequencies)
        phases = tuple(float(p) % 1.0 for p in self.initial_phases)
        n = self.matrix_map.n_coords
        if len(freqs) != n or len(phases) != n:
            raise ValueError(
                f"need {n} frequencies and initial phases to match the matrix map, "
                f"got {len(freqs)} and {len(phases)}"
            )
        if not all(math.isfinite(f) for f in freqs):
            raise ValueError("frequencies must be finite")
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "initial_phases", phases)
        _validate_map_metzler(self.matrix_map)
        self._warn_if_rationally_dependent()

    def _warn_if_rationally_dependent(self):
        n = len(self.frequencies)
        if (2 * _RATIONAL_WINDOW + 1) ** n > 5_000_000:
            warnings.warn(
                "too many torus coordinates to scan for rational dependence",
                stacklevel=3,
            )
            return
        coeffs = np.arange(-_RATIONAL_WINDOW, _RATIONAL_WINDOW + 1, dtype=np.int8)
        mesh = np.meshgrid(*([coeffs] * n), indexing="ij")
        combos = np.stack(mesh, axis=-1).reshape(-1, n).astype(float)
        values = combos @ np.asarray(self.frequencies)
        nonzero = np.any(combos != 0.0, axis=1)
        hits = nonzero & (np.abs(values) < _RATIONAL_TOL)
        if np.any(hits):
            k = combos[np.argmax(hits)].astype(int)
            warnings.warn(
                f"frequencies look rationally dependent: k = {tuple(k)} gives "
                f"|k . a| < {_RATIONAL_TOL:g}; the flow may not be uniquely ergodic",
                stacklevel=3,
            )

    @property
    def dim(self) -> int:
        return self.matrix_map.dim


@dataclass(frozen=True, eq=False)
class MarkovSwitchEnvironment(EnvironmentSpec):
    """Irreducible continuous-time Markov chain on states 1..n with a
    conservative rate matrix (row sums zero, off-diagonal rates nonnegative),
    each state carrying its own Metzler matrix."""

    rate_matrix: np.ndarray
    matrices: tuple[MetzlerMatrix, ...]
    initial_state: int = 1
    timescale: float = 1.0

    kind = "markov_switch"

    def __post_init__(self):
        self._check_timescale()
        rates = np.array(self.rate_matrix, dtype=float, copy=True)
        if rates.ndim != 2 or rates.shape[0] != rates.shape[1]:
            raise ValueError(f"rate matrix must be square, got shape {rates.shape}")
        if not np.all(np.isfinite(rates)):
            raise ValueError("rate matrix must be finite")
        n = rates.shape[0]
        off_mask = ~np.eye(n, dtype=bool)
        if np.any(rates[off_mask] < 0.0):
            i, j = np.argwhere((rates < 0.0) & off_mask)[0]
            raise ValueError(f"rate ({i + 1},{j + 1}) = {rates[i, j]:g} is negative")
        scale = max(1.0, np.abs(rates).max())
        sums = rates.sum(axis=1)
        if np.abs(sums).max() > 1e-9 * scale:
            i = int(np.argmax(np.abs(sums)))
            raise ValueError(
                f"rate matrix row {i + 1} sums to {sums[i]:g}; a conservative "
                "generator needs zero row sums"
            )
        offdiag = rates.copy()
        np.fill_diagonal(offdiag, 0.0)
        if n > 1 and not is_irreducible(offdiag.T):
            # edge i -> j when the rate i -> j is positive
            raise ReducibilityError("switching chain is reducible")
        mats = tuple(
            m if isinstance(m, MetzlerMatrix) else MetzlerMatrix(m) for m in self.matrices
        )
        if len(mats) != n:
            raise ValueError(f"need {n} matrices to match the rate matrix, got {len(mats)}")
        d = mats[0].dim
        if any(m.dim != d for m in mats):
            raise ValueError("all state matrices must share one dimension")
        if not isinstance(self.initial_state, int) or not 1 <= self.initial_state <= n:
            raise ValueError(f"initial_state must lie in 1..{n}, got {self.initial_state!r}")
        rates.setflags(write=False)
        object.__setattr__(self, "rate_matrix", rates)
        object.__setattr__(self, "matrices", mats)

    @property
    def n_states(self) -> int:
        return self.rate_matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrices[0].dim

    def matrices_array(self) -> np.ndarray:
        return np.stack([m.entries for m in self.matrices])

    def path(self, seed: int) -> "MarkovJumpPath":
        return MarkovJumpPath(self, seed)


@dataclass(frozen=True, eq=False)
class CircleDiffusionEnvironment(EnvironmentSpec):
    """Brownian motion on the circle with diffusion coefficient ``sigma``,
    simulated on the universal cover by Euler-Maruyama with intrinsic grid
    step min(1e-3, 0.01 / sigma^2) and wrapped modulo 1.  Paths are cached
    per seed on that fixed grid."""

    matrix_map: FourierMatrixMap
    sigma: float
    initial_point: float = 0.0
    timescale: float = 1.0

    kind = "circle_diffusion"

    def __post_init__(self):
        self._check_timescale()
        if self.matrix_map.n_coords != 1:
            raise InvalidMatrixError("circle diffusion needs a single-coordinate map")
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma!r}")
        if not math.isfinite(self.initial_point):
            raise ValueError("initial_point must be finite")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "initial_point", float(self.initial_point) % 1.0)
        _validate_map_metzler(self.matrix_map)

    @property
    def grid_step(self) -> float:
        return min(1e-3, 0.01 / self.sigma**2)

    @property
    def dim(self) -> int:
        return self.matrix_map.dim

    def path(self, seed: int) -> "CircleDiffusionPath":
        return CircleDiffusionPath(self, seed)


# ---------------------------------------------------------------------------
# sample paths


class MarkovJumpPath:
    """Lazily extended jump path of the intrinsic (timescale 1) chain.

    Holding times are exponential with rate -a_ii, drawn by inversion from
    single uniforms so that each jump consumes exactly two rng draws; the
    realized path is therefore a pure function of (spec, seed) regardless of
    the order in which it is queried.
    """

    def __init__(self, spec: MarkovSwitchEnvironment, seed: int):
        self.spec = spec
        self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        rates = spec.rate_matrix
        n = spec.n_states
        self._exit_rates = np.array([-rates[i, i] for i in range(n)])
        self._targets = []
        self._cum_rates = []
        for i in range(n):
            row = rates[i].copy()
            row[i] = 0.0
            targets = np.nonzero(row > 0.0)[0]
            self._targets.append(targets)
            self._cum_rates.append(np.cumsum(row[targets]))
        self._jump_times: list[float] = []
        self._states: list[int] = [spec.initial_state - 1]
        self._absorbed = False

    def _extend_once(self):
        state = self._states[-1]
        q = self._exit_rates[state]
        if q <= 0.0:
            self._absorbed = True
            return
        u = self._rng.random()
        holding = -math.log1p(-u) / q
        last = self._jump_times[-1] if self._jump_times else 0.0
        cum = self._cum_rates[state]
        v = self._rng.random() * cum[-1]
        nxt = self._targets[state][min(int(np.searchsorted(cum, v, side="right")), len(cum) - 1)]
        self._jump_times.append(last + holding)
        self._states.append(int(nxt))

    def ensure_until(self, u: float):
        """Generate jumps until the path covers intrinsic time u."""
        while not self._absorbed and (not self._jump_times or self._jump_times[-1] <= u):
            self._extend_once()

    def state_index_at(self, u: float) -> int:
        """0-based state index at intrinsic time u (cadlag: at a jump time
        the post-jump state applies)."""
        if u < 0:
            raise ValueError("time must be nonnegative")
        self.ensure_until(u)
        return self._states[bisect_right(self._jump_times, u)]

    def segments_until(self, u: float) -> tuple[np.ndarray, np.ndarray]:
        """(jump times in (0, u), 0-based states per segment) in intrinsic time."""
        self.ensure_until(u)
        times = np.asarray(self._jump_times, dtype=float)
        keep = times < u
        times = times[keep]
        states = np.asarray(self._states[: times.size + 1], dtype=np.int64)
        return times, states


class CircleDiffusionPath:
    """Euler-Maruyama path on the universal cover, cached on the intrinsic
    grid k * grid_step.  Increments are generated in fixed blocks of 8192,
    block j seeded by derive_seed(seed, j), so any query order yields the
    same path."""

    def __init__(self, spec: CircleDiffusionEnvironment, seed: int):
        self.spec = spec
        self.seed = int(seed)
        self._h = spec.grid_step
        self._scale = spec.sigma * math.sqrt(self._h)
        self._positions = np.array([spec.initial_point])

    def _ensure_index(self, idx: int):
        if idx >= _DIFFUSION_GRID_CAP:
            raise NumericalError(
                f"diffusion path would need {idx + 1} grid points; refusing to cache "
                f"more than {_DIFFUSION_GRID_CAP}"
            )
        while self._positions.size <= idx:
            block = (self._positions.size - 1) // _DIFFUSION_BLOCK
            rng = np.random.default_rng(derive_seed(self.seed, block))
            increments = rng.standard_normal(_DIFFUSION_BLOCK) * self._scale
            start = self._positions[-1]
            extension = start + np.cumsum(increments)
            self._positions = np.concatenate([self._positions, extension])

    def value_at(self, u: float) -> float:
        """Wrapped path value at the grid time nearest to intrinsic time u."""
        if u < 0:
            raise ValueError("time must be nonnegative")
        idx = int(round(u / self._h))
        self._ensure_index(idx)
        return float(self._positions[idx] % 1.0)

    def values_at(self, us: np.ndarray) -> np.ndarray:
        idx = np.rint(np.asarray(us, dtype=float) / self._h).astype(np.int64)
        if idx.size:
            self._ensure_index(int(idx.max()))
        return self._positions[idx] % 1.0


# ---------------------------------------------------------------------------
# operations


def env_state_at(spec: EnvironmentSpec, seed: int | None, t: float) -> EnvState:
    """Environment state at observed time t >= 0.

    A pure function of (spec, seed, t): stochastic kinds regenerate their
    path from the seed.  Code that queries many times should hold on to
    ``spec.path(seed)`` instead.
    """
    if not (math.isfinite(t) and t >= 0):
        raise ValueError(f"time must be nonnegative and finite, got {t!r}")
    u = t / spec.timescale
    if isinstance(spec, PeriodicEnvironment):
        return CirclePoint((spec.initial_phase + u) % 1.0)
    if isinstance(spec, QuasiPeriodicEnvironment):
        return TorusPoint(
            tuple((p + u * a) % 1.0 for p, a in zip(spec.initial_phases, spec.frequencies))
        )
    if isinstance(spec, MarkovSwitchEnvironment):
        if seed is None:
            raise ValueError("markov_switch environment needs a seed")
        return DiscreteState(spec.path(seed).state_index_at(u) + 1)
    if isinstance(spec, CircleDiffusionEnvironment):
        if seed is None:
            raise ValueError("circle_diffusion environment needs a seed")
        return CirclePoint(spec.path(seed).value_at(u))
    raise TypeError(f"unknown environment spec {type(spec).__name__}")


def invariant_measure(spec: EnvironmentSpec):
    """Invariant probability measure of the environment.

    Returns a :class:`UniformMeasure` marker for the circle and torus kinds
    (their unique invariant measure is uniform) and the stationary
    probability vector for a Markov switch, obtained by solving the balance
    equations with the normalization row by Gaussian elimination.
    """
    if isinstance(spec, PeriodicEnvironment):
        return UniformMeasure("circle")
    if isinstance(spec, QuasiPeriodicEnvironment):
        return UniformMeasure("torus")
    if isinstance(spec, CircleDiffusionEnvironment):
        return UniformMeasure("circle")
    if isinstance(spec, MarkovSwitchEnvironment):
        n = spec.n_states
        if n == 1:
            return np.array([1.0])
        system = spec.rate_matrix.T.copy()
        system[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        try:
            mu = np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError as exc:
            raise ReducibilityError(f"balance equations are singular: {exc}") from exc
        if mu.min() <= 0.0:
            raise ReducibilityError(
                f"stationary vector has nonpositive mass {mu.min():g}; chain is not irreducible"
            )
        return mu / mu.sum()
    raise TypeError(f"unknown environment spec {type(spec).__name__}")


def average_matrix(spec: EnvironmentSpec) -> MetzlerMatrix:
    """Matrix map averaged against the invariant measure.

    For the trigonometric kinds every harmonic integrates to zero, so the
    average is the constant term; this is cross-checked against a 4096-point
    trapezoid rule per coordinate (periodic grids make the rule exact here
    up to roundoff).  For a Markov switch the average is the exactly
    weighted sum of the state matrices.
    """
    if isinstance(spec, MarkovSwitchEnvironment):
        mu = invariant_measure(spec)
        return MetzlerMatrix(np.einsum("s,sij->ij", mu, spec.matrices_array()))
    if isinstance(spec, (PeriodicEnvironment, QuasiPeriodicEnvironment, CircleDiffusionEnvironment)):
        fmap = spec.matrix_map
        grid = np.arange(_AVERAGE_QUAD_POINTS) / _AVERAGE_QUAD_POINTS
        kvec = np.arange(1, fmap.n_harmonics + 1, dtype=float)
        residual = 0.0
        for i in range(fmap.n_coords):
            ang = 2.0 * np.pi * kvec * grid[:, None]  # (N, K)
            coord_mean = np.einsum("pk,kij->ij", np.cos(ang), fmap.cos_coeffs[i])
            coord_mean += np.einsum("pk,kij->ij", np.sin(ang), fmap.sin_coeffs[i])
            coord_mean /= _AVERAGE_QUAD_POINTS
            residual = max(residual, float(np.abs(coord_mean).max()))
        if residual > 1e-10:
            raise NumericalError(
                f"quadrature cross-check of the average matrix failed: harmonic "
                f"residual {residual:.3e} exceeds 1e-10"
            )
        return MetzlerMatrix(fmap.base)
    raise TypeError(f"unknown environment spec {type(spec).__name__}")


def _phase_grid(n_coords: int, per_axis: int) -> np.ndarray:
    axes = [np.arange(per_axis) / per_axis for _ in range(n_coords)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, n_coords)


def _adaptive_uniform_average(
    n_coords: int,
    values_fn,
    tol: float = 1e-8,
    start_total: int = _AVERAGE_QUAD_POINTS,
    cap_total: int = 1 << 18,
) -> np.ndarray:
    """Average ``values_fn`` over the uniform torus measure by lattice means.

    A uniform lattice mean equals the trapezoid rule for periodic integrands.
    The per-axis resolution is doubled until two successive levels agree to
    ``tol`` in every component; integrands with derivative kinks (pointwise
    min/max of smooth families) converge only at second order, hence the
    doubling rather than a fixed resolution.
    """
    per_axis = max(2, math.ceil(start_total ** (1.0 / n_coords)))
    prev = None
    while True:
        vals = np.asarray(values_fn(_phase_grid(n_coords, per_axis)), dtype=float)
        cur = vals.mean(axis=0)
        if prev is not None and float(np.max(np.abs(cur - prev))) <= tol:
            return cur
        if (2 * per_axis) ** n_coords > cap_total:
            raise NumericalError(
                f"uniform quadrature did not reach agreement {tol:g} within "
                f"{cap_total} points (last level {per_axis ** n_coords})"
            )
        prev = cur
        per_axis *= 2


def matrix_at(spec: EnvironmentSpec, state: EnvState) -> MetzlerMatrix:
    """Matrix assigned to an environment state, validated as Metzler."""
    if isinstance(spec, MarkovSwitchEnvironment):
        if not isinstance(state, DiscreteState):
            raise TypeError(f"markov_switch expects a DiscreteState, got {type(state).__name__}")
        if state.index > spec.n_states:
            raise ValueError(
                f"state index {state.index} out of range 1..{spec.n_states}"
            )
        return spec.matrices[state.index - 1]
    if isinstance(spec, (PeriodicEnvironment, CircleDiffusionEnvironment)):
        if not isinstance(state, CirclePoint):
            raise TypeError(f"{spec.kind} expects a CirclePoint, got {type(state).__name__}")
        phases = np.array([state.angle])
    elif isinstance(spec, QuasiPeriodicEnvironment):
        if not isinstance(state, TorusPoint):
            raise TypeError(f"quasi_periodic expects a TorusPoint, got {type(state).__name__}")
        if len(state.angles) != spec.matrix_map.n_coords:
            raise ValueError(
                f"torus point has {len(state.angles)} coordinates, map needs "
                f"{spec.matrix_map.n_coords}"
            )
        phases = np.asarray(state.angles)
    else:
        raise TypeError(f"unknown environment spec {type(spec).__name__}")
    values = spec.matrix_map.evaluate(phases)
    try:
        return MetzlerMatrix(values)
    except InvalidMatrixError as exc:
        raise InvalidMatrixError(f"matrix map at state {state}: {exc}") from exc
