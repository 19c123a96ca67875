"""Positive linear algebra for cooperative systems.

A Metzler matrix is a real square matrix whose off-diagonal entries are
nonnegative.  Such matrices generate positive semigroups: e^{tA} maps the
closed positive cone into itself, and when A is irreducible the Perron root
(the largest real eigenvalue, equal to the spectral abscissa) carries a
unique positive eigendirection on the unit simplex.

The routines here deliberately avoid general dense eigensolvers:

* the Perron eigenpair comes from power iteration on a diagonal shift that
  makes the matrix nonnegative and primitive,
* extreme eigenvalues of the symmetric part come from cyclic Jacobi
  rotations,
* the Hilbert projective metric and the Birkhoff contraction coefficient
  quantify how positive matrices contract directions inside the cone.

All functions accept plain arrays or the thin wrapper types below, and are
written against small dense matrices (dimension of order tens).  The
private ``*_batch`` variants operate on stacks of matrices; quadrature
loops elsewhere in the package rely on them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    InvalidMatrixError,
    IterationLimitError,
    NumericalError,
    ReducibilityError,
)

OFFDIAG_CLAMP = 1e-14       # off-diagonal entries in [-OFFDIAG_CLAMP, 0) are zeroed
SIMPLEX_TOL = 1e-12
_POWER_TOL = 1e-13
_POWER_CAP = 100_000
_JACOBI_TOL = 1e-12
_JACOBI_SWEEP_CAP = 100


def _as_square_array(m, name: str = "matrix") -> np.ndarray:
    entries = m.entries if isinstance(m, MetzlerMatrix) else np.asarray(m, dtype=float)
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise InvalidMatrixError(f"{name} must be square, got shape {entries.shape}")
    if not np.all(np.isfinite(entries)):
        raise InvalidMatrixError(f"{name} has non-finite entries")
    return entries


def is_metzler(m) -> bool:
    """True when every off-diagonal entry is >= 0 (up to the clamp tolerance)."""
    entries = _as_square_array(m)
    off = entries.copy()
    np.fill_diagonal(off, 0.0)
    return bool(off.min(initial=0.0) >= -OFFDIAG_CLAMP)


@dataclass(frozen=True, eq=False)
class MetzlerMatrix:
    """Validated Metzler matrix.

    Off-diagonal entries in [-1e-14, 0) are treated as roundoff, clamped to
    zero with a warning; anything more negative is rejected.
    """

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float, copy=True)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise InvalidMatrixError(f"matrix must be square, got shape {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise InvalidMatrixError("matrix has non-finite entries")
        off_mask = ~np.eye(entries.shape[0], dtype=bool)
        neg = off_mask & (entries < 0.0)
        if np.any(neg):
            worst = entries[neg].min()
            if worst < -OFFDIAG_CLAMP:
                i, j = np.argwhere(neg & (entries == worst))[0]
                raise InvalidMatrixError(
                    f"off-diagonal entry ({i},{j}) = {worst:g} is negative"
                )
            warnings.warn(
                "clamped off-diagonal entries in [-1e-14, 0) to zero",
                stacklevel=2,
            )
            entries[neg] = 0.0
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True, eq=False)
class SimplexPoint:
    """Point of the unit simplex: nonnegative coordinates summing to 1."""

    coords: np.ndarray

    def __post_init__(self):
        coords = np.array(self.coords, dtype=float, copy=True)
        if coords.ndim != 1 or coords.size == 0:
            raise ValueError(f"simplex point must be a nonempty vector, got shape {coords.shape}")
        if not np.all(np.isfinite(coords)):
            raise ValueError("simplex point has non-finite coordinates")
        if coords.min() < 0.0:
            raise ValueError(f"simplex point has negative coordinate {coords.min():g}")
        total = coords.sum()
        if abs(total - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"simplex coordinates sum to {total!r}, not 1")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def dim(self) -> int:
        return self.coords.shape[0]

    @staticmethod
    def barycenter(dim: int) -> "SimplexPoint":
        return SimplexPoint(np.full(dim, 1.0 / dim))


@dataclass(frozen=True, eq=False)
class PerronPair:
    """Perron root together with its simplex-normalized eigendirection."""

    value: float
    direction: SimplexPoint


def _positivity_pattern(entries: np.ndarray) -> np.ndarray:
    pattern = entries > 0.0
    np.fill_diagonal(pattern, False)
    return pattern


def _reaches_all(adj: np.ndarray) -> bool:
    # breadth-first reachability from node 0 over boolean adjacency adj[i, j]
    d = adj.shape[0]
    seen = np.zeros(d, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.nonzero(adj[i])[0]:
                if not seen[j]:
                    seen[j] = True
                    nxt.append(int(j))
        frontier = nxt
    return bool(seen.all())


def is_irreducible(m) -> bool:
    """Strong connectivity of the graph with an edge j -> i whenever m[i][j] > 0.

    Decided by reachability sweeps, never through matrix exponentials.
    """
    entries = _as_square_array(m)
    adj = _positivity_pattern(entries).T
    return _reaches_all(adj) and _reaches_all(adj.T)


def _strongly_connected_batch(mats: np.ndarray) -> np.ndarray:
    """Boolean verdict per matrix of a (N, d, d) stack, via closure powers."""
    d = mats.shape[-1]
    reach = (mats > 0.0) | np.eye(d, dtype=bool)
    reach = reach.astype(np.uint8)
    steps = max(1, int(np.ceil(np.log2(d)))) if d > 1 else 1
    for _ in range(steps):
        reach = ((reach @ reach) > 0).astype(np.uint8)
    return reach.all(axis=(-1, -2))


def _scc_blocks(entries: np.ndarray) -> list[np.ndarray]:
    """Strongly connected components of the positivity graph, as index arrays."""
    d = entries.shape[0]
    reach = _positivity_pattern(entries) | np.eye(d, dtype=bool)
    reach = reach.astype(np.uint8)
    steps = max(1, int(np.ceil(np.log2(d)))) if d > 1 else 1
    for _ in range(steps):
        reach = ((reach @ reach) > 0).astype(np.uint8)
    mutual = (reach > 0) & (reach.T > 0)
    blocks, assigned = [], np.zeros(d, dtype=bool)
    for i in range(d):
        if not assigned[i]:
            members = np.nonzero(mutual[i])[0]
            assigned[members] = True
            blocks.append(members)
    return blocks


def _power_iteration_batch(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Perron values and simplex directions for a stack of irreducible
    Metzler matrices, by shifted power iteration run in lockstep.

    The shift r = 1 + max_i |m_ii| makes each matrix nonnegative with
    strictly positive diagonal, hence primitive, so the iteration converges
    geometrically.  Stops when successive simplex-normalized iterates agree
    to 1e-13 in the max norm and the eigen-residual meets its bound.
    """
    n, d = mats.shape[0], mats.shape[-1]
    diags = np.abs(np.diagonal(mats, axis1=-2, axis2=-1)).max(axis=-1)
    shift = 1.0 + diags
    shifted = mats + shift[:, None, None] * np.eye(d)
    v = np.full((n, d), 1.0 / d)
    norm_inf = np.abs(mats).sum(axis=-1).max(axis=-1)
    bound = 1e-10 * (1.0 + norm_inf)
    diff_ok = False
    for _ in range(_POWER_CAP):
        w = np.einsum("nij,nj->ni", shifted, v)
        w /= w.sum(axis=-1, keepdims=True)
        diff = np.abs(w - v).max()
        v = w
        if diff < _POWER_TOL:
            if not diff_ok:
                diff_ok = True
                continue  # one confirming pass before the residual check
            image = np.einsum("nij,nj->ni", mats, v)
            values = image.sum(axis=-1)
            residual = np.abs(image - values[:, None] * v).max(axis=-1)
            if np.all(residual <= bound):
                return values, v
    image = np.einsum("nij,nj->ni", mats, v)
    values = image.sum(axis=-1)
    residual = np.abs(image - values[:, None] * v).max(axis=-1)
    worst = float(residual.max())
    raise IterationLimitError(
        f"power iteration did not converge within {_POWER_CAP} iterations "
        f"(last residual {worst:.3e})",
        last_residual=worst,
    )


def perron_eigenpair(m) -> PerronPair:
    """Perron root and positive eigendirection of an irreducible Metzler matrix.

    The returned direction lies on the unit simplex and the pair satisfies
    ``|m v - lambda v|_inf <= 1e-10 (1 + |m|_inf)``.
    """
    entries = _as_square_array(m)
    if not is_metzler(entries):
        raise InvalidMatrixError("matrix is not Metzler")
    if not is_irreducible(entries):
        raise ReducibilityError("matrix is reducible; the Perron direction is not unique")
    values, vecs = _power_iteration_batch(entries[None, :, :])
    return PerronPair(float(values[0]), SimplexPoint(vecs[0]))


def spectral_abscissa(m) -> float:
    """Largest real eigenvalue of a Metzler matrix, reducible inputs included.

    Computed as the maximum of the Perron roots of the irreducible diagonal
    blocks of the strongly-connected-component decomposition, which equals
    the spectral abscissa of the full matrix.
    """
    entries = _as_square_array(m)
    if not is_metzler(entries):
        raise InvalidMatrixError("matrix is not Metzler")
    if is_irreducible(entries):
        return perron_eigenpair(entries).value
    best = -np.inf
    for block in _scc_blocks(entries):
        sub = entries[np.ix_(block, block)]
        if sub.shape[0] == 1:
            best = max(best, float(sub[0, 0]))
        else:
            best = max(best, perron_eigenpair(sub).value)
    return float(best)


def dominant_direction(m) -> SimplexPoint:
    """Simplex direction of the dominant invariant subspace of a Metzler matrix.

    Uses 64 normalized squarings of the shifted matrix, so it also resolves
    reducible and defective inputs (where plain power iteration stalls at an
    algebraic rate) whenever the long-time direction of e^{tA} is unique.
    """
    entries = _as_square_array(m)
    if not is_metzler(entries):
        raise InvalidMatrixError("matrix is not Metzler")
    d = entries.shape[0]
    shift = 1.0 + np.abs(np.diag(entries)).max()
    b = entries + shift * np.eye(d)
    for _ in range(64):
        b = b @ b
        top = b.max()
        if not np.isfinite(top) or top <= 0.0:
            raise NumericalError("normalized squaring broke down")
        b = b / top
    v = b @ np.full(d, 1.0 / d)
    v = np.clip(v, 0.0, None)
    total = v.sum()
    if total <= 0.0:
        raise NumericalError("dominant direction left the positive cone")
    return SimplexPoint(v / total)


def _dominant_direction_batch(mats: np.ndarray) -> np.ndarray:
    d = mats.shape[-1]
    shift = 1.0 + np.abs(np.diagonal(mats, axis1=-2, axis2=-1)).max(axis=-1)
    b = mats + shift[:, None, None] * np.eye(d)
    for _ in range(64):
        b = np.matmul(b, b)
        top = b.max(axis=(-1, -2), keepdims=True)
        b = b / top
    v = b.sum(axis=-1) / d
    v = np.clip(v, 0.0, None)
    return v / v.sum(axis=-1, keepdims=True)


def _jacobi_eigenvalues(sym: np.ndarray) -> np.ndarray:
    """Eigenvalues of a stack (..., d, d) of symmetric matrices by cyclic
    Jacobi rotations, iterated until every off-diagonal Frobenius norm drops
    below 1e-12."""
    a = np.array(sym, dtype=float, copy=True)
    d = a.shape[-1]
    if d == 1:
        return a[..., :, 0].copy()
    rows = np.arange(d)
    # summing the masked squares directly avoids the catastrophic
    # cancellation of total - diagonal once the off-part is near roundoff
    off_mask = ~np.eye(d, dtype=bool)
    tol_sq = max(_JACOBI_TOL, 1e-14 * float(np.abs(a).max(initial=0.0))) ** 2
    for _ in range(_JACOBI_SWEEP_CAP):
        off_sq = np.square(a * off_mask).sum(axis=(-1, -2))
        if np.all(off_sq < tol_sq):
            return np.diagonal(a, axis1=-2, axis2=-1).copy()
        for p in range(d - 1):
            for q in range(p + 1, d):
                apq = a[..., p, q]
                rotate = np.abs(apq) > 0.0
                tau = np.zeros_like(apq)
                with np.errstate(over="ignore"):
                    np.divide(
                        a[..., q, q] - a[..., p, p], 2.0 * apq, out=tau, where=rotate
                    )
                # hypot never overflows, so huge tau gives t -> 0 cleanly
                t = np.where(
                    rotate,
                    np.where(tau >= 0.0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau)),
                    0.0,
                )
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                col_p = a[..., rows, p]
                col_q = a[..., rows, q]
                a[..., rows, p] = c[..., None] * col_p - s[..., None] * col_q
                a[..., rows, q] = s[..., None] * col_p + c[..., None] * col_q
                row_p = a[..., p, rows].copy()
                row_q = a[..., q, rows].copy()
                a[..., p, rows] = c[..., None] * row_p - s[..., None] * row_q
                a[..., q, rows] = s[..., None] * row_p + c[..., None] * row_q
                a[..., p, q] = 0.0
                a[..., q, p] = 0.0
    raise IterationLimitError(
        f"Jacobi sweeps did not reach off-diagonal tolerance within {_JACOBI_SWEEP_CAP} sweeps"
    )


def symmetric_part_extremes(m) -> tuple[float, float]:
    """(smallest, largest) eigenvalue of (m + m^T)/2, via cyclic Jacobi."""
    entries = _as_square_array(m)
    sym = 0.5 * (entries + entries.T)
    eigs = _jacobi_eigenvalues(sym)
    return float(eigs.min()), float(eigs.max())


def _symmetric_extremes_batch(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    sym = 0.5 * (mats + np.swapaxes(mats, -1, -2))
    eigs = _jacobi_eigenvalues(sym)
    return eigs.min(axis=-1), eigs.max(axis=-1)


def hilbert_distance(x, y) -> float:
    """Hilbert projective distance between two positive vectors:
    log max_i(x_i/y_i) - log min_i(x_i/y_i).  Scale invariant in each
    argument; zero exactly on proportional pairs."""
    xv = x.coords if isinstance(x, SimplexPoint) else np.asarray(x, dtype=float)
    yv = y.coords if isinstance(y, SimplexPoint) else np.asarray(y, dtype=float)
    if xv.shape != yv.shape or xv.ndim != 1:
        raise ValueError(f"vectors must share a 1-D shape, got {xv.shape} and {yv.shape}")
    if not (np.all(np.isfinite(xv)) and np.all(np.isfinite(yv))):
        raise ValueError("vectors must be finite")
    if xv.min() <= 0.0 or yv.min() <= 0.0:
        raise ValueError("Hilbert distance needs strictly positive coordinates")
    ratios = xv / yv
    return float(np.log(ratios.max()) - np.log(ratios.min()))


def _hilbert_distance_rows(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    ratios = xs / ys
    return np.log(ratios.max(axis=-1)) - np.log(ratios.min(axis=-1))


def _birkhoff_tau_batch(mats: np.ndarray) -> np.ndarray:
    """Birkhoff contraction coefficients for a stack of nonnegative matrices
    with positive diagonals.  Any zero entry forces tau = 1."""
    m = mats
    positive = m.min(axis=(-1, -2)) > 0.0
    safe = np.where(positive[..., None, None], m, 1.0)
    ratio = (
        safe[..., :, None, :, None]
        * safe[..., None, :, None, :]
        / (safe[..., None, :, :, None] * safe[..., :, None, None, :])
    )
    r = ratio.min(axis=(-1, -2, -3, -4))
    r = np.clip(r, 0.0, 1.0)
    root = np.sqrt(r)
    tau = (1.0 - root) / (1.0 + root)
    return np.where(positive, tau, 1.0)


def birkhoff_tau(m) -> float:
    """Birkhoff contraction coefficient of a nonnegative matrix with strictly
    positive diagonal.

    For entrywise positive m this is (1 - sqrt(r)) / (1 + sqrt(r)) with
    r = min over index quadruples (i,j,k,l) of m_ik m_jl / (m_jk m_il),
    found by exhaustive enumeration (d <= 30 intended).  A single zero entry
    means no uniform projective contraction: tau = 1.
    """
    entries = _as_square_array(m)
    if entries.min() < 0.0:
        raise InvalidMatrixError("matrix must be entrywise nonnegative")
    if np.diag(entries).min() <= 0.0:
        raise InvalidMatrixError("matrix must have strictly positive diagonal")
    return float(_birkhoff_tau_batch(entries[None])[0])
