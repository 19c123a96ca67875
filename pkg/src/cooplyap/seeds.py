"""Deterministic seed derivation.

One 64-bit master seed governs an experiment.  Every random path draws its
own seed from the master through :func:`derive_seed`, which implements the
splitmix64 output mix applied to ``master + (stream + 1) * GAMMA``: the
counter advances a Weyl sequence and the mix decorrelates neighbouring
counters.  The derivation is a pure function, so any component can recompute
the seed of path ``k`` without coordination.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(x: int) -> int:
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(master_seed: int, stream: int) -> int:
    """Seed for sub-stream ``stream`` (0, 1, 2, ...) of ``master_seed``."""
    if not 0 <= master_seed <= _MASK:
        raise ValueError("master_seed must fit in 64 unsigned bits")
    if stream < 0:
        raise ValueError("stream index must be nonnegative")
    return _mix(master_seed + (stream + 1) * _GAMMA)
