"""Seed plumbing.

Every random draw in the package comes from a substream identified by the
user seed plus an integer key tuple, e.g. ``(FBM, mode_index)`` for the fBm
driving noise mode ``i`` or ``(ENSEMBLE, tag, replica)`` for Monte Carlo
replica ``r``.  Substreams are independent of the order in which they are
requested, so ensembles can be reduced in any order or in parallel and still
give identical results.
"""
import numpy as np

FBM = 1
ENSEMBLE = 2
GAUSS = 3


def substream(seed, *key):
    """Return a Generator for the substream ``key`` of ``seed``.

    ``seed`` may be an int or a :class:`numpy.random.SeedSequence`; in the
    latter case ``key`` extends its spawn key.
    """
    key = tuple(int(k) for k in key)
    if isinstance(seed, np.random.SeedSequence):
        ss = np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + key)
    else:
        ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def replica_normals(seed, tag, replicas, size):
    """Standard normals of shape ``(len(replicas), size)``, one substream per replica."""
    out = np.empty((len(replicas), size))
    for row, r in enumerate(replicas):
        out[row] = substream(seed, ENSEMBLE, tag, r).standard_normal(size)
    return out
