"""Cached tracked-block fixtures shared by several test modules."""

from functools import lru_cache

import numpy as np

from holoq.models import DegenerateModel, SpinHalfModel, coherence_track_index
from holoq.path import group_clusters, sample_family, track_blocks


@lru_cache(maxsize=None)
def spin_tracks(channel="none", beta=0.0, theta=np.pi / 3, B=1.0, n=1024):
    m = SpinHalfModel(B=B, theta=theta, channel=channel, beta=beta)
    return tuple(track_blocks(sample_family(m.path(n), m)))


def coherence_track(channel="none", beta=0.0, theta=np.pi / 3, B=1.0, n=1024):
    tracks = spin_tracks(channel, beta, theta, B, n)
    return tracks[coherence_track_index(tracks)]


@lru_cache(maxsize=None)
def degenerate_cluster(G, n=256, trivial=False):
    m = DegenerateModel(G, trivial=trivial)
    tracks = track_blocks(sample_family(m.path(n), m))
    for group in group_clusters(tracks).values():
        if abs(group[0].eigenvalues[0] - m.eigenvalue) < 1e-8:
            return tuple(group)
    raise AssertionError("degenerate cluster not found")


def circ(a, b):
    """Distance between two angles on the circle."""
    return abs((a - b + np.pi) % (2 * np.pi) - np.pi)


def smooth_loop_function(rng, n_modes=3):
    """Random smooth periodic function on [0, 1] (zero winding)."""
    amps = rng.normal(size=(n_modes, 2)) / np.arange(1, n_modes + 1)[:, None]

    def f(s):
        k = np.arange(1, n_modes + 1)
        return float(np.sum(amps[:, 0] * np.cos(2 * np.pi * k * s)
                            + amps[:, 1] * np.sin(2 * np.pi * k * s)))

    return f


def multiset_distance(a, b):
    """Largest pairwise gap under the best matching of two small sets of complex numbers."""
    from itertools import permutations

    a, b = np.asarray(a), np.asarray(b)
    return min(float(np.max(np.abs(a - b[list(p)]))) for p in permutations(range(len(b))))
