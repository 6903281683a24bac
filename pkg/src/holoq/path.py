"""Closed parameter paths and gauge-smoothed block tracking along them."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegeneratePathError,
    HoloqError,
    MatchingAmbiguityError,
    ResolutionError,
    StructureChangeError,
)
from .spectral import JordanDecomposition, decompose

MIN_GRID = 16
AMBIGUITY_TOL = 1e-3
MIN_OVERLAP = 0.5
CONTINUITY_FRACTION = 0.2


@dataclass(frozen=True)
class ParameterPath:
    """Curve ``s -> R(s)`` on ``[0, 1]`` sampled at ``s_k = k / n``.

    For closed paths the point ``s = 1`` is identified with ``s = 0``, so
    closure holds exactly even when ``parameter_map(1)`` differs from
    ``parameter_map(0)`` by rounding.
    """

    parameter_map: Callable[[float], np.ndarray]
    n: int
    closed: bool = True

    def __post_init__(self):
        if self.n < MIN_GRID:
            raise ValueError(f"path grid needs at least {MIN_GRID} intervals, got {self.n}")
        if self.closed:
            r0 = np.atleast_1d(np.asarray(self.parameter_map(0.0), dtype=float))
            r1 = np.atleast_1d(np.asarray(self.parameter_map(1.0), dtype=float))
            if np.linalg.norm(r1 - r0) > 1e-9 * max(1.0, np.linalg.norm(r0)):
                raise DegeneratePathError("parameter map is not closed: R(1) != R(0)")

    @property
    def grid(self) -> np.ndarray:
        return np.arange(self.n + 1) / self.n

    def at(self, s: float) -> np.ndarray:
        if self.closed:
            s = s % 1.0
        return np.atleast_1d(np.asarray(self.parameter_map(s), dtype=float))

    def points(self) -> np.ndarray:
        return np.array([self.at(s) for s in self.grid])

    def refined(self, factor: int = 2) -> "ParameterPath":
        return ParameterPath(self.parameter_map, self.n * factor, self.closed)

    def with_n(self, n: int) -> "ParameterPath":
        return ParameterPath(self.parameter_map, n, self.closed)

    def reversed(self) -> "ParameterPath":
        fn = self.parameter_map
        return ParameterPath(lambda s: fn(1.0 - s), self.n, self.closed)

    def reparametrized(self, g: Callable[[float], float]) -> "ParameterPath":
        """Same curve traversed with ``s -> g(s)``; ``g`` must map 0->0 and 1->1."""
        fn = self.parameter_map
        return ParameterPath(lambda s: fn(g(s)), self.n, self.closed)


@dataclass(frozen=True)
class SmoothBlockTrack:
    """One Jordan block followed along the path grid.

    ``right[k, j]`` is ``D^(j)(s_k)`` and ``left[k, i]`` is ``E^(i)(s_k)``.
    For closed paths the last grid point repeats the first one exactly.
    Tracks sharing ``cluster`` belong to one degenerate eigenvalue.
    """

    label: int
    cluster: int
    s: np.ndarray
    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    closed: bool = True
    cluster_tol: float = 0.0
    multiplicity: int = 1  # number of blocks in the cluster

    @property
    def chain_length(self) -> int:
        return self.right.shape[1]

    @property
    def n_grid(self) -> int:
        return len(self.s) - 1


def sample_family(path: ParameterPath, model) -> list:
    """Evaluate ``model(R(s_k))`` on the grid; closed paths reuse the s=0 sample."""
    out = []
    grid = path.grid
    last = len(grid) - 1
    for k, s in enumerate(grid):
        if path.closed and k == last:
            out.append(out[0])
            continue
        try:
            out.append(model(path.at(s)))
        except HoloqError:
            raise
        except Exception as exc:
            raise HoloqError(f"model evaluation failed at s={s:.6g}: {exc}") from exc
    return out


def _cluster_rows(dec: JordanDecomposition, c: int):
    idx = dec.clusters[c]
    d = np.concatenate([dec.blocks[i].right for i in idx], axis=0)
    e = np.concatenate([dec.blocks[i].left for i in idx], axis=0)
    return d, e


def _cluster_shape(dec, c):
    return tuple(sorted(dec.blocks[i].chain_length for i in dec.clusters[c]))


def _match(dec_a, dec_b, s_b):
    """Map each cluster of ``dec_a`` to a cluster of ``dec_b`` by projector overlap."""
    na = len(dec_a.clusters)
    rows_a = [_cluster_rows(dec_a, c) for c in range(na)]
    rows_b = [_cluster_rows(dec_b, c) for c in range(na)]
    lam_a = [dec_a.blocks[dec_a.clusters[c][0]].eigenvalue for c in range(na)]
    lam_b = [dec_b.blocks[dec_b.clusters[c][0]].eigenvalue for c in range(na)]
    score = np.zeros((na, na))
    for a in range(na):
        da, ea = rows_a[a]
        for b in range(na):
            if _cluster_shape(dec_a, a) != _cluster_shape(dec_b, b):
                continue
            db, eb = rows_b[b]
            score[a, b] = np.real(np.trace((ea @ db.T) @ (eb @ da.T))) / da.shape[0]
    perm = []
    for a in range(na):
        row = score[a]
        best = int(np.argmax(row))
        if row[best] < MIN_OVERLAP:
            raise ResolutionError(
                f"block overlap {row[best]:.3f} below {MIN_OVERLAP} at s={s_b:.6g}; "
                "increase the path resolution"
            )
        close = [b for b in range(na) if row[b] > row[best] - AMBIGUITY_TOL]
        if len(close) > 1:
            dist = sorted((abs(lam_a[a] - lam_b[b]), b) for b in close)
            if dist[1][0] - dist[0][0] <= AMBIGUITY_TOL * max(1.0, abs(lam_a[a])):
                raise MatchingAmbiguityError(f"ambiguous block matching at s={s_b:.6g}")
            best = dist[0][1]
        perm.append(best)
    if len(set(perm)) != na:
        raise MatchingAmbiguityError(f"block matching is not one-to-one at s={s_b:.6g}")
    return perm


def _unitary_root(u: np.ndarray, n: int) -> np.ndarray:
    """Principal ``n``-th root of a (nearly) unitary matrix via its Schur form."""
    t, q = sla.schur(u, output="complex")
    phases = np.angle(np.diag(t))
    return q @ np.diag(np.exp(1j * phases / n)) @ q.conj().T


def _polar_unitary(m: np.ndarray) -> np.ndarray:
    u, _, vh = np.linalg.svd(m)
    return u @ vh


def _is_simple(lengths) -> bool:
    return all(n == 1 for n in lengths)


def track_blocks(samples: Sequence, cluster_tol: float | None = None,
                 closed: bool = True, s=None) -> list:
    """Decompose every sample and follow each Jordan block along the grid.

    Blocks are matched between neighbouring points by overlap of their
    spectral projectors.  Within each matched eigenvalue cluster the basis at
    ``s_{k+1}`` is rotated (polar factor of the overlap matrix) so that
    consecutive overlaps are close to the identity; on closed paths the
    leftover loop rotation is spread uniformly over the grid.  These are gauge
    transformations and leave closed-loop phases unchanged.
    """
    mats = [np.asarray(getattr(x, "matrix", x), dtype=complex) for x in samples]
    total = len(mats)
    n_grid = total - 1
    if s is None:
        s = np.arange(total) / n_grid
    s = np.asarray(s, dtype=float)
    if cluster_tol is None:
        cluster_tol = 1e-8 * max(float(np.linalg.norm(m, 2)) for m in mats)
    npts = n_grid if closed else total
    decs = [decompose(m, cluster_tol) for m in mats[:npts]]

    sig0 = decs[0].signature()
    for k, dec in enumerate(decs):
        if dec.signature() != sig0:
            raise StructureChangeError("Jordan/degeneracy structure changes", s[k])

    nclust = len(decs[0].clusters)
    # label cluster c (numbered at s_0) sits at cluster index where[k][c] of point k
    where = [list(range(nclust))]
    for k in range(1, npts):
        step = _match(decs[k - 1], decs[k], s[k])
        where.append([step[where[-1][c]] for c in range(nclust)])
    if closed:
        step = _match(decs[npts - 1], decs[0], s[n_grid])
        closing = [step[where[-1][c]] for c in range(nclust)]
        if closing != list(range(nclust)):
            raise StructureChangeError("eigenvalue clusters are permuted around the loop", 1.0)

    lam = np.array([[decs[k].blocks[decs[k].clusters[where[k][c]][0]].eigenvalue
                     for c in range(nclust)] for k in range(npts)])
    _check_continuity(lam, s, closed)

    tracks = []
    label = 0
    for c in range(nclust):
        lengths = [decs[0].blocks[i].chain_length for i in decs[0].clusters[c]]
        d_rows = []
        e_rows = []
        for k in range(npts):
            d, e = _cluster_rows(decs[k], where[k][c])
            d_rows.append(np.array(d))
            e_rows.append(np.array(e))
        _align(d_rows, e_rows, lengths, closed)
        if closed:
            d_rows.append(d_rows[0])
            e_rows.append(e_rows[0])
        eig = np.concatenate([lam[:, c], lam[:1, c]]) if closed else lam[:, c]
        pos = 0
        for nb in lengths:
            right = np.stack([d[pos:pos + nb] for d in d_rows])
            left = np.stack([e[pos:pos + nb] for e in e_rows])
            right.setflags(write=False)
            left.setflags(write=False)
            tracks.append(SmoothBlockTrack(label, c, s, eig.copy(), right, left,
                                           closed, float(cluster_tol), len(lengths)))
            label += 1
            pos += nb
    return tracks


def _check_continuity(lam, s, closed):
    npts, nclust = lam.shape
    if nclust < 2:
        return
    seq = np.concatenate([lam, lam[:1]]) if closed else lam
    for k in range(len(seq) - 1):
        gaps = np.abs(seq[k][:, None] - seq[k][None, :]) + np.diag(np.full(nclust, np.inf))
        local = gaps.min(axis=1)
        jump = np.abs(seq[k + 1] - seq[k])
        if np.any(jump > CONTINUITY_FRACTION * local):
            raise ResolutionError(
                f"eigenvalue jump exceeds {CONTINUITY_FRACTION} of the local gap "
                f"near s={s[k]:.6g}; increase the path resolution"
            )


def _align(d_rows, e_rows, lengths, closed):
    """Smooth the gauge of one cluster in place (rows layout)."""
    npts = len(d_rows)
    simple = _is_simple(lengths)

    def overlap(k_from, d_to):
        return e_rows[k_from] @ d_to.T

    def rotate(k, u):
        # columns D -> D u^+ ; rows: D -> conj(u) D ; E -> u E
        d_rows[k] = u.conj() @ d_rows[k]
        e_rows[k] = u @ e_rows[k]

    def phase_blocks(m):
        # per-block phase correction for chain clusters
        ph = np.ones(m.shape[0], dtype=complex)
        pos = 0
        for nb in lengths:
            tr = np.trace(m[pos:pos + nb, pos:pos + nb])
            ph[pos:pos + nb] = tr / abs(tr) if abs(tr) > 0 else 1.0
            pos += nb
        return ph

    for k in range(npts - 1):
        m = overlap(k, d_rows[k + 1])
        if simple:
            rotate(k + 1, _polar_unitary(m))
        else:
            ph = phase_blocks(m)
            d_rows[k + 1] = ph.conj()[:, None] * d_rows[k + 1]
            e_rows[k + 1] = ph[:, None] * e_rows[k + 1]
    if not closed:
        return
    mc = overlap(npts - 1, d_rows[0])
    if simple:
        v = _unitary_root(_polar_unitary(mc), npts)
        x = np.eye(len(v), dtype=complex)
        for k in range(1, npts):
            x = x @ v
            # columns D -> D x ; rows D -> x^T D ; E -> x^-1 E
            d_rows[k] = x.T @ d_rows[k]
            e_rows[k] = x.conj().T @ e_rows[k]
    else:
        ph = np.angle(phase_blocks(mc))
        for k in range(1, npts):
            f = np.exp(1j * ph * k / npts)
            d_rows[k] = f[:, None] * d_rows[k]
            e_rows[k] = f.conj()[:, None] * e_rows[k]


def group_clusters(tracks: Sequence[SmoothBlockTrack]) -> dict:
    groups = {}
    for t in tracks:
        groups.setdefault(t.cluster, []).append(t)
    return groups
