"""Numerical Jordan structure and bi-orthonormal left/right bases.

Right chain vectors satisfy ``L D(j) = lam D(j) + D(j-1)`` with ``D(-1) = 0``;
left covectors are the rows of the inverse of the right-basis matrix, so that
``E(i) D(j) = delta`` holds by construction and ``E(i) L = lam E(i) + E(i+1)``.

All vectors are stored as rows.  The pairing ``<<E|D>>`` is the plain
bilinear product ``E @ D`` (no conjugation): left vectors are covectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import IllConditionedDecompositionError, NonConvergenceError

BIORTH_TOL = 1e-8


@dataclass(frozen=True)
class JordanBlockBasis:
    eigenvalue: complex
    right: np.ndarray  # (n, d); right[j] is D^(j)
    left: np.ndarray  # (n, d); left[i] is E^(i)

    @property
    def chain_length(self) -> int:
        return self.right.shape[0]


@dataclass(frozen=True)
class JordanDecomposition:
    blocks: tuple
    dim: int
    cluster_tol: float
    clusters: tuple = field(default=())  # block indices sharing one eigenvalue

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([b.eigenvalue for b in self.blocks])

    @property
    def chain_lengths(self) -> tuple:
        return tuple(b.chain_length for b in self.blocks)

    def right_matrix(self) -> np.ndarray:
        """Columns are all right chain vectors, block by block."""
        return np.concatenate([b.right for b in self.blocks], axis=0).T

    def left_matrix(self) -> np.ndarray:
        return np.concatenate([b.left for b in self.blocks], axis=0)

    def signature(self) -> tuple:
        """Degeneracy/Jordan structure, independent of ordering."""
        return tuple(sorted(
            tuple(sorted(self.blocks[i].chain_length for i in c)) for c in self.clusters
        ))


class ResidualReport(NamedTuple):
    biorthonormality: float
    chain: float
    completeness: float


def default_cluster_tol(matrix) -> float:
    return 1e-8 * float(np.linalg.norm(np.asarray(matrix), 2))


def _cluster(values: np.ndarray, tol: float) -> list:
    """Single-linkage clusters of complex values closer than ``tol``."""
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) <= tol:
                parent[find(i)] = find(j)
    groups = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return [np.array(g) for g in sorted(groups.values(), key=lambda g: g[0])]


def _null_basis(a: np.ndarray, thr: float) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical kernel of ``a``."""
    _, s, vh = np.linalg.svd(a)
    rank = int(np.sum(s > thr))
    return vh[rank:].conj().T


def _orth(a: np.ndarray, thr: float) -> np.ndarray:
    if a.shape[1] == 0:
        return a
    u, s, _ = np.linalg.svd(a, full_matrices=False)
    return u[:, : int(np.sum(s > thr))]


def _jordan_chains(b: np.ndarray, thr: float) -> list:
    """Jordan chains of the (numerically) nilpotent matrix ``b``.

    Returns a list of arrays, each of shape ``(n, m)`` holding one chain with
    ``b @ chain[j] = chain[j-1]``.  The top vector of every chain is a unit
    vector orthogonal to the kernel of ``b**(n-1)``, which pins the gauge up
    to a scalar phase.
    """
    m = b.shape[0]
    scale = max(1.0, float(np.linalg.norm(b, 2)))
    kernels = [np.zeros((m, 0), dtype=complex)]
    power = np.eye(m, dtype=complex)
    while kernels[-1].shape[1] < m:
        if len(kernels) > m:
            raise NonConvergenceError("generalized eigenspace dimension did not saturate")
        power = b @ power
        k = len(kernels)
        kernels.append(_null_basis(power, thr * scale ** (k - 1)))
    dims = [kb.shape[1] for kb in kernels]
    top = len(dims) - 1
    at_least = [0] * (top + 2)
    for k in range(1, top + 1):
        at_least[k] = dims[k] - dims[k - 1]
    for k in range(1, top + 1):
        if at_least[k] < at_least[k + 1]:
            raise NonConvergenceError("inconsistent Jordan structure from rank decisions")

    chains = []
    for k in range(top, 0, -1):
        need = at_least[k] - at_least[k + 1]
        if need == 0:
            continue
        exclude = [kernels[k - 1]] + [c[k - 1][:, None] for c in chains]
        u = _orth(np.concatenate(exclude, axis=1), 1e-12)
        cand = kernels[k] - u @ (u.conj().T @ kernels[k])
        left, s, _ = np.linalg.svd(cand, full_matrices=False)
        if len(s) < need or s[need - 1] < 1e-8:
            raise NonConvergenceError("could not complete Jordan chains")
        for x in left[:, :need].T:
            vecs = [x]
            for _ in range(k - 1):
                vecs.append(b @ vecs[-1])
            chains.append(np.array(vecs[::-1]))
    return chains


def decompose(L, cluster_tol: float | None = None) -> JordanDecomposition:
    """Jordan decomposition of a superoperator with bi-orthonormal bases.

    Eigenvalues closer than ``cluster_tol`` (default ``1e-8 * ||L||``) are
    treated as one.  Each cluster is isolated through a reordered Schur form,
    then split into Jordan chains by rank decisions on powers of the
    restricted nilpotent part.
    """
    a = np.asarray(getattr(L, "matrix", L), dtype=complex)
    n = a.shape[0]
    if not np.all(np.isfinite(a)):
        raise ValueError("superoperator contains non-finite entries")
    norm = float(np.linalg.norm(a, 2))
    tol = 1e-8 * norm if cluster_tol is None else float(cluster_tol)
    if tol < 0:
        raise ValueError("cluster_tol must be nonnegative")
    rank_thr = max(1e-10 * norm, tol, 1e-13 * max(norm, 1.0))

    w, vr = sla.eig(a)
    groups = _cluster(w, tol)

    blocks = []
    for g in groups:
        mu = complex(np.mean(w[g]))
        if len(g) == 1:
            v = vr[:, g[0]]
            blocks.append((complex(w[g[0]]), [v[None, :] / np.linalg.norm(v)]))
            continue
        others = np.delete(w, g)
        sep = np.min(np.abs(others[:, None] - w[g][None, :])) if len(others) else np.inf
        members = w[g]
        reach = sep / 2 if np.isfinite(sep) else np.inf

        def select(z, members=members, reach=reach):
            return bool(np.min(np.abs(members - z)) < reach)

        t, z, sdim = sla.schur(a, output="complex", sort=select)
        if sdim != len(g):
            raise NonConvergenceError(
                f"Schur reordering isolated {sdim} eigenvalues, expected {len(g)}"
            )
        q = z[:, : len(g)]
        restricted = t[: len(g), : len(g)] - mu * np.eye(len(g))
        chains = _jordan_chains(restricted, rank_thr)
        blocks.append((mu, [(q @ c.T).T for c in chains]))

    entries = []
    for cid, (lam, chains) in enumerate(blocks):
        for c in chains:
            entries.append((lam, c, cid))
    # real parts equal up to rounding must not decide the order
    quantum = 1e-9 * max(norm, 1.0)
    order = sorted(
        range(len(entries)),
        key=lambda i: (-round(entries[i][0].real / quantum), entries[i][0].imag,
                       entries[i][1].shape[0]),
    )
    entries = [entries[i] for i in order]

    s = np.concatenate([e[1] for e in entries], axis=0).T
    if s.shape != (n, n):
        raise NonConvergenceError("Jordan chains do not span the space")
    try:
        inv = np.linalg.solve(s, np.eye(n, dtype=complex))
    except np.linalg.LinAlgError as exc:
        raise IllConditionedDecompositionError("right basis is singular", np.inf) from exc
    # one Newton-Schulz refinement step
    inv = inv @ (2 * np.eye(n) - s @ inv)
    resid = float(np.max(np.abs(inv @ s - np.eye(n))))
    if not resid <= BIORTH_TOL:
        raise IllConditionedDecompositionError("bi-orthonormality not achieved", resid)

    out_blocks = []
    cluster_members = {}
    pos = 0
    for i, (lam, chain, cid) in enumerate(entries):
        nb = chain.shape[0]
        out_blocks.append(JordanBlockBasis(
            complex(lam), _ro(chain), _ro(inv[pos:pos + nb])
        ))
        cluster_members.setdefault(cid, []).append(i)
        pos += nb
    clusters = tuple(
        tuple(v) for v in sorted(cluster_members.values(), key=lambda v: v[0])
    )
    return JordanDecomposition(tuple(out_blocks), n, tol, clusters)


def _ro(a):
    a = np.ascontiguousarray(a, dtype=complex)
    a.setflags(write=False)
    return a


def verify(dec: JordanDecomposition, L) -> ResidualReport:
    """Max-norm residuals of bi-orthonormality, chain relations, completeness."""
    a = np.asarray(getattr(L, "matrix", L), dtype=complex)
    s = dec.right_matrix()
    e = dec.left_matrix()
    n = s.shape[0]
    biorth = float(np.max(np.abs(e @ s - np.eye(n))))
    complete = float(np.max(np.abs(s @ e - np.eye(n))))
    chain = 0.0
    for b in dec.blocks:
        lam = b.eigenvalue
        nb = b.chain_length
        for j in range(nb):
            prev = b.right[j - 1] if j > 0 else 0.0
            r = a @ b.right[j] - lam * b.right[j] - prev
            nxt = b.left[j + 1] if j + 1 < nb else 0.0
            l = b.left[j] @ a - lam * b.left[j] - nxt
            chain = max(chain, float(np.max(np.abs(r))), float(np.max(np.abs(l))))
    return ResidualReport(biorth, chain, complete)


def reconstruct(dec: JordanDecomposition) -> np.ndarray:
    """``S J S^-1`` from the decomposition (diagnostic)."""
    n = dec.dim
    j = np.zeros((n, n), dtype=complex)
    pos = 0
    for b in dec.blocks:
        nb = b.chain_length
        j[pos:pos + nb, pos:pos + nb] = b.eigenvalue * np.eye(nb) + np.eye(nb, k=1)
        pos += nb
    return dec.right_matrix() @ j @ dec.left_matrix()
