"""Exact and adiabatic evolution along a path, and crossover-time diagnostics.

Time is measured in units of ``1/mu``.  The path parameter is ``s = t / T``,
so the master equation reads ``d rho/ds = T L(s) rho``.  In the adiabatic
expansion ``rho(s) = sum_j p_j(s) exp(T Lambda(s)) D_j(s)`` with
``Lambda(s) = int_0^s lambda``, the amplitudes obey

    dp_i/ds = T p_{i+1} - sum_j <<E_i|dD_j/ds>> p_j

inside each block, where the ``T p_{i+1}`` term only appears along Jordan
chains.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import GapCollapseError, HoloqError, StabilityError
from .geophase import _transfer
from .path import ParameterPath, SmoothBlockTrack, group_clusters, sample_family, track_blocks

GAP_TOL = 1e-10


@dataclass(frozen=True)
class EvolutionResult:
    s: np.ndarray
    states: np.ndarray  # (K, D**2) coherence vectors
    method: str
    T: float
    error_estimate: float = float("nan")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class CrossoverReport:
    T_grid: np.ndarray
    crossover: np.ndarray  # (len(T_grid), n_blocks)
    blocks: tuple  # block labels
    eigenvalues: np.ndarray  # block eigenvalues at s = 0
    metadata: dict = field(default_factory=dict)

    @property
    def max_ratio(self) -> np.ndarray:
        if self.crossover.shape[1] == 0:
            return np.zeros(len(self.T_grid))
        return np.max(self.crossover, axis=1) / self.T_grid


def _matrix(x) -> np.ndarray:
    return np.asarray(getattr(x, "matrix", x), dtype=complex)


def _vector(x) -> np.ndarray:
    return np.array(getattr(x, "coefficients", x), dtype=complex)


def _check_T(T):
    if not (np.isfinite(T) and T > 0):
        raise ValueError(f"total time must be positive and finite, got {T}")


# --- exact integration ----------------------------------------------------------

def _rk4(mats: np.ndarray, rho0: np.ndarray, T: float) -> np.ndarray:
    """Fixed-step RK4 given the generator at nodes, midpoints, nodes, ... (length 2n+1)."""
    n = (len(mats) - 1) // 2
    h = 1.0 / n
    out = np.empty((n + 1, len(rho0)), dtype=complex)
    out[0] = rho0
    y = rho0
    for k in range(n):
        a0, a1, a2 = T * mats[2 * k], T * mats[2 * k + 1], T * mats[2 * k + 2]
        k1 = a0 @ y
        k2 = a1 @ (y + 0.5 * h * k1)
        k3 = a1 @ (y + 0.5 * h * k2)
        k4 = a2 @ (y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k + 1] = y
    return out


def exact_evolve(model, path: ParameterPath, T: float, rho0, n_steps: int | None = None
                 ) -> EvolutionResult:
    """Integrate ``d rho/ds = T L(s) rho`` from ``s = 0`` to ``1`` with classic RK4.

    The default step count keeps ``T ||L|| ds <= 0.5``.  An explicit count with
    ``T ||L|| ds > 1`` is refused.  The error estimate compares against the
    run with half as many steps: ``||rho_n - rho_{n/2}|| / 15``.
    """
    _check_T(T)
    y0 = _vector(rho0)
    probe = np.linspace(0.0, 1.0, 33)
    norm = max(float(np.linalg.norm(_matrix(model(path.at(s))), 2)) for s in probe)
    needed = max(1, int(np.ceil(T * norm)))
    if n_steps is None:
        n_steps = max(path.n, 2 * needed)
        n_steps += n_steps % 2
    elif n_steps < 1:
        raise ValueError("n_steps must be positive")
    if T * norm / n_steps > 1.0:
        raise StabilityError(f"step too large: T*||L||*ds = {T * norm / n_steps:.3g} > 1",
                             2 * needed)
    s_half = np.arange(2 * n_steps + 1) / (2 * n_steps)
    mats = np.array([_matrix(model(path.at(s))) for s in s_half])
    states = _rk4(mats, y0, T)
    err = float("nan")
    if n_steps % 2 == 0 and T * norm / (n_steps // 2) <= 1.0:
        coarse = _rk4(mats[::2], y0, T)
        err = float(np.linalg.norm(states[-1] - coarse[-1])) / 15
    states.setflags(write=False)
    return EvolutionResult(np.arange(n_steps + 1) / n_steps, states, "exact", float(T), err)


# --- adiabatic propagation ----------------------------------------------------

def _periodic_derivative(a: np.ndarray, ds: float) -> np.ndarray:
    """Fourth-order central differences along axis 0 of values on a closed grid.

    ``a`` holds the points ``s_0 .. s_N`` with ``a[N] == a[0]``.
    """
    b = a[:-1]
    d = (8 * (np.roll(b, -1, 0) - np.roll(b, 1, 0))
         - (np.roll(b, -2, 0) - np.roll(b, 2, 0))) / (12 * ds)
    return np.concatenate([d, d[:1]])


def _derivative(a: np.ndarray, s: np.ndarray, closed: bool) -> np.ndarray:
    if closed:
        return _periodic_derivative(a, s[1] - s[0])
    return np.gradient(a, s, axis=0, edge_order=2)


def _cluster_arrays(tracks: Sequence[SmoothBlockTrack]):
    d = np.concatenate([t.right for t in tracks], axis=1)  # (K, m, dim)
    e = np.concatenate([t.left for t in tracks], axis=1)
    return d, e


def _shift_matrix(lengths) -> np.ndarray:
    m = sum(lengths)
    k = np.zeros((m, m))
    pos = 0
    for nb in lengths:
        for i in range(nb - 1):
            k[pos + i, pos + i + 1] = 1.0
        pos += nb
    return k


def ladder_integrate(tracks: Sequence[SmoothBlockTrack], T: float, p0) -> np.ndarray:
    """Amplitudes of one Jordan-chain cluster along the grid.

    Integrates ``dp/ds = T K p - C(s) p`` with RK4 on the path grid, where
    ``K`` shifts each chain up by one (``(K p)_i = p_{i+1}``) and
    ``C_ij = <<E_i|dD_j/ds>>``.  ``C`` at the step midpoints comes from cubic
    interpolation.  Returns an array of shape ``(N + 1, m)`` for the ``m``
    chain vectors of the cluster, block by block.
    """
    _check_T(T)
    lengths = [t.chain_length for t in tracks]
    d, e = _cluster_arrays(tracks)
    s = tracks[0].s
    closed = tracks[0].closed
    n = len(s) - 1
    h = s[1] - s[0]
    dd = _derivative(d, s, closed)
    c = np.einsum("kid,kjd->kij", e, dd)
    if closed:
        cp = c[:-1]
        mid = (9 * (cp + np.roll(cp, -1, 0)) - (np.roll(cp, 1, 0) + np.roll(cp, -2, 0))) / 16
    else:
        mid = 0.5 * (c[:-1] + c[1:])
    shift = T * _shift_matrix(lengths)
    gen = shift[None] - c
    gen_mid = shift[None] - mid
    worst = float(max(np.max(np.linalg.norm(gen, 2, axis=(1, 2))),
                      np.max(np.linalg.norm(gen_mid, 2, axis=(1, 2)))))
    if worst * h > 1.0:
        raise StabilityError(f"ladder step too large: ||T K - C|| ds = {worst * h:.3g} > 1",
                             int(np.ceil(worst)) * 2)
    p = np.empty((n + 1, d.shape[1]), dtype=complex)
    y = np.array(p0, dtype=complex)
    if y.shape != (d.shape[1],):
        raise ValueError(f"initial amplitudes need shape {(d.shape[1],)}, got {y.shape}")
    p[0] = y
    for k in range(n):
        k1 = gen[k] @ y
        k2 = gen_mid[k] @ (y + 0.5 * h * k1)
        k3 = gen_mid[k] @ (y + 0.5 * h * k2)
        k4 = gen[k + 1] @ (y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        p[k + 1] = y
    return p


def _transfer_amplitudes(tracks, p0) -> np.ndarray:
    """Geometric amplitudes of a cluster of 1-D blocks by symmetric transfer products."""
    d, e = _cluster_arrays(tracks)
    p = np.empty((d.shape[0], d.shape[1]), dtype=complex)
    p[0] = p0
    for k in range(d.shape[0] - 1):
        p[k + 1] = _transfer(e[k], d[k], e[k + 1], d[k + 1]) @ p[k]
    return p


def geometric_amplitudes(tracks: Sequence[SmoothBlockTrack], rho0, T: float | None = None):
    """Per-cluster amplitude histories without the dynamical factor.

    Returns ``{cluster: (tracks, p)}`` with ``p`` of shape ``(K, m)``.
    Clusters of 1-D blocks do not depend on ``T``; Jordan chains need it.
    """
    y0 = _vector(rho0)
    out = {}
    for cid, group in group_clusters(tracks).items():
        _, e = _cluster_arrays(group)
        p0 = e[0] @ y0
        if all(t.chain_length == 1 for t in group):
            out[cid] = (group, _transfer_amplitudes(group, p0))
        else:
            if T is None:
                raise HoloqError("Jordan-chain amplitudes depend on T; pass T")
            out[cid] = (group, ladder_integrate(group, T, p0))
    return out


def _dynamical_exponent(lam: np.ndarray, s: np.ndarray) -> np.ndarray:
    return cumulative_trapezoid(lam, s, initial=0.0)


def adiabatic_evolve(model, path: ParameterPath, T: float, rho0,
                     cluster_tol: float | None = None, tracks=None) -> EvolutionResult:
    """Adiabatic approximation: blocks evolve independently, no inter-block transitions."""
    _check_T(T)
    if tracks is None:
        tracks = track_blocks(sample_family(path, model), cluster_tol, path.closed)
    s = tracks[0].s
    amps = geometric_amplitudes(tracks, rho0, T)
    dim = tracks[0].right.shape[2]
    states = np.zeros((len(s), dim), dtype=complex)
    for group, p in amps.values():
        d, _ = _cluster_arrays(group)
        dyn = np.exp(T * _dynamical_exponent(group[0].eigenvalues, s))
        states += np.einsum("km,kmd->kd", p * dyn[:, None], d)
    states.setflags(write=False)
    return EvolutionResult(s, states, "adiabatic", float(T))


# --- crossover time -------------------------------------------------------------

@dataclass(frozen=True)
class _PairTerms:
    alpha: int
    omega_int: np.ndarray  # (P, K) integral of the gap
    q: np.ndarray  # (P, K)
    dq: np.ndarray  # (P, K)


class CrossoverSetup:
    """T-independent ingredients of the crossover times of all 1-D blocks."""

    def __init__(self, model, path: ParameterPath, rho0=None, cluster_tol=None, tracks=None):
        if rho0 is None:
            if not hasattr(model, "initial_state"):
                raise HoloqError("model has no default initial state; pass rho0")
            rho0 = model.initial_state()
        samples = sample_family(path, model)
        if tracks is None:
            tracks = track_blocks(samples, cluster_tol, path.closed)
        if any(t.chain_length != 1 for t in tracks):
            raise HoloqError("crossover times are defined for 1-dimensional blocks only")
        s = tracks[0].s
        mats = np.array([_matrix(x) for x in samples])
        dmat = _derivative(mats, s, path.closed)
        amps = geometric_amplitudes(tracks, rho0)
        amp_of = {}
        for group, p in amps.values():
            for j, t in enumerate(group):
                amp_of[t.label] = p[:, j]
        self.s = s
        self.tracks = tracks
        self.terms = []
        for ta in tracks:
            omegas, qs = [], []
            for tb in tracks:
                if tb.cluster == ta.cluster:
                    continue
                w = tb.eigenvalues - ta.eigenvalues
                if np.min(np.abs(w)) < GAP_TOL:
                    raise GapCollapseError(
                        f"gap between blocks {ta.label} and {tb.label} vanishes"
                    )
                bracket = np.einsum("kd,kde,ke->k", ta.left[:, 0], dmat, tb.right[:, 0])
                v = amp_of[tb.label] * bracket
                omegas.append(cumulative_trapezoid(w, s, initial=0.0))
                qs.append(v / w ** 2)
            q = np.array(qs).reshape(len(qs), len(s))
            dq = np.gradient(q, s, axis=1, edge_order=2) if len(qs) else q
            self.terms.append(_PairTerms(ta.label, np.array(omegas).reshape(q.shape), q, dq))

    def crossover_time(self, T: float, alpha: int) -> float:
        _check_T(T)
        t = self.terms[alpha]
        if t.q.shape[0] == 0:
            return 0.0
        growth = np.exp(T * t.omega_int)
        integral = cumulative_trapezoid(growth * t.dq, self.s, axis=1, initial=0.0)
        total = np.sum(t.q[:, :1] - t.q * growth + integral, axis=0)
        return float(np.max(np.abs(total)))

    def report(self, T_grid, metadata=None) -> CrossoverReport:
        grid = np.asarray(T_grid, dtype=float)
        if grid.ndim != 1 or len(grid) == 0:
            raise ValueError("T grid must be a nonempty 1-D sequence")
        for T in grid:
            _check_T(T)
        data = np.array([[self.crossover_time(T, a) for a in range(len(self.terms))]
                         for T in grid]).reshape(len(grid), len(self.terms))
        return CrossoverReport(
            grid, data, tuple(t.label for t in self.tracks),
            np.array([t.eigenvalues[0] for t in self.tracks]), dict(metadata or {}),
        )


def crossover_time(model, path: ParameterPath, T: float, alpha: int, rho0=None,
                   cluster_tol=None) -> float:
    """Crossover time of block ``alpha`` (track label) at total time ``T``.

    Sums over blocks ``beta`` outside the eigenvalue cluster of ``alpha``;
    transitions inside a degenerate cluster have no gap and are not part of
    the adiabatic condition.
    """
    return CrossoverSetup(model, path, rho0, cluster_tol).crossover_time(T, alpha)


def max_ratio_curve(model, path: ParameterPath, T_grid, rho0=None,
                    cluster_tol=None) -> CrossoverReport:
    setup = CrossoverSetup(model, path, rho0, cluster_tol)
    meta = {"n_grid": path.n}
    for key in ("B", "theta", "channel", "beta", "mu"):
        if hasattr(model, key):
            meta[key] = getattr(model, key)
    return setup.report(T_grid, meta)
