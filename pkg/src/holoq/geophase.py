"""Abelian geometric phases and Wilson loops from tracked bi-orthonormal bases.

Both quantities are built from discrete overlaps between neighbouring grid
points.  For one step ``k -> k+1`` of a cluster with left rows ``E`` and
right rows ``D`` we use the forward and backward overlap matrices

    M_k = E_k D_{k+1}^T,    N_k = E_{k+1} D_k^T

and the transfer matrix ``T_k = N_k sqrt((M_k N_k)^-1)``.  ``T_k`` propagates
the amplitudes by one step, is exactly covariant under per-point gauge
changes, and is symmetric under reversing the step, so the error of the
ordered product expands in even powers of the step size.  One Richardson step
against the half-resolution sub-grid then removes the leading term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import (
    DegeneracyError,
    DimensionMismatchError,
    HoloqError,
    NotDegenerateError,
    ResolutionError,
    SingularGaugeError,
)
from .path import ParameterPath, SmoothBlockTrack

MAX_STEP_DEVIATION = 0.5
PI_SNAP = 1e-6


def wrap(phi: float) -> float:
    """Representative of ``phi`` mod 2 pi in ``[-pi, pi)``.

    Anything within ``PI_SNAP`` of the cut (on either side) is reported as exactly -pi.
    """
    r = (float(phi) + np.pi) % (2 * np.pi) - np.pi
    if r > np.pi - PI_SNAP or r < -np.pi + PI_SNAP:
        return -np.pi
    return r


def circular_distance(a: float, b: float) -> float:
    return abs((a - b + np.pi) % (2 * np.pi) - np.pi)


@dataclass(frozen=True)
class AbelianPhase:
    gamma: complex  # unwrapped
    n_grid: int
    scheme: str
    extrapolated: bool
    error_estimate: float  # |gamma(N) - gamma(N/2)| before extrapolation

    @property
    def real(self) -> float:
        return float(self.gamma.real)

    @property
    def imag(self) -> float:
        return float(self.gamma.imag)

    @property
    def mod_2pi(self) -> float:
        return wrap(self.gamma.real)


@dataclass(frozen=True)
class HolonomyMatrix:
    eigenvalue: complex
    wilson: np.ndarray

    @property
    def G(self) -> int:
        return self.wilson.shape[0]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvals(self.wilson)


# --- Abelian phase ------------------------------------------------------------

def _log_steps(track: SmoothBlockTrack, stride: int, scheme: str) -> np.ndarray:
    d = track.right[::stride, 0]
    e = track.left[::stride, 0]
    f = np.einsum("kd,kd->k", e[:-1], d[1:])
    if scheme == "forward":
        steps = f
        logs = np.log(f)
    else:
        g = np.einsum("kd,kd->k", e[1:], d[:-1])
        steps = g / np.sqrt(g * f)
        # Log t = Log g - Log(g f)/2, principal branches
        logs = np.log(g) - 0.5 * np.log(g * f)
    worst = float(np.max(np.abs(steps - 1.0)))
    if worst > MAX_STEP_DEVIATION:
        raise ResolutionError(
            f"overlap factor deviates from 1 by {worst:.3f}; increase the path resolution"
        )
    return logs


def abelian_phase(track: SmoothBlockTrack, scheme: str = "symmetric",
                  extrapolate: bool = True) -> AbelianPhase:
    """Complex geometric phase ``gamma = i * loop integral <<E|dD>>`` of a 1-D block.

    ``scheme="forward"`` sums ``i Log <<E(s_k)|D(s_{k+1})>>`` directly; the
    default symmetric scheme sums the logarithms of the transfer factors
    ``g / sqrt(g f)`` (``f`` forward, ``g`` backward overlap).  With
    ``extrapolate`` and an even grid, the half-resolution result is used for
    one Richardson step.
    """
    if scheme not in ("symmetric", "forward"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if not track.closed:
        raise HoloqError("geometric phase requires a closed path")
    if track.chain_length != 1:
        raise DegeneracyError(
            f"block has a Jordan chain of length {track.chain_length}; use ladder_integrate"
        )
    if track.multiplicity != 1:
        raise DegeneracyError(
            f"eigenvalue is {track.multiplicity}-fold degenerate; use wilson_loop"
        )
    sign = 1j if scheme == "forward" else -1j

    def at(stride):
        return complex(sign * np.sum(_log_steps(track, stride, scheme)))

    g_h = at(1)
    n = track.n_grid
    if not (extrapolate and n % 2 == 0 and n >= 32):
        return AbelianPhase(g_h, n, scheme, False, float("nan"))
    g_2h = at(2)
    diff = g_h - g_2h
    # the half-grid sum may differ by a multiple of 2 pi in the real part
    diff = complex(wrap(diff.real), diff.imag)
    order = 2 if scheme == "symmetric" else 1
    gamma = g_h + diff / (2 ** order - 1)
    return AbelianPhase(gamma, n, scheme, True, float(abs(diff)))


# --- non-Abelian ---------------------------------------------------------------

def _stack(tracks: Sequence[SmoothBlockTrack]):
    if len(tracks) == 0:
        raise ValueError("need at least one track")
    for t in tracks:
        if t.chain_length != 1:
            raise DegeneracyError("holonomy requires 1-dimensional blocks")
        if t.right.shape != tracks[0].right.shape:
            raise DimensionMismatchError("tracks live on different grids")
    lam = np.array([t.eigenvalues for t in tracks])
    tol = max(max(t.cluster_tol for t in tracks), 1e-12 * max(1.0, float(np.max(np.abs(lam)))))
    spread = float(np.max(np.abs(lam - lam[:1])))
    if spread > tol:
        raise NotDegenerateError(
            f"tracks do not share one eigenvalue (spread {spread:.3e} > {tol:.3e})"
        )
    d = np.stack([t.right[:, 0] for t in tracks], axis=1)  # (K, G, dim)
    e = np.stack([t.left[:, 0] for t in tracks], axis=1)
    return d, e


def connection_matrix(tracks: Sequence[SmoothBlockTrack], k: int,
                      central: bool = False) -> np.ndarray:
    """``A_ij = <<E^(i)(s_k)| dD^(j)/ds`` by forward (or central) differences."""
    d, e = _stack(tracks)
    n = len(d) - 1
    ds = tracks[0].s[1] - tracks[0].s[0]
    closed = tracks[0].closed
    if not 0 <= k <= n:
        raise IndexError(f"grid index {k} out of range")
    k0 = k % n if closed else k

    def idx(j):
        if closed:
            return j % n
        if not 0 <= j <= n:
            raise IndexError("difference stencil leaves the open path")
        return j

    if central:
        diff = (d[idx(k0 + 1)] - d[idx(k0 - 1)]) / (2 * ds)
    else:
        diff = (d[idx(k0 + 1)] - d[k0]) / ds
    return e[k0] @ diff.T


def _transfer(e0, d0, e1, d1) -> np.ndarray:
    m = e0 @ d1.T
    nb = e1 @ d0.T
    return nb @ sla.sqrtm(np.linalg.inv(m @ nb))


def _ordered_product(d, e, stride):
    d = d[::stride]
    e = e[::stride]
    g = d.shape[1]
    u = np.eye(g, dtype=complex)
    worst = 0.0
    for k in range(len(d) - 1):
        t = _transfer(e[k], d[k], e[k + 1], d[k + 1])
        worst = max(worst, float(np.max(np.abs(t - np.eye(g)))))
        u = t @ u
    if worst > MAX_STEP_DEVIATION:
        raise ResolutionError(
            f"transfer matrix deviates from identity by {worst:.3f}; "
            "increase the path resolution"
        )
    return u


def wilson_loop(tracks: Sequence[SmoothBlockTrack], extrapolate: bool = True) -> HolonomyMatrix:
    """Path-ordered holonomy of a degenerate cluster (later steps multiply on the left).

    For a single block the result is the 1x1 matrix ``exp(i gamma)``.
    """
    if not tracks[0].closed:
        raise HoloqError("Wilson loop requires a closed path")
    d, e = _stack(tracks)
    u = _ordered_product(d, e, 1)
    n = len(d) - 1
    if extrapolate and n % 2 == 0 and n >= 32:
        u = (4 * u - _ordered_product(d, e, 2)) / 3
    u.setflags(write=False)
    return HolonomyMatrix(complex(tracks[0].eigenvalues[0]), u)


def gauge_transform(tracks: Sequence[SmoothBlockTrack], omega) -> list:
    """Mix the right vectors with ``Omega(s)`` and the left ones with ``Omega(s)^-T``.

    In row form ``D' = Omega D`` and ``E' = Omega^-T E``, so the overlaps
    transform as ``E'_k D'_l^T = Omega_k^-T (E_k D_l^T) Omega_l^T`` and the
    Wilson loop as ``U' = Omega(0)^-T U Omega(0)^T``.  ``omega`` is either a
    callable ``s -> G x G`` or an array of shape ``(K, G, G)`` on the grid.
    """
    d, e = _stack(tracks)
    s = tracks[0].s
    g = d.shape[1]
    if callable(omega):
        om = np.array([np.atleast_2d(omega(x)) for x in s], dtype=complex)
    else:
        om = np.asarray(omega, dtype=complex)
        if om.ndim == 1:
            om = om[:, None, None]
    if om.shape != (len(s), g, g):
        raise DimensionMismatchError(f"gauge has shape {om.shape}, expected {(len(s), g, g)}")
    if tracks[0].closed:
        scale = max(1.0, float(np.max(np.abs(om[0]))))
        if np.max(np.abs(om[-1] - om[0])) > 1e-9 * scale:
            raise ValueError("gauge must be single-valued on the closed path")
    d_new = np.empty_like(d)
    e_new = np.empty_like(e)
    for k in range(len(s)):
        sv = np.linalg.svd(om[k], compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0] or sv[0] == 0:
            raise SingularGaugeError(f"gauge matrix is singular at s={s[k]:.6g}")
        d_new[k] = om[k] @ d[k]
        e_new[k] = np.linalg.inv(om[k]).T @ e[k]
    out = []
    for j, t in enumerate(tracks):
        r = d_new[:, j:j + 1].copy()
        l = e_new[:, j:j + 1].copy()
        r.setflags(write=False)
        l.setflags(write=False)
        out.append(SmoothBlockTrack(t.label, t.cluster, t.s, t.eigenvalues, r, l,
                                    t.closed, t.cluster_tol, t.multiplicity))
    return out


# --- closed-system reference -----------------------------------------------------

@dataclass(frozen=True)
class ClosedLimitPhases:
    energies: np.ndarray  # at s = 0, ascending
    phases: np.ndarray  # Berry phase per level, unwrapped
    n_grid: int

    def difference(self, m: int, n: int) -> float:
        return float(self.phases[m] - self.phases[n])

    @property
    def differences(self) -> np.ndarray:
        return self.phases[:, None] - self.phases[None, :]


def closed_limit_phase(hamiltonian: Callable[[np.ndarray], np.ndarray],
                       path: ParameterPath, gap_tol: float = 1e-8) -> ClosedLimitPhases:
    """Berry phases ``gamma_m = i * loop integral <psi_m|d psi_m>`` of a Hermitian family.

    Levels are followed in ascending energy order; each phase is the
    gauge-invariant product ``-arg prod <psi(s_k)|psi(s_{k+1})>``, refined by
    one Richardson step against the half-resolution grid.
    """
    if not path.closed:
        raise HoloqError("Berry phases require a closed path")
    grid = path.grid[:-1]
    vecs = []
    energies = None
    for s in grid:
        h = np.asarray(hamiltonian(path.at(s)), dtype=complex)
        w, v = np.linalg.eigh(h)
        if np.min(np.diff(w)) < gap_tol * max(1.0, float(np.max(np.abs(w)))):
            raise DegeneracyError(f"Hamiltonian levels are degenerate at s={s:.6g}")
        if energies is None:
            energies = w
        vecs.append(v)
    vecs.append(vecs[0])
    v = np.array(vecs)  # (K, dim, dim), columns are levels

    def loop(stride):
        sub = v[::stride]
        ov = np.einsum("kam,kam->km", sub[:-1].conj(), sub[1:])
        return -np.sum(np.angle(ov), axis=0)

    n = path.n
    g_h = loop(1)
    if n % 2 == 0 and n >= 32:
        diff = np.array([wrap(x) for x in g_h - loop(2)])
        g_h = g_h + diff / 3
    return ClosedLimitPhases(np.asarray(energies), g_h, n)
