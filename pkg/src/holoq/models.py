"""Superoperator families used by the experiments and tests.

``SpinHalfModel``
    Spin-1/2 in a field rotating on a cone, with decoherence acting in the
    instantaneous energy eigenbasis.  ``sigma_minus`` follows the convention
    ``sigma_-|1> = 2|0>``, ``sigma_-|0> = 0`` where ``|0>`` is the ground
    state; the factor 2 rescales the emission rate (populations relax at
    ``4 beta**2``).
``DegenerateModel``
    Closed system with a G-fold degenerate dark subspace, giving a
    non-Abelian holonomy in the superoperator picture.
``JordanChainModel``
    Non-diagonalizable 4x4 family with one persistent two-vector Jordan chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegeneratePathError, HoloqError
from .path import ParameterPath, SmoothBlockTrack
from .superop import (
    CoherenceVector,
    Superoperator,
    coefficients,
    dissipator_superop,
    hamiltonian_superop,
    make_basis,
    vectorize,
)

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_MINUS = np.array([[0, 2], [0, 0]], dtype=complex)

CHANNELS = ("none", "dephasing", "spontaneous-emission", "bit-flip")

_PHASE_TIE = 1e-9


@lru_cache(maxsize=None)
def basis_for(dim: int):
    return make_basis(dim)


def _circle_angle(r) -> float:
    """Loop parameter ``s`` in [0, 1) from a point on the unit circle."""
    return (np.arctan2(r[1], r[0]) / (2 * np.pi)) % 1.0


def circle_path(n: int) -> ParameterPath:
    return ParameterPath(
        lambda s: np.array([np.cos(2 * np.pi * s), np.sin(2 * np.pi * s)]), n
    )


# --- spin-1/2 -------------------------------------------------------------

def field_path(B: float, theta: float, n: int = 1024) -> ParameterPath:
    if not B > 0:
        raise ValueError(f"field magnitude must be positive, got {B}")
    if not 0 < theta < np.pi:
        raise DegeneratePathError(f"cone angle must lie in (0, pi), got {theta}")
    st, ct = np.sin(theta), np.cos(theta)

    def field(s):
        return np.array([B * np.cos(2 * np.pi * s) * st,
                         B * np.sin(2 * np.pi * s) * st,
                         B * ct])

    return ParameterPath(field, n)


def spin_hamiltonian(b_vec, mu: float = 1.0) -> np.ndarray:
    bx, by, bz = b_vec
    return -0.5 * mu * (bx * SIGMA_X + by * SIGMA_Y + bz * SIGMA_Z)


def fix_column_phases(v: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of every column real and positive.

    Near-ties (within 1e-9) resolve to the lowest row index.
    """
    v = np.array(v, dtype=complex)
    for j in range(v.shape[1]):
        mags = np.abs(v[:, j])
        i = int(np.argmax(mags >= mags.max() - _PHASE_TIE))
        v[:, j] *= np.conj(v[i, j]) / abs(v[i, j])
    return v


def eigenbasis(h: np.ndarray):
    """Energies (ascending) and the unitary ``W`` whose columns are eigenstates."""
    w, v = np.linalg.eigh(h)
    return w, fix_column_phases(v)


def lindblad_ops(channel: str, beta: float, w: np.ndarray) -> list:
    """Channel operators rotated into the eigenbasis given by the columns of ``w``."""
    if channel == "none":
        return []
    base = {"dephasing": SIGMA_Z, "spontaneous-emission": SIGMA_MINUS,
            "bit-flip": SIGMA_X}.get(channel)
    if base is None:
        raise ValueError(f"unknown channel {channel!r}; expected one of {CHANNELS}")
    return [beta * (w @ base @ w.conj().T)]


@dataclass(frozen=True)
class SpinHalfModel:
    B: float = 1.0
    theta: float = np.pi / 3
    channel: str = "none"
    beta: float = 0.0
    mu: float = 1.0

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ValueError(f"unknown channel {self.channel!r}; expected one of {CHANNELS}")
        if not self.beta >= 0:
            raise ValueError(f"channel strength must be nonnegative, got {self.beta}")

    @property
    def basis(self):
        return basis_for(2)

    def path(self, n: int = 1024) -> ParameterPath:
        return field_path(self.B, self.theta, n)

    def hamiltonian(self, b_vec) -> np.ndarray:
        return spin_hamiltonian(b_vec, self.mu)

    def W(self, b_vec) -> np.ndarray:
        return eigenbasis(self.hamiltonian(b_vec))[1]

    def lindblad_ops(self, b_vec) -> list:
        return lindblad_ops(self.channel, self.beta, self.W(b_vec))

    def parts(self, b_vec):
        """Hamiltonian and dissipative superoperators at one field value."""
        ham = hamiltonian_superop(self.hamiltonian(b_vec), self.basis)
        diss = dissipator_superop(self.lindblad_ops(b_vec), self.basis)
        return ham, diss

    def __call__(self, b_vec) -> Superoperator:
        ham, diss = self.parts(b_vec)
        return ham + diss

    def initial_state(self) -> CoherenceVector:
        """Equal superposition of the two energy eigenstates at s = 0."""
        w = self.W(self.path(16).at(0.0))
        psi = (w[:, 0] + w[:, 1]) / np.sqrt(2)
        return vectorize(np.outer(psi, psi.conj()), self.basis)

    def eigenoperator(self, b_vec, m: int, n: int) -> np.ndarray:
        """Coherence vector of ``|psi_m><psi_n|`` (0 = ground, 1 = excited)."""
        w = self.W(b_vec)
        return coefficients(np.outer(w[:, m], w[:, n].conj()), self.basis)

    def with_(self, **kw) -> "SpinHalfModel":
        fields = dict(B=self.B, theta=self.theta, channel=self.channel,
                      beta=self.beta, mu=self.mu)
        fields.update(kw)
        return SpinHalfModel(**fields)


def coherence_track_index(tracks, upper: bool = True) -> int:
    """Index of the track continuing ``|psi_-><psi_+|`` (``upper``) or its conjugate.

    Those are the two blocks whose eigenvalues have the largest positive
    (respectively most negative) imaginary part, ``+-i mu B`` in the closed
    limit.
    """
    im = np.array([t.eigenvalues[0].imag for t in tracks])
    return int(np.argmax(im) if upper else np.argmin(im))


# --- degenerate closed model ----------------------------------------------

@dataclass(frozen=True)
class DegenerateModel:
    """``H(s) = |c(s)><c(s)|`` with a real bright vector ``c`` in ``R^(G+1)``.

    The G-dimensional dark subspace is degenerate at energy 0.  In the
    superoperator picture the operators ``|dark><c|`` span a G-fold degenerate
    eigenvalue ``+i`` whose Wilson loop is the dark-state holonomy.
    """

    G: int = 2
    theta: float = 1.1
    trivial: bool = False

    def __post_init__(self):
        if self.G not in (2, 3):
            raise HoloqError(f"degenerate model supports G in {{2, 3}}, got {self.G}")

    @property
    def dim(self) -> int:
        return self.G + 1

    @property
    def basis(self):
        return basis_for(self.dim)

    eigenvalue = 1j

    def path(self, n: int = 256) -> ParameterPath:
        return circle_path(n)

    def bright(self, s: float) -> np.ndarray:
        if self.trivial:
            s = 0.0
        phi = 2 * np.pi * s
        th = self.theta
        if self.G == 2:
            return np.array([np.sin(th) * np.cos(phi), np.sin(th) * np.sin(phi), np.cos(th)])
        chi = 0.5 * np.sin(phi)
        return np.array([np.sin(th) * np.cos(phi), np.sin(th) * np.sin(phi),
                         np.cos(th) * np.cos(chi), np.cos(th) * np.sin(chi)])

    def hamiltonian(self, s: float) -> np.ndarray:
        c = self.bright(s)
        return np.outer(c, c).astype(complex)

    def __call__(self, r) -> Superoperator:
        return hamiltonian_superop(self.hamiltonian(_circle_angle(r)), self.basis)

    def dark_frame(self, s: float) -> np.ndarray:
        """Orthonormal dark basis (columns), Loewdin-orthonormalized projection of a fixed frame."""
        c = self.bright(s)
        proj = np.eye(self.dim) - np.outer(c, c)
        f0 = np.eye(self.dim)[:, [i for i in range(self.dim) if i != 2]][:, : self.G]
        p = proj @ f0
        w, v = np.linalg.eigh(p.T @ p)
        return p @ (v @ np.diag(w ** -0.5) @ v.T)

    def connection(self, s: float, h: float = 1e-5) -> np.ndarray:
        """Closed-system connection ``<e_i|d e_j/ds>`` by central differences."""
        e = self.dark_frame(s)
        de = (self.dark_frame(s + h) - self.dark_frame(s - h)) / (2 * h)
        return e.T @ de

    def tracks(self, n: int) -> list:
        """Analytic tracks of the ``+i`` cluster (right = ``|e_j><c|``, left = conjugate)."""
        s = np.arange(n + 1) / n
        right = np.zeros((n + 1, self.G, self.dim ** 2), dtype=complex)
        for k, sk in enumerate(s):
            c = self.bright(sk)
            e = self.dark_frame(sk)
            for j in range(self.G):
                right[k, j] = coefficients(np.outer(e[:, j], c), self.basis)
        right[-1] = right[0]
        out = []
        for j in range(self.G):
            r = right[:, j:j + 1, :].copy()
            out.append(SmoothBlockTrack(j, 0, s, np.full(n + 1, self.eigenvalue), r,
                                        r.conj(), True, 0.0, self.G))
        return out

    def wilson_oracle(self, steps: int = 20000) -> np.ndarray:
        """Integrate ``dP/ds = -A(s) P`` around the loop with classic RK4."""
        h = 1.0 / steps
        p = np.eye(self.G)
        for k in range(steps):
            s = k * h
            a0 = self.connection(s)
            a1 = self.connection(s + h / 2)
            a2 = self.connection(s + h)
            k1 = -a0 @ p
            k2 = -a1 @ (p + h / 2 * k1)
            k3 = -a1 @ (p + h / 2 * k2)
            k4 = -a2 @ (p + h * k3)
            p = p + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        return p


# --- Jordan chain model ------------------------------------------------------

def _fixed_unitary(n: int, seed: int = 7) -> np.ndarray:
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


@dataclass(frozen=True)
class JordanChainModel:
    """4x4 family ``U0 (V(s) J V(s)^-1 (+) diag(others)) U0^+``.

    ``J`` is a 2x2 Jordan block with eigenvalue ``lam``; ``V(s)`` is a unitary
    that turns the chain plane around the loop, so the chain persists at every
    ``s`` while its vectors carry a nontrivial connection.  The chain subspace
    is invariant, so it never couples to the other two blocks.
    """

    lam: complex = 0.5j
    others: tuple = (-1.0 + 0.3j, -2.0 - 0.5j)
    tilt: float = 0.4
    wobble: float = 0.2
    cluster_tol: float = 1e-6

    def path(self, n: int = 1024) -> ParameterPath:
        return circle_path(n)

    def rotation(self, s: float) -> np.ndarray:
        phi = self.tilt + self.wobble * np.sin(2 * np.pi * s)
        chi = 2 * np.pi * s
        c, sn = np.cos(phi), np.sin(phi)
        return np.array([[c, -sn * np.exp(1j * chi)], [sn * np.exp(-1j * chi), c]])

    def matrix(self, s: float) -> np.ndarray:
        j = np.array([[self.lam, 1.0], [0.0, self.lam]], dtype=complex)
        v = self.rotation(s)
        full = np.zeros((4, 4), dtype=complex)
        full[:2, :2] = v @ j @ v.conj().T
        full[2, 2], full[3, 3] = self.others
        u0 = _fixed_unitary(4)
        return u0 @ full @ u0.conj().T

    def __call__(self, r) -> Superoperator:
        return Superoperator(self.matrix(_circle_angle(r)), 2, "total")
