"""Coherence-vector representation and Lindblad superoperator assembly.

A density matrix on a D-dimensional Hilbert space is expanded in a basis of
D**2 Hermitian matrices ``{I/sqrt(D), Lambda_1, ..., Lambda_{D^2-1}}`` which is
orthonormal under ``Tr(u^dagger v)``.  Superoperators become D**2 x D**2
matrices acting on the expansion coefficients.

Basis ordering (generalized Gell-Mann): identity, symmetric pairs ``(j<k)``,
antisymmetric pairs ``(j<k)``, then diagonal elements ``l = 1..D-1``.

Note the inner product here is ``Tr(u^dagger v)``; the alternative convention
``(1/D) Tr(u^dagger v)`` differs by the constant factor ``D``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, HermiticityError, InvalidDimensionError

HERMITIAN_TOL = 1e-10

KINDS = ("hamiltonian", "dissipative", "total")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class OperatorBasis:
    dim: int
    elements: np.ndarray  # shape (D**2, D, D)

    def __len__(self):
        return self.elements.shape[0]

    def gram(self) -> np.ndarray:
        """Matrix of ``Tr(Lambda_i^dagger Lambda_j)``."""
        return np.einsum("iab,jab->ij", self.elements.conj(), self.elements)


@dataclass(frozen=True)
class CoherenceVector:
    coefficients: np.ndarray
    dim: int

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.coefficients, dtype=dtype)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coefficients))


@dataclass(frozen=True)
class Superoperator:
    matrix: np.ndarray
    dim: int
    kind: str = "total"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown superoperator kind {self.kind!r}")
        n = self.dim * self.dim
        if self.matrix.shape != (n, n):
            raise DimensionMismatchError(
                f"superoperator of dimension {self.dim} needs shape {(n, n)}, "
                f"got {self.matrix.shape}"
            )

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __add__(self, other: "Superoperator") -> "Superoperator":
        if self.dim != other.dim:
            raise DimensionMismatchError("cannot add superoperators of different dimension")
        return Superoperator(_frozen(self.matrix + other.matrix), self.dim, "total")

    def apply(self, v) -> np.ndarray:
        return self.matrix @ np.asarray(v, dtype=complex)


def make_basis(dim: int) -> OperatorBasis:
    """Generalized Gell-Mann basis normalized to ``Tr(L_i L_j) = delta_ij``."""
    if not isinstance(dim, (int, np.integer)) or dim < 2:
        raise InvalidDimensionError(f"basis dimension must be an integer >= 2, got {dim!r}")
    d = int(dim)
    mats = [np.eye(d, dtype=complex) / np.sqrt(d)]
    pairs = [(j, k) for j in range(d) for k in range(j + 1, d)]
    for j, k in pairs:
        m = np.zeros((d, d), dtype=complex)
        m[j, k] = m[k, j] = 1.0
        mats.append(m / np.sqrt(2))
    for j, k in pairs:
        m = np.zeros((d, d), dtype=complex)
        m[j, k] = -1j
        m[k, j] = 1j
        mats.append(m / np.sqrt(2))
    for l in range(1, d):
        diag = np.zeros(d)
        diag[:l] = 1.0
        diag[l] = -l
        mats.append(np.diag(diag).astype(complex) / np.sqrt(l * (l + 1)))
    return OperatorBasis(d, _frozen(np.stack(mats)))


def _check_hermitian(a: np.ndarray, what: str, tol: float = HERMITIAN_TOL):
    err = np.max(np.abs(a - a.conj().T)) if a.size else 0.0
    if err > tol:
        raise HermiticityError(f"{what} is not Hermitian (deviation {err:.3e})")


def _check_square(a: np.ndarray, dim: int, what: str):
    if a.shape != (dim, dim):
        raise DimensionMismatchError(f"{what} has shape {a.shape}, expected {(dim, dim)}")


def coefficients(op, basis: OperatorBasis) -> np.ndarray:
    """Expansion coefficients ``Tr(Lambda_i^dagger X)`` of an arbitrary operator."""
    x = np.asarray(op, dtype=complex)
    _check_square(x, basis.dim, "operator")
    return np.einsum("iab,ab->i", basis.elements.conj(), x)


def vectorize(rho, basis: OperatorBasis) -> CoherenceVector:
    rho = np.asarray(rho, dtype=complex)
    _check_square(rho, basis.dim, "density matrix")
    _check_hermitian(rho, "density matrix")
    return CoherenceVector(_frozen(coefficients(rho, basis)), basis.dim)


def devectorize(v, basis: OperatorBasis) -> np.ndarray:
    c = np.asarray(getattr(v, "coefficients", v), dtype=complex)
    if c.shape != (len(basis),):
        raise DimensionMismatchError(
            f"coherence vector has length {c.shape}, basis has {len(basis)} elements"
        )
    return np.einsum("i,iab->ab", c, basis.elements)


def superop_from_map(fn, basis: OperatorBasis, kind: str = "total") -> Superoperator:
    """Matrix ``M_ij = Tr(Lambda_i^dagger fn(Lambda_j))`` of a linear map on operators."""
    images = np.stack([fn(e) for e in basis.elements])
    m = np.einsum("iab,jab->ij", basis.elements.conj(), images)
    return Superoperator(_frozen(m), basis.dim, kind)


def hamiltonian_superop(h, basis: OperatorBasis) -> Superoperator:
    h = np.asarray(h, dtype=complex)
    _check_square(h, basis.dim, "Hamiltonian")
    _check_hermitian(h, "Hamiltonian")
    return superop_from_map(lambda x: -1j * (h @ x - x @ h), basis, "hamiltonian")


def dissipator_superop(gammas: Sequence, basis: OperatorBasis) -> Superoperator:
    """Superoperator of ``rho -> 1/2 sum_i ([G_i, rho G_i^+] + [G_i rho, G_i^+])``."""
    ops = [np.asarray(g, dtype=complex) for g in gammas]
    for g in ops:
        _check_square(g, basis.dim, "Lindblad operator")

    def dissipate(x):
        out = np.zeros_like(x)
        for g in ops:
            gd = g.conj().T
            out += g @ x @ gd - 0.5 * (gd @ g @ x + x @ gd @ g)
        return out

    return superop_from_map(dissipate, basis, "dissipative")


def total_superop(h, gammas: Sequence, basis: OperatorBasis) -> Superoperator:
    ham = hamiltonian_superop(h, basis)
    if len(gammas) == 0:
        return Superoperator(ham.matrix, basis.dim, "total")
    return ham + dissipator_superop(gammas, basis)
