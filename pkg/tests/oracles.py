"""Independent reference computations used by the tests."""

import numpy as np
from scipy.linalg import expm


def vec(x):
    """Column-stacking vectorization."""
    return np.asarray(x).reshape(-1, order="F")


def kron_lindbladian(h, gammas):
    """Lindblad generator acting on column-stacked density matrices."""
    d = h.shape[0]
    eye = np.eye(d)
    k = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for g in gammas:
        gg = g.conj().T @ g
        k += np.kron(g.conj(), g) - 0.5 * (np.kron(eye, gg) + np.kron(gg.T, eye))
    return k


def to_basis(k, basis):
    """Express a column-stacked superoperator in an orthonormal operator basis."""
    u = np.stack([vec(e) for e in basis.elements], axis=1)
    return u.conj().T @ k @ u


def propagate(matrix_of_s, T, rho0, n=4096):
    """Midpoint product of matrix exponentials for d rho/ds = T L(s) rho."""
    y = np.array(rho0, dtype=complex)
    for k in range(n):
        y = expm(T / n * matrix_of_s((k + 0.5) / n)) @ y
    return y


def random_hermitian(rng, d, scale=1.0):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (a + a.conj().T) / 2


def random_density(rng, d):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = a @ a.conj().T
    return rho / np.trace(rho).real
