"""Small dense linear-algebra helpers shared across modules."""

import numpy as np

HERMITIAN_TOL = 1e-10


def is_hermitian(a, tol=HERMITIAN_TOL):
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - a.conj().T), initial=0.0) <= tol


def check_hermitian(a, name="matrix", tol=HERMITIAN_TOL):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    resid = np.max(np.abs(a - a.conj().T), initial=0.0)
    if resid > tol * max(1.0, np.max(np.abs(a), initial=0.0)):
        raise ValueError(f"{name} is not Hermitian (residual {resid:.3e})")
    return a


def expm_hermitian(h, t=1.0):
    """Return ``exp(-i h t)`` for Hermitian ``h`` via eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def unitarity_residual(u):
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def commutator(a, b):
    return a @ b - b @ a
