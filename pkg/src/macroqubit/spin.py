"""Spin-j Hilbert space: angular momentum matrices, coherent states, diagnostics.

Basis convention
----------------
Every matrix and state vector in this package uses the ordering
``m = j, j-1, ..., -j``: row/column 0 is ``|j, j>`` and the last index is
``|j, -j>``. ``J3`` is therefore ``diag(j, j-1, ..., -j)``. Units have
``hbar = 1``.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from ._linalg import check_hermitian, expm_hermitian

STATE_TOL = 1e-9
ANNIHILATION_THRESHOLD = 1.0 - 1e-12


def validate_j(j):
    """Return ``j`` as a float after checking that ``2j`` is a positive integer.

    Integer ``j`` is accepted; only the tomography layer cares about the
    existence of ``m = +-1/2`` levels.
    """
    try:
        twice = Fraction(j).limit_denominator(1000) * 2
    except (TypeError, ValueError):
        raise ValueError(f"spin quantum number must be numeric, got {j!r}") from None
    if twice.denominator != 1 or abs(float(twice) - 2 * float(j)) > 1e-12:
        raise ValueError(f"spin quantum number must be a half-integer, got {j!r}")
    if twice <= 0:
        raise ValueError(f"spin quantum number must be positive, got {j!r}")
    return float(twice) / 2


def is_half_odd(j):
    """True when ``j`` is half an odd integer (so ``m = +-1/2`` exist)."""
    return int(round(2 * validate_j(j))) % 2 == 1


def m_values(j):
    j = validate_j(j)
    return j - np.arange(int(round(2 * j)) + 1)


@dataclass(frozen=True, eq=False)
class SpinOperators:
    """Angular momentum matrices of the spin-j irrep (read-only arrays)."""

    j: float
    J1: np.ndarray
    J2: np.ndarray
    J3: np.ndarray

    @property
    def dim(self):
        return self.J3.shape[0]

    @property
    def m(self):
        return np.real(np.diag(self.J3)).copy()

    @property
    def vector(self):
        return (self.J1, self.J2, self.J3)

    def identity(self):
        return np.eye(self.dim, dtype=complex)

    def along(self, direction):
        """``n . J`` for a 3-vector ``n``."""
        n = np.asarray(direction, dtype=float)
        return n[0] * self.J1 + n[1] * self.J2 + n[2] * self.J3


def _frozen(a):
    a.setflags(write=False)
    return a


@lru_cache(maxsize=64)
def _build(twice_j):
    j = twice_j / 2
    m = j - np.arange(twice_j + 1)
    # <m+1|J+|m> sits just above the diagonal with this ordering
    coeff = np.sqrt(j * (j + 1) - m[1:] * (m[1:] + 1))
    jplus = np.diag(coeff, k=1).astype(complex)
    jminus = jplus.conj().T
    J1 = (jplus + jminus) / 2
    J2 = (jplus - jminus) / 2j
    J3 = np.diag(m).astype(complex)
    return SpinOperators(j, _frozen(J1), _frozen(J2), _frozen(J3))


def build_spin_operators(j):
    """Build ``J1, J2, J3`` for spin ``j``.

    Parameters
    ----------
    j : float
        Positive half-integer (``1/2, 1, 3/2, ...``).

    Returns
    -------
    SpinOperators
        Matrices with the standard ladder elements
        ``<m+1|J+|m> = sqrt(j(j+1) - m(m+1))``, ``J1 = (J+ + J-)/2`` and
        ``J2 = (J+ - J-)/2i``.
    """
    return _build(int(round(2 * validate_j(j))))


def basis_state(j, m):
    """The eigenvector ``|j, m>``."""
    ms = m_values(j)
    idx = np.flatnonzero(np.isclose(ms, m))
    if idx.size == 0:
        raise ValueError(f"m={m} is not a valid projection for j={j}")
    psi = np.zeros(ms.size, dtype=complex)
    psi[idx[0]] = 1.0
    return psi


def direction(theta, phi):
    """Unit vector with polar angle ``theta`` and azimuth ``phi``."""
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


def coherent_state(j, theta, phi):
    """SU(2) coherent state pointing along ``direction(theta, phi)``.

    Built by rotating ``|j, j>`` about the axis ``(-sin phi, cos phi, 0)`` by
    ``theta`` with an eigendecomposition-based exponential, which stays stable
    where binomial amplitude formulas overflow.
    """
    if not (np.isfinite(theta) and np.isfinite(phi)):
        raise ValueError("coherent_state angles must be finite")
    ops = build_spin_operators(j)
    psi = np.zeros(ops.dim, dtype=complex)
    psi[0] = 1.0
    if theta == 0:
        return psi
    axis_op = -np.sin(phi) * ops.J1 + np.cos(phi) * ops.J2
    psi = expm_hermitian(axis_op, theta) @ psi
    return psi / np.linalg.norm(psi)


def coherent_state_along(j, n):
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n)
    if not np.isfinite(norm) or norm == 0:
        raise ValueError("direction must be a finite non-zero vector")
    n = n / norm
    return coherent_state(j, np.arccos(np.clip(n[2], -1, 1)), np.arctan2(n[1], n[0]))


def check_state(psi, dim=None):
    psi = np.asarray(psi, dtype=complex)
    if psi.ndim != 1:
        raise ValueError(f"state vector must be 1-D, got shape {psi.shape}")
    if dim is not None and psi.size != dim:
        raise ValueError(f"state dimension {psi.size} does not match operator dimension {dim}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > STATE_TOL:
        raise ValueError(f"state is not normalized (norm {norm:.12g})")
    return psi


def check_density(rho, dim=None, tol=STATE_TOL):
    rho = check_hermitian(rho, "density matrix", tol=1e-9)
    if dim is not None and rho.shape[0] != dim:
        raise ValueError(f"density dimension {rho.shape[0]} does not match operator dimension {dim}")
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise ValueError(f"density matrix trace is {tr:.12g}, expected 1")
    if np.linalg.eigvalsh(rho).min() < -tol:
        raise ValueError("density matrix has negative eigenvalues")
    return rho


def as_density(state):
    """Promote a state vector to ``|psi><psi|``; density matrices pass through."""
    state = np.asarray(state, dtype=complex)
    if state.ndim == 1:
        return np.outer(state, state.conj())
    return state


def maximally_mixed(j):
    dim = int(round(2 * validate_j(j))) + 1
    return np.eye(dim, dtype=complex) / dim


def expectation(state, operator):
    """Return ``<psi|A|psi>`` or ``Tr(rho A)`` as a real number.

    Raises ``ValueError`` on a dimension mismatch or when the imaginary part
    is not negligible (``A`` not Hermitian).
    """
    a = np.asarray(operator)
    s = np.asarray(state)
    if a.ndim != 2 or s.shape[0] != a.shape[0] or (s.ndim == 2 and s.shape != a.shape):
        raise ValueError(f"dimension mismatch: state {s.shape} vs operator {a.shape}")
    if s.ndim == 1:
        val = np.vdot(s, a @ s)
    else:
        val = np.einsum("ij,ji->", s, a)
    scale = max(1.0, abs(val.real))
    if abs(val.imag) > 1e-8 * scale:
        raise ValueError(f"expectation has imaginary part {val.imag:.3e}; operator not Hermitian?")
    return float(val.real)


def mean_spin(state, ops):
    return np.array([expectation(state, J) for J in ops.vector])


def fluctuation_report(state, ops=None):
    """Variances ``(Var J1, Var J2, Var J3)`` of a state vector or density matrix."""
    s = np.asarray(state)
    if ops is None:
        ops = build_spin_operators((s.shape[0] - 1) / 2)
    out = []
    for J in ops.vector:
        mean = expectation(s, J)
        out.append(expectation(s, J @ J) - mean**2)
    return tuple(out)


class WindowProjection(NamedTuple):
    state: np.ndarray
    discarded_weight: float
    flagged: bool


def window_mask(j, delta_m):
    if not np.isfinite(delta_m) or delta_m < 0:
        raise ValueError(f"window half-width must be non-negative, got {delta_m}")
    mask = np.abs(m_values(j)) <= delta_m + 1e-12
    if not mask.any():
        raise ValueError(f"window |m| <= {delta_m} contains no basis states for j={j}")
    return mask


def window_weight(state, delta_m):
    """Probability weight of ``state`` inside ``|m| <= delta_m``."""
    s = np.asarray(state)
    mask = window_mask((s.shape[0] - 1) / 2, delta_m)
    if s.ndim == 1:
        return float(np.sum(np.abs(s[mask]) ** 2))
    return float(np.real(np.trace(s[np.ix_(mask, mask)])))


def project_window(state, delta_m, flag_threshold=0.05):
    """Project onto ``span{|j,m> : |m| <= delta_m}`` and renormalize.

    Returns the projected state together with the discarded weight and a
    flag set when that weight exceeds ``flag_threshold``. Raises
    ``ValueError`` when essentially all weight lies outside the window.
    """
    s = np.asarray(state, dtype=complex)
    mask = window_mask((s.shape[0] - 1) / 2, delta_m)
    kept = window_weight(s, delta_m)
    discarded = 1.0 - kept
    if discarded > ANNIHILATION_THRESHOLD:
        raise ValueError(f"window |m| <= {delta_m} annihilates the state (discarded weight {discarded:.3e})")
    if s.ndim == 1:
        out = np.where(mask, s, 0) / np.sqrt(kept)
    else:
        p = mask.astype(float)
        out = (p[:, None] * s * p[None, :]) / kept
    return WindowProjection(out, max(discarded, 0.0), discarded > flag_threshold)
