"""Unsharp sign-of-J3 measurement, rotated observables and Stokes estimation.

Gate convention: ``U_k`` is chosen so that ``U_k^dag J3 U_k = J_k``. Measuring
the unsharp sign of ``J3`` after ``U_k`` is then the unsharp sign of ``J_k``,
and at ``j = 1/2`` with a sharp sensitivity the Stokes triple is the Bloch
vector. As maps of the mean spin, ``U_1`` is the rotation about ``e2`` by
``-pi/2`` (``e1 -> e3``) and ``U_2`` the rotation about ``e1`` by ``+pi/2``
(``e2 -> e3``); ``U_3`` is the identity.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from ._linalg import expm_hermitian, unitarity_residual
from .spin import as_density, project_window

POVM_TOL = 1e-12
FAMILIES = ("hard-sign", "tanh", "erf")


@dataclass(frozen=True)
class SensitivityFunction:
    """Odd, monotone map from ``m`` to ``[-1, 1]``.

    ``family`` is ``"hard-sign"``, ``"tanh"`` (``tanh(x / width)``) or
    ``"erf"`` (``erf(x / width)``).
    """

    family: str = "tanh"
    width: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown sensitivity family {self.family!r}; expected one of {FAMILIES}")
        if self.family != "hard-sign" and not (self.width > 0 and math.isfinite(self.width)):
            raise ValueError(f"sensitivity width must be positive, got {self.width}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "hard-sign":
            return np.sign(x)
        if self.family == "tanh":
            return np.tanh(x / self.width)
        return erf(x / self.width)

    @property
    def slope0(self):
        """``F'(0)``; ``None`` for the hard sign."""
        if self.family == "hard-sign":
            return None
        if self.family == "tanh":
            return 1.0 / self.width
        return 2.0 / (math.sqrt(math.pi) * self.width)

    @property
    def third_derivative0(self):
        if self.family == "hard-sign":
            return None
        if self.family == "tanh":
            return -2.0 / self.width**3
        return -4.0 / (math.sqrt(math.pi) * self.width**3)


def default_sensitivity(j):
    """``tanh`` with width ``sqrt(j)``, the semiclassical fluctuation scale."""
    return SensitivityFunction("tanh", math.sqrt(j))


@dataclass(frozen=True, eq=False)
class UnsharpObservable:
    S_plus: np.ndarray
    S_minus: np.ndarray
    label: int = 3
    gate: np.ndarray = None

    @property
    def difference(self):
        return self.S_plus - self.S_minus

    def residuals(self):
        """``(completeness, positivity)`` residuals; both 0 for an exact POVM."""
        eye = np.eye(self.S_plus.shape[0])
        comp = float(np.max(np.abs(self.S_plus + self.S_minus - eye)))
        low = min(np.linalg.eigvalsh(self.S_plus).min(), np.linalg.eigvalsh(self.S_minus).min())
        return comp, float(max(0.0, -low))


def build_S3(F, ops):
    """``S+- = (I +- F(J3)) / 2`` with ``F`` applied to the eigenvalues ``m``."""
    f = F(ops.m)
    if np.any(np.abs(f) > 1 + 1e-15) or not np.all(np.isfinite(f)):
        raise ValueError("sensitivity values must lie in [-1, 1]")
    f = np.clip(f, -1.0, 1.0)
    return UnsharpObservable(np.diag((1 + f) / 2).astype(complex), np.diag((1 - f) / 2).astype(complex), 3, None)


def rotate_observable(U, S3, label=None, tol=1e-9):
    """``S^k_{+-} = U^dag S^3_{+-} U``."""
    U = np.asarray(U, dtype=complex)
    if U.shape != S3.S_plus.shape:
        raise ValueError(f"gate shape {U.shape} does not match observable {S3.S_plus.shape}")
    resid = unitarity_residual(U)
    if resid > tol:
        raise ValueError(f"gate is not unitary (residual {resid:.3e})")
    Ud = U.conj().T
    sp = Ud @ S3.S_plus @ U
    sp = (sp + sp.conj().T) / 2
    sm = np.eye(U.shape[0]) - sp
    return UnsharpObservable(sp, sm, S3.label if label is None else label, U)


def exact_rotation(ops, axis, angle):
    """``exp(-i angle n.J)``: rotates ``<J>`` by ``angle`` about ``axis``."""
    axis = np.asarray(axis, dtype=float)
    return expm_hermitian(ops.along(axis / np.linalg.norm(axis)), angle)


def exact_gates(ops):
    """``{1: U1, 2: U2, 3: I}`` with ``U_k^dag J3 U_k = J_k``."""
    return {
        1: exact_rotation(ops, [0, 1, 0], -math.pi / 2),
        2: exact_rotation(ops, [1, 0, 0], math.pi / 2),
        3: np.eye(ops.dim, dtype=complex),
    }


def stokes_observables(F, ops, gates=None):
    """The three unsharp observables ``S^1, S^2, S^3`` for the given gates."""
    gates = exact_gates(ops) if gates is None else gates
    S3 = build_S3(F, ops)
    return {k: rotate_observable(gates[k], S3, label=k) for k in (1, 2, 3)}


def outcome_probability(rho, obs):
    """``(Tr rho S+, Tr rho S-)``, clipped to ``[0, 1]`` after a consistency check."""
    rho = as_density(rho)
    if rho.shape != obs.S_plus.shape:
        raise ValueError(f"state dimension {rho.shape[0]} does not match observable {obs.S_plus.shape[0]}")
    p_plus = float(np.einsum("ij,ji->", rho, obs.S_plus).real)
    p_minus = float(np.einsum("ij,ji->", rho, obs.S_minus).real)
    if abs(p_plus + p_minus - 1) > 1e-10 or min(p_plus, p_minus) < -1e-10 or max(p_plus, p_minus) > 1 + 1e-10:
        raise ValueError(f"invalid outcome probabilities ({p_plus}, {p_minus}); is rho a density matrix?")
    p_plus = min(max(p_plus, 0.0), 1.0)
    return p_plus, 1.0 - p_plus


@dataclass(frozen=True)
class MeasurementRecord:
    label: int
    shots: int
    count_plus: int
    count_minus: int
    seed: int = None

    def __post_init__(self):
        if self.count_plus + self.count_minus != self.shots:
            raise ValueError("count_plus + count_minus must equal shots")

    @property
    def mean(self):
        return (self.count_plus - self.count_minus) / self.shots

    @property
    def standard_error(self):
        """Binomial standard error of :attr:`mean`."""
        p = self.count_plus / self.shots
        return 2 * math.sqrt(p * (1 - p) / self.shots)

    def to_json(self):
        return json.dumps(
            {"label": self.label, "N": self.shots, "count_plus": self.count_plus,
             "count_minus": self.count_minus, "seed": self.seed},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(d["label"], d["N"], d["count_plus"], d["count_minus"], d.get("seed"))


def sample_shots(rho, obs, shots, seed=None):
    """Draw ``shots`` outcomes with a single binomial draw (seeded)."""
    if int(shots) != shots or shots < 1:
        raise ValueError(f"shots must be an integer >= 1, got {shots}")
    p_plus, _ = outcome_probability(rho, obs)
    rng = np.random.default_rng(seed)
    n_plus = int(rng.binomial(int(shots), p_plus))
    return MeasurementRecord(obs.label, int(shots), n_plus, int(shots) - n_plus, seed)


@dataclass
class StokesVector:
    """Stokes triple with provenance ``raw``, ``linearized`` or ``normalized``."""

    s: np.ndarray
    provenance: str = "raw"
    standard_errors: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        if self.s.shape != (3,) or not np.all(np.isfinite(self.s)):
            raise ValueError("Stokes vector must be a finite 3-vector")

    @property
    def radius(self):
        return float(np.linalg.norm(self.s))


def estimate_stokes(records):
    """Finite-shot Stokes estimate ``s_k = (n+ - n-) / N`` from records for k=1,2,3."""
    by_label = {r.label: r for r in records}
    missing = [k for k in (1, 2, 3) if k not in by_label]
    if missing:
        raise ValueError(f"missing measurement records for labels {missing}")
    recs = [by_label[k] for k in (1, 2, 3)]
    return StokesVector([r.mean for r in recs], "raw", np.array([r.standard_error for r in recs]))


def exact_stokes(rho, observables):
    """Exact-probability Stokes triple ``Tr(rho (S+^k - S-^k))``."""
    rho = as_density(rho)
    missing = [k for k in (1, 2, 3) if k not in observables]
    if missing:
        raise ValueError(f"missing observables for labels {missing}")
    s = []
    for k in (1, 2, 3):
        p_plus, p_minus = outcome_probability(rho, observables[k])
        s.append(p_plus - p_minus)
    return StokesVector(s, "raw", np.zeros(3))


def measure_stokes(rho, observables, shots=None, seed=None):
    """Exact Stokes when ``shots`` is None, otherwise sampled records.

    Returns ``(StokesVector, records)``; per-label seeds are spawned from
    ``seed`` so the three draws are independent and reproducible.
    """
    if shots is None:
        return exact_stokes(rho, observables), []
    children = np.random.SeedSequence(seed).spawn(3)
    records = []
    for k, child in zip((1, 2, 3), children):
        sub_seed = int(child.generate_state(1, dtype=np.uint64)[0])
        records.append(sample_shots(rho, observables[k], shots, sub_seed))
    return estimate_stokes(records), records


def stokes_linearized(rho, gates, F):
    """First-order Stokes estimate ``F'(0) Tr(U_k rho U_k^dag J3)``.

    Also returns the cubic term ``F'''(0)/6 Tr(U_k rho U_k^dag J3^3)`` of
    the Taylor expansion of ``F(J3)`` as a diagnostic. Raises for the hard
    sign, whose slope at zero does not exist.
    """
    if F.slope0 is None:
        raise ValueError("linearized Stokes estimate needs F'(0); the hard-sign sensitivity has none")
    rho = as_density(rho)
    dim = rho.shape[0]
    m = (dim - 1) / 2 - np.arange(dim)
    lin, cub = [], []
    for k in (1, 2, 3):
        U = np.asarray(gates[k])
        r = U @ rho @ U.conj().T
        pm = np.real(np.diag(r))
        lin.append(F.slope0 * np.dot(pm, m))
        cub.append(F.third_derivative0 / 6 * np.dot(pm, m**3))
    return StokesVector(lin, "linearized"), np.array(cub)


def windowed_stokes_linearized(rho, gates, F, delta_m):
    """Linearized Stokes triple where each measured state ``U_k rho U_k^dag``
    is first confined to ``|m| <= delta_m`` (states accessible in the
    semiclassical picture are supported there)."""
    rho = as_density(rho)
    ident = np.eye(rho.shape[0])
    vals = []
    discarded = []
    for k in (1, 2, 3):
        U = np.asarray(gates[k])
        proj = project_window(U @ rho @ U.conj().T, delta_m)
        s, _ = stokes_linearized(proj.state, {1: ident, 2: ident, 3: ident}, F)
        vals.append(s.s[2])
        discarded.append(proj.discarded_weight)
    return StokesVector(vals, "linearized", meta={"discarded_weight": discarded})
