"""Static and control Hamiltonians, plus Rydberg / Cooper-pair-box / BEC presets."""

import math
from dataclasses import dataclass

import numpy as np

from .spin import SpinOperators, build_spin_operators, validate_j

ALL_CHANNELS = frozenset({1, 2, 3})


@dataclass(frozen=True)
class StaticModelParams:
    """Coefficients of ``H = omega J3^2 + delta J3 + gamma J1`` (angular frequencies)."""

    omega: float = 0.0
    delta: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("omega", "delta", "gamma"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"StaticModelParams.{name} must be finite")


@dataclass(frozen=True)
class PulseSegment:
    duration: float
    h1: float = 0.0
    h2: float = 0.0
    h3: float = 0.0

    @property
    def field(self):
        return np.array([self.h1, self.h2, self.h3])


@dataclass(frozen=True)
class ControlPulse:
    """Piecewise-constant control fields ``h_k(t)`` starting at ``t_start``.

    Smooth envelopes are represented by segmenting them, see
    :meth:`from_function`.
    """

    segments: tuple = ()
    allowed_channels: frozenset = ALL_CHANNELS
    t_start: float = 0.0

    def __post_init__(self):
        segs = tuple(s if isinstance(s, PulseSegment) else PulseSegment(*s) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        chans = frozenset(int(c) for c in self.allowed_channels)
        object.__setattr__(self, "allowed_channels", chans)
        if not chans <= ALL_CHANNELS:
            raise ValueError(f"allowed channels must be a subset of {{1, 2, 3}}, got {sorted(chans)}")
        for i, seg in enumerate(segs):
            if not (seg.duration > 0 and math.isfinite(seg.duration)):
                raise ValueError(f"segment {i} duration must be positive, got {seg.duration}")
            f = seg.field
            if not np.all(np.isfinite(f)):
                raise ValueError(f"segment {i} has non-finite field")
            for k in ALL_CHANNELS - chans:
                if f[k - 1] != 0:
                    raise ValueError(f"segment {i} drives channel h{k}, not in allowed channels {sorted(chans)}")

    @property
    def duration(self):
        return float(sum(s.duration for s in self.segments))

    @property
    def t_end(self):
        return self.t_start + self.duration

    def boundaries(self):
        return self.t_start + np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def field_at(self, t):
        """``(h1, h2, h3)`` active at time ``t``; zero outside the pulse support.

        Segments are half-open ``[start, end)``.
        """
        if not self.segments:
            return np.zeros(3)
        edges = self.boundaries()
        if t < edges[0] or t >= edges[-1]:
            return np.zeros(3)
        idx = int(np.searchsorted(edges, t, side="right")) - 1
        return self.segments[idx].field

    def as_dict(self):
        return {
            "t_start": self.t_start,
            "allowed_channels": sorted(self.allowed_channels),
            "segments": [
                {"duration": s.duration, "h1": s.h1, "h2": s.h2, "h3": s.h3} for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, d):
        segs = tuple(
            PulseSegment(s["duration"], s.get("h1", 0.0), s.get("h2", 0.0), s.get("h3", 0.0))
            for s in d.get("segments", [])
        )
        return cls(segs, frozenset(d.get("allowed_channels", [1, 2, 3])), d.get("t_start", 0.0))

    @classmethod
    def from_function(cls, fields, t_start, t_end, n_segments, allowed_channels=ALL_CHANNELS):
        """Segment a smooth envelope ``fields(t) -> (h1, h2, h3)`` at midpoints."""
        edges = np.linspace(t_start, t_end, n_segments + 1)
        segs = []
        for a, b in zip(edges[:-1], edges[1:]):
            h = np.asarray(fields(0.5 * (a + b)), dtype=float)
            segs.append(PulseSegment(b - a, *h))
        return cls(tuple(segs), frozenset(allowed_channels), t_start)


def build_static_hamiltonian(params, ops):
    """``H = omega J3^2 + delta J3 + gamma J1``."""
    J3 = ops.J3
    return params.omega * (J3 @ J3) + params.delta * J3 + params.gamma * ops.J1


def control_hamiltonian(pulse, t, ops):
    """``H_c(t) = sum_k h_k(t) J_k`` (zero outside the pulse support)."""
    return ops.along(pulse.field_at(t)) if pulse is not None else np.zeros((ops.dim, ops.dim), complex)


# -- presets -----------------------------------------------------------------


@dataclass(frozen=True)
class RydbergPreset:
    R: float = 1.0
    n0: int = 50
    delta_qd: float = 0.0

    def __post_init__(self):
        if int(self.n0) != self.n0 or self.n0 < 2:
            raise ValueError(f"RydbergPreset.n0 must be an integer >= 2, got {self.n0}")
        if not self.n0 - self.delta_qd > 0:
            raise ValueError("RydbergPreset requires n0 - delta_qd > 0")


@dataclass(frozen=True)
class CooperPairBoxPreset:
    E_C: float = 1.0
    E_J: float = 1.0
    n0: int = 20

    def __post_init__(self):
        if not self.E_C > 0:
            raise ValueError("CooperPairBoxPreset.E_C must be positive")
        if not self.E_J >= 0:
            raise ValueError("CooperPairBoxPreset.E_J must be non-negative")
        if int(self.n0) != self.n0 or self.n0 < 1:
            raise ValueError("CooperPairBoxPreset.n0 must be an integer >= 1")

    @property
    def j(self):
        return self.n0 + 0.5


@dataclass(frozen=True)
class BECPreset:
    N: int = 101
    charging_scale: float = 1.0
    tunneling_scale: float = 1.0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("BECPreset.N must be an integer >= 2")

    @property
    def j(self):
        return self.N / 2

    @property
    def j_stated(self):
        """``[N/2] + 1/2``, the value quoted for the double-well condensate.

        Kept for reporting only; the Fock-sector dimension is ``N + 1``.
        """
        return self.N // 2 + 0.5


def rydberg_params(preset):
    """Spin-form coefficients of a circular Rydberg manifold around ``n0``.

    Returns ``(StaticModelParams, allowed_channels, j)`` with
    ``delta = 2R/(n0-dq)^3``, ``omega = -3 delta/(n0-dq)``, ``gamma = 0``,
    channels ``{1, 2}`` (dipole transitions) and ``j = n0 + 1/2``.
    """
    eff = preset.n0 - preset.delta_qd
    if eff <= 0:
        raise ValueError("n0 - delta_qd must be positive")
    delta = 2 * preset.R / eff**3
    omega = -3 * delta / eff
    return StaticModelParams(omega=omega, delta=delta, gamma=0.0), frozenset({1, 2}), preset.n0 + 0.5


def rydberg_level_comparison(preset, window=None):
    """Exact Rydberg energies vs. the spin form on ``|m| <= window``.

    With ``m = n - n0 - 1/2`` the quadratic expansion equals
    ``E(n0) + (delta + omega) m + omega m^2`` up to a constant, so the spin
    form misses a linear shift of size ``|omega|``. Both the raw deviation
    and the deviation after removing the best constant are reported.
    """
    params, _, j = rydberg_params(preset)
    if window is None:
        window = math.ceil(4 * math.sqrt(j))
    eff = preset.n0 - preset.delta_qd
    m = np.arange(-window - 0.5, window + 1.0, 1.0)
    n = m + preset.n0 + 0.5
    if np.any(n < 1):
        raise ValueError("comparison window reaches n < 1")
    exact = -preset.R / (n - preset.delta_qd) ** 2
    spin = params.omega * m**2 + params.delta * m
    diff = exact - spin
    return {
        "m": m,
        "exact": exact,
        "spin_form": spin,
        "max_deviation_after_constant": float(np.max(np.abs(diff - diff.mean()))),
        "linear_shift_from_half_offset": float(params.omega),
        "reference_energy": float(-preset.R / eff**2),
    }


def cpb_charge_basis(preset, window):
    """Charge numbers ``n`` of the truncated basis, ordered descending.

    The window ``n0-W .. n0+W+1`` is symmetric about ``n0 + 1/2`` and the
    descending order matches the spin ordering under ``m = n - n0 - 1/2``.
    """
    if int(window) != window or window < 1:
        raise ValueError(f"charge window half-width must be an integer >= 1, got {window}")
    lo = preset.n0 - window
    if lo < 0:
        raise ValueError(f"charge window reaches n = {lo} < 0")
    return np.arange(preset.n0 + window + 1, lo - 1, -1)


def cpb_charge_hamiltonian(preset, window=None):
    """Truncated Cooper-pair-box Hamiltonian in the charge basis.

    Diagonal ``E_C (n - n0 - 1/2)^2`` and ``-E_J`` between adjacent charge
    states. ``window`` defaults to ``ceil(4 sqrt(j))``.
    """
    if window is None:
        window = default_charge_window(preset.j)
    n = cpb_charge_basis(preset, window)
    h = np.diag(preset.E_C * (n - preset.n0 - 0.5) ** 2).astype(complex)
    off = -preset.E_J * np.ones(n.size - 1)
    h += np.diag(off, 1) + np.diag(off, -1)
    return h


def default_charge_window(j):
    return int(math.ceil(4 * math.sqrt(j)))


def cpb_spin_hamiltonian(preset):
    """``H = E_C J3^2 - (E_J / j) J1`` with ``j = n0 + 1/2``.

    Returns ``(H, j)``; the control channels of this device are ``{2, 3}``
    (see :data:`CPB_CHANNELS`).
    """
    j = preset.j
    params = StaticModelParams(omega=preset.E_C, delta=0.0, gamma=-preset.E_J / j)
    return build_static_hamiltonian(params, build_spin_operators(j)), j


CPB_CHANNELS = frozenset({2, 3})


def cpb_static_params(preset):
    return StaticModelParams(omega=preset.E_C, delta=0.0, gamma=-preset.E_J / preset.j)


def compare_charge_vs_spin(preset, window=None, n_levels=4):
    """Compare the charge-basis and spin-form CPB Hamiltonians on a window.

    The charge states ``n0-W .. n0+W+1`` are identified with spin states
    ``m = n - n0 - 1/2`` (``|m| <= W + 1/2``) and the spin Hamiltonian is
    restricted to the same block. The agreement is approximate: for
    ``j -> inf`` the spin hopping element tends to ``E_J/2`` while the
    charge model hops with ``E_J``. That factor is reported, not corrected;
    ``max_offdiagonal_deviation_core_vs_half`` measures the approach of the
    spin hopping to ``E_J/2`` on ``|m| <= sqrt(j)``.
    """
    if window is None:
        window = default_charge_window(preset.j)
    h_charge = cpb_charge_hamiltonian(preset, window)
    h_spin_full, j = cpb_spin_hamiltonian(preset)
    if window + 0.5 > j:
        raise ValueError(f"window half-width {window} exceeds the spin range j={j}")
    ops = build_spin_operators(j)
    mask = np.abs(ops.m) <= window + 0.5 + 1e-12
    h_spin = h_spin_full[np.ix_(mask, mask)]
    m = ops.m[mask]
    diag_dev = np.max(np.abs(np.diag(h_charge).real - np.diag(h_spin).real))
    off_charge = np.diag(h_charge, 1).real
    off_spin = np.diag(h_spin, 1).real
    core = np.abs(m[1:]) <= math.sqrt(j) + 1e-12
    ev_charge = np.linalg.eigvalsh(h_charge)[:n_levels]
    ev_spin = np.linalg.eigvalsh(h_spin)[:n_levels]
    mid = int(np.argmin(np.abs(m[1:] + 0.5)))
    return {
        "j": j,
        "window": window,
        "max_diagonal_deviation": float(diag_dev),
        "max_offdiagonal_deviation": float(np.max(np.abs(off_charge - off_spin))),
        "max_offdiagonal_deviation_core": float(np.max(np.abs((off_charge - off_spin)[core]))),
        # against the asymptotic spin hopping E_J/2; labelled, not a correction
        "max_offdiagonal_deviation_core_vs_half": float(np.max(np.abs((off_charge / 2 - off_spin)[core]))),
        "max_matrix_deviation": float(np.max(np.abs(h_charge - h_spin))),
        "hopping_ratio_at_center": float(off_spin[mid] / off_charge[mid]) if off_charge[mid] else float("nan"),
        "low_eigenvalues_charge": ev_charge,
        "low_eigenvalues_spin": ev_spin,
        "low_eigenvalue_deviation": np.abs(ev_charge - ev_spin),
    }


def _annihilation(cutoff):
    return np.diag(np.sqrt(np.arange(1, cutoff + 1)), k=1).astype(complex)


def schwinger_map(N):
    """Two-mode Schwinger construction restricted to the ``N``-particle sector.

    Builds ``J1 = (a+b + b+a)/2``, ``J2 = -i(a+b - b+a)/2``,
    ``J3 = (a+a - b+b)/2`` on the two-mode Fock space, then restricts to the
    states ``|n_a, N - n_a>`` ordered by descending ``n_a`` (descending
    ``m = n_a - N/2``). Returns ``(SpinOperators, j)`` with ``j = N/2``.
    """
    if int(N) != N or N < 1:
        raise ValueError(f"atom number must be an integer >= 1, got {N}")
    N = int(N)
    a1 = _annihilation(N)
    eye = np.eye(N + 1)
    a = np.kron(a1, eye)
    b = np.kron(eye, a1)
    ad, bd = a.conj().T, b.conj().T
    J1 = (ad @ b + bd @ a) / 2
    J2 = -1j * (ad @ b - bd @ a) / 2
    J3 = (ad @ a - bd @ b) / 2
    # |n_a, n_b> sits at index n_a*(N+1) + n_b
    idx = [na * (N + 1) + (N - na) for na in range(N, -1, -1)]
    sub = np.ix_(idx, idx)
    j = N / 2
    mats = [op[sub].copy() for op in (J1, J2, J3)]
    for op in mats:
        op.setflags(write=False)
    return SpinOperators(j, *mats), j


def bec_hamiltonian(preset):
    """``H = charging J3^2 - (tunneling / j) J1`` on the ``N``-atom sector, ``j = N/2``."""
    ops, j = schwinger_map(preset.N)
    validate_j(j)
    return preset.charging_scale * (ops.J3 @ ops.J3) - (preset.tunneling_scale / j) * ops.J1
