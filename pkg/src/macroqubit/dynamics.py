"""Quantum propagation, the classical spin flow, and the dephasing ensemble."""

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from ._linalg import check_hermitian
from .hamiltonians import control_hamiltonian
from .spin import check_state

E1, E2, E3 = np.eye(3)


@dataclass(frozen=True)
class PropagationPlan:
    """Time window and step control.

    ``method`` is fixed: piecewise-constant midpoint exponentials for the
    quantum propagator, classical RK4 with renormalization for the flow.
    """

    t_in: float
    t_fin: float
    max_step: float
    method: str = "midpoint-expm/rk4"

    def __post_init__(self):
        if not (math.isfinite(self.t_in) and math.isfinite(self.t_fin)) or not self.t_fin > self.t_in:
            raise ValueError(f"plan requires t_fin > t_in, got [{self.t_in}, {self.t_fin}]")
        if not (self.max_step > 0 and math.isfinite(self.max_step)):
            raise ValueError(f"plan max_step must be positive, got {self.max_step}")

    @property
    def n_steps(self):
        return max(1, math.ceil((self.t_fin - self.t_in) / self.max_step - 1e-9))

    def sample_times(self):
        return np.linspace(self.t_in, self.t_fin, self.n_steps + 1)


@dataclass
class Trajectory:
    """Sampled 3-vector time series (classical ``n``, Stokes ``s`` or ``<J>/j``)."""

    times: np.ndarray
    values: np.ndarray
    kind: str = "classical"
    provenance: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.times.size, 3):
            raise ValueError(f"trajectory values must have shape ({self.times.size}, 3)")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory times must be strictly increasing")

    @property
    def final(self):
        return self.values[-1]

    def to_csv(self, path, columns=("x1", "x2", "x3")):
        """Write ``t, <columns>, provenance`` rows with 17 significant digits."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *columns, "provenance"])
            for t, v in zip(self.times, self.values):
                w.writerow([_fmt(t), *(_fmt(x) for x in v), self.provenance or self.kind])


def _fmt(x):
    return f"{float(x):.17g}"


# -- quantum propagation -------------------------------------------------------


def _breakpoints(t0, t1, pulse):
    pts = [t0, t1]
    if pulse is not None and pulse.segments:
        edges = pulse.boundaries()
        pts.extend(e for e in edges if t0 < e < t1)
    return np.unique(pts)


class _Stepper:
    """Exact per-interval exponentials of a piecewise-constant Hamiltonian.

    Within an interval where ``H + H_c`` is constant, the product of
    ``n`` midpoint substeps of length ``L/n`` equals ``exp(-i H L)``
    exactly, so one eigendecomposition per distinct Hamiltonian suffices.
    """

    def __init__(self, H_static, pulse, ops):
        self.H = H_static
        self.pulse = pulse
        self.ops = ops
        self._eig = {}

    def _decomp(self, t_mid):
        h = self.pulse.field_at(t_mid) if self.pulse is not None else np.zeros(3)
        key = tuple(h)
        if key not in self._eig:
            H = self.H + (control_hamiltonian(self.pulse, t_mid, self.ops) if self.pulse is not None else 0)
            w, v = np.linalg.eigh((H + H.conj().T) / 2)
            self._eig[key] = (w, v)
        return self._eig[key]

    def unitary(self, t0, t1):
        U = np.eye(self.ops.dim, dtype=complex)
        pts = _breakpoints(t0, t1, self.pulse)
        for a, b in zip(pts[:-1], pts[1:]):
            w, v = self._decomp(0.5 * (a + b))
            U = ((v * np.exp(-1j * w * (b - a))) @ v.conj().T) @ U
        return U


def propagate_unitary(H_static, pulse, ops, plan):
    """Time-ordered propagator from ``plan.t_in`` to ``plan.t_fin``.

    Segment boundaries of ``pulse`` are respected exactly and each
    constant stretch is exponentiated through a Hermitian eigendecomposition.
    """
    H_static = check_hermitian(H_static, "static Hamiltonian")
    if H_static.shape[0] != ops.dim:
        raise ValueError("static Hamiltonian and spin operators differ in dimension")
    return _Stepper(H_static, pulse, ops).unitary(plan.t_in, plan.t_fin)


def evolve_state(state, U):
    s = np.asarray(state, dtype=complex)
    return U @ s if s.ndim == 1 else U @ s @ U.conj().T


def quantum_states(H_static, pulse, ops, initial_state, plan, times=None):
    """Yield ``(t, state)`` along the exact evolution at the sample times."""
    H_static = check_hermitian(H_static, "static Hamiltonian")
    s = np.asarray(initial_state, dtype=complex)
    if s.shape[0] != ops.dim:
        raise ValueError(f"state dimension {s.shape[0]} does not match operator dimension {ops.dim}")
    if s.ndim == 1:
        check_state(s)
    times = plan.sample_times() if times is None else np.asarray(times, dtype=float)
    stepper = _Stepper(H_static, pulse, ops)
    cache = {}
    t_prev = times[0]
    yield t_prev, s
    for t in times[1:]:
        if pulse is None or not pulse.segments:
            key = round(t - t_prev, 15)
            if key not in cache:
                cache[key] = stepper.unitary(t_prev, t)
            U = cache[key]
        else:
            U = stepper.unitary(t_prev, t)
        s = evolve_state(s, U)
        t_prev = t
        yield t, s


def quantum_mean_spin_trajectory(H_static, pulse, ops, initial_state, plan, times=None):
    """``<J(t)>/j`` sampled along the exact quantum evolution."""
    ts, vals = [], []
    for t, s in quantum_states(H_static, pulse, ops, initial_state, plan, times):
        if s.ndim == 1:
            vals.append([np.vdot(s, J @ s).real for J in ops.vector])
        else:
            vals.append([np.einsum("ij,ji->", s, J).real for J in ops.vector])
        ts.append(t)
    return Trajectory(np.array(ts), np.array(vals) / ops.j, kind="quantum-mean-spin", provenance="quantum")


# -- classical flow --------------------------------------------------------------


def twist_rate(omega, j):
    """Coefficient of ``(n . e3) e3`` in the classical flow.

    The mean-field limit of ``omega J3^2`` acting on ``<J> = j n`` gives a
    field ``2 j omega n3`` along ``e3`` (from ``dJ3^2/dJ3 = 2 J3``).
    """
    return 2.0 * j * omega


@njit(cache=True)
def _rk4_kernel(n, grid, fields, twist, record, n_out, renormalize):
    """Fixed-step RK4 for ``dn/dt = (twist n3 e3 + field) x n`` on rows of ``n``.

    ``fields[i]`` is the bias plus control field on step ``i``; after step
    ``i`` the state is stored in output slot ``record[i]`` (skipped if -1).
    """
    n_rows = n.shape[0]
    out = np.empty((n_out, n_rows, 3))
    k = np.empty((4, 3))
    y = np.empty(3)
    x = np.empty(3)
    for r in range(n_rows):
        for a in range(3):
            x[a] = n[r, a]
        norm0 = math.sqrt(x[0] ** 2 + x[1] ** 2 + x[2] ** 2)
        for i in range(grid.shape[0] - 1):
            dt = grid[i + 1] - grid[i]
            b0 = fields[i, 0]
            b1 = fields[i, 1]
            for stage in range(4):
                c = 0.0 if stage == 0 else (dt if stage == 3 else 0.5 * dt)
                for a in range(3):
                    y[a] = x[a] + c * k[stage - 1, a] if stage > 0 else x[a]
                b2 = fields[i, 2] + twist * y[2]
                k[stage, 0] = b1 * y[2] - b2 * y[1]
                k[stage, 1] = b2 * y[0] - b0 * y[2]
                k[stage, 2] = b0 * y[1] - b1 * y[0]
            for a in range(3):
                x[a] += dt / 6.0 * (k[0, a] + 2.0 * k[1, a] + 2.0 * k[2, a] + k[3, a])
            if renormalize:
                cur = math.sqrt(x[0] ** 2 + x[1] ** 2 + x[2] ** 2)
                if cur > 0.0:
                    for a in range(3):
                        x[a] *= norm0 / cur
            if record[i] >= 0:
                for a in range(3):
                    out[record[i], r, a] = x[a]
    return out


def _step_grid(plan, pulse, times):
    """Integration grid: requested sample times refined to ``max_step`` and
    split at pulse boundaries. Returns grid and indices of sample times."""
    pts = set(np.asarray(times, dtype=float).tolist())
    if pulse is not None and pulse.segments:
        pts.update(e for e in pulse.boundaries() if times[0] < e < times[-1])
    knots = np.array(sorted(pts))
    grid = [knots[0]]
    for a, b in zip(knots[:-1], knots[1:]):
        n = max(1, math.ceil((b - a) / plan.max_step - 1e-9))
        grid.extend(a + (b - a) * np.arange(1, n + 1) / n)
    grid = np.array(grid)
    grid[-1] = knots[-1]
    sample_idx = np.searchsorted(grid, times)
    return grid, sample_idx


def integrate_flow(n0, twist, bias, pulse, plan, times=None, renormalize=True):
    """RK4 integration of ``dn/dt = (twist n3 e3 + bias + h(t)) x n``.

    ``n0`` is a single vector or an ``(m, 3)`` array of initial conditions.
    Returns ``(times, values)`` with values shaped ``(len(times),) + n0.shape``.
    Norms are restored after each step when ``renormalize`` is set; the
    flow itself is norm preserving.
    """
    n = np.array(n0, dtype=float)
    rows = np.ascontiguousarray(n.reshape(-1, 3))
    times = plan.sample_times() if times is None else np.asarray(times, dtype=float)
    grid, sample_idx = _step_grid(plan, pulse, times)
    bias = np.asarray(bias, dtype=float)
    mids = 0.5 * (grid[:-1] + grid[1:])
    if pulse is not None and pulse.segments:
        fields = np.array([bias + pulse.field_at(t) for t in mids])
    else:
        fields = np.tile(bias, (mids.size, 1))
    record = np.full(grid.size - 1, -1, dtype=np.int64)
    record[sample_idx[1:] - 1] = np.arange(times.size - 1)
    out = np.empty((times.size, rows.shape[0], 3))
    out[0] = rows
    out[1:] = _rk4_kernel(rows, grid, np.ascontiguousarray(fields), float(twist), record, times.size - 1,
                          bool(renormalize))
    return times, out.reshape((times.size,) + n.shape)


def _bias(params):
    return params.delta * E3 + params.gamma * E1


def _check_unit(n0):
    n0 = np.asarray(n0, dtype=float)
    if n0.shape != (3,) or not np.all(np.isfinite(n0)):
        raise ValueError("initial direction must be a finite 3-vector")
    if abs(np.linalg.norm(n0) - 1) > 1e-9:
        raise ValueError(f"initial direction must be a unit vector (norm {np.linalg.norm(n0):.12g})")
    return n0


def classical_trajectory(params, pulse, j, n0, plan, times=None):
    """Classical motion of ``n = <J>/j`` under the static model plus controls."""
    n0 = _check_unit(n0)
    t, vals = integrate_flow(n0, twist_rate(params.omega, j), _bias(params), pulse, plan, times)
    return Trajectory(t, vals, kind="classical", provenance="classical")


def stokes_flow(params, pulse, j, F_prime0, s0, plan, times=None):
    """Nonlinear flow of the Stokes vector.

    Same form as the classical flow acting on ``s`` with ``omega`` replaced
    by ``omega / F'(0)``. The flow is a time-dependent rotation, so ``|s|``
    is conserved.
    """
    if not (F_prime0 > 0 and math.isfinite(F_prime0)):
        raise ValueError(f"sensitivity slope F'(0) must be positive, got {F_prime0}")
    s0 = np.asarray(s0, dtype=float)
    if s0.shape != (3,) or not np.all(np.isfinite(s0)):
        raise ValueError("initial Stokes vector must be a finite 3-vector")
    twist = twist_rate(params.omega / F_prime0, j)
    t, vals = integrate_flow(s0, twist, _bias(params), pulse, plan, times)
    return Trajectory(t, vals, kind="stokes", provenance="stokes-flow")


# -- dephasing ensemble ------------------------------------------------------------


@dataclass
class DephasingResult:
    mean: Trajectory
    transverse: np.ndarray
    dephasing_time: float
    fit_window: tuple
    member_norm_error: float
    n_samples: int


def fluctuation_sigma(j):
    """Transverse spread of ``n`` for a coherent state: ``sqrt(j/2)/j``."""
    return 1.0 / math.sqrt(2 * j)


def sample_directions(center, j, n_samples, rng):
    """Unit vectors around ``center`` with Gaussian transverse spread ``1/sqrt(2j)``."""
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    # orthonormal transverse pair
    helper = E3 if abs(c[2]) < 0.9 else E1
    u = np.cross(c, helper)
    u /= np.linalg.norm(u)
    v = np.cross(c, u)
    xi = rng.normal(0.0, fluctuation_sigma(j), size=(n_samples, 2))
    n = c + xi[:, :1] * u + xi[:, 1:] * v
    return n / np.linalg.norm(n, axis=1, keepdims=True)


def fit_decay_time(times, magnitude, window=(0.2, 0.9)):
    """1/e time from a log-linear least-squares fit over ``window``.

    ``magnitude`` is normalized by its initial value before selecting the
    samples lying in ``window``. Returns ``(tau, (t_lo, t_hi))``; ``tau`` is
    ``inf`` when the window is never entered (no measurable decay).
    """
    mag = np.asarray(magnitude, dtype=float)
    rel = mag / mag[0]
    sel = (rel >= window[0]) & (rel <= window[1])
    if np.count_nonzero(sel) < 2:
        return math.inf, (math.nan, math.nan)
    # only the first contiguous passage through the window
    first = np.flatnonzero(sel)[0]
    stop = first
    while stop < sel.size and sel[stop]:
        stop += 1
    t = np.asarray(times)[first:stop]
    y = np.log(rel[first:stop])
    if t.size < 2:
        return math.inf, (math.nan, math.nan)
    slope, _ = np.polyfit(t, y, 1)
    tau = -1.0 / slope if slope < 0 else math.inf
    return tau, (float(t[0]), float(t[-1]))


def dephasing_ensemble(params, j, n_samples, seed, plan, center=E1, times=None):
    """Ensemble of classical trajectories with coherent-state-sized spread.

    Initial directions are drawn around ``center`` with transverse
    Gaussian fluctuations ``1/sqrt(2j)``; each member evolves without
    controls. The ensemble mean decays (phase damping) while every member
    keeps ``|n| = 1`` (no energy damping per trajectory).
    """
    if int(n_samples) != n_samples or n_samples < 2:
        raise ValueError(f"n_samples must be an integer >= 2, got {n_samples}")
    if not j > 0:
        raise ValueError(f"j must be positive, got {j}")
    rng = np.random.default_rng(seed)
    n0 = sample_directions(center, j, int(n_samples), rng)
    t, vals = integrate_flow(n0, twist_rate(params.omega, j), _bias(params), None, plan, times)
    mean = vals.mean(axis=1)
    norm_err = float(np.max(np.abs(np.linalg.norm(vals, axis=-1) - 1)))
    transverse = np.linalg.norm(mean[:, :2], axis=1)
    tau, win = fit_decay_time(t, transverse)
    traj = Trajectory(t, mean, kind="stokes", provenance="ensemble-mean")
    return DephasingResult(traj, transverse, tau, win, norm_err, int(n_samples))
