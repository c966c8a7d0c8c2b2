"""Qubit reconstruction from Stokes data, Bloch-equation fitting, delusion report.

The fit-shaped parts follow the scikit-learn estimator API so they compose
with ``Pipeline`` and ``clone``:

* :class:`StokesNormalizer` -- transformer mapping raw Stokes rows into the
  unit ball (offset subtraction and/or radial clipping).
* :class:`QubitReconstructor` -- transformer from Stokes rows to 2x2 qubit
  density matrices.
* :class:`BlochModel` -- regressor fitting a linear precession-plus-damping
  model ``s(t)`` to a Stokes time series.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import least_squares
from scipy.signal.windows import hann
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .measurement import StokesVector

STRATEGIES = ("none", "radial-clip", "offset-subtract", "bloch-ball-projection")
FIT_THRESHOLD = 0.05

PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _as_vector(s):
    if isinstance(s, StokesVector):
        return s.s
    v = np.asarray(s, dtype=float)
    if v.shape != (3,) or not np.all(np.isfinite(v)):
        raise ValueError("Stokes vector must be a finite 3-vector")
    return v


def check_stokes_bound(s, F_prime0, delta_m):
    """Compare ``|s|^2`` with the bounds 3 and ``3 F'(0)^2 delta_m^2``.

    The second bound is only meaningful for linearized estimates of states
    supported on ``|m| <= delta_m``; it is labelled accordingly.
    """
    v = _as_vector(s)
    r2 = float(v @ v)
    lin = 3.0 * F_prime0**2 * delta_m**2 if F_prime0 is not None else math.inf
    return {
        "radius_squared": r2,
        "bound_definition": 3.0,
        "bound_linearized": lin,
        "bound_linearized_regime": "linearized",
        "governing_bound": min(3.0, lin),
        "passes_definition": r2 <= 3.0 + 1e-12,
        "passes_linearized": r2 <= lin * (1 + 1e-12),
    }


def _radial_clip(v):
    r = np.linalg.norm(v)
    return v / r if r > 1.0 else v


def normalize_stokes(s, strategy="radial-clip", offset=None):
    """Map a raw Stokes triple into the unit ball.

    ``radial-clip`` scales by ``1/max(1, |s|)``; ``offset-subtract``
    subtracts ``offset`` and then clips; ``bloch-ball-projection`` is the
    nearest point of the closed unit ball (identical to the radial clip,
    kept as a separate tag for provenance). ``none`` passes the vector
    through and flags it when ``|s| > 1``.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown normalization strategy {strategy!r}; expected one of {STRATEGIES}")
    v = _as_vector(s).copy()
    meta = {"strategy": strategy, "raw_radius": float(np.linalg.norm(v))}
    if strategy == "none":
        meta["violates_normalization"] = bool(np.linalg.norm(v) > 1.0)
        return StokesVector(v, "raw" if meta["violates_normalization"] else "normalized", meta=meta)
    if strategy == "offset-subtract":
        o = np.zeros(3) if offset is None else np.asarray(offset, dtype=float)
        if o.shape != (3,) or not np.all(np.isfinite(o)):
            raise ValueError("offset must be a finite 3-vector")
        v = v - o
        meta["offset"] = o.tolist()
    return StokesVector(_radial_clip(v), "normalized", meta=meta)


@dataclass
class QubitReconstruction:
    rho: np.ndarray
    source: StokesVector
    strategy: str = "none"

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.rho)


def qubit_density(s):
    v = _as_vector(s)
    return 0.5 * (np.eye(2) + sum(c * p for c, p in zip(v, PAULI)))


def reconstruct_qubit(s, strategy=None):
    """``rho_q = (I + s . sigma) / 2``; raises if ``|s| > 1`` (not a state)."""
    sv = s if isinstance(s, StokesVector) else StokesVector(_as_vector(s), "normalized")
    r = np.linalg.norm(sv.s)
    if r > 1 + 1e-12:
        raise ValueError(
            f"Stokes radius {r:.6g} > 1 violates the qubit normalization condition |s| <= 1; "
            "the reconstructed matrix would not be positive"
        )
    return QubitReconstruction(qubit_density(sv.s), sv, strategy or sv.meta.get("strategy", "none"))


class StokesNormalizer(TransformerMixin, BaseEstimator):
    """Normalize rows of Stokes triples into the Bloch ball.

    Parameters
    ----------
    strategy : {"offset-subtract", "radial-clip", "bloch-ball-projection", "none"}
        Normalization applied to each row.
    offset : array-like of shape (3,) or None
        Offset for ``offset-subtract``. When None it is estimated in ``fit``
        as the long-time mean of the last ``tail_fraction`` of the series.
    tail_fraction : float
        Fraction of the series (from the end) averaged to estimate the offset.
    taper : {"hann", "none"}
        Weighting of the long-time mean. A Hann taper suppresses the bias
        left by oscillations that do not complete an integer number of
        periods inside the averaging window.

    Attributes
    ----------
    offset_ : ndarray of shape (3,)
        Offset actually subtracted (zeros for strategies without offset).
    """

    def __init__(self, strategy="offset-subtract", offset=None, tail_fraction=1.0, taper="hann"):
        self.strategy = strategy
        self.offset = offset
        self.tail_fraction = tail_fraction
        self.taper = taper

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[1] != 3:
            raise ValueError(f"expected Stokes rows with 3 columns, got {X.shape[1]}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown normalization strategy {self.strategy!r}")
        if not 0 < self.tail_fraction <= 1:
            raise ValueError("tail_fraction must lie in (0, 1]")
        if self.taper not in ("hann", "none"):
            raise ValueError(f"unknown taper {self.taper!r}")
        self.n_features_in_ = 3
        if self.strategy == "offset-subtract":
            if self.offset is None:
                n_tail = max(1, int(math.ceil(self.tail_fraction * X.shape[0])))
                tail = X[-n_tail:]
                w = hann(n_tail, sym=False) if self.taper == "hann" and n_tail > 2 else np.ones(n_tail)
                self.offset_ = w @ tail / w.sum()
            else:
                self.offset_ = np.asarray(self.offset, dtype=float)
                if self.offset_.shape != (3,) or not np.all(np.isfinite(self.offset_)):
                    raise ValueError("offset must be a finite 3-vector")
        else:
            self.offset_ = np.zeros(3)
        return self

    def transform(self, X):
        check_is_fitted(self, "offset_")
        X = check_array(X, dtype=float)
        return np.array([normalize_stokes(row, self.strategy, self.offset_).s for row in X])


class QubitReconstructor(TransformerMixin, BaseEstimator):
    """Turn Stokes rows into qubit density matrices ``(I + s . sigma)/2``.

    ``transform`` returns an array of shape ``(n_samples, 2, 2)``. Rows are
    normalized with an internal :class:`StokesNormalizer` first.
    """

    def __init__(self, strategy="offset-subtract", offset=None, tail_fraction=1.0, taper="hann"):
        self.strategy = strategy
        self.offset = offset
        self.tail_fraction = tail_fraction
        self.taper = taper

    def fit(self, X, y=None):
        self.normalizer_ = StokesNormalizer(self.strategy, self.offset, self.tail_fraction, self.taper).fit(X)
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "normalizer_")
        S = self.normalizer_.transform(X)
        return np.array([reconstruct_qubit(s).rho for s in S])


# -- Bloch model ---------------------------------------------------------------------


def _axis(omega):
    w = np.linalg.norm(omega)
    return (omega / w, w) if w > 1e-300 else (np.array([0.0, 0.0, 1.0]), 0.0)


def bloch_solution(t, omega, s0, gamma1, gamma2):
    """Closed-form solution of the linear Bloch model.

    Precession ``ds/dt = omega x s``; the component along ``omega`` decays
    at ``gamma1`` (1/T1) and the transverse part at ``gamma2`` (1/T2).
    """
    t = np.asarray(t, dtype=float)[:, None]
    a, w = _axis(np.asarray(omega, dtype=float))
    s0 = np.asarray(s0, dtype=float)
    par = a @ s0
    perp = s0 - par * a
    cross = np.cross(a, perp)
    return (np.exp(-gamma1 * t) * par * a
            + np.exp(-gamma2 * t) * (np.cos(w * t) * perp + np.sin(w * t) * cross))


def _generator_guess(t, S):
    dS = np.gradient(S, t, axis=0)
    A_T, *_ = np.linalg.lstsq(S, dS, rcond=None)
    A = A_T.T
    anti = 0.5 * (A - A.T)
    return np.array([anti[2, 1], anti[0, 2], anti[1, 0]])


def _exp_rate(t, y):
    """Least-squares fit of ``y = c exp(-g t)`` with ``g >= 0``; returns ``(c, g)``."""
    t0 = t - t[0]
    c0 = y[0] if y[0] != 0 else (y.mean() or 1e-12)
    res = least_squares(
        lambda p: p[0] * np.exp(-p[1] * t0) - y,
        x0=[c0, 0.0], bounds=([-np.inf, 0.0], [np.inf, np.inf]), xtol=1e-15, ftol=1e-15, gtol=1e-15,
    )
    c, g = res.x
    return c * math.exp(g * t[0]) if g * t[0] < 700 else c, g


def _reciprocal(g):
    if math.isnan(g):
        return math.nan
    return math.inf if g < 1e-300 else 1.0 / g


class BlochModel(RegressorMixin, BaseEstimator):
    """Linear Bloch-equation fit of a Stokes time series.

    ``fit(t, S)`` takes sample times of shape ``(n,)`` (or ``(n, 1)``) and
    Stokes rows of shape ``(n, 3)``. Precession vector and initial vector
    are fitted jointly with the decay rates; the reported ``T1``/``T2``
    come from refitting exponentials to the rotating-frame magnitudes
    (component along the fitted axis and transverse magnitude), which
    avoids fitting fast oscillations.

    Parameters
    ----------
    initial_guess : dict or None
        Optional ``{"omega": (3,), "gamma1": float, "gamma2": float}``.
        Missing entries are estimated from the data.
    min_longitudinal : float
        Below this longitudinal amplitude ``T1`` is reported as unidentifiable (nan).

    Attributes
    ----------
    omega_, s0_ : ndarray of shape (3,)
    gamma1_, gamma2_ : float
        Rotating-frame decay rates (1/T1, 1/T2).
    t1_, t2_, t1_t2_ratio_ : float
    residuals_ : ndarray of shape (n, 3)
    rms_, normalized_rms_ : float
    """

    def __init__(self, initial_guess=None, min_longitudinal=1e-3):
        self.initial_guess = initial_guess
        self.min_longitudinal = min_longitudinal

    def fit(self, X, y):
        t = np.ravel(check_array(np.asarray(X, dtype=float).reshape(-1, 1), dtype=float))
        S = check_array(y, dtype=float)
        if S.shape != (t.size, 3):
            raise ValueError(f"Stokes series must have shape ({t.size}, 3), got {S.shape}")
        if t.size < 4:
            raise ValueError(f"Bloch fit needs at least 4 samples, got {t.size}")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if np.max(np.ptp(S, axis=0)) < 1e-12:
            raise ValueError("degenerate Stokes series: constant in time")
        self.n_features_in_ = 1
        guess = dict(self.initial_guess or {})
        om0 = np.asarray(guess.get("omega", _generator_guess(t, S)), dtype=float)
        span = t[-1] - t[0]
        g0 = [float(guess.get("gamma1", 0.1 / span)), float(guess.get("gamma2", 0.1 / span))]
        tt = t - t[0]

        def resid(p):
            return (bloch_solution(tt, p[:3], p[3:6], p[6], p[7]) - S).ravel()

        lower = [-np.inf] * 6 + [0.0, 0.0]
        upper = [np.inf] * 8
        best = None
        for om in (om0, -om0):
            x0 = np.concatenate([om, S[0], g0])
            r = least_squares(resid, x0, bounds=(lower, upper), xtol=1e-15, ftol=1e-15, gtol=1e-15,
                              max_nfev=2000)
            if best is None or r.cost < best.cost:
                best = r
        p = best.x
        self.omega_ = p[:3]
        self.s0_ = p[3:6]
        self.full_gamma1_, self.full_gamma2_ = float(p[6]), float(p[7])
        self.t_offset_ = float(t[0])

        a, _ = _axis(self.omega_)
        par = S @ a
        perp = np.linalg.norm(S - par[:, None] * a, axis=1)
        _, g2 = _exp_rate(t, perp)
        if np.max(np.abs(par)) < self.min_longitudinal:
            g1 = math.nan
        else:
            _, g1 = _exp_rate(t, par)
        self.gamma1_, self.gamma2_ = float(g1), float(g2)
        self.t1_ = _reciprocal(g1)
        self.t2_ = _reciprocal(g2)
        if math.isnan(g1):
            self.t1_t2_ratio_ = math.nan
        elif g1 == 0:
            self.t1_t2_ratio_ = math.inf if g2 > 0 else math.nan
        else:
            self.t1_t2_ratio_ = g2 / g1

        self.residuals_ = self.predict(t) - S
        self.rms_ = float(np.sqrt(np.mean(np.sum(self.residuals_**2, axis=1))))
        scale = float(np.sqrt(np.mean(np.sum(S**2, axis=1))))
        self.normalized_rms_ = self.rms_ / scale if scale > 0 else math.inf
        return self

    def predict(self, X):
        check_is_fitted(self, "omega_")
        t = np.ravel(np.asarray(X, dtype=float))
        return bloch_solution(t - self.t_offset_, self.omega_, self.s0_, self.full_gamma1_, self.full_gamma2_)

    def score(self, X, y, sample_weight=None):
        """``1 - normalized RMS`` of the residual on ``(X, y)``."""
        y = np.asarray(y, dtype=float)
        r = self.predict(X) - y
        return 1.0 - float(np.sqrt(np.mean(np.sum(r**2, axis=1))) / np.sqrt(np.mean(np.sum(y**2, axis=1))))

    def summary(self):
        check_is_fitted(self, "omega_")
        return {
            "omega": self.omega_.tolist(),
            "s0": self.s0_.tolist(),
            "gamma1": self.gamma1_,
            "gamma2": self.gamma2_,
            "T1": self.t1_,
            "T2": self.t2_,
            "T1_over_T2": self.t1_t2_ratio_,
            "rms": self.rms_,
            "normalized_rms": self.normalized_rms_,
        }


def bloch_model_fit(times, series, initial_guess=None):
    """Fit :class:`BlochModel` and return the fitted estimator."""
    return BlochModel(initial_guess=initial_guess).fit(times, series)


# -- delusion report -------------------------------------------------------------------


@dataclass
class DelusionReport:
    j: float
    verdict: str
    flags: list
    raw_radius_max: float
    normalized_radius_max: float
    raw_violates_normalization: bool
    bound_definition: float
    bound_linearized: float
    fluctuations: tuple
    macroscopic_axes: int
    window_delta_m: float
    window_weight: float
    fit: dict
    fit_threshold: float = FIT_THRESHOLD
    extras: dict = field(default_factory=dict)

    def to_dict(self):
        return jsonable(asdict(self))

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def jsonable(obj):
    """Recursively convert numpy values to JSON types; nan and inf become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def default_window(j):
    """``ceil(2 sqrt(j))``: the semiclassical support half-width."""
    return float(math.ceil(2 * math.sqrt(j)))


def delusion_report(j, raw_series, normalized_series, fit, fluctuations, window_weight, delta_m,
                    F_prime0=None, fit_threshold=FIT_THRESHOLD, min_window_weight=0.95, extras=None):
    """Juxtapose the qubit description with the full spin-j diagnostics.

    Parameters
    ----------
    j : float
    raw_series, normalized_series : array-like of shape (n, 3)
    fit : BlochModel
        Fitted on the normalized series.
    fluctuations : tuple of 3 floats
        ``Var(J_k)`` of the prepared state.
    window_weight : float
        Weight of the prepared state inside ``|m| <= delta_m``.

    Verdicts: ``"no delusion"`` (a genuine two-level system fitted by a
    qubit), ``"delusion consistent"`` (qubit fit good while the system is
    macroscopic and semiclassical), ``"support assumption violated"``
    (state not confined to the window), ``"qubit model rejected"`` (fit
    poor) and ``"inconclusive"``.
    """
    missing = [name for name, v in (("raw_series", raw_series), ("normalized_series", normalized_series),
                                    ("fit", fit), ("fluctuations", fluctuations)) if v is None]
    if missing:
        raise ValueError(f"delusion report is missing inputs: {missing}")
    raw = np.asarray(raw_series, dtype=float)
    norm = np.asarray(normalized_series, dtype=float)
    raw_r = np.linalg.norm(raw, axis=1)
    fit_summary = fit.summary()
    fit_ok = fit.normalized_rms_ < fit_threshold
    fl = tuple(float(v) for v in fluctuations)
    macro_axes = int(sum(v >= j / 4 for v in fl))
    window_ok = window_weight >= min_window_weight
    flags = []
    if np.any(raw_r > 1 + 1e-12):
        flags.append("raw data violated |s| <= 1; enforced by normalization")
    if fit_ok:
        flags.append("qubit Bloch model fits restricted data")
    if macro_axes >= 2:
        flags.append("fluctuations O(j) on at least two axes")
    if not window_ok:
        flags.append("state weight outside |m| <= delta_m")

    dim = int(round(2 * j)) + 1
    if dim == 2:
        verdict = "no delusion" if fit_ok else "qubit model rejected"
    elif not window_ok:
        verdict = "support assumption violated"
    elif not fit_ok:
        verdict = "qubit model rejected"
    elif macro_axes >= 2:
        verdict = "delusion consistent"
    else:
        verdict = "inconclusive"
    lin = 3.0 * F_prime0**2 * delta_m**2 if F_prime0 is not None else math.inf
    return DelusionReport(
        j=float(j), verdict=verdict, flags=flags,
        raw_radius_max=float(raw_r.max()), normalized_radius_max=float(np.linalg.norm(norm, axis=1).max()),
        raw_violates_normalization=bool(np.any(raw_r > 1 + 1e-12)),
        bound_definition=3.0, bound_linearized=lin, fluctuations=fl, macroscopic_axes=macro_axes,
        window_delta_m=float(delta_m), window_weight=float(window_weight), fit=fit_summary,
        fit_threshold=fit_threshold, extras=dict(extras or {}),
    )
