"""Scenario configuration: JSON schema validation, defaults, hashing, seeds.

Validation errors are raised as :class:`ConfigError` whose ``field`` is the
dotted path of the offending entry (``"measurement.shots"``).
"""

import copy
import hashlib
import itertools
import json
import math
from importlib import resources

from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match

from ..hamiltonians import (
    ALL_CHANNELS,
    CPB_CHANNELS,
    BECPreset,
    CooperPairBoxPreset,
    RydbergPreset,
    StaticModelParams,
    cpb_static_params,
    rydberg_params,
)
from ..spin import validate_j

SCHEMA_VERSION = 1
SCENARIOS = ("tomography-run", "gate-calibration", "dephasing-demo", "preset-comparison", "delusion-demo", "sweep")
OUTPUT_ROOT_ENV = "MACROQUBIT_OUTPUT_ROOT"

PRESET_DEFAULTS = {
    "spin": {"omega": 0.0, "omega_scaling": "absolute", "delta": 1.0, "gamma": 0.0},
    "rydberg": {"R": 1.0, "n0": 50, "delta_qd": 0.0},
    "cpb": {"E_C": 1.0, "E_J": 1.0, "n0": 20},
    "bec": {"N": 101, "charging_scale": 1.0, "tunneling_scale": 1.0},
}
STATE_DEFAULTS = {"theta": math.pi / 2, "phi": 0.0, "jitter": 0.0, "jitter_samples": 64}
MEASUREMENT_DEFAULTS = {"family": "tanh", "shots": "exact", "normalization": "offset-subtract", "gates": "exact"}
# the demo reads out in the linear-response regime, F'(0) = 1/(2j)
DEMO_WIDTH = {"scale": 2.0, "unit": "j"}
DEFAULT_WIDTH = {"scale": 1.0, "unit": "sqrt_j"}
ANSATZ_DEFAULTS = {"tolerance": 1e-6, "max_iter": 2000, "targets": ["U1", "U2"]}
DEPHASING_DEFAULTS = {"n_samples": 10000, "center": {"theta": math.pi / 3, "phi": 0.0}}
REPORT_DEFAULTS = {"fit_threshold": 0.05, "min_window_weight": 0.95}
# h_max default: this many times the fastest free rate of the model
H_MAX_FACTOR = 100.0


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}" if field else message)


def load_schema():
    text = resources.files(__package__).joinpath("scenario.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


_VALIDATOR = None


def _validator():
    global _VALIDATOR
    if _VALIDATOR is None:
        schema = load_schema()
        Draft202012Validator.check_schema(schema)
        _VALIDATOR = Draft202012Validator(schema)
    return _VALIDATOR


def _path(parts):
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _deepest(error):
    # descend into oneOf/anyOf contexts for the most specific message
    while error.context:
        error = best_match(error.context)
    return error


def check_schema(cfg, prefix=""):
    if not isinstance(cfg, dict):
        raise ConfigError(prefix.rstrip("."), "configuration must be a JSON object")
    errors = sorted(_validator().iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = best_match(errors)
        field = _path(err.absolute_path)
        deep = _deepest(err)
        msg = err.message if deep is err else f"{err.message} ({deep.message})"
        raise ConfigError(prefix + field if field else prefix.rstrip(".") or "config", msg)


def load_config(path):
    """Read a JSON config file; parse errors become :class:`ConfigError`."""
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise ConfigError("config", f"file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON ({exc})") from None


# -- model resolution ----------------------------------------------------------------


def model_from_preset(preset, prefix="preset"):
    """``(StaticModelParams, j, channels)`` for a resolved preset block."""
    kind = preset["kind"]
    try:
        if kind == "spin":
            try:
                validate_j(preset["j"])
            except ValueError as exc:
                raise ConfigError(f"{prefix}.j", str(exc)) from None
            # per_j keeps the twist j*omega fixed when j is swept
            omega = preset["omega"] / preset["j"] if preset["omega_scaling"] == "per_j" else preset["omega"]
            params = StaticModelParams(omega=omega, delta=preset["delta"], gamma=preset["gamma"])
            return params, float(preset["j"]), ALL_CHANNELS
        if kind == "rydberg":
            params, channels, j = rydberg_params(RydbergPreset(preset["R"], preset["n0"], preset["delta_qd"]))
            return params, j, channels
        if kind == "cpb":
            p = CooperPairBoxPreset(preset["E_C"], preset["E_J"], preset["n0"])
            return cpb_static_params(p), p.j, CPB_CHANNELS
        p = BECPreset(preset["N"], preset["charging_scale"], preset["tunneling_scale"])
        params = StaticModelParams(omega=p.charging_scale, delta=0.0, gamma=-p.tunneling_scale / p.j)
        return params, p.j, CPB_CHANNELS
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(prefix, str(exc)) from None


def free_rate(params, j):
    return max(abs(params.delta), abs(params.gamma), 2 * j * abs(params.omega))


def resolve_width(width, j):
    if isinstance(width, dict):
        base = j if width["unit"] == "j" else math.sqrt(j)
        return width["scale"] * base
    return float(width)


def resolve_plan(plan, params, prefix="plan"):
    """``(t_in, t_fin, max_step)`` from either an absolute or a period-based plan."""
    t_in = float(plan.get("t_in", 0.0))
    if "periods" in plan:
        if params.delta == 0:
            raise ConfigError(f"{prefix}.periods", "period-based plans need a nonzero delta")
        period = 2 * math.pi / abs(params.delta)
        t_fin = t_in + plan["periods"] * period
        step = period / plan["steps_per_period"]
    else:
        t_fin, step = float(plan["t_fin"]), float(plan["max_step"])
    if not t_fin > t_in:
        raise ConfigError(f"{prefix}.t_fin", f"must exceed t_in ({t_fin} <= {t_in})")
    return t_in, t_fin, step


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given or {}))
    return out


def resolve_config(cfg, prefix=""):
    """Validate ``cfg`` and return a snapshot with every default made explicit.

    The snapshot validates again and describes the run completely.
    """
    check_schema(cfg, prefix)
    out = copy.deepcopy(cfg)
    out["schema_version"] = SCHEMA_VERSION
    out.setdefault("seed", 0)
    scenario = out["scenario"]
    if scenario == "sweep":
        _resolve_sweep(out, prefix)
        return out

    if "preset" in out:
        kind = out["preset"]["kind"]
        out["preset"] = _merge({"kind": kind, **PRESET_DEFAULTS[kind]}, out["preset"])
        params, j, channels = model_from_preset(out["preset"], prefix + "preset")
    else:
        params, j, channels = None, None, None
    if scenario == "preset-comparison" and out["preset"]["kind"] == "spin":
        raise ConfigError(prefix + "preset.kind", "preset-comparison needs a physical preset (rydberg, cpb or bec)")

    if scenario in ("tomography-run", "delusion-demo"):
        out["state"] = _merge(STATE_DEFAULTS, out.get("state"))
        width = DEMO_WIDTH if scenario == "delusion-demo" else DEFAULT_WIDTH
        out["measurement"] = _merge({**MEASUREMENT_DEFAULTS, "width": width}, out.get("measurement"))
        out["report"] = _merge({**REPORT_DEFAULTS, "delta_m": float(math.ceil(2 * math.sqrt(j)))}, out.get("report"))
    if "plan" in out:
        out["plan"].setdefault("t_in", 0.0)
        resolve_plan(out["plan"], params, prefix + "plan")
    if scenario == "gate-calibration" or (
            scenario in ("tomography-run", "delusion-demo") and out["measurement"]["gates"] == "synthesized"):
        given = out.get("ansatz") or {}
        ansatz = _merge(ANSATZ_DEFAULTS, given)
        ansatz.setdefault("channels", sorted(channels))
        if "h_max" not in ansatz:
            rate = free_rate(params, j)
            ansatz["h_max"] = H_MAX_FACTOR * rate if rate > 0 else 1.0
        out["ansatz"] = ansatz
    if scenario == "dephasing-demo":
        dep = _merge(DEPHASING_DEFAULTS, out.get("dephasing"))
        dep["center"] = _merge(DEPHASING_DEFAULTS["center"], dep.get("center"))
        out["dephasing"] = dep
    check_schema(out, prefix)
    return out


def _resolve_sweep(out, prefix):
    base = out["sweep"]["base"]
    if base.get("scenario") == "sweep":
        raise ConfigError(prefix + "sweep.base.scenario", "a sweep cannot nest another sweep")
    base = copy.deepcopy(base)
    base.pop("seed", None)
    base.pop("output_dir", None)
    # the base stays unresolved: defaults such as report.delta_m depend on
    # swept fields and are filled per cell
    resolve_config({**base, "seed": 0}, prefix + "sweep.base.")
    out["sweep"]["base"] = base
    # every cell must validate before anything runs
    for i, (cell, _) in enumerate(sweep_cells(out)):
        try:
            resolve_config(cell)
        except ConfigError as exc:
            raise ConfigError(f"{prefix}sweep.axes", f"cell {i}: {exc}") from None


def set_path(cfg, dotted, value):
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p, {}), dict):
            raise ConfigError(f"sweep.axes.{dotted}", f"{p} is not a block")
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def sweep_cells(cfg):
    """Cartesian product of the sweep axes applied to the base config.

    Yields ``(cell_config, assignment)`` in row-major order over the axes
    as listed; every cell receives a seed derived from the master seed.
    """
    axes = cfg["sweep"]["axes"]
    names = list(axes)
    base = cfg["sweep"]["base"]
    for idx, values in enumerate(itertools.product(*(axes[n] for n in names))):
        cell = copy.deepcopy(base)
        assignment = dict(zip(names, values))
        for name, value in assignment.items():
            set_path(cell, name, value)
        cell["seed"] = derive_seed(cfg["seed"], base["scenario"], idx)
        yield cell, assignment


# -- hashing and seeds ------------------------------------------------------------------


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def config_hash(cfg):
    """sha256 of the canonical snapshot, excluding the output location."""
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(canonical_json(body).encode()).hexdigest()


def derive_seed(master, *keys):
    """Stable 64-bit seed from the master seed and task keys."""
    digest = hashlib.sha256(canonical_json([int(master), *keys]).encode()).digest()
    return int.from_bytes(digest[:8], "little")
