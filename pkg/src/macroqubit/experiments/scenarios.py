"""Scenario implementations composing the simulation modules.

Each scenario takes a resolved config and an :class:`OutputDir` and
returns a flat dict of key metrics. Every file goes through the
``OutputDir`` so that it lands in the manifest. Payloads contain no
wall-clock data or absolute paths, which keeps them byte-identical across
repeated runs with the same config.
"""

import csv
import hashlib
import io
import json
import os

import numpy as np

from ..dynamics import PropagationPlan, classical_trajectory, dephasing_ensemble, quantum_states
from ..gates import (
    PulseAnsatz,
    RotationTarget,
    synthesize_gate,
    synthesize_measurement_gates,
    validate_gate_quantum,
)
from ..hamiltonians import (
    BECPreset,
    CooperPairBoxPreset,
    RydbergPreset,
    bec_hamiltonian,
    build_static_hamiltonian,
    compare_charge_vs_spin,
    cpb_spin_hamiltonian,
    default_charge_window,
    rydberg_level_comparison,
)
from ..measurement import SensitivityFunction, measure_stokes, stokes_observables
from ..spin import (
    build_spin_operators,
    coherent_state,
    coherent_state_along,
    direction,
    fluctuation_report,
    mean_spin,
    window_weight,
)
from ..tomography import (
    BlochModel,
    StokesNormalizer,
    check_stokes_bound,
    delusion_report,
    jsonable,
    reconstruct_qubit,
)
from .config import derive_seed, model_from_preset, resolve_plan, resolve_width

METRIC_COLUMNS = (
    "stokes_radius", "semiclassical_deviation", "normalized_rms", "dephasing_time",
    "t1_t2_ratio", "gate_error", "fidelity", "max_deviation",
)


def fmt(x):
    """17 significant digits: lossless for doubles."""
    return f"{float(x):.17g}"


class OutputDir:
    """Write files under ``root`` and keep a sha256 manifest of them."""

    def __init__(self, root):
        self.root = root
        self.manifest = []
        os.makedirs(root, exist_ok=True)

    def _write(self, name, data):
        path = os.path.join(self.root, name)
        os.makedirs(os.path.dirname(path), exist_ok=True)
        with open(path, "wb") as fh:
            fh.write(data)
        self.manifest.append({"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})

    def text(self, name, text):
        self._write(name, text.encode("utf-8"))

    def json(self, name, obj):
        self.text(name, json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")

    def jsonl(self, name, rows):
        self.text(name, "".join(json.dumps(jsonable(r), sort_keys=True) + "\n" for r in rows))

    def csv(self, name, header, rows):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
        self.text(name, buf.getvalue())

    def series(self, name, times, values, columns=("x1", "x2", "x3")):
        self.csv(name, ["t", *columns], ([float(t), *map(float, v)] for t, v in zip(times, values)))


# -- shared pieces -------------------------------------------------------------------


class Model:
    """Static model, spin operators and static Hamiltonian for a preset block."""

    def __init__(self, preset):
        self.preset = preset
        self.params, self.j, self.channels = model_from_preset(preset)
        self.ops = build_spin_operators(self.j)
        if preset["kind"] == "bec":
            self.H = bec_hamiltonian(BECPreset(preset["N"], preset["charging_scale"], preset["tunneling_scale"]))
        else:
            self.H = build_static_hamiltonian(self.params, self.ops)

    def plan(self, plan_cfg):
        t_in, t_fin, step = resolve_plan(plan_cfg, self.params)
        return PropagationPlan(t_in, t_fin, step)


def sensitivity(meas, j):
    if meas["family"] == "hard-sign":
        return SensitivityFunction("hard-sign")
    return SensitivityFunction(meas["family"], resolve_width(meas["width"], j))


def prepare_state(state_cfg, j, seed):
    """Coherent state, or a mixture over isotropically jittered directions.

    Returns ``(state, nominal_direction)``.
    """
    n = direction(state_cfg["theta"], state_cfg["phi"])
    if state_cfg["jitter"] == 0:
        return coherent_state(j, state_cfg["theta"], state_cfg["phi"]), n
    rng = np.random.default_rng(derive_seed(seed, "preparation"))
    k = state_cfg["jitter_samples"]
    dirs = n + rng.normal(0.0, state_cfg["jitter"], size=(k, 3))
    rho = 0
    for d in dirs:
        psi = coherent_state_along(j, d)
        rho = rho + np.outer(psi, psi.conj())
    return rho / k, n


def _gate_results_json(results, model):
    out = {}
    for k, res in results.items():
        q = validate_gate_quantum(res.pulse, model.H, model.ops, res.target)
        d = res.to_dict()
        d["quantum"] = {"fidelity": q["fidelity"], "mean_spin": q["mean_spin"], "fluctuations": q["fluctuations"]}
        out[str(k)] = d
    return out


def _stokes_series(cfg, model, out):
    """Propagate, measure and write the shared tomography outputs."""
    meas = cfg["measurement"]
    seed = cfg["seed"]
    j = model.j
    plan = model.plan(cfg["plan"])
    F = sensitivity(meas, j)
    gate_info = None
    if meas["gates"] == "synthesized":
        a = cfg["ansatz"]
        ansatz = PulseAnsatz(frozenset(a["channels"]), a["h_max"], a.get("n_segments"))
        gates, results = synthesize_measurement_gates(
            model.params, j, ansatz, a["tolerance"], derive_seed(seed, "gates") % 2**32, model.H)
        gate_info = _gate_results_json(results, model)
        out.json("gates.json", gate_info)
        observables = stokes_observables(F, model.ops, gates)
    else:
        observables = stokes_observables(F, model.ops)

    psi0, n0 = prepare_state(cfg["state"], j, seed)
    shots = None if meas["shots"] == "exact" else int(meas["shots"])
    times, raw, mean, errors, records = [], [], [], [], []
    for i, (t, state) in enumerate(quantum_states(model.H, None, model.ops, psi0, plan)):
        sv, recs = measure_stokes(state, observables, shots, derive_seed(seed, "stokes", i))
        times.append(t)
        raw.append(sv.s)
        errors.append(sv.standard_errors)
        mean.append(mean_spin(state, model.ops) / j)
        records.extend({"index": i, "t": float(t), **json.loads(r.to_json())} for r in recs)
    times, raw, mean = np.array(times), np.array(raw), np.array(mean)

    classical = classical_trajectory(model.params, None, j, n0, plan, times)
    norm = StokesNormalizer(strategy=meas["normalization"], offset=meas.get("offset")).fit(raw)
    normalized = norm.transform(raw)

    out.series("mean_spin.csv", times, mean)
    out.series("classical.csv", times, classical.values)
    out.series("stokes_raw.csv", times, raw, ("s1", "s2", "s3"))
    out.series("stokes_normalized.csv", times, normalized, ("s1", "s2", "s3"))
    if shots is not None:
        out.series("stokes_standard_errors.csv", times, errors, ("e1", "e2", "e3"))
        out.jsonl("measurements.jsonl", records)

    return {
        "times": times, "raw": raw, "normalized": normalized, "mean": mean, "classical": classical.values,
        "state0": psi0, "F": F, "normalizer": norm, "gates": gate_info, "plan": plan,
    }


def _common_metrics(data):
    return {
        "stokes_radius": float(np.max(np.linalg.norm(data["raw"], axis=1))),
        "semiclassical_deviation": float(np.max(np.linalg.norm(data["mean"] - data["classical"], axis=1))),
    }


def _reconstruction(s):
    rec = reconstruct_qubit(s)
    return {"stokes": s, "rho_real": rec.rho.real, "rho_imag": rec.rho.imag, "eigenvalues": rec.eigenvalues}


# -- scenarios -----------------------------------------------------------------------


def tomography_run(cfg, out):
    model = Model(cfg["preset"])
    data = _stokes_series(cfg, model, out)
    metrics = _common_metrics(data)
    F = data["F"]
    delta_m = cfg["report"]["delta_m"]
    bound = check_stokes_bound(data["raw"][0], F.slope0, delta_m)
    report = {
        "scenario": cfg["scenario"],
        "j": model.j,
        "sensitivity": {"family": F.family, "width": F.width, "slope0": F.slope0},
        "normalization": {"strategy": cfg["measurement"]["normalization"], "offset": data["normalizer"].offset_},
        "initial_fluctuations": fluctuation_report(data["state0"], model.ops),
        "initial_bound_check": bound,
        "reconstruction_initial": _reconstruction(data["normalized"][0]),
        "reconstruction_final": _reconstruction(data["normalized"][-1]),
        "metrics": metrics,
    }
    out.json("report.json", report)
    return metrics


def delusion_demo(cfg, out):
    model = Model(cfg["preset"])
    data = _stokes_series(cfg, model, out)
    metrics = _common_metrics(data)
    rep_cfg = cfg["report"]
    fit = BlochModel().fit(data["times"], data["normalized"])
    pred = fit.predict(data["times"])
    out.series("bloch_fit.csv", data["times"], np.hstack([pred, fit.residuals_]),
               ("s1", "s2", "s3", "r1", "r2", "r3"))
    psi0 = data["state0"]
    F = data["F"]
    report = delusion_report(
        model.j, data["raw"], data["normalized"], fit, fluctuation_report(psi0, model.ops),
        window_weight(psi0, rep_cfg["delta_m"]), rep_cfg["delta_m"], F_prime0=F.slope0,
        fit_threshold=rep_cfg["fit_threshold"], min_window_weight=rep_cfg["min_window_weight"],
        extras={
            "sensitivity": {"family": F.family, "width": F.width},
            "normalization": {"strategy": cfg["measurement"]["normalization"],
                              "offset": data["normalizer"].offset_.tolist()},
            "semiclassical_deviation": metrics["semiclassical_deviation"],
            "n_samples": int(data["times"].size),
        },
    )
    out.json("report.json", report.to_dict())
    metrics.update(normalized_rms=fit.normalized_rms_, verdict=report.verdict,
                   macroscopic_axes=report.macroscopic_axes)
    return metrics


def gate_calibration(cfg, out):
    model = Model(cfg["preset"])
    a = cfg["ansatz"]
    ansatz = PulseAnsatz(frozenset(a["channels"]), a["h_max"], a.get("n_segments"))
    seed = derive_seed(cfg["seed"], "gate-calibration") % 2**32
    results = {}
    for name in a["targets"]:
        target = getattr(RotationTarget, name)()
        results[name] = synthesize_gate(target, model.params, model.j, ansatz, a["tolerance"], a["max_iter"], seed)
    payload = _gate_results_json(results, model)
    for name, res in results.items():
        seg = res.pulse.segments
        out.csv(f"pulse_{name}.csv", ["duration", "h1", "h2", "h3"],
                ([s.duration, *map(float, s.field)] for s in seg))
    out.json("gates.json", {"j": model.j, "ansatz": a, "gates": payload})
    return {
        "gate_error": max(r.error for r in results.values()),
        "fidelity": min(p["quantum"]["fidelity"] for p in payload.values()),
    }


def dephasing_demo(cfg, out):
    model = Model(cfg["preset"])
    plan = model.plan(cfg["plan"])
    dep = cfg["dephasing"]
    center = direction(dep["center"]["theta"], dep["center"]["phi"])
    res = dephasing_ensemble(model.params, model.j, dep["n_samples"], derive_seed(cfg["seed"], "ensemble"),
                             plan, center=center)
    fit = BlochModel().fit(res.mean.times, res.mean.values)
    out.series("ensemble_mean.csv", res.mean.times, res.mean.values)
    out.json("report.json", {
        "j": model.j,
        "n_samples": res.n_samples,
        "dephasing_time": res.dephasing_time,
        "fit_window": res.fit_window,
        "member_norm_error": res.member_norm_error,
        "bloch_fit": fit.summary(),
    })
    return {"dephasing_time": res.dephasing_time, "t1_t2_ratio": fit.t1_t2_ratio_,
            "normalized_rms": fit.normalized_rms_}


def preset_comparison(cfg, out):
    p = cfg["preset"]
    kind = p["kind"]
    if kind == "rydberg":
        rep = rydberg_level_comparison(RydbergPreset(p["R"], p["n0"], p["delta_qd"]))
        out.json("comparison.json", {"kind": kind, **rep})
        return {"max_deviation": rep["max_deviation_after_constant"]}
    if kind == "cpb":
        cpb = CooperPairBoxPreset(p["E_C"], p["E_J"], p["n0"])
        bec = BECPreset(2 * cpb.n0 + 1, cpb.E_C, cpb.E_J)
    else:
        bec = BECPreset(p["N"], p["charging_scale"], p["tunneling_scale"])
        if bec.N % 2 == 0:
            raise ValueError("CPB counterpart needs an odd atom number (j = n0 + 1/2)")
        cpb = CooperPairBoxPreset(bec.charging_scale, bec.tunneling_scale, (bec.N - 1) // 2)
    h_cpb, j = cpb_spin_hamiltonian(cpb)
    h_bec = bec_hamiltonian(bec)
    entry_dev = float(np.max(np.abs(h_cpb - h_bec)))
    rep = {"kind": kind, "j": j, "bec_j_stated": bec.j_stated, "cpb_bec_entry_deviation": entry_dev}
    if default_charge_window(j) + 0.5 <= j and cpb.n0 >= default_charge_window(j):
        rep["charge_vs_spin"] = compare_charge_vs_spin(cpb)
    out.json("comparison.json", rep)
    return {"max_deviation": entry_dev}


SCENARIO_FUNCS = {
    "tomography-run": tomography_run,
    "delusion-demo": delusion_demo,
    "gate-calibration": gate_calibration,
    "dephasing-demo": dephasing_demo,
    "preset-comparison": preset_comparison,
}
