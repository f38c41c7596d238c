"""Batch front end: simulate, certify, verify and sweep from TOML scenarios.

One TOML document describes a scenario in nested sections ([model],
[simulate], [certify], [verify], [sweep]). Every command writes its outputs
plus a manifest JSON carrying the full parsed configuration, the effective
seed and the library version, so any output can be regenerated from its
manifest alone. All floats are serialized with %.17g and JSON keys are
sorted: identical config and seed give byte-identical files.

Exit codes: 0 command complete (certify reports negative facts without
failing), 1 verification FAIL, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .certificates import (
    DEFAULT_ENSEMBLE,
    EnsembleSpec,
    check_decomposition,
    compute_theorem2_certificate,
    compute_theorem3_certificate,
    estimate_admissibility_M,
    estimate_observability_delta,
    formula_reference,
    search_rho1,
    smoothing_constant_L,
    tail_audit,
)
from .closedloop import (
    heat_closed_loop_solve,
    transport_closed_loop_solve,
    vpf_fixed_point_solve,
)
from .core import (
    GridFunction,
    ModalVector,
    SpectralDiffusionModel,
    StabilityCertificate,
    Trajectory,
    TransportModel,
    format_float,
    grid_to_modal,
    model_fingerprint,
    modal_to_grid,
    read_grid_csv,
    read_modal_csv,
    read_trajectory_csv,
    uniform_grid,
    write_trajectory_csv,
)
from .verifier import fit_decay_rate, verify_decay, verify_lemma1


class ConfigError(Exception):
    """Configuration problem; the message names the offending field."""


def _load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}")


def _section(cfg: dict, name: str) -> dict:
    sec = cfg.get(name)
    if sec is None:
        raise ConfigError(f"missing required config section `[{name}]`")
    if not isinstance(sec, dict):
        raise ConfigError(f"config section `[{name}]` must be a table")
    return sec


_MISSING = object()


def _field(sec: dict, section: str, key: str, cast=None, default=_MISSING):
    if key not in sec:
        if default is _MISSING:
            raise ConfigError(f"missing required config field `{section}.{key}`")
        return default
    value = sec[key]
    if cast is not None:
        try:
            return cast(value)
        except (TypeError, ValueError):
            raise ConfigError(f"config field `{section}.{key}` has invalid value {value!r}")
    return value


def _profile(sec, section, key, n_grid, default):
    """A scalar becomes a constant profile; a string is a grid CSV path."""
    raw = _field(sec, section, key, default=default)
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return GridFunction.constant(float(raw), n_grid)
    if isinstance(raw, str):
        f = read_grid_csv(raw)
        if f.n != n_grid:
            raise ConfigError(
                f"config field `{section}.{key}`: profile has {f.n} nodes, model expects {n_grid}"
            )
        return f
    raise ConfigError(f"config field `{section}.{key}` must be a number or a CSV path")


def build_model(cfg: dict):
    sec = _section(cfg, "model")
    kind = _field(sec, "model", "kind", cast=str)
    if kind == "heat":
        n_modes = _field(sec, "model", "n_modes", cast=int, default=64)
        n_grid = _field(sec, "model", "n_grid", cast=int, default=513)
        rho = _field(sec, "model", "rho", cast=float)
        potential = sec.get("potential")
        if potential in (None, "none"):
            g = None
        elif isinstance(potential, (int, float)) and not isinstance(potential, bool):
            g = GridFunction.constant(float(potential), n_grid)
        elif isinstance(potential, str):
            g = read_grid_csv(potential)
        else:
            raise ConfigError("config field `model.potential` must be 'none', a number or a CSV path")
        try:
            return SpectralDiffusionModel(
                n_modes=n_modes, rho=rho, potential=g, n_grid=n_grid
            )
        except ValueError as exc:
            raise ConfigError(f"config section `[model]`: {exc}")
    if kind == "transport":
        n_grid = _field(sec, "model", "n_grid", cast=int, default=513)
        epsilon = _field(sec, "model", "epsilon", cast=float)
        alpha = _field(sec, "model", "alpha", cast=float, default=1.0)
        h = _profile(sec, "model", "h", n_grid, default=1.0)
        f = _profile(sec, "model", "f", n_grid, default=1.0)
        try:
            return TransportModel(n_grid=n_grid, alpha=alpha, h=h, f=f, epsilon=epsilon)
        except ValueError as exc:
            raise ConfigError(f"config section `[model]`: {exc}")
    raise ConfigError(f"config field `model.kind` must be 'heat' or 'transport', got {kind!r}")


def _model_gain(model) -> float:
    return model.rho if isinstance(model, SpectralDiffusionModel) else model.epsilon


def _with_gain(model, gain: float):
    if isinstance(model, SpectralDiffusionModel):
        return dataclasses.replace(model, rho=gain)
    return dataclasses.replace(model, epsilon=gain)


def parse_initial_state(spec, model):
    """Named preset (`mode:j`, `ones`, `zero`) or a grid/modal CSV path.

    Returns the state in the representation the model's solver consumes:
    modal coefficients for the heat model, grid samples for transport.
    """
    heat = isinstance(model, SpectralDiffusionModel)
    if isinstance(spec, str) and spec.startswith("mode:"):
        try:
            j = int(spec.split(":", 1)[1])
        except ValueError:
            raise ConfigError(f"bad mode preset {spec!r}; expected mode:<j>")
        if heat:
            if not 1 <= j <= model.n_modes:
                raise ConfigError(f"mode preset {spec!r} outside 1..{model.n_modes}")
            return ModalVector.basis(j, model.n_modes)
        zeta = uniform_grid(model.n_grid)
        return GridFunction(np.sqrt(2.0) * np.sin(j * np.pi * zeta))
    if spec == "ones":
        if heat:
            return ModalVector(np.ones(model.n_modes))
        return GridFunction.constant(1.0, model.n_grid)
    if spec == "zero":
        if heat:
            return ModalVector(np.zeros(model.n_modes))
        return GridFunction.constant(0.0, model.n_grid)
    if isinstance(spec, str):
        with open(spec, encoding="utf-8") as fh:
            header = fh.readline().strip()
        if header == "zeta,value":
            f = read_grid_csv(spec)
            if heat:
                return grid_to_modal(f, model.n_modes)
            if f.n != model.n_grid:
                raise ConfigError(
                    f"initial state has {f.n} nodes, model expects {model.n_grid}"
                )
            return f
        if header == "j,c_j":
            v = read_modal_csv(spec)
            if heat:
                if v.coeffs.size != model.n_modes:
                    raise ConfigError(
                        f"initial state has {v.coeffs.size} modes, model expects {model.n_modes}"
                    )
                return v
            return modal_to_grid(v, model.n_grid)
        raise ConfigError(f"unrecognized initial-state file header in {spec}")
    raise ConfigError(f"config field `simulate.x0` has invalid value {spec!r}")


def _x0_manifest_entry(spec, x0) -> dict:
    if isinstance(spec, str) and (spec in ("ones", "zero") or spec.startswith("mode:")):
        return {"preset": spec}
    if isinstance(x0, ModalVector):
        return {"modal_coeffs": [float(c) for c in x0.coeffs]}
    return {"grid_values": [float(v) for v in x0.values]}


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _write_json(path, obj) -> None:
    Path(path).write_text(_json_text(obj), encoding="utf-8")


def _thread_cap(n_jobs: int) -> int:
    raw = os.environ.get("DS_STAB_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap < 1:
        cap = min(8, max(1, n_jobs))
    return min(cap, max(1, n_jobs))


def _simulate_trajectory(model, x0, t_end, dt_out, solver) -> Trajectory:
    if isinstance(model, SpectralDiffusionModel):
        if solver == "vpf":
            return vpf_fixed_point_solve(model, x0, t_end)
        if solver != "spectral":
            raise ConfigError(
                f"config field `simulate.solver` must be 'spectral' or 'vpf', got {solver!r}"
            )
        return heat_closed_loop_solve(model, x0, t_end, dt_out)
    return transport_closed_loop_solve(model, x0, t_end, dt_out)


def cmd_simulate(cfg: dict, out_dir: Path, seed: int | None) -> int:
    model = build_model(cfg)
    sec = _section(cfg, "simulate")
    t_end = _field(sec, "simulate", "t_end", cast=float)
    if t_end <= 0:
        raise ConfigError(f"config field `simulate.t_end` must be > 0, got {t_end}")
    dt_out = _field(sec, "simulate", "dt_out", cast=float, default=None)
    solver = _field(sec, "simulate", "solver", cast=str, default="spectral")
    x0_spec = _field(sec, "simulate", "x0", default="mode:1")
    x0 = parse_initial_state(x0_spec, model)
    name = _field(sec, "simulate", "output", cast=str, default="trajectory.csv")

    try:
        traj = _simulate_trajectory(model, x0, t_end, dt_out, solver)
    except ValueError as exc:
        raise ConfigError(f"config section `[simulate]`: {exc}")

    out_dir.mkdir(parents=True, exist_ok=True)
    traj_path = out_dir / name
    write_trajectory_csv(traj_path, traj)
    manifest = {
        "command": "simulate",
        "version": __version__,
        "seed": seed,
        "config": cfg,
        "model_fingerprint": model_fingerprint(model),
        "gain": _model_gain(model),
        "x0": _x0_manifest_entry(x0_spec, x0),
        "outputs": [name],
    }
    _write_json(str(traj_path) + ".manifest.json", manifest)
    print(f"wrote {traj_path} ({traj.times.size} samples)")
    return 0


def _resolve_ensemble(sec: dict, section: str, seed: int | None) -> EnsembleSpec:
    ens = sec.get("ensemble", {})
    if not isinstance(ens, dict):
        raise ConfigError(f"config section `[{section}.ensemble]` must be a table")
    count = int(ens.get("count", DEFAULT_ENSEMBLE.count))
    pieces = int(ens.get("pieces", DEFAULT_ENSEMBLE.pieces))
    eff_seed = seed if seed is not None else int(ens.get("seed", DEFAULT_ENSEMBLE.seed))
    try:
        return EnsembleSpec(count=count, pieces=pieces, seed=eff_seed)
    except ValueError as exc:
        raise ConfigError(f"config section `[{section}.ensemble]`: {exc}")


def _certify_facts(model, sec: dict, section: str, seed: int | None) -> dict:
    """Shared estimation + certificate assembly used by certify and sweep."""
    T = _field(sec, section, "T", cast=float)
    p = _field(sec, section, "p", cast=float, default=2.0)
    if T <= 0:
        raise ConfigError(f"config field `{section}.T` must be > 0, got {T}")
    if p < 1:
        raise ConfigError(f"config field `{section}.p` must be >= 1, got {p}")
    heat = isinstance(model, SpectralDiffusionModel)
    path = _field(sec, section, "path", cast=str,
                  default="direct" if heat else "decomposition")
    if path not in ("direct", "decomposition"):
        raise ConfigError(
            f"config field `{section}.path` must be 'direct' or 'decomposition', got {path!r}"
        )
    ensemble = _resolve_ensemble(sec, section, seed)

    provenance = {"T": "config", "p": "config", "rho": "config"}
    facts: dict = {"T": T, "p": p, "path": path,
                   "ensemble": dataclasses.asdict(ensemble)}

    if "M_override" in sec:
        M = _field(sec, section, "M_override", cast=float)
        provenance["M"] = "config"
    else:
        M = estimate_admissibility_M(model, T, p, ensemble)
        provenance["M"] = "estimate"
    if "delta_override" in sec:
        delta = _field(sec, section, "delta_override", cast=float)
        provenance["delta"] = "config"
    else:
        delta = estimate_observability_delta(model, T, ensemble)
        if isinstance(model, TransportModel):
            provenance["delta"] = "analytic"
        else:
            provenance["delta"] = "analytic" if model.potential is None else "estimate"
    facts["M"] = M
    facts["delta"] = delta

    decomposition = None
    if path == "direct":
        C = _field(sec, section, "C", cast=float, default=1.0)
        if heat and "L" not in sec:
            L = smoothing_constant_L(model)
            provenance["L"] = "analytic"
        else:
            L = _field(sec, section, "L", cast=float, default=1.0)
            provenance["L"] = "config"
        provenance["C"] = "config"
        facts["C"] = C
        facts["L"] = L
        front_kwargs = {"C": C, "L": L}
        certificate_fn = compute_theorem2_certificate
    else:
        if isinstance(model, TransportModel):
            decomposition = check_decomposition(model, ensemble)
            XB_norm = decomposition.xb_norm
            provenance["XB_norm"] = "analytic"
        else:
            XB_norm = _field(sec, section, "XB_norm", cast=float)
            provenance["XB_norm"] = "config"
        facts["XB_norm"] = XB_norm
        front_kwargs = {"XB_norm": XB_norm}
        certificate_fn = compute_theorem3_certificate

    rho1 = search_rho1(certificate_fn, M, delta, T, p, **front_kwargs)
    facts["rho1"] = rho1
    facts["rho_max"] = math.inf if M == 0 else 1.0 / (T ** (1.0 / p) * M)

    gain = _field(sec, section, "rho", cast=float, default=None)
    if gain is None:
        model_gain = _model_gain(model)
        if model_gain > 0:
            gain = model_gain
        elif rho1 is not None and math.isfinite(rho1):
            gain = 0.5 * rho1
            provenance["rho"] = "derived"
    facts["rho"] = gain

    cert = None
    cert_error = None
    if gain is not None and gain > 0:
        try:
            cert = certificate_fn(
                M=M, delta=delta, T=T, p=p, rho=gain, rho1=rho1,
                model_id=model_fingerprint(model), provenance=provenance,
                **front_kwargs,
            )
        except ValueError as exc:
            cert_error = str(exc)
    elif gain is None:
        cert_error = "no gain available: no model gain, no certify.rho, no certifiable rho1"
    else:
        cert_error = f"gain must be > 0, got {gain}"

    facts["certificate"] = None if cert is None else cert.to_dict()
    facts["certificate_error"] = cert_error
    facts["decomposition"] = None if decomposition is None else decomposition.to_dict()
    facts["provenance"] = provenance
    facts["formulas"] = formula_reference()
    return facts


def cmd_certify(cfg: dict, out_dir: Path, seed: int | None) -> int:
    model = build_model(cfg)
    sec = _section(cfg, "certify")
    facts = _certify_facts(model, sec, "certify", seed)
    if _field(sec, "certify", "tail_audit", default=False):
        ensemble = _resolve_ensemble(sec, "certify", seed)
        facts["tail_audit"] = tail_audit(model, facts["T"], facts["p"], ensemble)

    report = {
        "command": "certify",
        "version": __version__,
        "seed": seed,
        "model_fingerprint": model_fingerprint(model),
        **facts,
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    cert_path = out_dir / _field(sec, "certify", "output", cast=str,
                                 default="certificate.json")
    _write_json(cert_path, report)
    manifest = {
        "command": "certify",
        "version": __version__,
        "seed": seed,
        "config": cfg,
        "model_fingerprint": model_fingerprint(model),
        "outputs": [cert_path.name],
    }
    _write_json(str(cert_path) + ".manifest.json", manifest)
    rho1 = facts["rho1"]
    print(f"wrote {cert_path} (rho1={'none' if rho1 is None else format_float(rho1)})")
    return 0


def _load_certificate(path) -> StabilityCertificate:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"certificate file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed certificate JSON {path}: {exc}")
    payload = doc.get("certificate", doc) if isinstance(doc, dict) else None
    if not isinstance(payload, dict):
        raise ConfigError(f"certificate file {path} holds no certificate object")
    try:
        return StabilityCertificate.from_dict(payload)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"certificate file {path} is incomplete: {exc}")


def _load_manifest(traj_path) -> dict:
    manifest_path = str(traj_path) + ".manifest.json"
    try:
        return json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"trajectory manifest not found: {manifest_path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed manifest {manifest_path}: {exc}")


def _replay_from_manifest(manifest: dict):
    cfg = manifest.get("config")
    if not isinstance(cfg, dict):
        raise ConfigError("manifest carries no config; cannot reconstruct the run")
    model = build_model(cfg)
    sec = _section(cfg, "simulate")
    t_end = _field(sec, "simulate", "t_end", cast=float)
    dt_out = _field(sec, "simulate", "dt_out", cast=float, default=None)
    solver = _field(sec, "simulate", "solver", cast=str, default="spectral")
    x0_entry = manifest.get("x0", {})
    if "preset" in x0_entry:
        x0 = parse_initial_state(x0_entry["preset"], model)
    elif "modal_coeffs" in x0_entry:
        x0 = ModalVector(np.asarray(x0_entry["modal_coeffs"], dtype=float))
    elif "grid_values" in x0_entry:
        x0 = GridFunction(np.asarray(x0_entry["grid_values"], dtype=float))
    else:
        x0 = parse_initial_state(_field(sec, "simulate", "x0", default="mode:1"), model)
    return model, x0, t_end, dt_out, solver


def cmd_verify(cfg: dict, out_dir: Path, seed: int | None) -> int:
    sec = _section(cfg, "verify")
    traj_path = _field(sec, "verify", "trajectory", cast=str)
    cert_path = _field(sec, "verify", "certificate", cast=str)
    checks = _field(sec, "verify", "checks", default=["decay"])
    if not isinstance(checks, list) or not checks or not all(
        c in ("decay", "lemma1") for c in checks
    ):
        raise ConfigError(
            "config field `verify.checks` must be a nonempty list drawn from ['decay', 'lemma1']"
        )

    cert = _load_certificate(cert_path)
    manifest = _load_manifest(traj_path)
    model, x0, t_end, dt_out, solver = _replay_from_manifest(manifest)
    fingerprint = model_fingerprint(model)

    report: dict = {
        "command": "verify",
        "version": __version__,
        "trajectory": Path(traj_path).name,
        "certificate": Path(cert_path).name,
        "model_fingerprint": fingerprint,
        "checks": {},
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / _field(sec, "verify", "output", cast=str,
                                   default="verification.json")

    if cert.model_id and cert.model_id != fingerprint:
        report["pass"] = False
        report["error"] = "model fingerprint mismatch between certificate and trajectory"
        _write_json(report_path, report)
        print(f"FAIL: {report['error']}")
        return 1

    try:
        file_traj = read_trajectory_csv(
            traj_path, gain=float(manifest.get("gain", 0.0)), model_id=fingerprint
        )
    except ValueError as exc:
        raise ConfigError(str(exc))

    replay = _simulate_trajectory(model, x0, t_end, dt_out, solver)
    if replay.times.size != file_traj.times.size or not np.allclose(
        replay.norms, file_traj.norms, rtol=1e-9, atol=1e-12
    ):
        report["pass"] = False
        report["error"] = "trajectory file does not match its manifest replay"
        _write_json(report_path, report)
        print(f"FAIL: {report['error']}")
        return 1

    overall = True
    if "decay" in checks:
        contraction_ok = True
        if isinstance(model, SpectralDiffusionModel) and model.potential is not None:
            contraction_ok = model.contraction.ok
        decay = verify_decay(replay, cert, contraction_ok=contraction_ok)
        report["checks"]["decay"] = decay.to_dict()
        overall = overall and decay.ok
    if "lemma1" in checks:
        open_loop = _simulate_trajectory(
            _with_gain(model, 0.0), x0, t_end, dt_out, solver
        )
        lemma1 = verify_lemma1(replay, cert, open_loop)
        report["checks"]["lemma1"] = lemma1.to_dict()
        overall = overall and lemma1.ok

    report["pass"] = overall
    _write_json(report_path, report)
    print("PASS" if overall else "FAIL", f"-> {report_path}")
    return 0 if overall else 1


def _sweep_gains(sec: dict, rho1, rho_max: float) -> list[float]:
    if "rho_values" in sec:
        values = sec["rho_values"]
        if not isinstance(values, list) or not values:
            raise ConfigError("config field `sweep.rho_values` must be a nonempty list")
        return sorted(float(v) for v in values)
    if "rho1_factors" in sec:
        factors = sec["rho1_factors"]
        if not isinstance(factors, list) or not factors:
            raise ConfigError("config field `sweep.rho1_factors` must be a nonempty list")
        if rho1 is None or not math.isfinite(rho1):
            raise ConfigError(
                "config field `sweep.rho1_factors` needs a finite certifiable rho1, "
                "but the search returned none"
            )
        return sorted(float(f) * rho1 for f in factors)
    raise ConfigError("missing required config field `sweep.rho_values` (or `sweep.rho1_factors`)")


def cmd_sweep(cfg: dict, out_dir: Path, seed: int | None) -> int:
    model = build_model(cfg)
    sec = _section(cfg, "sweep")
    facts = _certify_facts(model, sec, "sweep", seed)
    T, p = facts["T"], facts["p"]
    M, delta = facts["M"], facts["delta"]
    path = facts["path"]
    t_end = _field(sec, "sweep", "t_end", cast=float, default=6.0 * T)
    dt_out = _field(sec, "sweep", "dt_out", cast=float, default=T / 8.0)
    x0_spec = _field(sec, "sweep", "x0", default="mode:1")
    x0 = parse_initial_state(x0_spec, model)
    solver = _field(sec, "sweep", "solver", cast=str, default="spectral")
    gains = _sweep_gains(sec, facts["rho1"], facts["rho_max"])

    if path == "direct":
        front_kwargs = {"C": facts["C"], "L": facts["L"]}
        certificate_fn = compute_theorem2_certificate
    else:
        front_kwargs = {"XB_norm": facts["XB_norm"]}
        certificate_fn = compute_theorem3_certificate
    fingerprint = model_fingerprint(model)

    def run_row(gain: float) -> dict:
        row = {"rho": gain, "C2": None, "sigma_cert": None,
               "sigma_meas": None, "pass": None}
        gained = _with_gain(model, gain)
        traj = _simulate_trajectory(gained, x0, t_end, dt_out, solver)
        row["sigma_meas"] = fit_decay_rate(traj, T)
        cert = None
        if 0.0 < gain < facts["rho_max"]:
            cert = certificate_fn(
                M=M, delta=delta, T=T, p=p, rho=gain, rho1=facts["rho1"],
                model_id=fingerprint, provenance=facts["provenance"],
                **front_kwargs,
            )
            row["C2"] = cert.C2
        if cert is not None and cert.valid:
            row["sigma_cert"] = cert.sigma
            contraction_ok = True
            if isinstance(gained, SpectralDiffusionModel) and gained.potential is not None:
                contraction_ok = gained.contraction.ok
            decay = verify_decay(traj, cert, contraction_ok=contraction_ok)
            row["pass"] = decay.ok
        return row

    workers = _thread_cap(len(gains))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run_row, gains))
    else:
        rows = [run_row(g) for g in gains]

    def cell(value) -> str:
        if value is None:
            return "none"
        if isinstance(value, bool):
            return "PASS" if value else "FAIL"
        if isinstance(value, float) and math.isnan(value):
            return "none"
        return format_float(value)

    lines = ["rho,C2,sigma_cert,sigma_meas,pass"]
    for row in rows:
        lines.append(",".join(cell(row[k]) for k in
                              ("rho", "C2", "sigma_cert", "sigma_meas", "pass")))
    out_dir.mkdir(parents=True, exist_ok=True)
    sweep_path = out_dir / _field(sec, "sweep", "output", cast=str, default="sweep.csv")
    sweep_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    manifest = {
        "command": "sweep",
        "version": __version__,
        "seed": seed,
        "config": cfg,
        "model_fingerprint": fingerprint,
        "shared_constants": {"M": M, "delta": delta, "rho1": facts["rho1"],
                             "rho_max": facts["rho_max"]},
        "provenance": facts["provenance"],
        "x0": _x0_manifest_entry(x0_spec, x0),
        "outputs": [sweep_path.name],
    }
    _write_json(str(sweep_path) + ".manifest.json", manifest)

    failed = [row["rho"] for row in rows if row["pass"] is False]
    print(f"wrote {sweep_path} ({len(rows)} rows)")
    if failed:
        print("FAIL at rho = " + ", ".join(format_float(g) for g in failed))
        return 1
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ds-stab",
        description="Simulate, certify and verify switching-feedback stabilization runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("simulate", "integrate the closed loop and write a trajectory CSV"),
        ("certify", "estimate constants and write a certificate JSON"),
        ("verify", "check a trajectory file against a certificate file"),
        ("sweep", "map certified and measured decay over a gain grid"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="TOML scenario file")
        cmd.add_argument("--out", default=".", help="output directory (default: .)")
        cmd.add_argument("--seed", type=int, default=None,
                         help="override the ensemble seed")

    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "certify": cmd_certify,
        "verify": cmd_verify,
        "sweep": cmd_sweep,
    }
    try:
        cfg = _load_toml(args.config)
        return handlers[args.command](cfg, Path(args.out), args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
