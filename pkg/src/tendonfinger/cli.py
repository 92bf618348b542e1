"""Command-line front end.

Every command writes plot-ready CSV/JSON files into ``--out`` and finishes
with ``manifest.json``, which lists each produced file with its SHA-256.
Failures print a JSON error object on stderr and exit with

    1  command line or scenario text could not be parsed
    2  a value violates a documented constraint
    3  a solver failed (non-convergence, singular or unstable configuration)
    4  file system error
"""

import argparse
import csv
import hashlib
import io
import itertools
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .compliance import (
    center_of_compliance,
    compliance_field,
    full_closing_excursions,
    principal_direction_alignment,
)
from .equilibrium import EquilibriumProblem, closing_trajectory, solve
from .exceptions import (
    InfeasibleGeometry,
    NonConvergence,
    ParseError,
    RankDeficientData,
    SingularConfiguration,
    UnstableEquilibrium,
    ValidationError,
)
from .finger import FingerParams, FingerState
from .grasp import (
    GraspScenario,
    GraspType,
    energy_well,
    equilibrium_offset,
    grasp_stiffness,
    segment_fits,
    simulate_pinch_grasp,
    simulate_power_grasp,
)
from .scenario import (
    apply_override,
    bundled_text,
    load_document,
    parse_document,
    parse_override,
)
from .stiffness import CycleDataset, conditioning_report, fit_stiffness, synthesize_cycles

COMMANDS = ("simulate", "compliance-field", "alignment", "fit", "well", "repro")

EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4
_EXIT_CODES = (
    (ParseError, EXIT_PARSE),
    (ValidationError, EXIT_VALIDATION),
    (RankDeficientData, EXIT_VALIDATION),
    (NonConvergence, EXIT_SOLVER),
    (InfeasibleGeometry, EXIT_SOLVER),
    (SingularConfiguration, EXIT_SOLVER),
    (UnstableEquilibrium, EXIT_SOLVER),
    (OSError, EXIT_IO),
)

# identified stiffness of the two-finger pinch and the three-finger spherical grasp (N/mm)
PLANAR_K = ((0.445, 0.0543), (0.0543, 0.409))
SPATIAL_K = ((0.569, 0.0553, 0.0323), (0.0553, 0.696, 0.0755), (0.0323, 0.0755, 0.809))

SYNTH_DEFAULTS = {
    "k_true": [list(r) for r in PLANAR_K],
    "hysteresis": 0.1,
    "noise_sigma": 0.02,
    "n_cycles": 1,
    "amplitude": 2.0,
    "samples_per_quarter": 25,
}

FIELD_STATIONS = 61
ALIGNMENT_SAMPLES = 50


@dataclass(frozen=True)
class RunConfig:
    """One CLI invocation. ``overrides`` holds raw ``key=value`` strings."""

    command: str
    out: Path
    scenario: str = None
    overrides: tuple = ()
    seed: int = 0
    jobs: int = 1
    data: str = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError("command", f"expected one of {COMMANDS}")
        if int(self.jobs) < 1:
            raise ValidationError("jobs", "must be >= 1")
        object.__setattr__(self, "out", Path(self.out))
        object.__setattr__(self, "overrides", tuple(self.overrides))


# -- formatting ---------------------------------------------------------------

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def json_text(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


# -- inputs -------------------------------------------------------------------

def read_scenario_document(spec):
    """Scenario document from a file path or ``bundled:<name>``."""
    if spec.startswith("bundled:"):
        return load_document(bundled_text(spec.split(":", 1)[1]))
    path = Path(spec)
    if not path.is_file():
        raise ValidationError("scenario", f"file not found: {spec}")
    return load_document(path.read_text(encoding="utf-8"))


def expand_overrides(items):
    """Cross product of ``key=v1|v2`` overrides as a list of ``{key: value}`` dicts."""
    parsed = [parse_override(i) for i in items]
    keys = [k for k, _ in parsed]
    if len(set(keys)) != len(keys):
        raise ValidationError("--set", "each key may be given once")
    return [dict(zip(keys, combo)) for combo in itertools.product(*(v for _, v in parsed))]


def _finger_input(doc):
    """Finger params and state for the single-finger analyses."""
    if doc is None:
        params = FingerParams()
        return params, FingerState.at_rest(params), None
    obj = parse_document(doc)
    if isinstance(obj, GraspScenario):
        raise ValidationError("scenario", "this command takes a single-finger problem")
    return obj.params, solve(obj).state, obj


# -- commands -----------------------------------------------------------------

def _curve_outputs(scenario):
    if scenario.grasp_type is GraspType.POWER_CYLINDER:
        curve = simulate_power_grasp(scenario)
    else:
        curve = simulate_pinch_grasp(scenario)
    k = curve.knee_index
    rows = [(e, f, p.value, int(i == k)) for i, (e, f, p) in enumerate(curve.samples)]
    fits = segment_fits(curve)
    pre_max = max((f for e, f, _ in curve.samples[:k]), default=0.0) if k is not None else max(curve.force)

    def fit(v):
        return None if v is None else {"slope_N_per_mm": v[0], "intercept_N": v[1], "r_squared": v[2]}

    summary = {
        "grasp_type": scenario.grasp_type,
        "knee_excursion_mm": curve.knee_excursion,
        "max_pre_knee_force_N": pre_max,
        "pre_knee_fit": fit(fits["pre"]),
        "post_knee_fit": fit(fits["post"]),
        "slope_ratio": (fits["post"][0] / fits["pre"][0]) if fits["pre"] and fits["post"] else None,
    }
    return csv_text(["excursion_mm", "force_N", "phase", "knee"], rows), summary


def cmd_simulate(doc, cfg):
    if doc is None:
        raise ValidationError("scenario", "simulate needs --scenario")
    obj = parse_document(doc)
    if isinstance(obj, EquilibriumProblem):
        sol = solve(obj)
        st = sol.state
        return {"equilibrium.json": json_text({
            "theta_proximal_rad": st.theta_proximal, "theta_distal_rad": st.theta_distal,
            "twist_distal_rad": st.twist_distal, "tendon_excursion_mm": st.tendon_excursion,
            "tendon_tension_N": st.tendon_tension, "phase": st.phase, "energy_Nmm": sol.energy,
            "active_constraints": list(sol.active_constraints),
            "contacts": [{"link": c.link, "location_mm": c.location, "normal": list(c.normal),
                          "normal_force_N": c.normal_force} for c in st.contacts],
        })}
    curve, summary = _curve_outputs(obj)
    return {"curve.csv": curve, "summary.json": json_text(summary)}


def _field_outputs(params, state):
    stations = np.linspace(0.0, 3.0 * params.distal_length, FIELD_STATIONS)
    ells = compliance_field(params, state, stations)
    rows = [(e.station, e.axes[0][0], e.axes[0][1], e.compliances[0], e.compliances[1]) for e in ells]
    center, ell = center_of_compliance(params, state)
    text = csv_text(["point_mm", "axis1_x", "axis1_y", "c1_mm_per_N", "c2_mm_per_N"], rows)
    return text, {"center_of_compliance_mm": center, "major_compliance_mm_per_N": ell.compliances[0],
                  "minor_compliance_mm_per_N": ell.compliances[1], "distal_length_mm": params.distal_length}


def cmd_compliance_field(doc, cfg):
    params, state, _ = _finger_input(doc)
    text, center = _field_outputs(params, state)
    return {"compliance_field.csv": text, "center.json": json_text(center)}


def _alignment_outputs(params, problem=None):
    base = problem if problem is not None else EquilibriumProblem(params, 0.0)
    if base.obstacles:
        raise ValidationError("obstacles", "alignment is computed for the free finger")
    ex = full_closing_excursions(params, ALIGNMENT_SAMPLES)
    traj = closing_trajectory(base, ex)
    angles = principal_direction_alignment(params, traj)
    rows = [(e, math.degrees(s.state.theta_proximal), math.degrees(s.state.theta_distal), a)
            for e, s, a in zip(ex, traj, angles)]
    text = csv_text(["excursion_mm", "theta_proximal_deg", "theta_distal_deg", "angle_deg"], rows)
    return text, {"max_angle_deg": max(angles), "samples": len(angles)}


def cmd_alignment(doc, cfg):
    params, _, problem = _finger_input(doc)
    text, summary = _alignment_outputs(params, problem)
    return {"alignment.csv": text, "summary.json": json_text(summary)}


def synth_config(overrides):
    conf = dict(SYNTH_DEFAULTS)
    for key, value in overrides.items():
        if key not in conf:
            raise ValidationError(key, f"unknown key; synthetic data accepts {sorted(conf)}")
        conf[key] = value
    return conf


def _fit_outputs(data):
    fit = fit_stiffness(data)
    rep = conditioning_report(fit)
    return {**fit.to_dict(), "eigenvalues": rep.eigenvalues, "condition_number": rep.condition_number,
            "well_conditioned": rep.well_conditioned}


def cmd_fit(doc, cfg, overrides):
    out = {}
    if cfg.data is not None:
        if overrides:
            raise ValidationError("--set", "overrides only apply to synthetic data")
        path = Path(cfg.data)
        if not path.is_file():
            raise ValidationError("data", f"file not found: {cfg.data}")
        data = CycleDataset.from_csv(path.read_text(encoding="utf-8"))
    else:
        conf = synth_config(overrides)
        try:
            data = synthesize_cycles(np.asarray(conf["k_true"], dtype=float), conf["hysteresis"],
                                     conf["noise_sigma"], conf["n_cycles"], conf["amplitude"],
                                     cfg.seed, conf["samples_per_quarter"])
        except (TypeError, ValueError) as exc:
            raise ValidationError("--set", str(exc)) from None
        out["cycles.csv"] = data.to_csv()
    out["fit.json"] = json_text(_fit_outputs(data))
    return out


def cmd_well(doc, cfg):
    if doc is None:
        raise ValidationError("scenario", "well needs --scenario")
    scenario = parse_document(doc)
    if not isinstance(scenario, GraspScenario):
        raise ValidationError("scenario", "well needs a grasp scenario")
    k = grasp_stiffness(scenario, object_offset=equilibrium_offset(scenario))
    w = energy_well(scenario)
    n = len(scenario.grasp_axes)
    names = "xyz"
    head = [f"dir_{names[a]}" for a in scenario.grasp_axes] + ["break_mm", "escape_work_Nmm", "capped"]
    rows = [tuple(d) + (b, e, int(c)) for d, b, e, c in
            zip(w.directions, w.break_displacement, w.escape_work, w.capped)]
    well = {
        "pose_mm": w.pose, "hessian": w.hessian, "fd_hessian": w.fd_hessian,
        "hessian_error": w.hessian_error, "min_escape_work_Nmm": w.min_escape_work,
        "axes": [names[a] for a in scenario.grasp_axes], "units": "N/mm", "dimension": n,
    }
    return {"stiffness.json": json_text(k.to_dict()), "well.json": json_text(well), "well.csv": csv_text(head, rows)}


# -- repro suite ----------------------------------------------------------------

def _repro_task(name, seed):
    """One output of the reproduction suite; module level so it can be pickled."""
    from .scenario import bundled_scenario

    if name == "fig11.csv":
        return _curve_outputs(bundled_scenario("power_65mm"))[0]
    if name == "fig17.csv":
        return _curve_outputs(bundled_scenario("pinch_65mm"))[0]
    if name == "fig13.csv":
        params = FingerParams.preset("center_60mm")
        return _field_outputs(params, FingerState.at_rest(params))[0]
    if name == "fig14.csv":
        return _alignment_outputs(FingerParams())[0]
    if name == "eq5_fit.json":
        conf = SYNTH_DEFAULTS
        data = synthesize_cycles(np.asarray(conf["k_true"]), conf["hysteresis"], conf["noise_sigma"],
                                 conf["n_cycles"], conf["amplitude"], seed, conf["samples_per_quarter"])
        return json_text({**_fit_outputs(data), "planted": PLANAR_K, "seed": seed})
    if name == "eq6_report.json":
        return json_text({**conditioning_report(np.array(SPATIAL_K)).to_dict(), "matrix": SPATIAL_K})
    raise ValueError(name)


REPRO_OUTPUTS = ("fig11.csv", "fig13.csv", "fig14.csv", "fig17.csv", "eq5_fit.json", "eq6_report.json")


def cmd_repro(doc, cfg):
    if doc is not None:
        raise ValidationError("scenario", "repro uses the bundled scenarios; drop --scenario")
    if cfg.jobs > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            texts = list(pool.map(_repro_task, REPRO_OUTPUTS, [cfg.seed] * len(REPRO_OUTPUTS)))
    else:
        texts = [_repro_task(n, cfg.seed) for n in REPRO_OUTPUTS]
    return dict(zip(REPRO_OUTPUTS, texts))


def _run_one(cfg, doc, overrides):
    if doc is not None:
        for key, value in overrides.items():
            doc = apply_override(doc, key, value)
    if cfg.command == "fit":
        return cmd_fit(doc, cfg, overrides)
    if overrides and doc is None:
        raise ValidationError("--set", "overrides need a --scenario")
    return {
        "simulate": cmd_simulate,
        "compliance-field": cmd_compliance_field,
        "alignment": cmd_alignment,
        "well": cmd_well,
        "repro": cmd_repro,
    }[cfg.command](doc, cfg)


def _sweep_task(args):
    cfg, doc, overrides = args
    return _run_one(cfg, doc, overrides)


def run(cfg):
    """Execute ``cfg`` and write outputs; returns the manifest dict.

    Overrides with several ``|``-separated values expand to one run per
    combination, written to ``run_000``, ``run_001``, ... under ``cfg.out``.
    """
    doc = read_scenario_document(cfg.scenario) if cfg.scenario else None
    combos = expand_overrides(cfg.overrides)
    files = {}
    if len(combos) == 1:
        files.update(_run_one(cfg, doc, combos[0]))
    else:
        args = [(cfg, doc, c) for c in combos]
        if cfg.jobs > 1 and cfg.command != "repro":
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(_sweep_task, args))
        else:
            results = [_sweep_task(a) for a in args]
        for i, res in enumerate(results):
            for name, text in res.items():
                files[f"run_{i:03d}/{name}"] = text
        files["sweep.json"] = json_text([{"run": f"run_{i:03d}", "overrides": c} for i, c in enumerate(combos)])

    cfg.out.mkdir(parents=True, exist_ok=True)
    entries = []
    for name in sorted(files):
        data = files[name].encode("utf-8")
        path = cfg.out / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
        entries.append({"path": name, "sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)})
    manifest = {"command": cfg.command, "seed": cfg.seed, "scenario": cfg.scenario,
                "overrides": list(cfg.overrides), "version": __version__, "files": entries}
    (cfg.out / "manifest.json").write_text(json_text(manifest), encoding="utf-8")
    return manifest


# -- entry point ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ParseError(message)


def build_parser():
    p = _Parser(prog="tendonfinger", description="Quasi-static tendon-driven finger analysis.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "force-excursion curve of a grasp, or one finger equilibrium",
        "compliance-field": "compliance ellipses along the distal link and the center of compliance",
        "alignment": "angle between fingertip motion and principal compliance over full closing",
        "fit": "symmetric stiffness fit of cyclic data (synthesized when --data is absent)",
        "well": "grasp stiffness and energy-well escape work",
        "repro": "reproduction suite of figure and matrix data",
    }
    for name in COMMANDS:
        s = sub.add_parser(name, help=helps[name])
        s.add_argument("--scenario", help="scenario JSON path or bundled:<name>")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                       help="override a scenario field; KEY=v1|v2 sweeps")
        s.add_argument("--seed", type=int, default=0)
        s.add_argument("--jobs", type=int, default=1)
        if name == "fit":
            s.add_argument("--data", help="cycle CSV to fit")
    return p


def _exit_code(exc):
    for cls, code in _EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return None


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = RunConfig(args.command, args.out, args.scenario, tuple(args.overrides), args.seed,
                        args.jobs, getattr(args, "data", None))
        run(cfg)
    except Exception as exc:  # noqa: BLE001 - mapped to exit codes below
        code = _exit_code(exc)
        if code is None:
            raise
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        if isinstance(exc, ValidationError):
            err["field"] = exc.field
        if isinstance(exc, NonConvergence) and exc.sample_index is not None:
            err["sample_index"] = exc.sample_index
        sys.stderr.write(json.dumps(err) + "\n")
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
