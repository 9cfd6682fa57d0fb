"""Batch driver: config file in, JSON deformation report out.

Exit codes: 0 all verdicts pass, 2 config or surface-language error,
3 geometry assumption violated, 4 a verdict or certification failed.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import sys
import time

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import deform_core as dc
from . import geometries as geo
from .surface_dsl import DSLError, ParamGrid, resolve_surface

EXIT_OK, EXIT_CONFIG, EXIT_GEOMETRY, EXIT_VERDICT = 0, 2, 3, 4
REPORT_VERSION = 1

GEOMETRIES = ("projective", "conformal", "lie_sphere_33", "lie_sphere_42")
FORM_SOURCES = ("builtin", "builtin_isothermic", "theta_sampler", "table", "zero")

DEFAULTS = {
    "geometry": None,
    "surface": None,
    "order": 2,
    "seed": 42,
    "form_source": "builtin",
    "form_scale": 1.0,
    "grid": {"u_range": [0.0, 1.0], "v_range": [0.0, 1.0], "nu": 16, "nv": 16,
             "periodic_u": False, "periodic_v": False},
    "form_table": {"du": None, "dv": None},
    "tolerances": {"condition": 1e-7, "closure": 1e-8, "containment": 1e-8,
                   "triviality": 1e-8, "path_defect": 1e-6, "probe_band": 0.15},
    "checks": {"equivalence": True, "gauge": False, "probe_points": 0, "probe_step": 0.02,
               "bridge": False, "third_order_audit": True, "report_timing": False},
    "outputs": {"report": None, "mesh": None},
}


class ConfigError(ValueError):
    pass


class GeometryViolation(ValueError):
    pass


# --------------------------------------------------------------------------
# config


def _merge(base, data, path=""):
    for key, val in data.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be a table")
            _merge(base[key], val, where + ".")
        else:
            base[key] = val


def _parse_value(text):
    try:
        return tomllib.loads(f"x = {text}")["x"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(cfg, item):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not KEY=VALUE")
    key, raw = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = _parse_value(raw.strip())


def _check_type(name, val, types):
    if isinstance(val, bool) and bool not in types:
        raise ConfigError(f"{name} has the wrong type")
    if not isinstance(val, types):
        raise ConfigError(f"{name} has the wrong type")


def validate(cfg):
    if cfg["geometry"] not in GEOMETRIES:
        raise ConfigError(f"geometry must be one of {list(GEOMETRIES)}, got {cfg['geometry']!r}")
    _check_type("surface", cfg["surface"], (str,))
    _check_type("order", cfg["order"], (int,))
    if cfg["order"] not in (1, 2, 3):
        raise ConfigError("order must be 1, 2 or 3")
    _check_type("seed", cfg["seed"], (int,))
    if cfg["form_source"] not in FORM_SOURCES:
        raise ConfigError(f"form_source must be one of {list(FORM_SOURCES)}")
    _check_type("form_scale", cfg["form_scale"], (int, float))
    g = cfg["grid"]
    for key in ("u_range", "v_range"):
        r = g[key]
        if not (isinstance(r, list) and len(r) == 2 and all(isinstance(x, (int, float)) for x in r)):
            raise ConfigError(f"grid.{key} must be a pair of numbers")
    for key in ("nu", "nv"):
        _check_type(f"grid.{key}", g[key], (int,))
        if not 8 <= g[key] <= 64:
            raise ConfigError(f"grid.{key} must lie in [8, 64]")
    for key in ("periodic_u", "periodic_v"):
        _check_type(f"grid.{key}", g[key], (bool,))
    for key, val in cfg["tolerances"].items():
        _check_type(f"tolerances.{key}", val, (int, float))
        if val <= 0:
            raise ConfigError(f"tolerances.{key} must be positive")
    ch = cfg["checks"]
    for key in ("equivalence", "gauge", "bridge", "third_order_audit", "report_timing"):
        _check_type(f"checks.{key}", ch[key], (bool,))
    _check_type("checks.probe_points", ch["probe_points"], (int,))
    _check_type("checks.probe_step", ch["probe_step"], (int, float))
    if cfg["form_source"] == "table":
        for key in ("du", "dv"):
            t = cfg["form_table"][key]
            if not (isinstance(t, list) and t and all(isinstance(row, list) and len(row) == len(t) for row in t)):
                raise ConfigError(f"form_table.{key} must be a square table of expressions")
    for key in ("report", "mesh"):
        if cfg["outputs"][key] is not None:
            _check_type(f"outputs.{key}", cfg["outputs"][key], (str,))
    return cfg


def load_config(path, overrides=()):
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = copy.deepcopy(DEFAULTS)
    _merge(cfg, data)
    for item in overrides:
        apply_override(cfg, item)
    return validate(cfg)


# --------------------------------------------------------------------------
# forms


def _table_form(cfg, ls):
    from .jetcalc import stack
    from .surface_dsl import eval_jet, parse_scalar

    tables = [cfg["form_table"]["du"], cfg["form_table"]["dv"]]
    n = len(tables[0])
    if n != ls.dim or len(tables[1]) != n:
        raise ConfigError(f"form tables must be {ls.dim}x{ls.dim} for {ls.spec.name}")
    nodes = [[[parse_scalar(str(e)) for e in row] for row in t] for t in tables]

    def build(points, degree):
        comps = []
        for t in nodes:
            rows = [stack([eval_jet(e, points, degree) for e in row], axis=-1) for row in t]
            comps.append(stack(rows, axis=-2))
        return stack(comps, axis=1)
    return dc.AlgValuedOneForm(build, n, ls.spec.group_kind, ls.spec.gram, "table", {"source": "table"})


def build_form(cfg, ls, surface_text):
    src = cfg["form_source"]
    name = ls.spec.name
    if src == "zero":
        form = dc.AlgValuedOneForm.zero(ls.dim, ls.spec.group_kind, ls.spec.gram)
    elif src == "table":
        form = _table_form(cfg, ls)
    elif src == "theta_sampler":
        form = ls.random_admissible_form(np.random.default_rng(cfg["seed"]), "theta_sampler")
    else:
        form = _builtin_form(ls, name, surface_text, src)
    scale = float(cfg["form_scale"])
    return form if scale == 1.0 else form.scaled(scale)


def _builtin_form(ls, name, surface_text, src):
    from .contact_bridge import transfer_form

    if name in ("conformal", "lie_sphere_42"):
        conf = ls if name == "conformal" else geo.conformal_lift(ls.expr, ls.grid)
        form = dc.isothermic_form_builder(conf)
        return form if name == "conformal" else geo.embed_conformal_form(form, "isothermic_lifted")
    if src == "builtin_isothermic":
        raise ConfigError(f"builtin_isothermic needs a conformal or lie_sphere_42 geometry, not {name}")
    if str(resolve_surface(surface_text)) != str(resolve_surface("quadric")):
        raise ConfigError(f"no built-in closed form for {surface_text!r} in {name} geometry")
    f1, f2 = geo.quadric_closed_forms()
    form = f1 + f2
    return form if name == "projective" else transfer_form(form)


# --------------------------------------------------------------------------
# run


def _summary(values, points):
    values = np.asarray(values, dtype=float)
    if values.size == 0 or np.all(np.isnan(values)):
        return {"max": None, "mean": None, "argmax_point": None}
    i = int(np.nanargmax(values))
    return {"max": float(np.nanmax(values)), "mean": float(np.nanmean(values)),
            "argmax_point": [float(points[i][0]), float(points[i][1])]}


def run(cfg):
    """Execute one configuration; returns (report dict, exit code)."""
    t0 = time.perf_counter()
    tol = cfg["tolerances"]
    g = cfg["grid"]
    grid = ParamGrid(tuple(g["u_range"]), tuple(g["v_range"]), g["nu"], g["nv"],
                     g["periodic_u"], g["periodic_v"])
    expr = resolve_surface(cfg["surface"])
    ls = geo.lift(cfg["geometry"], expr, grid)
    pts = ls.interior_points()
    report = {"report_version": REPORT_VERSION, "config_echo": cfg, "geometry": ls.spec.name,
              "surface": str(expr), "verdicts": {}, "residuals": {}, "flagged_points": [],
              "messages": [], "timing_ms": None}
    for name, items in ls.flags.items():
        if isinstance(items, list):
            report["flagged_points"].extend({"flag": name, "point": list(p)} for p in items)
    report["lift_checks"] = {k: (float(v) if not isinstance(v, bool) else v) for k, v in ls.checks.items()}
    report["dupin"] = getattr(ls, "dupin", None)
    if report["dupin"]:
        report["messages"].append("surface is a Dupin cyclide: curvature-sphere uniqueness does not apply")

    try:
        form = build_form(cfg, ls, cfg["surface"])
    except dc.CertificationError as exc:
        report["messages"].append(str(exc))
        report["verdicts"]["form_certified"] = "fail"
        return _finish(report, cfg, t0), EXIT_VERDICT
    report["form_provenance"] = form.provenance
    res = report["residuals"]
    verdicts = report["verdicts"]

    def put(name, values):
        res[name] = _summary(values, pts)
        return res[name]["max"] if res[name]["max"] is not None else 0.0

    alg = put("algebra", form.algebra_residual(pts))
    adm = put("containment", ls.admissible_residual(form, pts))
    clo = put("closure", dc.closure_residual(form, pts))
    mc = put("maurer_cartan", dc.maurer_cartan_residual(form, pts))
    res["eta_norm"] = _summary(form.norm(pts), pts)
    verdicts["algebra_valued"] = "pass" if alg < tol["containment"] else "fail"
    verdicts["admissible_values"] = "pass" if adm < tol["containment"] else "fail"
    verdicts["maurer_cartan"] = "pass" if mc < tol["closure"] else "fail"
    if ls.spec.kind == "conformal" and ls.spec.n == 3:
        put("refinement_F_wedge_F1", ls.refinement_residual(form, pts))

    k = cfg["order"]
    cum_inv = np.ones(len(pts), dtype=bool)
    cum_chart = np.ones(len(pts), dtype=bool)
    top_inv = None
    agreement = {}
    for r in range(k):
        inv = dc.invariant_condition_residual(form, ls, pts, r)
        chart, valid = dc.chart_condition_residual(form, ls, pts, r, seed=cfg["seed"])
        put(f"invariant_r{r}", inv)
        put(f"chart_r{r}", np.nanmax(np.where(valid, chart, np.nan), axis=1))
        cum_inv &= inv < tol["condition"]
        cum_chart &= np.all(np.where(valid, chart < tol["condition"], True), axis=1)
        agreement[f"order_{r}"] = float(np.mean(cum_inv == cum_chart))
        verdicts[f"order_{r}"] = "pass" if (cum_inv.all() and cum_chart.all()) else "fail"
        top_inv = inv
    if cfg["checks"]["equivalence"]:
        report["chart_invariant_agreement"] = agreement
    deform_ok = verdicts["maurer_cartan"] == "pass" and all(verdicts[f"order_{r}"] == "pass" for r in range(k))
    verdicts[f"deformation_order_{k}"] = "pass" if deform_ok else "fail"

    nonzero = res["eta_norm"]["max"] is not None and res["eta_norm"]["max"] > 1e-12
    lower_ok = all(verdicts[f"order_{r}"] == "pass" for r in range(k - 1))
    if k == 3 and not deform_ok and lower_ok and nonzero:
        report["messages"].append("rigidity witnessed: the form passes order 2 but fails order 3")

    if verdicts["admissible_values"] == "pass" and verdicts["maurer_cartan"] == "pass":
        try:
            tr = dc.triviality_solve(form, ls, pts, tol=tol["triviality"])
            report["triviality"] = {"trivial": tr.trivial, "method": tr.method, "residual": tr.residual,
                                    "q_norm": tr.q_norm, "cross_check_agrees": tr.cross_check_agrees}
        except ValueError as exc:
            report["triviality"] = {"error": str(exc)}

    if cfg["checks"]["third_order_audit"] and nonzero and k >= 2:
        report["third_order_audit"] = geo.third_order_audit(ls, form, pts, seed=cfg["seed"]).as_dict()

    if cfg["checks"]["gauge"]:
        gm = dc.integrate_gauge(form, grid)
        report["gauge"] = {"path_defect": gm.path_defect, "membership": gm.membership,
                           "reprojections": gm.reprojections}
        verdicts["gauge_path_independent"] = "pass" if gm.path_defect < tol["path_defect"] else "fail"
    n_probe = cfg["checks"]["probe_points"]
    if n_probe > 0:
        idx = np.linspace(0, len(pts) - 1, n_probe + 2).round().astype(int)[1:-1]
        probes = [dc.contact_order_probe(ls, form, pts[i], k, h=cfg["checks"]["probe_step"],
                                         rel_band=tol["probe_band"]) for i in idx]
        report["probes"] = [{"point": list(map(float, p.point)), "ratio": p.ratio, "order_estimate": p.order_estimate,
                             "target": p.target, "certified": p.certified} for p in probes]
        verdicts[f"contact_order_{k}"] = "pass" if all(p.certified for p in probes) else "fail"

    if cfg["checks"]["bridge"]:
        report["bridge"] = _bridge_audit(ls, form, pts)
        verdicts["bridge"] = "pass" if report["bridge"]["ok"] else "fail"

    if cfg["outputs"]["mesh"] and top_inv is not None:
        with open(cfg["outputs"]["mesh"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "v", "value"])
            for (u, v), val in zip(pts, top_inv):
                w.writerow([repr(float(u)), repr(float(v)), repr(float(val))])

    code = EXIT_OK if all(v == "pass" for v in verdicts.values()) else EXIT_VERDICT
    return _finish(report, cfg, t0), code


def _bridge_audit(ls, form, pts):
    from . import contact_bridge as cb

    if ls.spec.kind != "projective_sl4":
        return {"ok": False, "error": "the bridge audit runs on projective surfaces"}
    lie = cb.contact_lift(ls)
    T = cb.transfer_form(form)
    out = {
        "f_rank2_null": lie.checks["f_null"],
        "f1_formula": lie.checks["f1_formula"],
        "transfer_containment": float(np.max(lie.admissible_residual(T, pts))),
        "transfer_closure": float(np.max(dc.closure_residual(T, pts))),
    }
    t_proj = dc.triviality_solve(form, ls, pts).trivial
    t_lie = dc.triviality_solve(T, lie, pts).trivial
    out.update({"trivial_projective": t_proj, "trivial_lie": t_lie})
    out["ok"] = bool(out["f_rank2_null"] < 1e-9 and out["f1_formula"] < 1e-9
                     and out["transfer_containment"] < 1e-8 and t_proj == t_lie)
    return out


def _finish(report, cfg, t0):
    if cfg["checks"]["report_timing"]:
        report["timing_ms"] = round(1000 * (time.perf_counter() - t0), 3)
    return report


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def dumps_report(report):
    return json.dumps(_jsonable(report), indent=2)


def main(argv=None):
    ap = argparse.ArgumentParser(prog="gdeform", description="Check infinitesimal deformations of lifted surfaces.")
    ap.add_argument("--config", required=True, metavar="PATH")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--report", metavar="PATH")
    ap.add_argument("--quiet", action="store_true")
    args = ap.parse_args(argv)

    def say(msg):
        if not args.quiet:
            print(msg, file=sys.stderr)

    try:
        cfg = load_config(args.config, args.override)
        if args.report:
            cfg["outputs"]["report"] = args.report
        report, code = run(cfg)
    except (ConfigError, DSLError) as exc:
        say(f"error: {exc}")
        return EXIT_CONFIG
    except geo.GeometryError as exc:
        say(f"geometry violation: {exc}")
        return EXIT_GEOMETRY
    text = dumps_report(report)
    out = cfg["outputs"]["report"]
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    elif not args.quiet:
        print(text)
    for m in report["messages"]:
        say(m)
    failed = [k for k, v in report["verdicts"].items() if v != "pass"]
    say("all verdicts pass" if not failed else f"failed verdicts: {', '.join(failed)}")
    return code


if __name__ == "__main__":
    sys.exit(main())
