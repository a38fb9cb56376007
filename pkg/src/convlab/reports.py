"""Analysis orchestration and machine-readable reports.

``run_analyze`` drives the per-point estimators over a declarative
config and emits a schema-validated JSON document (plus optional CSV
plot data).  ``run_check_theorems`` runs a self-contained consistency
suite of the library's headline claims on the built-in models.

Reports are deterministic given (config, seed): repeated runs produce
canonically identical documents once the volatile fields (timestamp,
wall time) are stripped by ``canonical_json``.
"""

from __future__ import annotations

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import resources

import numpy as np

from .convexity import Budget, ball_convexity_check, radii_estimate
from .errors import (BadParams, ConfigError, NoConvergence, NonFiniteState,
                     OracleMismatch, UnknownModel)
from .jacobi import (conjugate_radius, scc_breakdown_radius,
                     wronskian_defect)
from .models import get_model
from .polar import canonical_base, direction_set
from .theorems import berger_check, classify_cut_point, condition_check

TOOL_VERSION = "0.1.0"
SCHEMA_VERSION = 1

_NUMERICAL_ERRORS = (NoConvergence, OracleMismatch, NonFiniteState)


def thread_cap(n_tasks):
    """Worker count for per-point pools; CONVLAB_THREADS caps it."""
    env = os.environ.get("CONVLAB_THREADS")
    if env:
        try:
            cap = max(1, int(env))
        except ValueError:
            raise ConfigError(f"CONVLAB_THREADS must be an integer, "
                              f"got {env!r}")
    else:
        cap = min(4, os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


# ---------------------------------------------------------------------------
# configuration


@dataclass
class AnalysisConfig:
    """Validated analysis request (see the JSON schema for the file
    format)."""

    model: str
    params: dict
    points: list                  # list of float lists, all in-domain
    bound: float = 10.0
    seed: int = 0
    budget: Budget = field(default_factory=Budget)
    conditions: list = field(default_factory=lambda: ["B"])
    ball_radii: list = field(default_factory=list)
    cut_directions: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, cfg):
        if not isinstance(cfg, dict):
            raise ConfigError("config must be a JSON object")
        model = cfg.get("model")
        if isinstance(model, str):
            name, params = model, dict(cfg.get("params") or {})
        elif isinstance(model, dict) and isinstance(model.get("name"), str):
            name, params = model["name"], dict(model.get("params") or {})
        else:
            raise ConfigError("config requires a 'model' name")
        try:
            record = get_model(name, params)
        except (UnknownModel, BadParams) as exc:
            raise ConfigError(str(exc)) from exc

        bound = float(cfg.get("bound", 10.0))
        if not bound > 0:
            raise ConfigError("bound must be positive")
        seed = int(cfg.get("seed", 0))
        points = _resolve_points(cfg.get("points"), record, seed)
        for q in points:
            if len(q) != record.chart.dimension:
                raise ConfigError(f"point {q} has wrong dimension")
            if not bool(record.chart.contains(
                    record.chart.wrap(np.asarray(q, dtype=float)))):
                raise ConfigError(f"point {q} outside the chart domain")

        budgets = cfg.get("budgets") or {}
        if not isinstance(budgets, dict):
            raise ConfigError("budgets must be an object")
        known = {"n_dirs", "n_pairs", "n_starts"}
        bad = set(budgets) - known
        if bad:
            raise ConfigError(f"unknown budget keys: {sorted(bad)}")
        budget = Budget(**{k: int(v) for k, v in budgets.items()})

        conditions = cfg.get("conditions", ["B"])
        if (not isinstance(conditions, list)
                or any(c not in ("A", "B") for c in conditions)):
            raise ConfigError("conditions must be a list drawn from "
                              "['A', 'B']")
        ball_radii = [float(r) for r in cfg.get("ball_radii", [])]
        if any(r <= 0 for r in ball_radii):
            raise ConfigError("ball_radii must be positive")
        cut_dirs = [list(map(float, v))
                    for v in cfg.get("cut_directions", [])]
        for v in cut_dirs:
            if len(v) != record.chart.dimension:
                raise ConfigError(f"cut direction {v} has wrong dimension")

        outputs = cfg.get("outputs", [])
        if not isinstance(outputs, list):
            raise ConfigError("outputs must be a list")
        for out in outputs:
            if (not isinstance(out, dict) or "path" not in out
                    or out.get("format") not in ("json", "csv")):
                raise ConfigError(
                    "each output needs 'path' and 'format' json|csv")

        return cls(model=name, params=params, points=points, bound=bound,
                   seed=seed, budget=budget, conditions=list(conditions),
                   ball_radii=ball_radii, cut_directions=cut_dirs,
                   outputs=list(outputs), raw=dict(cfg))

    def record(self):
        return get_model(self.model, self.params)

    def echo(self):
        """Config as echoed into the report (fully resolved)."""
        return {
            "model": {"name": self.model, "params": self.params},
            "points": self.points,
            "bound": self.bound,
            "seed": self.seed,
            "budgets": {"n_dirs": self.budget.n_dirs,
                        "n_pairs": self.budget.n_pairs,
                        "n_starts": self.budget.n_starts},
            "conditions": self.conditions,
            "ball_radii": self.ball_radii,
            "cut_directions": self.cut_directions,
        }


def _resolve_points(spec, record, seed):
    n = record.chart.dimension
    if isinstance(spec, list) and spec:
        return [list(map(float, q)) for q in spec]
    if isinstance(spec, dict) and "grid" in spec:
        axes = spec["grid"]
        if not (isinstance(axes, list) and len(axes) == n
                and all(len(a) == 3 for a in axes)):
            raise ConfigError(
                f"grid must list {n} axes as [lo, hi, count]")
        coords = [np.linspace(float(a[0]), float(a[1]), int(a[2]))
                  for a in axes]
        mesh = np.meshgrid(*coords, indexing="ij")
        return [list(map(float, q)) for q in
                np.stack(mesh, axis=-1).reshape(-1, n)]
    if isinstance(spec, dict) and "sample" in spec:
        k = int(spec["sample"])
        if k <= 0:
            raise ConfigError("sample count must be positive")
        rng = np.random.default_rng(seed)
        return [list(map(float, q)) for q in record.sample_points(rng, k)]
    raise ConfigError("points must be a nonempty list, a grid spec, "
                      "or {'sample': k}")


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: "
                          f"{exc}") from exc
    return AnalysisConfig.from_dict(cfg)


# ---------------------------------------------------------------------------
# analyze


def _retry_numerics(fn, seed):
    """One retry with a shifted seed before a numerical error escapes."""
    try:
        return fn(seed)
    except _NUMERICAL_ERRORS:
        return fn(seed + 1009)


def _analyze_point(config, record, q):
    chart = record.chart
    p = np.asarray(q, dtype=float)
    b = config.budget

    est = _retry_numerics(
        lambda s: radii_estimate(chart, p, bound=config.bound, budget=b,
                                 seed=s), config.seed)
    entry = {"point": q, "radii": est.as_dict()}
    entry["lattice"] = [
        {"relation": label, "lhs": _j(lhs), "rhs": _j(rhs),
         "tau": tau, "ok": ok}
        for label, lhs, rhs, tau, ok in est.lattice_relations()]
    entry["conditions"] = [
        _retry_numerics(
            lambda s, c=c: condition_check(
                chart, p, c, bound=config.bound, budget=b, seed=s,
                est=est).as_dict(),
            config.seed)
        for c in config.conditions]
    entry["balls"] = [
        _retry_numerics(
            lambda s, r=r: ball_convexity_check(
                chart, p, r, n_pairs=b.n_pairs, seed=s,
                budget=b).as_dict(),
            config.seed)
        for r in config.ball_radii]
    entry["cut_points"] = [
        _retry_numerics(
            lambda s, v=v: classify_cut_point(
                chart, p, np.asarray(v), bound=config.bound, budget=b,
                seed=s).as_dict(),
            config.seed)
        for v in config.cut_directions]
    return entry, est


def _j(x):
    """JSON-safe scalar: infinities become None."""
    x = float(x)
    return x if np.isfinite(x) else None


def run_analyze(config: AnalysisConfig):
    """Full per-point analysis; returns the report document (a dict)
    and writes any configured outputs."""
    t0 = time.monotonic()
    record = config.record()
    entries = [None] * len(config.points)
    estimates = [None] * len(config.points)

    def work(i):
        entries[i], estimates[i] = _analyze_point(config, record,
                                                  config.points[i])

    workers = thread_cap(len(config.points))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, range(len(config.points))))
    else:
        for i in range(len(config.points)):
            work(i)

    berger = berger_check(record.chart, config.points, bound=config.bound,
                          budget=config.budget, seed=config.seed,
                          estimates=estimates).as_dict()

    lattice_ok = all(rel["ok"] for e in entries for rel in e["lattice"])
    summary = {
        "n_points": len(entries),
        "lattice_ok": bool(lattice_ok),
        "partial": sum(1 for e in entries if e["radii"]["partial"]),
        "conditions": {
            c: sorted({cd["status"] for e in entries
                       for cd in e["conditions"] if cd["condition"] == c})
            for c in config.conditions},
        "berger_satisfied": berger["satisfied"],
    }

    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": "convlab",
        "version": TOOL_VERSION,
        "kind": "analyze",
        "config": _jsonable(config.echo()),
        "points": _jsonable(entries),
        "berger": _jsonable(berger),
        "summary": _jsonable(summary),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "wall_time_s": round(time.monotonic() - t0, 3),
    }
    validate_report(doc)
    write_outputs(doc, config.outputs)
    return doc


# ---------------------------------------------------------------------------
# serialization


def canonical_json(doc):
    """Canonical serialization with the volatile fields removed;
    identical configs and seeds yield byte-identical output."""
    body = {k: v for k, v in doc.items()
            if k not in ("timestamp", "wall_time_s")}
    return json.dumps(body, sort_keys=True, separators=(",", ":"),
                      allow_nan=False)


def _radius_csv_cells(rv):
    if "exceeds_bound" in rv:
        return [rv["exceeds_bound"], float("nan")]
    return [rv["value"], rv["half_width"]]


def report_csv(doc):
    """Plot-ready radii table: one row per analyzed point."""
    points = doc.get("points", [])
    if not points:
        return ""
    n = len(points[0]["point"])
    header = [f"x{i + 1}" for i in range(n)]
    for name in ("i", "lc", "slc", "c", "sc"):
        header += [name, f"{name}_halfwidth"]
    rows = [header]
    for e in points:
        row = list(e["point"])
        for name in ("i_g", "lc_g", "slc_g", "c_g", "sc_g"):
            row += _radius_csv_cells(e["radii"][name])
        rows.append(row)
    out = []
    for row in rows:
        out.append(",".join(str(c) for c in row))
    return "\n".join(out) + "\n"


def write_outputs(doc, outputs):
    for out in outputs:
        path, fmt = out["path"], out["format"]
        if fmt == "json":
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2, sort_keys=True)
                fh.write("\n")
        else:
            with open(path, "w", newline="") as fh:
                fh.write(report_csv(doc))


def validate_report(doc):
    """Validate against the shipped JSON schema."""
    import jsonschema
    schema = json.loads(
        resources.files("convlab.schemas").joinpath("report.schema.json")
        .read_text())
    jsonschema.validate(doc, schema)


# ---------------------------------------------------------------------------
# theorem-consistency suite


# per-model knobs: search bound for radius estimation and scan checks.
# the half-plane model gets a lower radii bound: ball checks beyond
# r ~ 3 lose precision as trajectories approach the boundary y -> 0
_SUITE_BOUNDS = {
    "euclidean": (10.0, 10.0),
    "hyperbolic_halfplane": (3.0, 10.0),
    "sphere": (4.0, 10.0),
    "flat_torus": (2.0, 10.0),
    "ellipsoid": (4.0, 10.0),
}
_SUITE_PARAMS = {"ellipsoid": {"a": 1.0, "b": 1.0, "c": 1.3}}

_GT_TOL = 0.02


def _suite_rows_for(name, seed):
    rows = []
    params = _SUITE_PARAMS.get(name, {})
    record = get_model(name, params)
    chart = record.chart
    radii_bound, scan_bound = _SUITE_BOUNDS[name]
    rng = np.random.default_rng(seed)
    pts = record.sample_points(rng, 2)
    b = Budget()

    # Wronskian antisymmetry of the Jacobi flow
    chart0, x0, _ = canonical_base(chart, np.asarray(pts[0]))
    dirs = direction_set(chart0, x0, 4, seed)
    worst = 0.0
    for v in dirs[:2]:
        w = direction_set(chart0, x0, 8, seed + 1)
        worst = max(worst, wronskian_defect(
            chart0, x0, v, w[1], w[3], np.linspace(0.2, 2.0, 7)))
    rows.append({"criterion": "wronskian_symmetry", "model": name,
                 "passed": bool(worst <= 1e-8), "measured": worst,
                 "tolerance": 1e-8})

    # refined per-direction breakdown/conjugate parameters
    gt = record.ground_truth or {}
    slc_ref = [scc_breakdown_radius(chart0, x0, v, scan_bound)
               for v in dirs]
    conj_ref = [conjugate_radius(chart0, x0, v, scan_bound) for v in dirs]
    if name == "sphere":
        ok = (max(abs(r - np.pi / 2) for r in slc_ref) <= 1e-4
              and max(abs(r - np.pi) for r in conj_ref) <= 1e-4)
        measured = {"slc": slc_ref[0], "conj": conj_ref[0]}
    else:
        ok = all(not np.isfinite(r) for r in slc_ref + conj_ref)
        measured = {"all_beyond": scan_bound}
    rows.append({"criterion": "breakdown_vs_conjugate", "model": name,
                 "passed": bool(ok), "measured": _jsonable(measured)})

    # radii vs closed forms (where known) and the radius lattice
    ests = [radii_estimate(chart, q, bound=radii_bound, budget=b,
                           seed=seed) for q in pts]
    lattice_ok = all(rel[-1] for e in ests for rel in e.lattice_relations())
    rows.append({"criterion": "radius_lattice", "model": name,
                 "passed": bool(lattice_ok),
                 "measured": {k: _jsonable(getattr(ests[0], k).as_dict())
                              for k in ("i_g", "lc_g", "slc_g",
                                        "c_g", "sc_g")}})
    if gt:
        ok = True
        for e in ests:
            for key in ("i_g", "lc_g", "slc_g", "c_g", "sc_g"):
                want = gt[key]
                have = getattr(e, key)
                if want is None or not np.isfinite(want):
                    ok &= have.exceeds_bound
                elif want >= radii_bound:
                    ok &= have.exceeds_bound
                else:
                    ok &= (not have.exceeds_bound
                           and abs(have.value - want) <= _GT_TOL)
        rows.append({"criterion": "radii_vs_closed_form", "model": name,
                     "passed": bool(ok), "tolerance": _GT_TOL})

    # half-injectivity inequality on models with finite radii
    bg = berger_check(chart, pts, bound=radii_bound, budget=b, seed=seed,
                      estimates=ests)
    if not (bg.c_M.exceeds_bound and bg.i_M.exceeds_bound):
        rows.append({"criterion": "berger_inequality", "model": name,
                     "passed": bool(bg.satisfied),
                     "measured": _jsonable(bg.as_dict())})

    # condition B: finite convexity radius must be witnessed, infinite
    # (up to the bound) must pass the bounded search
    rep = condition_check(chart, np.asarray(pts[0]), "B",
                          bound=radii_bound, budget=b, seed=seed,
                          est=ests[0])
    expect = ("holds_up_to_bound"
              if name in ("euclidean", "hyperbolic_halfplane")
              else "fails")
    rows.append({"criterion": "condition_B", "model": name,
                 "passed": bool(rep.status == expect),
                 "measured": {"status": rep.status, "expected": expect}})

    # cut point classification along the first chart axis
    if name != "ellipsoid":
        rec = classify_cut_point(chart, np.asarray(pts[0]),
                                 np.eye(chart.dimension)[0],
                                 bound=scan_bound, budget=b, seed=seed)
        if name == "sphere":
            ok = (rec.classification == "ordinary"
                  and abs(rec.t_cut - np.pi) <= 0.02)
        elif name == "flat_torus":
            ok = (rec.classification == "ordinary"
                  and rec.n_segments == 2
                  and abs(rec.t_cut - 0.5) <= 0.01)
        else:
            ok = rec.exceeds_bound
        rows.append({"criterion": "cut_classification", "model": name,
                     "passed": bool(ok),
                     "measured": _jsonable(rec.as_dict())})
    return rows


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return _j(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def run_check_theorems(models=None, seed=0):
    """Consistency suite across the named built-in models."""
    t0 = time.monotonic()
    models = list(models) if models else sorted(_SUITE_BOUNDS)
    for name in models:
        if name not in _SUITE_BOUNDS:
            raise ConfigError(f"unknown model {name!r}; available: "
                              f"{sorted(_SUITE_BOUNDS)}")
    rows = []
    for name in models:
        rows.extend(_suite_rows_for(name, seed))
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": "convlab",
        "version": TOOL_VERSION,
        "kind": "check-theorems",
        "config": {"models": models, "seed": seed},
        "suite": _jsonable(rows),
        "summary": {
            "n_checks": len(rows),
            "passed": sum(1 for r in rows if r["passed"]),
            "failed": sum(1 for r in rows if not r["passed"]),
        },
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "wall_time_s": round(time.monotonic() - t0, 3),
    }
    validate_report(doc)
    return doc


# ---------------------------------------------------------------------------
# cut locus sweep


def run_cutlocus(model, point, params=None, bound=10.0, n_dirs=None,
                 seed=0):
    """Per-direction conjugate and shortcut parameters around a point."""
    from .convexity import injectivity_scan
    record = get_model(model, params or {})
    chart = record.chart
    p = chart.wrap(np.asarray(point, dtype=float))
    if not bool(chart.contains(p)):
        raise ConfigError(f"point {list(point)} outside the chart domain")
    b = Budget(n_dirs=n_dirs) if n_dirs else Budget()
    scan, _, i_val, short = injectivity_scan(chart, p, bound, budget=b,
                                             seed=seed)
    t_cut = np.minimum(scan.conj, short)
    doc = {
        "schema_version": SCHEMA_VERSION,
        "tool": "convlab",
        "version": TOOL_VERSION,
        "kind": "cutlocus",
        "config": {"model": {"name": model, "params": params or {}},
                   "point": [float(v) for v in p], "bound": bound,
                   "seed": seed},
        "directions": [[float(c) for c in v] for v in scan.dirs],
        "conjugate": [_j(v) for v in scan.conj],
        "shortcut": [_j(v) for v in short],
        "t_cut": [_j(min(v, bound)) if np.isfinite(v) else None
                  for v in t_cut],
        "summary": {"injectivity_estimate": _j(min(i_val, bound)),
                    "exceeds_bound": bool(i_val >= bound)},
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "wall_time_s": 0.0,
    }
    validate_report(doc)
    return doc


def cutlocus_csv(doc):
    n = len(doc["directions"][0])
    header = [f"v{i + 1}" for i in range(n)] + ["conjugate", "shortcut",
                                                "t_cut"]
    lines = [",".join(header)]
    for v, c, s, t in zip(doc["directions"], doc["conjugate"],
                          doc["shortcut"], doc["t_cut"]):
        cells = [str(x) for x in v] + [str(x) if x is not None else "inf"
                                       for x in (c, s, t)]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
