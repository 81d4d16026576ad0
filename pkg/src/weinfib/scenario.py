"""Scenario files and the pipeline steps the command line runs.

A scenario is a flat UTF-8 ``key = value`` file with dotted sections::

    schema_version = 1
    seed = 7
    model.name = cylinder
    model.c_amplitude = 0.5
    pipeline = liouville, polarize, weinstein-build, weinstein-verify, classify
    weinstein-verify.n_probe = 20
    classify.form = const

Lines starting with ``#`` are comments.  Values are parsed as booleans
(``true``/``false``), integers, floats, comma separated lists of those, or
plain strings.
"""
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import fibration_space as fs
from . import fibred_hodge as fh
from . import models, poincare, polarization, tables, weinstein
from .errors import ConfigurationError, WeinfibError
from .fibred_forms import FibreComplex, CochainForm, discretize, torus_points

SCHEMA_VERSION = 1
REPORT_SCHEMA_VERSION = 1
log = logging.getLogger("weinfib")

STEPS = ("liouville", "polarize", "hodge", "weinstein-build", "weinstein-verify", "classify",
         "lagrangianize", "graph", "classify-fibration", "psi")
MODEL_KEYS = {"name", "c_amplitude", "kappa", "base_samples", "r_max", "fibre_shape", "n_patches",
              "periodic_momenta"}
TOP_KEYS = {"schema_version", "seed", "pipeline", "subbundle"}
_KEY = re.compile(r"^[A-Za-z0-9_\-]+(\.[A-Za-z0-9_\-]+)*$")


class ScenarioParseError(WeinfibError, ValueError):
    """Malformed or inconsistent scenario file (exit code 2)."""


class ModelBuildError(WeinfibError, ValueError):
    """The scenario's model could not be built or failed its checks (exit code 3)."""


def _scalar(text):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def coerce(text):
    text = text.strip()
    if "," in text:
        return [_scalar(t.strip()) for t in text.split(",") if t.strip()]
    return _scalar(text)


@dataclass
class Scenario:
    schema_version: int
    model: dict
    pipeline: list
    params: dict
    seed: object = None
    subbundle: str = "zero"
    source: str = ""

    def step_params(self, step):
        return dict(self.params.get(step, {}))


def parse_scenario(text, source="<string>"):
    """Parse scenario text.

    Raises:
        ScenarioParseError: syntax errors, unknown sections or steps, bad
            schema version or non-positive tolerances.
    """
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ScenarioParseError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not _KEY.match(key):
            raise ScenarioParseError(f"{source}:{lineno}: invalid key {key!r}")
        if key in raw:
            raise ScenarioParseError(f"{source}:{lineno}: duplicate key {key!r}")
        raw[key] = value
    if "schema_version" not in raw:
        raise ScenarioParseError("missing schema_version")
    if coerce(raw["schema_version"]) != SCHEMA_VERSION:
        raise ScenarioParseError(f"unsupported schema_version {raw['schema_version']!r}")
    pipeline = [s.strip() for s in raw.get("pipeline", "").split(",") if s.strip()]
    for s in pipeline:
        if s not in STEPS:
            raise ScenarioParseError(f"unknown step {s!r}; known steps: {', '.join(STEPS)}")
    model, params = {}, {}
    for key, value in raw.items():
        if key in TOP_KEYS:
            continue
        section, _, rest = key.partition(".")
        if not rest:
            raise ScenarioParseError(f"unknown top-level key {key!r}")
        if section == "model":
            if rest not in MODEL_KEYS:
                raise ScenarioParseError(f"unknown model parameter {rest!r}")
            model[rest] = coerce(value) if rest != "name" else value
        elif section in STEPS:
            val = coerce(value)
            if rest == "tol" and (not isinstance(val, (int, float)) or isinstance(val, bool) or val <= 0):
                raise ScenarioParseError(f"tolerance {key} must be a positive number")
            params.setdefault(section, {})[rest] = val
        else:
            raise ScenarioParseError(f"unknown section {section!r} in key {key!r}")
    if pipeline and "name" not in model:
        raise ScenarioParseError("model.name is required for a non-empty pipeline")
    seed = coerce(raw["seed"]) if "seed" in raw else None
    if seed is not None and (not isinstance(seed, int) or isinstance(seed, bool) or seed < 0):
        raise ScenarioParseError("seed must be a non-negative integer")
    return Scenario(SCHEMA_VERSION, model, pipeline, params, seed, raw.get("subbundle", "zero"), source)


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ScenarioParseError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(text, str(path))


def build_scenario_model(spec):
    """Build and check the model described by a ``model.*`` section."""
    params = {k: v for k, v in spec.items() if k != "name"}
    if "fibre_shape" in params:
        params["fibre_shape"] = tuple(np.atleast_1d(params["fibre_shape"]).tolist())
    try:
        model = models.build_model(spec["name"], **params)
        model.check()
    except (TypeError, WeinfibError) as exc:
        raise ModelBuildError(f"model build failed: {exc}") from exc
    return model


def subbundle_form(name, n):
    if name == "zero":
        return models.FieldForm.zeros(1, n)
    return models.named_form(name, n)


# ---------------------------------------------------------------- run context


@dataclass
class Context:
    scenario: Scenario
    out: Path
    seed: object = None
    model: object = None
    L: object = None
    lam: object = None
    liouville: object = None
    chart: object = None
    tables: list = field(default_factory=list)

    def rng(self, salt=0):
        # unseeded runs use seed 0, so reports are deterministic either way
        base = 0 if self.seed is None else int(self.seed)
        return np.random.default_rng([base, salt])

    def ensure_model(self):
        if self.model is None:
            self.model = build_scenario_model(self.scenario.model)
            self.L = self.model.graph(subbundle_form(self.scenario.subbundle, self.model.n))
        return self.model

    def ensure_liouville(self):
        if self.lam is None:
            self.ensure_model()
            self.lam = poincare.liouville_from_symplectic(self.model, self.L)
            self.liouville = polarization.liouville_field(self.model, self.lam)
        return self.lam

    def table(self, name, writer, *args):
        path = self.out / "tables" / f"{name}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        writer(path, *args)
        self.tables.append(str(path.relative_to(self.out)))
        return path


def step_liouville(ctx, p):
    lam = ctx.ensure_liouville()
    m, L = ctx.model, ctx.L
    tol = p.get("tol", 1e-6)
    rep = poincare.liouville_report(m, L, lam, p.get("per_axis", 6))
    res = dict(rep)
    pts, _ = poincare.tubular_points(m, L, 4)
    Y = ctx.liouville
    res["field_solve"] = max(Y.residual(b, pts) for b in m.base.samples)
    if m.name == "cylinder" and not m.kappa and ctx.scenario.subbundle == "zero":
        res["oracle_deviation"] = max(float(np.max(np.abs(lam(b, pts)[:, 0] + m.c(b) * pts[:, 1])))
                                      for b in m.base.samples)
    if p.get("table", False):
        ctx.table("liouville", tables.write_table, lam, m.base.samples, pts)
    passed = res["closedness_defect"] <= tol and res["vanishing_on_L"] <= 1e-10
    return passed, res, {}


def step_polarize(ctx, p):
    ctx.ensure_liouville()
    m, L, Y = ctx.model, ctx.L, ctx.liouville
    q = torus_points(m.n, p.get("per_axis", 8))
    tol = p.get("tol", 1e-4)
    res = {"field_solve": 0.0, "eigen": {}, "conformal": 0.0, "leaf": {}, "leaf_vs_E1": 0.0}
    for b in m.base.samples:
        x = L.point(b, q)
        res["field_solve"] = max(res["field_solve"], Y.residual(b, x))
        summary = polarization.split_summary(splits := polarization.jacobian_split(Y, b, x, L, q))
        for k, v in summary.items():
            res["eigen"][k] = max(res["eigen"].get(k, 0.0), v)
        res["leaf_vs_E1"] = max(res["leaf_vs_E1"], polarization.leaf_vs_E1(m.polarisation(), splits, b))
    b0 = m.base.samples[0]
    pts, _ = poincare.tubular_points(m, L, 3, shrink=0.5, b=b0)
    conf = polarization.conformal_check(m, Y, b0, pts, p.get("t_max", 1.0), p.get("h", 1e-3))
    res["conformal"] = conf["residual"]
    res["conformal_table"] = conf["table"]
    leaf = polarization.transverse_leaf(m, m.polarisation(), ctx.lam, Y, b0, L.point(b0, q[:4]), check=False)
    res["leaf"] = leaf.residuals
    passed = (res["field_solve"] <= 1e-9 and res["eigen"]["eigenvalue_deviation"] <= 1e-6
              and res["eigen"]["E1_isotropy"] <= 1e-8 and res["conformal"] <= tol
              and max(leaf.residuals.values()) <= 1e-6)
    return passed, res, {}


def step_hodge(ctx, p):
    m = ctx.ensure_model()
    shape = tuple(np.atleast_1d(p.get("shape", [64, 64])).tolist())
    k = int(p.get("degree", 1))
    tol = p.get("tol", 1e-8)
    C = FibreComplex(shape)
    D = fh.build_delta(C, m.base, degrees=[k] if k < C.dim else [k - 1])
    rng = ctx.rng(1)
    worst = {"sup_residual_d_delta_d": 0.0, "idempotence_residual": 0.0}
    per = []
    for _ in range(int(p.get("n_random", 3))):
        alpha = CochainForm(k, C, m.base, rng.standard_normal((m.base.size, C.n_cells(k))))
        rep = fh.decomposition_report(D, alpha)
        per.append(rep)
        for key in worst:
            worst[key] = max(worst[key], rep.get(key, 0.0))
    passed = all(v <= tol for v in worst.values())
    return passed, {"degree": k, "shape": list(shape), **worst, "per_input": per}, {}


def _chart_manifest(ctx, chart):
    man = chart.manifest()
    man["model_params"] = ctx.scenario.model
    man["subbundle"] = ctx.scenario.subbundle
    return man


def load_chart(path):
    """Rebuild a chart from its JSON manifest."""
    man = json.loads(Path(path).read_text(encoding="utf-8"))
    model = build_scenario_model(man["model_params"])
    L = model.graph(subbundle_form(man["subbundle"], model.n))
    lam = poincare.liouville_from_symplectic(model, L)
    return weinstein.build_chart(model, L, lam, model.polarisation(), h=man["h"])


def step_weinstein_build(ctx, p):
    ctx.ensure_liouville()
    m = ctx.model
    ctx.chart = weinstein.build_chart(m, ctx.L, ctx.lam, m.polarisation(), h=p.get("h", 1e-3))
    q = torus_points(m.n, 8)
    zero = max(float(np.max(np.abs(ctx.L.offset(b, ctx.chart.forward(b, q, np.zeros_like(q))))))
               for b in m.base.samples)
    path = ctx.out / "chart.json"
    path.write_text(json.dumps(_chart_manifest(ctx, ctx.chart), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    res = {"zero_section_defect": zero, "radius": ctx.chart.radius, "steps": ctx.chart.steps,
           "commutation_defect": ctx.chart.diagnostics.get("commutation_defect", 0.0)}
    return zero <= 1e-9, res, {"manifest": "chart.json"}


def step_weinstein_verify(ctx, p):
    if "manifest" in p:
        ctx.chart = load_chart(p["manifest"])
    if ctx.chart is None:
        step_weinstein_build(ctx, ctx.scenario.step_params("weinstein-build"))
    chart = ctx.chart
    tol = p.get("tol", 1e-5)
    n_probe = int(p.get("n_probe", 100))
    per = []
    for i, b in enumerate(chart.model.base.samples):
        seed = int(ctx.rng(100 + i).integers(2 ** 32))
        per.append(weinstein.verify_symplectic(chart, b, n_probe, p.get("h_fd", 1e-4), seed))
    res = {"symplectic_defect": max(r["symplectic_defect"] for r in per),
           "zero_section_defect": max(r["zero_section_defect"] for r in per), "per_sample": per}
    return res["symplectic_defect"] <= tol and res["zero_section_defect"] <= 1e-9, res, {}


def step_classify(ctx, p):
    m = ctx.ensure_model()
    dim = int(p.get("dim", m.n))
    alpha = subbundle_form(p.get("form", "zero"), dim)
    tol = p.get("tol", 1e-6)
    backend = p.get("backend", "field")
    if backend == "cochain":
        shape = tuple(np.atleast_1d(p.get("shape", [64] * dim)).tolist())
        alpha = discretize(alpha, FibreComplex(shape), m.base, "sample")
        verdict = weinstein.is_lagrangian(alpha, tol)
    else:
        verdict = weinstein.is_lagrangian(alpha, tol, m.base.samples)
    expect = bool(p.get("expect", True))
    res = {"form": p.get("form", "zero"), "backend": backend, "defect": verdict.defect}
    return verdict.lagrangian == expect, res, {"lagrangian": verdict.lagrangian, "expected": expect}


def step_lagrangianize(ctx, p):
    m = ctx.ensure_model()
    shape = tuple(np.atleast_1d(p.get("shape", [64, 64])).tolist())
    C = FibreComplex(shape)
    D = fh.build_delta(C, m.base, degrees=[1])
    alpha = discretize(subbundle_form(p.get("form", "mixed"), C.dim), C, m.base, "integrate")
    before = weinstein.is_lagrangian(alpha).defect
    closed = weinstein.lagrangianize(D, alpha, p.get("tol", 1e-6))
    after = weinstein.is_lagrangian(closed).defect
    res = {"defect_before": before, "defect_after": after, "removed": (alpha - closed).sup_norm()}
    if "target" in p:
        target = discretize(subbundle_form(p["target"], C.dim), C, m.base, "integrate")
        res["target_error"] = (closed - target).sup_norm()
    if p.get("table", False):
        ctx.table("lagrangianize", tables.write_table, closed)
    passed = after <= p.get("tol", 1e-6) and res.get("target_error", 0.0) <= p.get("tol", 1e-6)
    return passed, res, {"lagrangian": after <= p.get("tol", 1e-6)}


SURFACE_MAPS = {
    "theta": lambda x: x[:, :1],
    "theta_half_sin": lambda x: x[:, :1] + 0.5 * np.sin(x[:, :1]),
    "theta_sin": lambda x: x[:, :1] + np.sin(x[:, :1]),
}
T4_AXES = {"theta1": 0, "theta2": 1, "r1": 2, "r2": 3}


def step_graph(ctx, p):
    name = p.get("map", "theta")
    if name not in SURFACE_MAPS:
        raise ConfigurationError(f"unknown map {name!r}; choose from {sorted(SURFACE_MAPS)}")
    g = fs.graph_of(fs.FibrationMap(SURFACE_MAPS[name], 2, 1, name=name), per_axis=int(p.get("per_axis", 32)))
    expect = bool(p.get("expect", True))
    return g.is_subbundle == expect, g.as_dict(), {"subbundle": g.is_subbundle, "expected": expect}


def step_classify_fibration(ctx, p):
    m = ctx.ensure_model()
    names = p.get("map", ["theta1", "theta2"])
    names = [names] if isinstance(names, str) else names
    try:
        axes = [T4_AXES[s] for s in names]
    except KeyError as exc:
        raise ConfigurationError(f"unknown coordinate {exc.args[0]!r}; use {sorted(T4_AXES)}") from None
    if m.dim != 4:
        raise ConfigurationError("classify-fibration needs a model with 4-dimensional fibres")
    pi = fs.projection_map(axes, 4, name=",".join(names))
    direct = fs.lagrangian_fibration_test(lambda x: m.omega_matrix(m.base.samples[0], x), pi)
    via_chart = fs.weinstein_fibre_verdict(pi)
    expect = bool(p.get("expect", True))
    res = {"map": pi.name, "direct": direct.as_dict(), "weinstein": via_chart.as_dict()}
    agree = direct.lagrangian == via_chart.lagrangian
    return agree and direct.lagrangian == expect, res, {"lagrangian": direct.lagrangian, "agree": agree,
                                                        "expected": expect}


def step_psi(ctx, p):
    amp = float(p.get("amplitude", 0.1))
    nodes = int(p.get("nodes", 256))
    tol = p.get("tol", 1e-6)
    bf = fs.BiFibration.torus(nodes)
    alpha = bf.section(0, lambda x: np.stack([x, x + amp * np.sin(x)], axis=-1))
    rep = fs.psi_reparametrize(alpha)
    res = {**rep.as_dict(), "roundtrip": fs.roundtrip_residual(alpha), "amplitude": amp, "nodes": nodes}
    if p.get("table", False):
        ctx.table("psi", tables.write_vectors, rep.section(bf.nodes)[None])
    return res["roundtrip"] <= tol and rep.section_defect <= 1e-8, res, {}


RUNNERS = {
    "liouville": step_liouville, "polarize": step_polarize, "hodge": step_hodge,
    "weinstein-build": step_weinstein_build, "weinstein-verify": step_weinstein_verify,
    "classify": step_classify, "lagrangianize": step_lagrangianize, "graph": step_graph,
    "classify-fibration": step_classify_fibration, "psi": step_psi,
}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else str(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def run_pipeline(scenario, out, steps=None, seed=None):
    """Run ``steps`` (default: the scenario pipeline) and write the reports.

    Returns:
        ``(exit_code, report)`` with exit code 0 (all steps passed), 1 (a step
        failed) or 3 (model build failure).
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ctx = Context(scenario, out, scenario.seed if seed is None else seed)
    steps = scenario.pipeline if steps is None else steps
    reports, failed = [], []
    code = 0
    if steps:
        try:
            ctx.ensure_model()
        except ModelBuildError as exc:
            log.error("%s", exc)
            report = {"schema_version": REPORT_SCHEMA_VERSION, "exit_code": 3, "error": str(exc), "steps": []}
            _write_json(out / "report.json", report)
            return 3, report
    for i, name in enumerate(steps):
        log.info("step %d: %s", i, name)
        t0 = time.perf_counter()
        try:
            passed, residuals, verdicts = RUNNERS[name](ctx, scenario.step_params(name))
            error = None
        except WeinfibError as exc:
            passed, residuals, verdicts, error = False, {}, {}, f"{type(exc).__name__}: {exc}"
        rep = {"step": name, "index": i, "passed": bool(passed), "residuals": residuals, "verdicts": verdicts,
               "wall_time_ms": round((time.perf_counter() - t0) * 1000, 3)}
        if error:
            rep["error"] = error
        rep = _jsonable(rep)
        _write_json(out / "steps" / f"{i:02d}-{name}.json", rep)
        reports.append(rep)
        if not passed:
            failed.append(name)
            log.warning("step %s failed%s", name, f": {error}" if error else "")
    code = 1 if failed else 0
    report = {"schema_version": REPORT_SCHEMA_VERSION, "scenario": scenario.source, "seed": ctx.seed,
              "exit_code": code, "failed_steps": failed, "tables": ctx.tables, "steps": reports}
    _write_json(out / "report.json", report)
    return code, report


def _write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
