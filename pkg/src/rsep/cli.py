"""Command-line front end: strict INI configuration, checks, and JSON reports.

Exit status: 0 when every verdict passes, 2 on a failing verdict, 3 on an
inconclusive one, 1 on any error (bad configuration, domain error, ...).
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import re
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, families
from .errors import CertificationError, ConfigError, IntegrabilityError, RsepError
from .geometry import DiagonalMetric, Domain, LocalGeometry, check_cotton
from .report import dumps
from .separability import (SamplingPlan, build_r_factor, check_conformal_separability,
                           check_laplace_compatibility, check_pseudo_stackel,
                           modified_potential_parts)
from .verdict import FAIL, INCONCLUSIVE, PASS
from . import verify

EXIT = {PASS: 0, "error": 1, FAIL: 2, INCONCLUSIVE: 3}
SEVERITY = {PASS: 0, "skipped": 0, INCONCLUSIVE: 1, FAIL: 2, "error": 3}
BATTERY = ("separability", "r-factor", "potential", "pseudo-stackel", "laplace", "cotton", "solve")
DEFAULT_CHECKS = ("separability", "r-factor", "potential", "pseudo-stackel", "cotton", "solve")
FAMILIES = ("rsep", "csep", "kalnins", "sphere", "eisenhart", "raw")

ANY = object()
SCHEMA = {
    "metric": {"family", "coords", "g11", "g22", "g33", "h1", "h2", "h3", "Q", "roots", "coeffs",
               "radius", "chart"},
    "params": ANY,
    "domain": {"lower", "upper", "min_separation"},
    "sampling": {"count", "seed", "min_separation"},
    "tolerances": {"pass", "fail", "residual", "cotton", "reconstruction"},
    "checks": {"run"},
    "solve": {"constants", "draws", "points"},
    "curvature": {"point"},
    "chart": {"roots", "grid", "csv"},
    "output": {"report"},
}


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    family: str = "rsep"
    metric: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    lower: tuple | None = None
    upper: tuple | None = None
    min_separation: float = 1e-2
    count: int = 200
    seed: int = 0
    tol_pass: float = 1e-8
    tol_fail: float = 1e-3
    tol_residual: float = 1e-6
    tol_cotton: float = 1e-7
    tol_reconstruction: float = 1e-6
    checks: tuple = DEFAULT_CHECKS
    constants: tuple | None = None
    draws: int = 20
    solve_points: int = 50
    curvature_point: tuple | None = None
    chart_roots: tuple | None = None
    chart_grid: int = 5
    chart_csv: str | None = None
    report: str | None = None
    source: str | None = None

    def plan(self) -> SamplingPlan:
        return SamplingPlan(self.count, self.seed, self.min_separation)

    def echo(self) -> dict:
        return {
            "source": self.source,
            "family": self.family,
            "metric": dict(self.metric),
            "params": dict(self.params),
            "seed": self.seed,
            "points": self.count,
            "min_separation": self.min_separation,
            "tolerances": {"pass": self.tol_pass, "fail": self.tol_fail,
                           "residual": self.tol_residual, "cotton": self.tol_cotton,
                           "reconstruction": self.tol_reconstruction},
        }


def _unquote(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    return text


def _key_lines(text: str) -> dict:
    """(section, key) -> 1-based line number."""
    where, section = {}, None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[([^\]]+)\]", s)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), no)
            continue
        m = re.match(r"([^=:\s#;][^=:]*?)\s*[=:]", s)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip()), no)
    return where


def _floats(text: str, what: str, line, key) -> tuple:
    try:
        return tuple(float(x) for x in _unquote(text).replace(";", ",").split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"{what} must be a comma-separated list of numbers", line, key) from None


def _number(text: str, kind, line, key):
    try:
        return kind(_unquote(text))
    except ValueError:
        raise ConfigError(f"{key} must be a {kind.__name__}", line, key) from None


def parse_config(text: str, source: str | None = None) -> RunConfig:
    """Parse a configuration text strictly; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(strict=True, interpolation=None,
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"duplicate key {exc.option!r} in [{exc.section}]", exc.lineno,
                          exc.option) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"duplicate section [{exc.section}]", exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("key outside any section", exc.lineno) from None
    except configparser.ParsingError as exc:
        line = exc.errors[0][0] if exc.errors else None
        raise ConfigError(f"cannot parse configuration: {exc}", line) from None
    lines = _key_lines(text)
    cfg = RunConfig(source=source)
    for section in parser.sections():
        allowed = SCHEMA.get(section)
        if allowed is None:
            raise ConfigError(f"unknown section [{section}]", lines.get((section, None)))
        for key in parser[section]:
            if allowed is not ANY and key not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]", lines.get((section, key)),
                                  key)
    at = lambda s, k: lines.get((s, k))
    if parser.has_section("metric"):
        sec = parser["metric"]
        cfg.family = _unquote(sec.get("family", "rsep"))
        if cfg.family not in FAMILIES:
            raise ConfigError(f"unknown family {cfg.family!r}; expected one of {FAMILIES}",
                              at("metric", "family"), "family")
        for key, value in sec.items():
            if key == "family":
                continue
            if key in ("roots", "coeffs"):
                cfg.metric[key] = _floats(value, key, at("metric", key), key)
            elif key == "radius":
                cfg.metric[key] = _number(value, float, at("metric", key), key)
            elif key == "coords":
                cfg.metric[key] = tuple(_unquote(c).strip() for c in value.split(","))
            else:
                cfg.metric[key] = _unquote(value)
    if parser.has_section("params"):
        for key, value in parser["params"].items():
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", key):
                raise ConfigError(f"parameter name {key!r} is not an identifier",
                                  at("params", key), key)
            cfg.params[key] = _number(value, float, at("params", key), key)
    if parser.has_section("domain"):
        sec = parser["domain"]
        if "lower" in sec:
            cfg.lower = _floats(sec["lower"], "lower", at("domain", "lower"), "lower")
        if "upper" in sec:
            cfg.upper = _floats(sec["upper"], "upper", at("domain", "upper"), "upper")
        if "min_separation" in sec:
            cfg.min_separation = _number(sec["min_separation"], float,
                                         at("domain", "min_separation"), "min_separation")
        if (cfg.lower is None) != (cfg.upper is None):
            raise ConfigError("[domain] needs both lower and upper", at("domain", None))
    if parser.has_section("sampling"):
        sec = parser["sampling"]
        for key, kind, attr in (("count", int, "count"), ("seed", int, "seed"),
                                ("min_separation", float, "min_separation")):
            if key in sec:
                setattr(cfg, attr, _number(sec[key], kind, at("sampling", key), key))
    if parser.has_section("tolerances"):
        sec = parser["tolerances"]
        for key in sec:
            setattr(cfg, "tol_" + key, _number(sec[key], float, at("tolerances", key), key))
    if parser.has_section("checks") and "run" in parser["checks"]:
        names = [c.strip() for c in _unquote(parser["checks"]["run"]).split(",") if c.strip()]
        if names == ["all"]:
            names = list(BATTERY)
        for c in names:
            if c not in BATTERY:
                raise ConfigError(f"unknown check {c!r}; expected one of {BATTERY}",
                                  at("checks", "run"), "run")
        cfg.checks = tuple(c for c in BATTERY if c in names)
    if parser.has_section("solve"):
        sec = parser["solve"]
        if "constants" in sec:
            cfg.constants = _floats(sec["constants"], "constants", at("solve", "constants"),
                                    "constants")
            if len(cfg.constants) != 5:
                raise ConfigError("constants needs five numbers c1, c2, s1, s2, s3",
                                  at("solve", "constants"), "constants")
        if "draws" in sec:
            cfg.draws = _number(sec["draws"], int, at("solve", "draws"), "draws")
        if "points" in sec:
            cfg.solve_points = _number(sec["points"], int, at("solve", "points"), "points")
    if parser.has_section("curvature") and "point" in parser["curvature"]:
        cfg.curvature_point = _floats(parser["curvature"]["point"], "point",
                                      at("curvature", "point"), "point")
    if parser.has_section("chart"):
        sec = parser["chart"]
        if "roots" in sec:
            cfg.chart_roots = _floats(sec["roots"], "roots", at("chart", "roots"), "roots")
        if "grid" in sec:
            cfg.chart_grid = _number(sec["grid"], int, at("chart", "grid"), "grid")
        if "csv" in sec:
            cfg.chart_csv = _unquote(sec["csv"])
    if parser.has_section("output") and "report" in parser["output"]:
        cfg.report = _unquote(parser["output"]["report"])
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))


# ---------------------------------------------------------------------------
# metric construction


def build_metric(cfg: RunConfig) -> DiagonalMetric:
    md, params = cfg.metric, cfg.params
    box = Domain(cfg.lower, cfg.upper) if cfg.lower is not None else None
    fam = cfg.family
    if fam == "raw":
        coords = md.get("coords", ("q1", "q2", "q3"))
        keys = [f"g{i}{i}" for i in range(1, len(coords) + 1)]
        missing = [k for k in keys if k not in md]
        if missing:
            raise ConfigError(f"raw metric needs {', '.join(keys)}; missing {missing}")
        if box is None:
            raise ConfigError("raw metric needs a [domain] box")
        return DiagonalMetric.from_expressions([md[k] for k in keys], coords, params, box, "raw")
    if fam == "csep":
        return families.make_conformally_separable(md.get("h1", "1"), md.get("h2", "1"),
                                                   md.get("h3", "1"), md.get("Q", "1"), params,
                                                   box)
    if fam == "eisenhart":
        if "coeffs" not in md:
            raise ConfigError("eisenhart needs coeffs")
        return families.eisenhart_metric(md["coeffs"], box)
    roots = md.get("roots")
    if fam in ("kalnins", "sphere") and roots is None:
        roots = (0.0, 1.0, 2.0, 3.0, 4.0)
    if fam == "sphere" and md.get("chart") == "stereographic":
        return families.sphere_chart(md.get("radius", 1.0))
    Q = {"kalnins": "euclidean", "sphere": "sphere"}.get(fam, md.get("Q", "unit"))
    if roots is None and "coeffs" not in md:
        roots = (0.0, 1.0, 2.0, 3.0, 4.0)
    return families.make_rsep(Q=Q, roots=roots, coeffs=md.get("coeffs") if roots is None else None,
                              radius=md.get("radius", 1.0), box=box, params=params)


# ---------------------------------------------------------------------------
# checks


def _entry(name, verdict, residual=None, tol_pass=None, tol_fail=None, samples=None, **extra):
    out = {"name": name, "verdict": verdict}
    if residual is not None:
        out["residual"] = float(residual)
    if tol_pass is not None:
        out["tol_pass"] = tol_pass
    if tol_fail is not None:
        out["tol_fail"] = tol_fail
    if samples is not None:
        out["samples"] = int(samples)
    out.update(extra)
    return out


def _error(name, exc):
    return {"name": name, "verdict": "error", "error": type(exc).__name__, "message": str(exc)}


def _skipped(name, reason):
    return {"name": name, "verdict": "skipped", "reason": reason}


def _draws(cfg: RunConfig) -> list:
    if cfg.constants is not None:
        return [cfg.constants]
    rng = np.random.default_rng(cfg.seed)
    return [tuple(rng.uniform(-2.0, 2.0, 5)) for _ in range(cfg.draws)]


def run_battery(cfg: RunConfig, m: DiagonalMetric, requested) -> list:
    plan = cfg.plan()
    entries, state = [], {}
    tp, tf = cfg.tol_pass, cfg.tol_fail
    blocked = None
    for name in BATTERY:
        if name not in requested:
            continue
        if blocked and name in ("r-factor", "solve"):
            entries.append(_skipped(name, blocked))
            continue
        try:
            if name == "separability":
                rep = check_conformal_separability(m, plan, tp, tf)
                entries.append(_entry(
                    name, rep.verdict, rep.residual, tp, tf, rep.samples,
                    seed=rep.seed, skipped_points=rep.skipped,
                    pairs={f"{m.coord_names[i]},{m.coord_names[j]}": r
                           for (i, j), r in rep.pair_residuals.items()},
                    simple_verdict=rep.simple_verdict, simple_residual=rep.simple_residual,
                    ignorable=list(rep.ignorable)))
                if rep.verdict != PASS:
                    blocked = f"conformal separability verdict is {rep.verdict}"
            elif name == "r-factor":
                try:
                    rf = build_r_factor(m, samples=plan, tol=tp)
                except IntegrabilityError as exc:
                    entries.append(_entry(name, FAIL, exc.residual, tp, tf, plan.count,
                                          pair=list(exc.pair)))
                    blocked = "R-factor system is not integrable"
                    continue
                state["rf"] = rf
                entries.append(_entry(name, PASS, rf.gradient_residual, tp, tf, plan.count,
                                      integrability_residual=rf.integrability_residual,
                                      closed_form=rf.closed_form is not None,
                                      base_point=rf.base_point))
            elif name == "potential":
                rf = state.get("rf") or build_r_factor(m, samples=plan, tol=tp)
                state["rf"] = rf
                pts = plan.draw(m.domain)[:20]
                worst = 0.0
                for p in pts:
                    a, b = modified_potential_parts(m, rf, p)
                    worst = max(worst, abs(a - b) / max(1.0, abs(a), abs(b)))
                verdict = PASS if worst < 1e-7 else "error"
                entries.append(_entry(name, verdict, worst, 1e-7, 1e-7, len(pts),
                                      meaning="agreement of the two expressions for U"))
            elif name == "pseudo-stackel":
                res = check_pseudo_stackel(m, samples=plan, tol_pass=tp, tol_fail=tf,
                                           decompose=m.family is not None,
                                           reconstruction_tol=cfg.tol_reconstruction)
                state["ps"] = res
                extra = {}
                if res.decomposition is not None:
                    extra["reconstruction_residual"] = res.decomposition.fit_residual
                entries.append(_entry(name, res.verdict, res.residual, tp, tf, res.samples,
                                      skipped_points=res.skipped, **extra))
                if res.verdict != PASS:
                    blocked = f"pseudo-Stäckel verdict is {res.verdict}"
            elif name == "laplace":
                res = check_laplace_compatibility(m, plan, tp, tf)
                entries.append(_entry(name, res.verdict, res.residual, tp, tf, res.samples))
            elif name == "cotton":
                scan = check_cotton(m, plan.draw(m.domain), cfg.tol_cotton, tf)
                entries.append(_entry(name, scan.verdict, scan.residual, cfg.tol_cotton, tf,
                                      scan.samples, raw_max=scan.raw_max))
            elif name == "solve":
                entries.append(_solve_entry(cfg, m, state))
        except RsepError as exc:
            entries.append(_error(name, exc))
            if name in ("separability", "r-factor", "pseudo-stackel"):
                blocked = f"{name} raised {type(exc).__name__}"
    return entries


def _pipeline(cfg: RunConfig, m: DiagonalMetric, state: dict) -> verify.Pipeline:
    plan = cfg.plan()
    rf = state.get("rf") or build_r_factor(m, samples=plan, tol=cfg.tol_pass)
    ps = state.get("ps")
    if ps is None or ps.decomposition is None:
        ps = check_pseudo_stackel(m, samples=plan, tol_pass=cfg.tol_pass, tol_fail=cfg.tol_fail,
                                  reconstruction_tol=cfg.tol_reconstruction)
    if ps.verdict != PASS:
        raise CertificationError(f"pseudo-Stäckel verdict is {ps.verdict}")
    dec = ps.decomposition
    box = Domain([a for a, _ in dec.intervals], [b for _, b in dec.intervals])
    return verify.Pipeline(m, rf, dec, verify.derive_separated_odes(m, dec), True, box)


def _solve_entry(cfg: RunConfig, m: DiagonalMetric, state: dict) -> dict:
    if m.family is None:
        return _skipped("solve", "separated ODEs need a family metric")
    pipe = state.get("pipe") or _pipeline(cfg, m, state)
    state["pipe"] = pipe
    pts = pipe.points(cfg.solve_points, cfg.seed)
    table, worst, control = [], 0.0, np.inf
    for c in _draws(cfg):
        sol = pipe.solve(c[0], c[1], c[2:])
        r = verify.residual(m, sol, pts)
        r0 = verify.residual(m, sol, pts, with_r=False)
        worst, control = max(worst, r), min(control, r0)
        table.append({"constants": list(c), "residual": r, "residual_without_R": r0})
    verdict = PASS if worst < cfg.tol_residual else FAIL
    return _entry("solve", verdict, worst, cfg.tol_residual, cfg.tol_residual, len(pts),
                  draws=table, min_residual_without_R=control)


# ---------------------------------------------------------------------------
# commands


def cmd_check(cfg, m, out):
    return run_battery(cfg, m, cfg.checks)


def cmd_solve(cfg, m, out):
    return run_battery(cfg, m, ("separability", "r-factor", "pseudo-stackel", "solve"))


def cmd_cotton(cfg, m, out):
    return run_battery(cfg, m, ("cotton",))


def cmd_curvature(cfg, m, out):
    p = cfg.curvature_point
    if p is None:
        p = tuple(m.domain.center()) if m.domain is not None else None
    if p is None:
        raise ConfigError("curvature needs [curvature] point")
    geo = LocalGeometry(m, p, 3)
    C = geo.cotton()
    gup = geo.metric_up()
    trace = max(float(np.max(np.abs(np.einsum("ik,ijk->j", np.diag(gup), C)))),
                float(np.max(np.abs(np.einsum("jk,ijk->i", np.diag(gup), C)))))
    out["curvature"] = {
        "point": list(p),
        "metric_up": gup,
        "christoffel_first": geo.christoffel_first(),
        "contracted_gamma": geo.contracted_gamma(),
        "ricci": geo.ricci(),
        "scalar": geo.scalar(),
        "potential": geo.potential_jet.value,
        "cotton": C,
    }
    return [_entry("cotton-trace", PASS if trace < 1e-9 else FAIL, trace, 1e-9, 1e-9, 1)]


def cmd_chart(cfg, m, out):
    roots = cfg.chart_roots or cfg.metric.get("roots") or (0.0, 1.0, 2.0, 3.0, 4.0)
    chart = families.KalninsChart(tuple(roots))
    box = chart.domain.inset(0.05)
    axes = [np.linspace(box.lower[i], box.upper[i], cfg.chart_grid) for i in range(3)]
    rows = []
    for q in (tuple(x) for x in np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)):
        lam, x = chart.cartesian(list(q))
        rows.append(list(q) + [lam] + list(x) + [chart.q_euclidean(list(q))])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["q1", "q2", "q3", "lambda", "x1", "x2", "x3", "QE"])
    for row in rows:
        writer.writerow(["%.17g" % float(v) for v in row])
    target = cfg.chart_csv or (str(Path(out["_out"]).with_suffix(".csv")) if out.get("_out")
                               else None)
    if target:
        Path(target).write_text(buf.getvalue(), encoding="utf-8")
        out["chart"] = {"csv": target, "rows": len(rows), "roots": list(roots)}
    else:
        out["_stdout"] = buf.getvalue()
        out["chart"] = {"csv": None, "rows": len(rows), "roots": list(roots)}
    em = families.make_rsep(roots=roots, Q="euclidean")
    pts = box.sample(cfg.count if cfg.count <= 100 else 100, cfg.seed)
    pb = families.pullback_check(chart, em, pts)
    err = max(pb.max_rel_diagonal, pb.max_abs_offdiagonal)
    return [_entry("pullback", PASS if err < 1e-9 else FAIL, err, 1e-9, 1e-9, pb.points,
                   diagonal=pb.max_rel_diagonal, offdiagonal=pb.max_abs_offdiagonal,
                   skipped_points=pb.skipped)]


def cmd_rank(cfg, m, out):
    state = {}
    pipe = _pipeline(cfg, m, state)
    c = cfg.constants or (0.7, -0.4, 0.3, -0.2, 0.5)
    base = [0.3 * lo + 0.7 * hi for lo, hi in (o.interval for o in pipe.odes)]
    res = verify.completeness_rank(pipe.odes, base, c)
    expected = 2 * m.n - 1
    return [_entry("completeness", PASS if res.rank == expected else FAIL, None, samples=1,
                   rank=res.rank, expected=expected, singular_values=res.singular_values,
                   constants=list(c), base_point=base)]


def cmd_sphere(cfg, m, out):
    r = cfg.metric.get("radius", 1.0)
    rep = verify.fixed_energy_check(r, cfg.metric.get("roots") or (0.0, 1.0, 2.0, 3.0, 4.0),
                                    cfg.constants or (0.7, -0.4, 0.3, -0.2, 0.5),
                                    cfg.solve_points, cfg.seed)
    expected = 6.0 / r ** 2
    rs_err = abs(rep.scalar_curvature - expected) / expected
    entries = [
        _entry("scalar-curvature", PASS if rs_err < 1e-9 else FAIL, rs_err, 1e-9, 1e-9,
               rep.points, value=rep.scalar_curvature, expected=expected),
        _entry("fixed-energy", PASS if rep.helmholtz_residual < cfg.tol_residual else FAIL,
               rep.helmholtz_residual, cfg.tol_residual, cfg.tol_residual, rep.points,
               energy=rep.energy, ci_residual=rep.ci_residual,
               operator_identity_error=rep.operator_identity_error),
    ]
    plan = cfg.plan()
    sph = families.sphere_rsep(r, cfg.metric.get("roots") or (0.0, 1.0, 2.0, 3.0, 4.0))
    lap = check_laplace_compatibility(sph, plan, cfg.tol_pass, cfg.tol_fail)
    sep = check_conformal_separability(sph, plan, cfg.tol_pass, cfg.tol_fail)
    agree = lap.verdict == sep.simple_verdict and lap.verdict != INCONCLUSIVE
    entries.append(_entry("laplace-iff-separable", PASS if agree else FAIL, lap.residual,
                          cfg.tol_pass, cfg.tol_fail, lap.samples, laplace=lap.verdict,
                          simply_separable=sep.simple_verdict,
                          simple_residual=sep.simple_residual))
    eis = families.eisenhart_metric(families.poly_from_roots((0.5, 1.5, 2.5)))
    lap3 = check_laplace_compatibility(eis, plan, cfg.tol_pass, cfg.tol_fail)
    entries.append(_entry("laplace-eisenhart-degree-3", lap3.verdict, lap3.residual,
                          cfg.tol_pass, cfg.tol_fail, lap3.samples))
    return entries


COMMANDS = {
    "check": cmd_check,
    "curvature": cmd_curvature,
    "cotton": cmd_cotton,
    "chart": cmd_chart,
    "solve": cmd_solve,
    "rank": cmd_rank,
    "sphere": cmd_sphere,
}


def run(cfg: RunConfig, command: str, out_path: str | None = None) -> tuple[int, dict]:
    """Execute ``command``; returns the exit status and the report."""
    report = {
        "tool": "rsep",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "command": command,
        "config": cfg.echo(),
        "metric": None,
        "status": None,
        "checks": [],
    }
    scratch = {"_out": out_path}
    try:
        if command == "sphere":
            cfg.family = "sphere"
        m = build_metric(cfg)
        report["metric"] = m.name
        report["checks"] = COMMANDS[command](cfg, m, scratch)
        status = max((e["verdict"] for e in report["checks"]), key=lambda v: SEVERITY[v],
                     default=PASS)
        if status == "skipped":
            status = PASS
    except (RsepError, ValueError, ZeroDivisionError, ArithmeticError) as exc:
        report["checks"].append(_error(command, exc))
        status = "error"
    report["status"] = status
    for key, value in scratch.items():
        if not key.startswith("_"):
            report[key] = value
    report["_stdout"] = scratch.get("_stdout")
    return EXIT[status], report


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rsep", description="R-separation checks for diagonal "
                                 "3-metrics and the conformally invariant Laplace equation.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--out", help="write the JSON report here")
    ap.add_argument("--seed", type=int, help="override the sampling seed")
    ap.add_argument("--tol-pass", type=float, help="residual below which a check passes")
    ap.add_argument("--tol-fail", type=float, help="residual above which a check fails")
    ap.add_argument("--points", type=int, help="number of sample points")
    ap.add_argument("--json", action="store_true", help="print the JSON report to stdout")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except ConfigError as exc:
        print(f"rsep: configuration error: {exc}", file=sys.stderr)
        if args.json:
            print(dumps({"tool": "rsep", "status": "error", "error": "ConfigError",
                         "message": str(exc), "line": exc.line, "key": exc.key}))
        return 1
    if args.seed is not None:
        cfg.seed = args.seed
    if args.tol_pass is not None:
        cfg.tol_pass = args.tol_pass
    if args.tol_fail is not None:
        cfg.tol_fail = args.tol_fail
    if args.points is not None:
        cfg.count = args.points
    out_path = args.out or cfg.report
    code, report = run(cfg, args.command, out_path)
    extra_stdout = report.pop("_stdout", None)
    text = dumps(report) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    if args.json:
        sys.stdout.write(text)
    else:
        if extra_stdout:
            sys.stdout.write(extra_stdout)
        stream = sys.stderr if extra_stdout else sys.stdout
        for e in report["checks"]:
            res = e.get("residual")
            tail = f"  residual={res:.3e}" if isinstance(res, float) else ""
            msg = f"  ({e['message']})" if "message" in e else ""
            print(f"{e['name']:<30s} {e['verdict']:<13s}{tail}{msg}", file=stream)
        print(f"status: {report['status']}", file=stream)
    return code


if __name__ == "__main__":
    sys.exit(main())
