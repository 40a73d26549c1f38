"""Batch front end: ``errorlaw run --config exp.yaml --out results/`` and ``errorlaw catalog``.

A config is one YAML file describing one experiment.  Every run writes a
table (CSV, or JSON with ``--format json``) and a ``.meta.json`` sidecar with
the seed, library versions, the effective config with all defaults filled in,
its SHA-256, and any numerical flags raised along the way.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .general import (
    embed_oscillator_scheme,
    error_law_general,
    euler_maruyama_scheme,
    extrapolate_error_constants,
    oscillator_linear_model,
    LinearModel,
)
from .montecarlo import (
    MCConfig,
    clt_check,
    estimate_rate_function,
    fit_rate_curvature,
    mc_variance_scan,
    default_lambda_grid,
)
from .oscillator import CATALOG, OscillatorModel, SchemeError, build_scheme
from .variance import (
    NoClosedForm,
    compare_methods,
    error_constant,
    error_law,
    extrapolate_constant,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
EXPERIMENTS = ("variance_scan", "constants", "clt", "ldp_estimate", "compare", "general_linear")


class ConfigError(Exception):
    pass


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# config loading with source lines


def _line_map(text):
    """Map key paths (tuples) of a YAML mapping to 1-based line numbers."""
    lines = {}

    def walk(node, path):
        lines.setdefault(path, node.start_mark.line + 1)
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                p = path + (k.value,)
                lines[p] = k.start_mark.line + 1
                walk(v, p)
        elif isinstance(node, yaml.SequenceNode):
            for i, v in enumerate(node.value):
                walk(v, path + (i,))

    root = yaml.compose(text, Loader=yaml.SafeLoader)
    if root is not None:
        walk(root, ())
    return lines


class Config:
    """Parsed YAML plus line lookup for error messages."""

    def __init__(self, text: str, source: str = "<config>"):
        self.source = source
        try:
            self.data = yaml.safe_load(text)
            self.lines = _line_map(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}" if mark else "unknown line"
            raise ConfigError(f"{source}: {where}: invalid YAML ({getattr(exc, 'problem', exc)})") from None
        if not isinstance(self.data, dict):
            raise ConfigError(f"{source}: line 1: top level must be a mapping")

    def error(self, path, msg):
        p = tuple(path)
        while p and p not in self.lines:
            p = p[:-1]
        line = self.lines.get(p, 1)
        key = ".".join(str(x) for x in path) or "<root>"
        return ConfigError(f"{self.source}: line {line}: {key}: {msg}")

    def get(self, path, default=None, *, required=False):
        node = self.data
        for k in path:
            if isinstance(node, dict) and k in node:
                node = node[k]
            elif isinstance(node, list) and isinstance(k, int) and k < len(node):
                node = node[k]
            else:
                if required:
                    raise self.error(path, "missing required field")
                return default
        return node

    def number(self, path, default=None, *, required=False, positive=False, integer=False):
        v = self.get(path, default, required=required)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise self.error(path, f"expected a number, got {v!r}")
        if integer and (not float(v).is_integer()):
            raise self.error(path, f"expected an integer, got {v!r}")
        if positive and not v > 0:
            raise self.error(path, f"must be positive, got {v!r}")
        return int(v) if integer else float(v)

    def number_list(self, path, default=None, *, required=False, integer=False):
        v = self.get(path, default, required=required)
        if not isinstance(v, list) or not v:
            raise self.error(path, "expected a non-empty list")
        return [self.number(tuple(path) + (i,), integer=integer, positive=True) for i in range(len(v))]


def _scheme_entry(cfg, path):
    fam = cfg.get(tuple(path) + ("family",), required=True)
    if fam not in CATALOG:
        raise cfg.error(tuple(path) + ("family",), f"unknown family {fam!r}; known: {', '.join(CATALOG)}")
    params = cfg.get(tuple(path) + ("params",), {}) or {}
    if not isinstance(params, dict):
        raise cfg.error(tuple(path) + ("params",), "expected a mapping")
    try:
        build_scheme(fam, params, N=16, T=1.0)
    except SchemeError as exc:
        raise cfg.error(tuple(path) + ("params",), str(exc)) from None
    return {"family": fam, "params": {k: float(v) for k, v in params.items()}}


def _scheme_list(cfg, key="schemes"):
    if cfg.get(("scheme",)) is not None:
        return [_scheme_entry(cfg, ("scheme",))]
    items = cfg.get((key,))
    if not isinstance(items, list) or not items:
        raise cfg.error((key,), "give 'scheme' or a non-empty 'schemes' list")
    return [_scheme_entry(cfg, (key, i)) for i in range(len(items))]


def _model(cfg):
    return {
        "alpha": cfg.number(("model", "alpha"), 1.0, positive=True),
        "x0": cfg.number(("model", "x0"), 1.0),
        "y0": cfg.number(("model", "y0"), 0.0),
    }


def _lambda_grid(cfg):
    g = cfg.get(("lambda_grid",), "default")
    if g == "default":
        return {"start": -2.0, "step": 1e-4, "count": 40001}
    if not isinstance(g, dict):
        raise cfg.error(("lambda_grid",), "expected 'default' or a mapping with start/step/count")
    return {
        "start": cfg.number(("lambda_grid", "start"), required=True),
        "step": cfg.number(("lambda_grid", "step"), required=True, positive=True),
        "count": cfg.number(("lambda_grid", "count"), required=True, positive=True, integer=True),
    }


def effective_config(cfg: Config, seed_override=None) -> dict:
    """Validate ``cfg`` and return it with every default made explicit."""
    exp = cfg.get(("experiment",), required=True)
    if exp not in EXPERIMENTS:
        raise cfg.error(("experiment",), f"unknown experiment {exp!r}; choose from {', '.join(EXPERIMENTS)}")
    seed = seed_override if seed_override is not None else cfg.number(("seed",), 0, integer=True)
    if not 0 <= seed < 2**64:
        raise cfg.error(("seed",), "seed must be an unsigned 64-bit integer")
    eff = {"experiment": exp, "model": _model(cfg), "seed": int(seed)}
    if exp == "variance_scan":
        eff.update(
            schemes=_scheme_list(cfg),
            T_list=cfg.number_list(("T_list",), required=True),
            N=cfg.number(("N",), required=True, positive=True, integer=True),
            M=cfg.number(("M",), 2000, positive=True, integer=True),
            n_boot=cfg.number(("n_boot",), 999, positive=True, integer=True),
        )
    elif exp == "constants":
        eff.update(
            schemes=_scheme_list(cfg),
            T=cfg.number(("T",), required=True, positive=True),
            extrapolate=bool(cfg.get(("extrapolate",), False)),
            N_list=cfg.number_list(("N_list",), [4096, 8192, 16384], integer=True),
        )
    elif exp == "clt":
        eff.update(
            schemes=_scheme_list(cfg),
            T=cfg.number(("T",), required=True, positive=True),
            N=cfg.number(("N",), required=True, positive=True, integer=True),
            M=cfg.number(("M",), 10000, positive=True, integer=True),
            repeats=cfg.number(("repeats",), 1, positive=True, integer=True),
        )
        if eff["M"] < 100:
            raise cfg.error(("M",), "the KS check needs M >= 100")
    elif exp == "ldp_estimate":
        eff.update(
            schemes=_scheme_list(cfg),
            T=cfg.number(("T",), required=True, positive=True),
            N0=cfg.number(("N0",), 100, positive=True, integer=True),
            M0=cfg.number(("M0",), 2000, positive=True, integer=True),
            lambda_grid=_lambda_grid(cfg),
            normalization=cfg.number(("normalization",), 2.0, positive=True),
            ess_fraction=cfg.number(("ess_fraction",), 0.5, positive=True),
            stride=cfg.number(("stride",), 1, positive=True, integer=True),
        )
    elif exp == "compare":
        eff.update(
            symplectic=_scheme_entry(cfg, ("symplectic",)),
            nonsymplectic=_scheme_entry(cfg, ("nonsymplectic",)),
            T=cfg.number(("T",), required=True, positive=True),
            epsilon=cfg.number(("epsilon",), required=True, positive=True),
            N=cfg.number(("N",), required=True, positive=True, integer=True),
        )
    elif exp == "general_linear":
        kind = cfg.get(("system",), "oscillator")
        if kind not in ("oscillator", "constant"):
            raise cfg.error(("system",), "expected 'oscillator' or 'constant'")
        eff.update(
            system=kind,
            T=cfg.number(("T",), required=True, positive=True),
            N_list=cfg.number_list(("N_list",), [64, 128, 256], integer=True),
            quad_nodes=cfg.number(("quad_nodes",), 4, positive=True, integer=True),
        )
        if len(eff["N_list"]) < 3:
            raise cfg.error(("N_list",), "extrapolation needs at least three N values")
        if kind == "oscillator":
            sch = cfg.get(("scheme",))
            eff["scheme"] = "euler_maruyama" if sch in (None, "euler_maruyama") else _scheme_entry(cfg, ("scheme",))
        else:
            for key in ("A", "b", "u0"):
                if cfg.get((key,)) is None:
                    raise cfg.error((key,), "missing required field")
            try:
                LinearModel.constant(cfg.get(("A",)), cfg.get(("b",)), cfg.get(("u0",)), eff["T"])
            except (ValueError, TypeError) as exc:
                raise cfg.error(("A",), f"inconsistent system: {exc}") from None
            eff.update(A=cfg.get(("A",)), b=cfg.get(("b",)), u0=cfg.get(("u0",)), scheme="euler_maruyama")
    return eff


def config_hash(eff: dict) -> str:
    return hashlib.sha256(json.dumps(eff, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# experiments


def _osc(eff, T):
    m = eff["model"]
    return OscillatorModel(alpha=m["alpha"], x0=m["x0"], y0=m["y0"], T=float(T))


def _closed_K(entry, alpha, T):
    try:
        return error_constant(entry["family"], entry["params"], alpha, T)
    except NoClosedForm:
        return None


def _params_str(p):
    return ";".join(f"{k}={v!r}" for k, v in sorted(p.items()))


def _run_variance_scan(eff, workers, flags):
    rows = []
    for i, entry in enumerate(eff["schemes"]):
        scan = mc_variance_scan(
            _osc(eff, 1.0), entry["family"], eff["T_list"], eff["N"], eff["M"], (eff["seed"] + 1000 * i) % 2**64,
            params=entry["params"], n_boot=eff["n_boot"], workers=workers,
        )
        for r in scan:
            rows.append([entry["family"], _params_str(entry["params"]), r.T, r.N, r.h, r.var_over_h2, r.se,
                         r.ci_low, r.ci_high, r.exact_var_over_h2, r.K_T])
    cols = ["family", "params", "T", "N", "h", "var_over_h2_mc", "bootstrap_se", "ci_low", "ci_high",
            "var_over_h2_exact", "K_T"]
    return cols, rows


def _run_constants(eff, workers, flags):
    rows = []
    alpha, T = eff["model"]["alpha"], eff["T"]
    model = _osc(eff, T)
    for entry in eff["schemes"]:
        K = _closed_K(entry, alpha, T)
        ext = None
        if eff["extrapolate"]:
            ext, _ = extrapolate_constant(
                model, lambda n, s=entry: build_scheme(s["family"], s["params"], N=n, T=T), eff["N_list"]
            )
        rows.append([
            entry["family"], _params_str(entry["params"]),
            K.formula_id if K else "numeric_extrapolation",
            K.K_T if K else None,
            ext.K_T if ext else None,
            abs(ext.K_T / K.K_T - 1) if (K and ext) else None,
        ])
    return ["family", "params", "formula_id", "K_T", "K_T_extrapolated", "rel_gap"], rows


def _run_clt(eff, workers, flags):
    rows = []
    T = eff["T"]
    model = _osc(eff, T)
    for i, entry in enumerate(eff["schemes"]):
        K = _closed_K(entry, model.alpha, T)
        sch = build_scheme(entry["family"], entry["params"], N=eff["N"], T=T)
        if K is None:
            K, _ = extrapolate_constant(model, lambda n, s=entry: build_scheme(s["family"], s["params"], N=n, T=T))
            flags.append(f"{entry['family']}: K_T from numeric extrapolation")
        for r in range(eff["repeats"]):
            seed = (eff["seed"] + 1000 * i + r) % 2**64
            rep = clt_check(model, sch, K.K_T, MCConfig(eff["M"], seed, workers=workers))
            rows.append([entry["family"], _params_str(entry["params"]), seed, rep.M, rep.ks_statistic, rep.ks_pvalue,
                         rep.critical_value, rep.passed, rep.moment_gaps[0], rep.moment_gaps[1]])
    cols = ["family", "params", "seed", "M", "ks_statistic", "ks_pvalue", "critical_value", "passed",
            "m2_gap", "m4_gap"]
    return cols, rows


def _run_ldp(eff, workers, flags):
    g = eff["lambda_grid"]
    grid = g["start"] + g["step"] * np.arange(g["count"])
    if g == {"start": -2.0, "step": 1e-4, "count": 40001}:
        grid = default_lambda_grid()
    T = eff["T"]
    model = _osc(eff, T)
    rows, fits = [], []
    for i, entry in enumerate(eff["schemes"]):
        sch = build_scheme(entry["family"], entry["params"], N=eff["N0"], T=T)
        est = estimate_rate_function(model, sch, grid, eff["M0"], (eff["seed"] + 1000 * i) % 2**64,
                                     normalization=eff["normalization"], workers=workers)
        flags.extend(f"{entry['family']}: {f}" for f in est.flags)
        fit = fit_rate_curvature(est, ess_fraction=eff["ess_fraction"])
        K = _closed_K(entry, model.alpha, T)
        fits.append({
            "family": entry["family"], "params": entry["params"], "curvature_fit": fit.curvature,
            "curvature_closed_form": (1 / (K.K_T * T * T)) if K else None,
            "fit_lambda_range": list(fit.lambda_range), "fit_points": fit.n_points,
            "negative_curvature_count": est.negative_curvature_count,
        })
        for j in range(0, est.lambdas.size, eff["stride"]):
            rows.append([entry["family"], _params_str(entry["params"]), est.lambdas[j], est.Lambda_vals[j],
                         est.y[j], est.I[j], est.ess[j]])
    return ["family", "params", "lambda", "Lambda", "y", "I", "ess"], rows, {"curvature_fits": fits}


def _run_compare(eff, workers, flags):
    T, N, eps = eff["T"], eff["N"], eff["epsilon"]
    model = _osc(eff, T)
    ss, sn = eff["symplectic"], eff["nonsymplectic"]
    Ks, Kn = _closed_K(ss, model.alpha, T), _closed_K(sn, model.alpha, T)
    if Ks is None or Kn is None:
        raise NoClosedForm("compare needs closed-form constants for both schemes")
    law_s = error_law(model, build_scheme(ss["family"], ss["params"], N=N, T=T))[0]
    law_n = error_law(model, build_scheme(sn["family"], sn["params"], N=N, T=T))[0]
    rep = compare_methods(Ks.K_T, Kn.K_T, T, eps, N, (law_s, law_n))
    if not rep.premise_holds:
        flags.append("R_eps <= 0: K_s >= K_ns at this horizon")
    cols = ["symplectic", "nonsymplectic", "T", "epsilon", "N", "K_s", "K_ns", "R_eps", "log_ratio_bound",
            "tail_prob_s", "tail_prob_ns", "log_tail_s", "log_tail_ns", "centered_inequality_holds",
            "ratio_bound_holds"]
    row = [ss["family"], sn["family"], T, eps, N, rep.K_s, rep.K_ns, rep.R_eps, rep.log_ratio_bound,
           rep.tail_prob_s, rep.tail_prob_ns, rep.log_tail_s, rep.log_tail_ns, rep.centered_inequality_holds,
           rep.ratio_bound_holds]
    return cols, [row]


def _run_general_linear(eff, workers, flags):
    T = eff["T"]
    if eff["system"] == "oscillator":
        lm = oscillator_linear_model(_osc(eff, T))
        entry = eff["scheme"]
        if entry == "euler_maruyama":
            make = lambda n: euler_maruyama_scheme(lm, T / n, n)  # noqa: E731
        else:
            a = eff["model"]["alpha"]
            make = lambda n: embed_oscillator_scheme(build_scheme(entry["family"], entry["params"], N=n, T=T), a)  # noqa: E731
    else:
        lm = LinearModel.constant(eff["A"], eff["b"], eff["u0"], T)
        make = lambda n: euler_maruyama_scheme(lm, T / n, n)  # noqa: E731
    rows = []
    for n in eff["N_list"]:
        law = error_law_general(lm, make(n), quad_nodes=eff["quad_nodes"])
        flags.extend(f"N={n}: {f}" for f in law.flags)
        h = T / n
        for i in range(lm.d):
            rows.append([f"N={n}", n, h, "mean", i, None, law.mean[i]])
            for j in range(lm.d):
                rows.append([f"N={n}", n, h, "cov_over_h2", i, j, law.cov[i, j] / h**2])
    ext = extrapolate_error_constants(lm, make, eff["N_list"], quad_nodes=eff["quad_nodes"])
    flags.extend(ext.flags)
    for i in range(lm.d):
        for j in range(lm.d):
            rows.append(["extrapolated", None, 0.0, "H_T", i, j, ext.H_T[i, j]])
    return ["label", "N", "h", "quantity", "i", "j", "value"], rows


_RUNNERS = {
    "variance_scan": _run_variance_scan,
    "constants": _run_constants,
    "clt": _run_clt,
    "ldp_estimate": _run_ldp,
    "compare": _run_compare,
    "general_linear": _run_general_linear,
}


def run(eff: dict, *, workers: int = 1) -> ResultTable:
    """Run a validated effective config."""
    flags: list = []
    out = _RUNNERS[eff["experiment"]](eff, workers, flags)
    cols, rows = out[0], out[1]
    extra = out[2] if len(out) > 2 else {}
    meta = {
        "experiment": eff["experiment"],
        "seed": eff["seed"],
        "config_sha256": config_hash(eff),
        "effective_config": eff,
        "versions": {
            "errorlaw": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "flags": flags,
        **extra,
    }
    return ResultTable(eff["experiment"], cols, rows, meta)


def list_catalog() -> ResultTable:
    rows = []
    for name in sorted(CATALOG):
        info = CATALOG[name]
        rows.append([name, ",".join(info.param_names), info.param_ranges, info.symplectic, info.formula_id, info.description])
    return ResultTable("catalog", ["family", "params", "param_ranges", "symplectic", "formula_id", "description"], rows)


# ---------------------------------------------------------------------------
# output


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _json_value(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else repr(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    return v


def table_csv(table: ResultTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(table.columns)
    for r in table.rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def table_json(table: ResultTable) -> str:
    rows = [{c: _json_value(v) for c, v in zip(table.columns, r)} for r in table.rows]
    return json.dumps({"columns": table.columns, "rows": rows}, indent=1) + "\n"


def write_table(table: ResultTable, out_dir: Path, fmt: str) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    body = table_csv(table) if fmt == "csv" else table_json(table)
    path = out_dir / f"{table.name}.{fmt}"
    path.write_bytes(body.encode("utf-8"))
    paths = [path]
    if table.metadata:
        meta = out_dir / f"{table.name}.meta.json"
        meta.write_bytes((json.dumps(table.metadata, indent=1, sort_keys=True, default=_json_value) + "\n").encode("utf-8"))
        paths.append(meta)
    return paths


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="errorlaw", description="Error laws of oscillator integrators.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment config")
    r.add_argument("--config", required=True, type=Path)
    r.add_argument("--out", required=True, type=Path)
    r.add_argument("--seed", type=int, default=None, help="override the config seed")
    r.add_argument("--workers", type=int, default=1)
    r.add_argument("--format", choices=("csv", "json"), default="csv")
    c = sub.add_parser("catalog", help="list the scheme families")
    c.add_argument("--out", type=Path, default=None)
    c.add_argument("--format", choices=("csv", "json"), default="csv")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "catalog":
        table = list_catalog()
        if args.out is None:
            sys.stdout.write(table_csv(table) if args.format == "csv" else table_json(table))
        else:
            write_table(table, args.out, args.format)
        return EXIT_OK
    if args.workers < 1:
        print("errorlaw: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        text = args.config.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"errorlaw: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        eff = effective_config(Config(text, str(args.config)), args.seed)
    except ConfigError as exc:
        print(f"errorlaw: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        table = run(eff, workers=args.workers)
    except (SchemeError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"errorlaw: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for path in write_table(table, args.out, args.format):
        print(path)
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
