"""``gdsp`` command line: synth, learn, predict and bench subcommands.

Every option can also be given in a JSON config file (``--config``) whose
keys are the option names with dashes replaced by underscores. Flags given on
the command line override the file; unknown keys are rejected.

Exit codes: 0 ok, 1 usage error, 2 data error, 3 numerical failure (or, for
``bench``, at least one failed cell).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .data import (
    DataError,
    SignalMatrix,
    align_to_graph,
    apply_scales,
    gen_synthetic,
    load_nyt_csv,
    load_wide_csv,
    make_windows,
    normalize,
    split_train_test,
    write_wide_csv,
)
from .evaluation import (
    METHODS,
    STRESSES,
    ExperimentConfig,
    emit_report,
    fit_method,
    gds_cop_problem,
    run_protocol,
)
from .graph import GraphError, build_laplacian, materialize_filter, read_edge_list, write_edge_list
from .learn import LearnError, LearnSettings, learn_gds_cop, write_trace_csv

__all__ = ["main", "build_parser", "EXIT_OK", "EXIT_USAGE", "EXIT_DATA", "EXIT_NUMERIC"]

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("gdsp")


class UsageError(Exception):
    pass


def _color(text: str, code: str) -> str:
    if os.environ.get("NO_COLOR") or not sys.stderr.isatty():
        return text
    return f"\x1b[{code}m{text}\x1b[0m"


def _fail(msg: str, code: int) -> int:
    print(f"{_color('error', '31')}: {msg}", file=sys.stderr)
    return code


class _Parser(argparse.ArgumentParser):
    """Argument parser that exits with the usage code instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --- option converters ---------------------------------------------------------

def _csv_list(conv: Callable[[str], Any]) -> Callable[[Any], tuple]:
    def parse(v):
        items = v if isinstance(v, (list, tuple)) else [s for s in str(v).split(",") if s.strip()]
        return tuple(conv(str(s).strip()) if isinstance(s, str) else conv(s) for s in items)
    parse.__name__ = f"list of {conv.__name__}"
    return parse


def _choice(options: tuple[str, ...]) -> Callable[[Any], str]:
    def parse(v):
        if v not in options:
            raise ValueError(f"{v!r} is not one of {', '.join(options)}")
        return v
    return parse


def _opt_float(v):
    return None if v is None or v == "auto" else float(v)


def _split(v):
    if v is None or v == "all":
        return v
    if isinstance(v, int) or str(v).lstrip("-").isdigit():
        return int(v)
    return str(v)


def _bool(v):
    if isinstance(v, bool):
        return v
    raise ValueError(f"{v!r} is not a boolean")


@dataclass(frozen=True)
class Opt:
    flag: str
    conv: Callable[[Any], Any]
    default: Any
    help: str
    metavar: str | None = None
    is_flag: bool = False

    @property
    def key(self) -> str:
        return self.flag.lstrip("-").replace("-", "_")


DATA_OPTS = [
    Opt("--data", str, None, "wide CSV of signals (first column node id, one column per "
        "ISO date, empty cell = unobserved). Either this or --nyt is required.", "CSV"),
    Opt("--nyt", str, None, "NYT us-counties CSV with cumulative case counts; daily new "
        "cases are obtained by differencing.", "CSV"),
    Opt("--state", str, "California", "state kept from the --nyt file.", "NAME"),
    Opt("--edges", str, None, "labelled edge list defining the graph. Defaults to the "
        "bundled California county adjacency when --nyt is used.", "FILE"),
    Opt("--normalization", _choice(("per-node", "global", "none")), "per-node",
        "scaling of training data: each node divided by 1 + max|x| of its training values "
        "(per-node), one shared scale (global) or none.", "MODE"),
]

LEARN_OPTS = [
    Opt("--eta1", _opt_float, None, "step size for the Chebyshev filter coefficients in "
        "the alternating gradient loop; 'auto' starts at half the inverse local curvature "
        "and halves after any loss increase.",
        "FLOAT|auto"),
    Opt("--eta2", _opt_float, None, "step size for the copula correlation matrix in the "
        "alternating gradient loop; 'auto' as for --eta1.", "FLOAT|auto"),
    Opt("--epsilon", float, 1e-8, "stop when the objective changes by at most this "
        "between iterations.", "FLOAT"),
    Opt("--delta", float, 1e-6, "eigenvalue floor used when projecting the correlation "
        "matrix back to a valid correlation matrix.", "FLOAT"),
    Opt("--max-iters", int, 5000, "iteration cap of the gradient loop.", "N"),
    Opt("--step-fraction", float, 0.5, "fraction of the inverse curvature used by automatic "
        "step sizes.", "FLOAT"),
    Opt("--grad-mode", _choice(("analytic", "finite-difference")), "analytic",
        "gradient evaluation for the copula learner.", "MODE"),
    Opt("--rls-lambda", _opt_float, None, "l1 penalty weight of gsp-rls; 'auto' is 0.1 "
        "times the sup-norm of the least-squares gradient at zero.", "FLOAT|auto"),
    Opt("--lscm-lambda", float, 1.0, "covariance-matching penalty weight of gsp-lscm.",
        "FLOAT"),
    Opt("--lev-taus", _csv_list(float), (0.5, 1.0, 2.0, 4.0), "heat-kernel diffusion "
        "scales mixed by gsp-lev (comma separated).", "LIST"),
]

SYNTH_OPTS = [
    Opt("--nodes", int, 10, "number of graph nodes (random geometric graph).", "N"),
    Opt("--days", int, 300, "number of daily columns.", "N"),
    Opt("--seed", int, 0, "random seed; identical seeds give identical files.", "N"),
    Opt("--noise", float, 0.01, "standard deviation of the innovation added at each "
        "window step; 0 gives exactly filter-driven windows.", "FLOAT"),
    Opt("--window", int, 30, "window length over which the true filter propagates the "
        "signal.", "N"),
    Opt("--theta", _csv_list(float), (0.9, -0.08, 0.02), "true Chebyshev filter "
        "coefficients theta0,theta1,theta2.", "LIST"),
    Opt("--start-date", str, "2020-01-01", "ISO date of the first column.", "DATE"),
    Opt("--out", str, None, "output directory for signals.csv, graph.txt and truth.json "
        "(required).", "DIR"),
]

LEARN_CMD_OPTS = DATA_OPTS + [
    Opt("--method", _choice(METHODS), "gds-cop", f"learner, one of {', '.join(METHODS)}.",
        "NAME"),
    Opt("--window-size", int, 30, "window length; consecutive non-overlapping windows "
        "form the training transitions.", "N"),
    Opt("--split", _split, "all", "first test column (ISO date or column index); training "
        "uses the columns before it. 'all' trains on every column.", "DATE|INDEX|all"),
    Opt("--seed", int, 0, "seed for the curvature probe of automatic step sizes.", "N"),
    Opt("--out", str, None, "path of the model JSON to write (required).", "FILE"),
    Opt("--trace", str, None, "optional CSV file receiving the per-iteration loss.", "FILE"),
] + LEARN_OPTS

PREDICT_OPTS = [
    Opt("--model", str, None, "model JSON written by 'learn' (or truth.json from "
        "'synth') (required).", "FILE"),
    Opt("--input", str, None, "wide CSV holding the input window (required).", "CSV"),
    Opt("--out", str, None, "prediction CSV; standard output when omitted.", "FILE"),
]

BENCH_OPTS = DATA_OPTS + [
    Opt("--methods", _csv_list(_choice(METHODS)), METHODS, "comma separated learners.",
        "LIST"),
    Opt("--window-sizes", _csv_list(int), (30,), "comma separated window lengths.", "LIST"),
    Opt("--stress", _csv_list(_choice(STRESSES)), ("none",), "comma separated stress "
        "tests applied to training data: none, masking (entries dropped at random) or "
        "shuffling (columns permuted within each window).", "LIST"),
    Opt("--repeats", int, 10, "seeded repetitions per grid point.", "N"),
    Opt("--seed", int, 0, "base seed of the stress transforms and step-size probe.", "N"),
    Opt("--split", _split, None, "first test column (ISO date or column index); default "
        "is the midpoint.", "DATE|INDEX"),
    Opt("--mask-low", float, 0.6, "lower bound of the per-column observation probability "
        "under masking.", "P"),
    Opt("--mask-high", float, 0.9, "upper bound of the per-column observation probability "
        "under masking.", "P"),
    Opt("--rse-convention", _choice(("corrected", "lagged")), "corrected",
        "'corrected' scores the prediction of window s+1 against window s+1; "
        "'lagged' scores it against window s.", "NAME"),
    Opt("--out", str, None, "output directory for report.json and arse_vs_window.csv "
        "(required).", "DIR"),
    Opt("--timing", _bool, False, "store per-cell runtimes in report.json (the file is then "
        "no longer byte-reproducible).", is_flag=True),
] + LEARN_OPTS

COMMANDS: dict[str, tuple[list[Opt], str]] = {
    "synth": (SYNTH_OPTS, "generate a synthetic dataset with a known graph filter"),
    "learn": (LEARN_CMD_OPTS, "fit one filter learner and write a model file"),
    "predict": (PREDICT_OPTS, "apply a model to an input window"),
    "bench": (BENCH_OPTS, "run the windowed forecasting benchmark"),
}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gdsp", description="Distribution-valued graph signal learning.",
                formatter_class=argparse.RawDescriptionHelpFormatter,
                epilog="Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.\n"
                       "Set NO_COLOR to disable coloured error messages.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)
    for name, (opts, desc) in COMMANDS.items():
        sp = sub.add_parser(name, help=desc, description=desc.capitalize() + ".")
        sp.add_argument("--config", metavar="JSON", default=None,
                        help="JSON file with option values (keys use underscores); "
                             "command-line flags take precedence.")
        for o in opts:
            if o.is_flag:
                sp.add_argument(o.flag, dest=o.key, action="store_true", default=None,
                                help=o.help)
                continue
            dflt = o.default
            if isinstance(dflt, tuple):
                dflt = ",".join(str(x) for x in dflt)
            shown = "auto" if dflt is None and "auto" in (o.metavar or "") else dflt
            extra = "" if shown is None else f" [default: {shown}]"
            sp.add_argument(o.flag, dest=o.key, default=None, metavar=o.metavar,
                            help=o.help + extra)
    return p


def resolve_options(command: str, ns: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags (in increasing priority) and convert types."""
    opts = COMMANDS[command][0]
    values: dict[str, Any] = {o.key: o.default for o in opts}
    if ns.config is not None:
        path = Path(ns.config)
        if not path.is_file():
            raise DataError(f"config file not found: {path}")
        try:
            cfg = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise DataError(f"{path}: top level must be an object")
        known = {o.key: o for o in opts}
        unknown = sorted(set(cfg) - set(known))
        if unknown:
            raise UsageError(f"unknown key {unknown[0]!r} in {path} for '{command}'")
        for k, v in cfg.items():
            values[k] = _convert(known[k], v)
    for o in opts:
        raw = getattr(ns, o.key)
        if raw is not None:
            values[o.key] = _convert(o, raw)
    return values


def _convert(o: Opt, raw):
    if raw is None:
        return None
    try:
        return o.conv(raw)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{o.flag}: {exc}") from None


def _require(v: dict, *keys):
    for k in keys:
        if v.get(k) in (None, ""):
            raise UsageError(f"--{k.replace('_', '-')} is required")


def _check_inputs(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise DataError(f"input file not found: {p}")


def _check_output_file(p):
    if p is not None and not Path(p).resolve().parent.is_dir():
        raise DataError(f"output directory does not exist: {Path(p).parent}")


def _learn_settings(v: dict) -> LearnSettings:
    return LearnSettings(eta1=v["eta1"], eta2=v["eta2"], epsilon=v["epsilon"],
                         delta=v["delta"], max_iters=v["max_iters"], seed=v["seed"],
                         grad_mode=v["grad_mode"], step_fraction=v["step_fraction"])


def _bundled_edges() -> Path:
    return Path(str(resources.files("gdsp") / "data" / "ca_counties.txt"))


def _load_dataset(v: dict):
    if (v["data"] is None) == (v["nyt"] is None):
        raise UsageError("give exactly one of --data and --nyt")
    if v["nyt"] is not None:
        edges = v["edges"] or _bundled_edges()
        _check_inputs(v["nyt"], edges)
        return load_nyt_csv(v["nyt"], v["state"], edges)
    if v["edges"] is None:
        raise UsageError("--edges is required with --data")
    _check_inputs(v["data"], v["edges"])
    graph = read_edge_list(v["edges"])
    return align_to_graph(load_wide_csv(v["data"]), graph), graph


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# --- commands ------------------------------------------------------------------

def cmd_synth(v: dict) -> int:
    _require(v, "out")
    theta = v["theta"]
    if len(theta) != 3:
        raise UsageError("--theta needs exactly three coefficients")
    try:
        sm, graph, truth = gen_synthetic(v["nodes"], v["days"], theta_true=theta,
                                         noise=v["noise"], seed=v["seed"], window=v["window"],
                                         start_date=v["start_date"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(v["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_wide_csv(sm, out / "signals.csv")
    write_edge_list(graph, out / "graph.txt")
    payload = {
        "method": "ground-truth",
        "node_ids": list(sm.node_ids),
        "scales": [1.0] * sm.n,
        "theta": [float(t) for t in truth["theta"]],
        "r": np.asarray(truth["r"]).tolist(),
        "means": np.asarray(truth["means"]).tolist(),
        "stds": np.asarray(truth["stds"]).tolist(),
        "filter_matrix": np.asarray(truth["filter"]).tolist(),
        "window_size": int(truth["window"]),
        "noise": float(truth["noise"]),
        "seed": int(truth["seed"]),
    }
    _write_json(out / "truth.json", payload)
    log.info("wrote %s", out)
    return EXIT_OK


def cmd_learn(v: dict) -> int:
    _require(v, "out")
    _check_output_file(v["out"])
    _check_output_file(v["trace"])
    data, graph = _load_dataset(v)
    sd = build_laplacian(graph)
    train = data if v["split"] == "all" else split_train_test(data, v["split"])[0]
    scales, train_n = normalize(train, v["normalization"])
    ws = make_windows(train_n, v["window_size"])
    if ws.count < 2:
        raise DataError(f"training data holds {ws.count} window(s) of size "
                        f"{v['window_size']}; need at least 2")
    model: dict[str, Any] = {"method": v["method"], "node_ids": list(data.node_ids),
                             "scales": scales.tolist(), "window_size": v["window_size"],
                             "normalization": v["normalization"]}
    if v["method"] == "gds-cop":
        settings = _learn_settings(v)
        trace = learn_gds_cop(gds_cop_problem(sd, ws), settings)
        fmat = materialize_filter(sd, trace.final_theta)
        model.update(theta=trace.final_theta.tolist(), r=trace.final_r.r.tolist(),
                     loss_trace=[float(x) for x in trace.loss_history],
                     iterations=trace.iterations, converged=trace.converged,
                     eta1=trace.extras.get("eta1"), eta2=trace.extras.get("eta2"))
        if not trace.converged:
            log.warning("stopped after %d iterations without meeting epsilon", trace.iterations)
        if v["trace"] is not None:
            write_trace_csv(trace, v["trace"])
    else:
        cfg = ExperimentConfig(methods=(v["method"],), rls_lambda=v["rls_lambda"],
                               lscm_lambda=v["lscm_lambda"], lev_taus=v["lev_taus"])
        fmat, info = fit_method(v["method"], sd, ws, cfg)
        model.update(info)
    model["filter_matrix"] = np.asarray(fmat).tolist()
    _write_json(v["out"], model)
    log.info("wrote %s", v["out"])
    return EXIT_OK


def _load_model(path) -> dict:
    try:
        model = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    for key in ("node_ids", "scales", "filter_matrix"):
        if key not in model:
            raise DataError(f"{path}: model lacks {key!r}")
    f = np.asarray(model["filter_matrix"], dtype=float)
    n = len(model["node_ids"])
    if f.shape != (n, n) or len(model["scales"]) != n:
        raise DataError(f"{path}: filter/scales do not match {n} nodes")
    return model


def _match_nodes(model_ids, data: SignalMatrix) -> np.ndarray:
    """Row order of ``data`` matching ``model_ids``; raises naming the first mismatch."""
    index = {nid: i for i, nid in enumerate(data.node_ids)}
    for nid in model_ids:
        if nid not in index:
            raise DataError(f"node mismatch: model node {nid!r} is absent from the input")
    extra = [nid for nid in data.node_ids if nid not in set(model_ids)]
    if extra:
        raise DataError(f"node mismatch: input node {extra[0]!r} is not in the model")
    return np.array([index[nid] for nid in model_ids])


def cmd_predict(v: dict) -> int:
    _require(v, "model", "input")
    _check_inputs(v["model"], v["input"])
    _check_output_file(v["out"])
    model = _load_model(v["model"])
    data = load_wide_csv(v["input"])
    ids = [str(x) for x in model["node_ids"]]
    order = _match_nodes(ids, data)
    scales = np.asarray(model["scales"], dtype=float)
    x = SignalMatrix(data.values[order], ids, data.dates,
                     None if data.mask is None else data.mask[order])
    xn = apply_scales(x, scales).filled(0.0)
    pred = (np.asarray(model["filter_matrix"], dtype=float) @ xn) * scales[:, None]
    out = SignalMatrix(pred, ids, data.dates)
    write_wide_csv(out, sys.stdout if v["out"] is None else v["out"])
    return EXIT_OK


def cmd_bench(v: dict) -> int:
    _require(v, "out")
    data, graph = _load_dataset(v)
    try:
        cfg = ExperimentConfig(
            window_sizes=v["window_sizes"], methods=v["methods"], stresses=v["stress"],
            repeats=v["repeats"], seed=v["seed"], split=v["split"], mask_low=v["mask_low"],
            mask_high=v["mask_high"], rse_convention=v["rse_convention"],
            normalization=v["normalization"], learn=_learn_settings(v),
            rls_lambda=v["rls_lambda"], lscm_lambda=v["lscm_lambda"], lev_taus=v["lev_taus"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = run_protocol(cfg, data, graph)
    json_path, csv_path = emit_report(report, v["out"], include_timing=bool(v["timing"]))
    for row in report.summary():
        mean = "failed" if row["arse_mean"] is None else f"{row['arse_mean']:.6g}"
        log.info("%-9s W=%-4d %-9s ARSE %s", row["method"], row["window_size"], row["stress"],
                 mean)
    if report.n_errors:
        first = next(c for c in report.cells if c.error is not None)
        return _fail(f"{report.n_errors} of {len(report.cells)} cells failed; first: "
                     f"{first.key}: {first.error}", EXIT_NUMERIC)
    print(f"wrote {json_path} and {csv_path}", file=sys.stderr)
    return EXIT_OK


HANDLERS = {"synth": cmd_synth, "learn": cmd_learn, "predict": cmd_predict, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        values = resolve_options(ns.command, ns)
        return HANDLERS[ns.command](values)
    except UsageError as exc:
        return _fail(str(exc), EXIT_USAGE)
    except LearnError as exc:
        tr = exc.trace
        tail = "" if tr is None or not len(tr.loss_history) else (
            f" (after {tr.iterations} iterations, last loss {tr.loss_history[-1]:.6g})")
        return _fail(f"learning failed: {exc}{tail}", EXIT_NUMERIC)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(f"numerical failure: {exc}", EXIT_NUMERIC)
    except (DataError, GraphError, OSError, KeyError) as exc:
        return _fail(str(exc), EXIT_DATA)
