"""Rolling-window forecasting benchmark.

Training windows ``s -> s+1`` define the learning problem of every method; on
the test split each window is predicted from its predecessor with the fitted
filter and scored by relative squared error (RSE). ARSE is the mean RSE over
all test transitions of one run.
"""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .baselines import PairedData, gsp_lev, gsp_ls, gsp_lscm, gsp_rls, predict
from .copula import Marginals
from .data import (
    SignalMatrix,
    WindowSet,
    apply_mask,
    apply_scales,
    estimate_marginals,
    estimate_target,
    make_windows,
    normalize,
    shuffle_windows,
    split_train_test,
)
from .graph import Graph, SpectralDecomp, build_laplacian, materialize_filter
from .learn import GdsCopProblem, LearnSettings, learn_gds_cop

__all__ = [
    "METHODS",
    "STRESSES",
    "ExperimentConfig",
    "Cell",
    "Report",
    "rse",
    "arse",
    "gds_cop_problem",
    "paired_data",
    "fit_method",
    "run_protocol",
    "emit_report",
    "load_report",
]

log = logging.getLogger(__name__)

METHODS = ("gds-cop", "gsp-ls", "gsp-rls", "gsp-lscm", "gsp-lev")
STRESSES = ("none", "masking", "shuffling")
CONVENTIONS = ("corrected", "lagged")


@dataclass(frozen=True)
class ExperimentConfig:
    window_sizes: tuple[int, ...] = (30,)
    methods: tuple[str, ...] = METHODS
    stresses: tuple[str, ...] = ("none",)
    repeats: int = 10
    seed: int = 0
    split: str | int | None = None
    mask_low: float = 0.6
    mask_high: float = 0.9
    rse_convention: str = "corrected"
    normalization: str = "per-node"
    learn: LearnSettings = field(default_factory=LearnSettings)
    rls_lambda: float | None = None
    lscm_lambda: float = 1.0
    lev_taus: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)

    def __post_init__(self):
        object.__setattr__(self, "window_sizes", tuple(int(w) for w in self.window_sizes))
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "stresses", tuple(self.stresses))
        object.__setattr__(self, "lev_taus", tuple(float(t) for t in self.lev_taus))
        if isinstance(self.learn, dict):
            object.__setattr__(self, "learn", LearnSettings(**self.learn))
        if self.repeats < 1:
            raise ValueError("repeats must be at least 1")
        if any(w < 2 for w in self.window_sizes):
            raise ValueError("window sizes must be at least 2")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown method {bad[0]!r}; choose from {', '.join(METHODS)}")
        bad = [s for s in self.stresses if s not in STRESSES]
        if bad:
            raise ValueError(f"unknown stress {bad[0]!r}; choose from {', '.join(STRESSES)}")
        if self.rse_convention not in CONVENTIONS:
            raise ValueError(f"unknown rse convention {self.rse_convention!r}")
        if self.normalization not in ("per-node", "global", "none"):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        if not 0 < self.mask_low <= self.mask_high <= 1:
            raise ValueError("need 0 < mask_low <= mask_high <= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["window_sizes"] = list(self.window_sizes)
        d["methods"] = list(self.methods)
        d["stresses"] = list(self.stresses)
        d["lev_taus"] = list(self.lev_taus)
        return d


@dataclass
class Cell:
    method: str
    window_size: int
    stress: str
    repeat: int
    rse: list[float] = field(default_factory=list)
    arse: float | None = None
    error: str | None = None
    fit: dict = field(default_factory=dict)
    runtime: float = 0.0

    @property
    def key(self):
        return (self.method, self.window_size, self.stress, self.repeat)


@dataclass
class Report:
    config: dict
    cells: list[Cell] = field(default_factory=list)

    def cell(self, method, window_size, stress="none", repeat=0) -> Cell:
        for c in self.cells:
            if c.key == (method, window_size, stress, repeat):
                return c
        raise KeyError((method, window_size, stress, repeat))

    def summary(self) -> list[dict]:
        """Mean and (population) std of ARSE over repeats for every grid point."""
        groups: dict[tuple, list[float]] = {}
        order: list[tuple] = []
        for c in self.cells:
            k = (c.method, c.window_size, c.stress)
            if k not in groups:
                groups[k] = []
                order.append(k)
            if c.arse is not None:
                groups[k].append(c.arse)
        rows = []
        for k in order:
            vals = groups[k]
            rows.append({
                "method": k[0], "window_size": k[1], "stress": k[2],
                "arse_mean": float(np.mean(vals)) if vals else None,
                "arse_std": float(np.std(vals)) if vals else None,
                "n_ok": len(vals),
            })
        return rows

    @property
    def n_errors(self) -> int:
        return sum(c.error is not None for c in self.cells)


def rse(pred, actual, reference, observed=None) -> float:
    """``|pred - actual|_F^2 / |reference|_F^2`` over observed entries."""
    pred = np.asarray(pred, dtype=float)
    actual = np.asarray(actual, dtype=float)
    reference = np.asarray(reference, dtype=float)
    if not pred.shape == actual.shape == reference.shape:
        raise ValueError(f"shape mismatch: {pred.shape}, {actual.shape}, {reference.shape}")
    if observed is not None:
        w = np.asarray(observed, dtype=bool)
        pred, actual, reference = (np.where(w, a, 0.0) for a in (pred, actual, reference))
    denom = float(np.sum(reference * reference))
    if denom == 0:
        raise ValueError("reference has zero norm")
    diff = pred - actual
    return float(np.sum(diff * diff)) / denom


def arse(rses: Sequence[float]) -> float:
    return float(np.mean(np.asarray(rses, dtype=float)))


def gds_cop_problem(sd: SpectralDecomp, ws: WindowSet) -> GdsCopProblem:
    """Average per-transition moments ``(m, D)`` of window s and ``(m*, S*)`` of s+1."""
    if ws.count < 2:
        raise ValueError(f"need at least 2 training windows, got {ws.count}")
    margs = [estimate_marginals(w) for w in ws.windows[:-1]]
    targets = [estimate_target(w) for w in ws.windows[1:]]
    means = np.mean([m.means for m in margs], axis=0)
    stds = np.mean([m.stds for m in margs], axis=0)
    floor = min(m.floor for m in margs)
    t_mean = np.mean([t[0] for t in targets], axis=0)
    t_cov = np.mean([t[1] for t in targets], axis=0)
    return GdsCopProblem(sd, Marginals(means, stds, floor=floor), t_mean, t_cov)


def paired_data(ws: WindowSet) -> PairedData:
    """Stack window s as inputs and window s+1 as targets; unobserved entries are 0."""
    if ws.count < 2:
        raise ValueError(f"need at least 2 training windows, got {ws.count}")
    x = np.hstack([w.filled(0.0) for w in ws.windows[:-1]])
    x_star = np.hstack([w.filled(0.0) for w in ws.windows[1:]])
    return PairedData(x, x_star)


def fit_method(method: str, sd: SpectralDecomp, ws: WindowSet,
               cfg: ExperimentConfig) -> tuple[np.ndarray, dict]:
    """Fit one method on training windows; returns the filter matrix and fit details."""
    if method == "gds-cop":
        trace = learn_gds_cop(gds_cop_problem(sd, ws), cfg.learn)
        info = {"theta": trace.final_theta.tolist(), "iterations": trace.iterations,
                "converged": trace.converged,
                "loss_initial": float(trace.loss_history[0]),
                "loss_final": float(trace.loss_history[-1])}
        return materialize_filter(sd, trace.final_theta), info
    d = paired_data(ws)
    if method == "gsp-ls":
        f = gsp_ls(sd, d)
    elif method == "gsp-rls":
        f = gsp_rls(sd, d, cfg.rls_lambda)
    elif method == "gsp-lscm":
        f = gsp_lscm(sd, d, cfg.lscm_lambda)
    elif method == "gsp-lev":
        res = gsp_lev(sd, d, cfg.lev_taus)
        return res.filter_matrix, {"taus": res.taus.tolist(), "weights": res.weights.tolist(),
                                   "alpha": res.alpha, "gamma": res.gamma}
    else:
        raise ValueError(f"unknown method {method!r}")
    return materialize_filter(sd, f), {"theta": list(f.coeffs)}


def _evaluate(filter_matrix, test_ws: WindowSet, test_raw: WindowSet, scales,
              convention: str) -> list[float]:
    out = []
    for s in range(test_ws.count - 1):
        pred = predict(filter_matrix, test_ws.windows[s].filled(0.0)) * scales[:, None]
        if convention == "corrected":
            ref = test_raw.windows[s + 1]
        else:
            ref = test_raw.windows[s]
        out.append(rse(pred, ref.values, ref.values, ref.observed))
    return out


def _stress_seed(base: int, window: int, repeat: int, stress: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([base, window, repeat, STRESSES.index(stress)])


def _stressed_windows(train: SignalMatrix, w: int, stress: str, seed, cfg) -> WindowSet:
    if stress == "masking":
        return make_windows(apply_mask(train, cfg.mask_low, cfg.mask_high, seed), w)
    ws = make_windows(train, w)
    if stress == "shuffling":
        return shuffle_windows(ws, seed)
    return ws


def run_protocol(cfg: ExperimentConfig, data: SignalMatrix, graph: Graph) -> Report:
    """Run the (window size x stress x repeat x method) grid.

    Stress transforms touch only the training split. The stress seed depends
    on ``(cfg.seed, window, repeat, stress)`` so every method sees the same
    corrupted data within a repeat; results do not depend on execution order.
    A failing cell records its error and the grid continues.
    """
    sd = build_laplacian(graph)
    split = cfg.split if cfg.split is not None else data.n_cols // 2
    train, test = split_train_test(data, split)
    scales, train_n = normalize(train, cfg.normalization)
    test_n = apply_scales(test, scales)
    report = Report(config=cfg.to_dict())
    for w in cfg.window_sizes:
        try:
            test_ws = make_windows(test_n, w)
            test_raw = make_windows(test, w)
            if test_ws.count < 2:
                raise ValueError(f"test split has {test_ws.count} window(s) of size {w}")
        except ValueError as exc:
            for stress in cfg.stresses:
                for rep in range(cfg.repeats):
                    for m in cfg.methods:
                        report.cells.append(Cell(m, w, stress, rep, error=str(exc)))
            continue
        for stress in cfg.stresses:
            for rep in range(cfg.repeats):
                seed = _stress_seed(cfg.seed, w, rep, stress)
                try:
                    train_ws = _stressed_windows(train_n, w, stress, seed, cfg)
                except ValueError as exc:
                    train_ws, setup_error = None, str(exc)
                for m in cfg.methods:
                    cell = Cell(m, w, stress, rep)
                    report.cells.append(cell)
                    if train_ws is None:
                        cell.error = setup_error
                        continue
                    t0 = time.perf_counter()
                    try:
                        fmat, cell.fit = fit_method(m, sd, train_ws, cfg)
                        cell.rse = _evaluate(fmat, test_ws, test_raw, scales, cfg.rse_convention)
                        cell.arse = arse(cell.rse)
                    except Exception as exc:  # one bad cell must not abort the grid
                        cell.error = f"{type(exc).__name__}: {exc}"
                        log.warning("cell %s failed: %s", cell.key, cell.error)
                    cell.runtime = time.perf_counter() - t0
    return report


def _cell_dict(c: Cell, include_timing: bool) -> dict:
    d = {"method": c.method, "window_size": c.window_size, "stress": c.stress,
         "repeat": c.repeat, "rse": c.rse, "arse": c.arse, "error": c.error, "fit": c.fit}
    if include_timing:
        d["runtime"] = c.runtime
    return d


def emit_report(report: Report, path_prefix, include_timing: bool = False) -> tuple[Path, Path]:
    """Write ``report.json`` and ``arse_vs_window.csv`` into directory ``path_prefix``.

    Runtimes are left out unless ``include_timing`` so that reruns are
    byte-identical.
    """
    out = Path(path_prefix)
    try:
        out.mkdir(parents=True, exist_ok=True)
        json_path = out / "report.json"
        csv_path = out / "arse_vs_window.csv"
        payload = {
            "config": report.config,
            "cells": [_cell_dict(c, include_timing) for c in report.cells],
            "summary": report.summary(),
        }
        json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "window_size", "stress", "arse_mean", "arse_std"])
            for row in report.summary():
                w.writerow([row["method"], row["window_size"], row["stress"],
                            "" if row["arse_mean"] is None else repr(row["arse_mean"]),
                            "" if row["arse_std"] is None else repr(row["arse_std"])])
    except OSError as exc:
        raise OSError(f"could not write report to {out}: {exc}") from exc
    return json_path, csv_path


def load_report(path) -> Report:
    payload = json.loads(Path(path).read_text())
    cells = [Cell(method=c["method"], window_size=c["window_size"], stress=c["stress"],
                  repeat=c["repeat"], rse=c["rse"], arse=c["arse"], error=c["error"],
                  fit=c.get("fit", {}), runtime=c.get("runtime", 0.0))
             for c in payload["cells"]]
    return Report(config=payload["config"], cells=cells)
