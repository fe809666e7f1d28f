"""Signal matrices, windowing, moment estimation, stress transforms and loaders.

A signal matrix stores one row per node and one column per day. Unobserved
entries are flagged by ``mask == False``; their stored value is ignored by
every estimator.

Moment estimators sum sorted values, which makes them exactly (bit-level)
invariant to reordering the columns of a window.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd

from .copula import CorrelationMatrix, Marginals, project_correlation, sigma_floor
from .graph import ChebFilter, Graph, GraphError, build_laplacian, materialize_filter, read_edge_list

__all__ = [
    "DataError",
    "SignalMatrix",
    "WindowSet",
    "load_nyt_csv",
    "load_wide_csv",
    "write_wide_csv",
    "align_to_graph",
    "split_train_test",
    "make_windows",
    "concat_windows",
    "estimate_marginals",
    "estimate_target",
    "normalize",
    "apply_scales",
    "denormalize",
    "apply_mask",
    "shuffle_windows",
    "gen_synthetic",
    "random_geometric_graph",
]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True, eq=False)
class SignalMatrix:
    values: np.ndarray
    node_ids: tuple[str, ...]
    dates: tuple[str, ...]
    mask: np.ndarray | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise DataError(f"values must be 2-D, got shape {v.shape}")
        ids = tuple(str(s) for s in self.node_ids)
        dates = tuple(str(s) for s in self.dates)
        if len(ids) != v.shape[0] or len(dates) != v.shape[1]:
            raise DataError(
                f"labels ({len(ids)} nodes, {len(dates)} dates) do not match values {v.shape}")
        mask = None
        if self.mask is not None:
            mask = np.array(self.mask, dtype=bool)
            if mask.shape != v.shape:
                raise DataError(f"mask shape {mask.shape} does not match values {v.shape}")
        obs = np.ones(v.shape, dtype=bool) if mask is None else mask
        if not np.all(np.isfinite(v[obs])):
            raise DataError("observed values must be finite")
        v[~obs] = 0.0
        for name, val in (("values", v), ("node_ids", ids), ("dates", dates), ("mask", mask)):
            if isinstance(val, np.ndarray):
                val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]

    @property
    def observed(self) -> np.ndarray:
        """Boolean matrix of observed entries (all true when no mask is set)."""
        if self.mask is None:
            return np.ones(self.values.shape, dtype=bool)
        return self.mask

    def cols(self, start: int, stop: int) -> "SignalMatrix":
        mask = None if self.mask is None else self.mask[:, start:stop]
        return SignalMatrix(self.values[:, start:stop], self.node_ids,
                            self.dates[start:stop], mask)

    def filled(self, fill: float = 0.0) -> np.ndarray:
        """Values with unobserved entries replaced by ``fill``."""
        return np.where(self.observed, self.values, fill)


@dataclass(frozen=True)
class WindowSet:
    windows: tuple[SignalMatrix, ...]
    window_size: int

    @property
    def count(self) -> int:
        return len(self.windows)


# --- loaders -----------------------------------------------------------------

def load_nyt_csv(path, state_filter: str, edge_file) -> tuple[SignalMatrix, Graph]:
    """Daily new cases per county from the NYT ``us-counties`` CSV.

    Rows are filtered to ``state_filter``; cumulative counts are differenced
    (first day against zero) and negative corrections clamped to 0. Rows are
    ordered like the vertices of the labelled edge file; counties absent from
    the edge file (e.g. "Unknown") are dropped. Missing (county, day) records
    are marked unobserved.
    """
    graph = read_edge_list(edge_file) if not isinstance(edge_file, Graph) else edge_file
    if graph.labels is None:
        raise DataError(f"edge file {edge_file} has no '# node <id> <name>' labels")
    df = pd.read_csv(path, dtype={"fips": str, "county": str, "state": str})
    missing_cols = {"date", "county", "state", "cases"} - set(df.columns)
    if missing_cols:
        raise DataError(f"{path}: missing columns {sorted(missing_cols)}")
    df = df[df["state"] == state_filter]
    if df.empty:
        raise DataError(f"{path}: no rows for state {state_filter!r}")
    dates = pd.to_datetime(df["date"], format="%Y-%m-%d")
    df = df.assign(date=dates)
    for county, grp in df.groupby("county", sort=False):
        if not grp["date"].is_monotonic_increasing or grp["date"].duplicated().any():
            raise DataError(f"{path}: non-monotone dates for county {county!r}")
    present = set(df["county"])
    unknown = [c for c in graph.labels if c not in present]
    if unknown:
        raise DataError(f"unknown county in edge file: {unknown[0]!r} has no rows in {path}")
    all_days = pd.date_range(df["date"].min(), df["date"].max(), freq="D")
    day_index = {d: i for i, d in enumerate(all_days)}
    n, t = graph.n, len(all_days)
    values = np.zeros((n, t))
    mask = np.zeros((n, t), dtype=bool)
    by_county = {c: g for c, g in df.groupby("county", sort=False)}
    for i, county in enumerate(graph.labels):
        grp = by_county[county]
        cum = grp["cases"].to_numpy(dtype=float)
        daily = np.maximum(np.diff(cum, prepend=0.0), 0.0)
        cols = np.array([day_index[d] for d in grp["date"]])
        values[i, cols] = daily
        mask[i, cols] = True
    date_labels = tuple(d.strftime("%Y-%m-%d") for d in all_days)
    sm = SignalMatrix(values, graph.labels, date_labels, None if mask.all() else mask)
    return sm, graph


def load_wide_csv(path) -> SignalMatrix:
    """Wide CSV: first column node id, one ISO-dated column per day, empty = unobserved."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header, body = rows[0], [r for r in rows[1:] if r]
    dates = header[1:]
    for d in dates:
        try:
            dt.date.fromisoformat(d)
        except ValueError:
            raise DataError(f"{path}: column label {d!r} is not an ISO date") from None
    if any(b >= a for a, b in zip(dates[1:], dates[:-1])):
        raise DataError(f"{path}: dates are not strictly increasing")
    ids, vals = [], np.zeros((len(body), len(dates)))
    mask = np.ones(vals.shape, dtype=bool)
    for i, row in enumerate(body):
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}")
        ids.append(row[0])
        for j, cell in enumerate(row[1:]):
            if cell.strip() == "":
                mask[i, j] = False
            else:
                vals[i, j] = float(cell)
    return SignalMatrix(vals, ids, dates, None if mask.all() else mask)


def write_wide_csv(sm: SignalMatrix, path) -> None:
    """Inverse of :func:`load_wide_csv`; ``path`` may also be an open text stream."""
    if hasattr(path, "write"):
        _write_wide(sm, path)
        return
    with open(path, "w", newline="") as fh:
        _write_wide(sm, fh)


def _write_wide(sm: SignalMatrix, fh) -> None:
    obs = sm.observed
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["node", *sm.dates])
    for i, node in enumerate(sm.node_ids):
        w.writerow([node, *(repr(float(v)) if o else "" for v, o in zip(sm.values[i], obs[i]))])


def align_to_graph(sm: SignalMatrix, graph: Graph) -> SignalMatrix:
    """Reorder rows to the graph's vertex labels."""
    if graph.labels is None:
        if sm.n != graph.n:
            raise DataError(f"data has {sm.n} nodes but graph has {graph.n}")
        return sm
    pos = {node: i for i, node in enumerate(sm.node_ids)}
    missing = [lab for lab in graph.labels if lab not in pos]
    if missing or sm.n != graph.n:
        first = missing[0] if missing else next(x for x in sm.node_ids if x not in graph.labels)
        raise DataError(f"node sets differ between data and graph; first mismatch {first!r}")
    order = [pos[lab] for lab in graph.labels]
    mask = None if sm.mask is None else sm.mask[order]
    return SignalMatrix(sm.values[order], graph.labels, sm.dates, mask)


# --- splitting and windowing --------------------------------------------------

def split_train_test(sm: SignalMatrix, split) -> tuple[SignalMatrix, SignalMatrix]:
    """Split columns at ``split``: an ISO date (first test day) or a column index."""
    if isinstance(split, str):
        cut = sum(1 for d in sm.dates if d < split)
    else:
        cut = int(split)
    if cut <= 0:
        raise DataError("empty train")
    if cut >= sm.n_cols:
        raise DataError("empty test")
    return sm.cols(0, cut), sm.cols(cut, sm.n_cols)


def make_windows(sm: SignalMatrix, w: int) -> WindowSet:
    """Non-overlapping consecutive windows of ``w`` columns; the remainder is dropped."""
    if w < 2:
        raise DataError("window size must be at least 2")
    if w > sm.n_cols:
        raise DataError(f"window size {w} exceeds {sm.n_cols} available columns")
    count = sm.n_cols // w
    return WindowSet(tuple(sm.cols(s * w, (s + 1) * w) for s in range(count)), w)


def concat_windows(windows: Sequence[SignalMatrix]) -> SignalMatrix:
    if not windows:
        raise DataError("no windows to concatenate")
    masks = [w.mask for w in windows]
    mask = None if all(m is None for m in masks) else np.hstack([w.observed for w in windows])
    return SignalMatrix(np.hstack([w.values for w in windows]), windows[0].node_ids,
                        sum((w.dates for w in windows), ()), mask)


# --- moment estimation -------------------------------------------------------

def _ordered_sum(a: np.ndarray) -> np.ndarray:
    # summing sorted values makes the result independent of column order.
    # Adding 0.0 maps -0.0 to +0.0 so the sorted arrays agree bit for bit, and
    # a C-contiguous layout pins numpy's reduction order
    return np.ascontiguousarray(np.sort(a + 0.0, axis=-1)).sum(axis=-1)


def _node_means(window: SignalMatrix) -> tuple[np.ndarray, np.ndarray]:
    obs = window.observed
    counts = obs.sum(axis=1)
    sums = _ordered_sum(np.where(obs, window.values, 0.0))
    seen = counts > 0
    if not seen.any():
        raise DataError("window has no observed entries")
    means = np.zeros(window.n)
    means[seen] = sums[seen] / counts[seen]
    means[~seen] = means[seen].mean()
    return means, counts


def estimate_marginals(window: SignalMatrix, floor: float | None = None) -> Marginals:
    """Per-node sample mean and standard deviation (``1/(k-1)``) over observed entries.

    Nodes with no observation take the mean of the observed node means;
    standard deviations are floored (see :class:`~gdsp.copula.Marginals`).
    """
    means, counts = _node_means(window)
    obs = window.observed
    dev = np.where(obs, window.values - means[:, None], 0.0)
    ss = _ordered_sum(dev * dev)
    var = np.zeros(window.n)
    ok = counts >= 2
    var[ok] = ss[ok] / (counts[ok] - 1)
    floor = sigma_floor(means) if floor is None else floor
    return Marginals(means, np.sqrt(var), floor=floor)


def estimate_target(window: SignalMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and jittered sample covariance of a window.

    Covariance entries use pairwise-complete observations with ``1/(k-1)``
    normalisation (0 when fewer than 2 common observations). Under a mask
    negative eigenvalues are clipped to 0. Finally
    ``max(1e-8, 1e-6 tr(S)/n) I`` is added so the estimate is nonsingular.
    """
    if window.n_cols < 2:
        raise DataError("target estimation needs at least 2 columns")
    means, _ = _node_means(window)
    obs = window.observed
    dev = np.where(obs, window.values - means[:, None], 0.0)
    prods = dev[:, None, :] * dev[None, :, :]
    both = obs.astype(float) @ obs.T.astype(float)
    sums = _ordered_sum(prods)
    cov = np.zeros_like(sums)
    ok = both >= 2
    cov[ok] = sums[ok] / (both[ok] - 1)
    cov = 0.5 * (cov + cov.T)
    if not obs.all():
        # pairwise-complete estimates need not be PSD
        evals, evecs = np.linalg.eigh(cov)
        if evals[0] < -1e-12 * max(1.0, abs(evals[-1])):
            cov = (evecs * np.maximum(evals, 0.0)) @ evecs.T
            cov = 0.5 * (cov + cov.T)
    n = window.n
    jitter = max(1e-8, 1e-6 * np.trace(cov) / n)
    return means, cov + jitter * np.eye(n)


# --- normalisation -----------------------------------------------------------

def normalize(train: SignalMatrix, mode: str = "per-node") -> tuple[np.ndarray, SignalMatrix]:
    """Divide each node by ``1 + max |x|`` over its observed training entries.

    ``mode="global"`` uses one shared scale (the largest node scale), which
    commutes with every graph filter; ``mode="none"`` uses unit scales.
    """
    if train.n_cols == 0:
        raise DataError("cannot normalise an empty matrix")
    peak = np.max(np.abs(train.filled(0.0)), axis=1)
    scales = 1.0 + peak
    if mode == "global":
        scales = np.full(train.n, scales.max())
    elif mode == "none":
        scales = np.ones(train.n)
    elif mode != "per-node":
        raise ValueError(f"unknown normalisation mode {mode!r}")
    return scales, apply_scales(train, scales)


def apply_scales(sm: SignalMatrix, scales) -> SignalMatrix:
    scales = np.asarray(scales, dtype=float)
    return replace(sm, values=sm.values / scales[:, None])


def denormalize(x, scales):
    """Undo :func:`normalize` on a matrix or :class:`SignalMatrix`."""
    scales = np.asarray(scales, dtype=float)
    if isinstance(x, SignalMatrix):
        return replace(x, values=x.values * scales[:, None])
    return np.asarray(x, dtype=float) * scales[:, None]


# --- stress transforms -------------------------------------------------------

def apply_mask(sm: SignalMatrix, p_low: float = 0.6, p_high: float = 0.9,
               seed: int | np.random.SeedSequence = 0) -> SignalMatrix:
    """Bernoulli observation mask with one keep-probability per column.

    For each column ``p ~ U[p_low, p_high]`` is drawn once and every entry of
    that column is kept independently with probability ``p``. Combined with any
    existing mask.
    """
    if not 0 < p_low <= p_high <= 1:
        raise ValueError("need 0 < p_low <= p_high <= 1")
    rng = np.random.default_rng(seed)
    p = rng.uniform(p_low, p_high, size=sm.n_cols)
    keep = rng.random(sm.values.shape) < p[None, :]
    return replace(sm, mask=keep & sm.observed)


def shuffle_windows(ws: WindowSet, seed: int | np.random.SeedSequence = 0) -> WindowSet:
    """Independently permute the columns inside each window."""
    rng = np.random.default_rng(seed)
    out = []
    for w in ws.windows:
        perm = rng.permutation(w.n_cols)
        mask = None if w.mask is None else w.mask[:, perm]
        out.append(SignalMatrix(w.values[:, perm], w.node_ids, w.dates, mask))
    return WindowSet(tuple(out), ws.window_size)


# --- synthetic data ----------------------------------------------------------

def random_geometric_graph(n: int, rng: np.random.Generator) -> Graph:
    """Unit-weight geometric graph on uniform points, radius grown until connected."""
    labels = [f"v{i}" for i in range(n)]
    if n == 2:
        return Graph(np.array([[0.0, 1.0], [1.0, 0.0]]), labels=labels)
    pts = rng.random((n, 2))
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    radius = 1.2 * np.sqrt(np.log(max(n, 2)) / (np.pi * n))
    while True:
        a = ((dist < radius) & ~np.eye(n, dtype=bool)).astype(float)
        try:
            return Graph(a, labels=labels)
        except GraphError:
            radius *= 1.1


def _random_correlation(n: int, rng: np.random.Generator) -> CorrelationMatrix:
    factors = rng.standard_normal((n, max(1, n // 3)))
    c = factors @ factors.T + np.diag(rng.uniform(0.5, 1.5, n))
    return project_correlation(c)


def gen_synthetic(n: int, T: int, theta_true=(0.9, -0.08, 0.02), r_true=None,
                  noise: float = 0.0, seed: int = 0, window: int = 30,
                  start_date: str = "2020-01-01"):
    """Synthetic windowed graph signals whose windows are filter pushforwards.

    The first ``window`` columns are drawn from ``N(m, D R D)``; every later
    window is ``F_true`` applied column-wise to the previous one plus
    ``noise * xi`` with ``xi`` standard normal, so consecutive windows are
    paired column by column and their statistics are pushforwards of one
    another.

    Returns
    -------
    (SignalMatrix, Graph, dict)
        The dict holds the ground truth: ``theta``, ``r``, ``means``,
        ``stds``, ``filter`` and the generation parameters.
    """
    if n < 2 or T < 1 or window < 1:
        raise ValueError("need n >= 2, T >= 1 and window >= 1")
    if noise < 0:
        raise ValueError("noise must be nonnegative")
    theta = ChebFilter(tuple(theta_true))
    rng = np.random.default_rng(seed)
    graph = random_geometric_graph(n, rng)
    sd = build_laplacian(graph)
    if r_true is None:
        r_true = _random_correlation(n, rng)
    elif not isinstance(r_true, CorrelationMatrix):
        r_true = CorrelationMatrix(r_true)
    if r_true.n != n:
        raise ValueError(f"r_true is {r_true.n}x{r_true.n}, expected {n}x{n}")
    means = rng.uniform(1.0, 3.0, n)
    stds = rng.uniform(0.2, 0.6, n)
    f_true = materialize_filter(sd, theta)
    cov = stds[:, None] * r_true.r * stds[None, :]
    evals, evecs = np.linalg.eigh(cov)
    root = evecs * np.sqrt(np.maximum(evals, 0.0))
    cols = []
    block = means[:, None] + root @ rng.standard_normal((n, window))
    produced = 0
    while produced < T:
        cols.append(block)
        produced += window
        block = f_true @ block + noise * rng.standard_normal((n, window))
    values = np.hstack(cols)[:, :T]
    start = dt.date.fromisoformat(start_date)
    dates = [(start + dt.timedelta(days=k)).isoformat() for k in range(T)]
    truth = {
        "theta": list(theta.coeffs),
        "r": r_true.r.tolist(),
        "means": means.tolist(),
        "stds": stds.tolist(),
        "filter": f_true.tolist(),
        "n": n, "T": T, "window": window, "noise": noise, "seed": seed,
    }
    return SignalMatrix(values, graph.labels, dates), graph, truth
