"""Graphs, Laplacian spectra and degree-2 Chebyshev graph filters.

The graph shift operator is always the combinatorial Laplacian ``L = D - A``.
Filters are polynomials ``F = sum_k theta_k T_k(L_tilde)`` on the rescaled
Laplacian ``L_tilde = 2 L / lambda_max - I`` whose spectrum lies in [-1, 1].
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Graph",
    "SpectralDecomp",
    "ChebFilter",
    "GraphError",
    "build_laplacian",
    "materialize_filter",
    "chebyshev_basis",
    "chebyshev_response",
    "adjacency_from_geography",
    "read_edge_list",
    "write_edge_list",
    "is_connected",
]

_SYM_TOL = 1e-12
_SIGN_TOL = 1e-10


class GraphError(ValueError):
    """Invalid graph input (asymmetry, self-loops, disconnection, bad ids)."""


def is_connected(adjacency: np.ndarray) -> bool:
    """Breadth-first search over the nonzero pattern of ``adjacency``."""
    n = adjacency.shape[0]
    if n == 0:
        return False
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        i = queue.popleft()
        for j in np.flatnonzero(adjacency[i]):
            if not seen[j]:
                seen[j] = True
                queue.append(j)
    return bool(seen.all())


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected weighted graph given by its adjacency matrix.

    ``labels`` optionally names the vertices (e.g. county names); it is
    carried along for data alignment and never used numerically.
    """

    adjacency: np.ndarray
    labels: tuple[str, ...] | None = field(default=None, compare=False)

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise GraphError(f"adjacency must be square, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise GraphError("adjacency has non-finite entries")
        if np.any(a < 0):
            raise GraphError("adjacency has negative weights")
        if np.any(np.diag(a) != 0):
            raise GraphError("adjacency has self-loops (nonzero diagonal)")
        if np.max(np.abs(a - a.T), initial=0.0) > _SYM_TOL:
            raise GraphError("adjacency is not symmetric")
        if not is_connected(a):
            raise GraphError("graph not connected")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != a.shape[0]:
                raise GraphError(
                    f"{len(labels)} labels given for {a.shape[0]} vertices")
            object.__setattr__(self, "labels", labels)
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]


@dataclass(frozen=True)
class ChebFilter:
    """Coefficients (theta_0, theta_1, theta_2) of a degree-2 Chebyshev filter."""

    coeffs: tuple[float, float, float]

    def __post_init__(self):
        c = tuple(float(v) for v in np.asarray(self.coeffs, dtype=float).ravel())
        if len(c) != 3:
            raise ValueError(f"ChebFilter needs 3 coefficients, got {len(c)}")
        if not all(np.isfinite(c)):
            raise ValueError("ChebFilter coefficients must be finite")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def identity(cls) -> "ChebFilter":
        return cls((1.0, 0.0, 0.0))

    def as_array(self) -> np.ndarray:
        return np.array(self.coeffs)


@dataclass(frozen=True, eq=False)
class SpectralDecomp:
    """Laplacian with its eigendecomposition ``L = U diag(eigvals) U^T``.

    Eigenvalues are ascending. Each eigenvector is sign-normalised so that its
    first entry with magnitude above 1e-10 is positive.
    """

    laplacian: np.ndarray
    eigvecs: np.ndarray
    eigvals: np.ndarray
    lambda_max: float

    @property
    def n(self) -> int:
        return self.laplacian.shape[0]

    @cached_property
    def rescaled(self) -> np.ndarray:
        """``2 L / lambda_max - I``."""
        if not self.lambda_max > 0:
            raise GraphError("lambda_max must be positive to rescale the Laplacian")
        return 2.0 * self.laplacian / self.lambda_max - np.eye(self.n)

    @cached_property
    def cheb_basis(self) -> np.ndarray:
        """Stacked ``[T_0, T_1, T_2]`` of the rescaled Laplacian, shape (3, n, n)."""
        return chebyshev_basis(self.rescaled)

    @cached_property
    def rescaled_eigvals(self) -> np.ndarray:
        return 2.0 * self.eigvals / self.lambda_max - 1.0


def build_laplacian(g: Graph) -> SpectralDecomp:
    """Combinatorial Laplacian of ``g`` and its deterministic eigendecomposition.

    Parameters
    ----------
    g : Graph
        Connected undirected graph.

    Returns
    -------
    SpectralDecomp
        ``L = D - A``, ascending eigenvalues and sign-fixed orthonormal
        eigenvectors (columns).
    """
    a = g.adjacency
    lap = np.diag(a.sum(axis=1)) - a
    evals, evecs = np.linalg.eigh(lap)
    order = np.argsort(evals, kind="stable")
    evals = evals[order]
    evecs = np.array(evecs[:, order])
    for k in range(evecs.shape[1]):
        col = evecs[:, k]
        nz = np.flatnonzero(np.abs(col) > _SIGN_TOL)
        if nz.size and col[nz[0]] < 0:
            evecs[:, k] = -col
    # the smallest Laplacian eigenvalue is 0 analytically; eigh returns O(eps) noise
    evals = np.maximum(evals, 0.0)
    for arr in (lap, evecs, evals):
        arr.setflags(write=False)
    return SpectralDecomp(laplacian=lap, eigvecs=evecs, eigvals=evals,
                          lambda_max=float(evals[-1]))


def chebyshev_basis(x: np.ndarray) -> np.ndarray:
    """``[T_0(X), T_1(X), T_2(X)]`` via the three-term recurrence."""
    eye = np.eye(x.shape[0])
    t2 = 2.0 * x @ x - eye
    return np.stack([eye, np.array(x, dtype=float), 0.5 * (t2 + t2.T)])


def chebyshev_response(coeffs, x):
    """Scalar frequency response ``sum_k theta_k T_k(x)`` evaluated elementwise."""
    c = np.asarray(coeffs, dtype=float)
    x = np.asarray(x, dtype=float)
    return c[0] + c[1] * x + c[2] * (2.0 * x * x - 1.0)


def materialize_filter(sd: SpectralDecomp, f: ChebFilter | Sequence[float]) -> np.ndarray:
    """Dense filter matrix ``F = sum_k theta_k T_k(2 L / lambda_max - I)``."""
    theta = f.as_array() if isinstance(f, ChebFilter) else np.asarray(f, dtype=float)
    if theta.shape != (3,):
        raise ValueError(f"expected 3 filter coefficients, got shape {theta.shape}")
    return np.tensordot(theta, sd.cheb_basis, axes=1)


def adjacency_from_geography(edge_list: Iterable[tuple[int, int]], n: int | None = None,
                             labels: Sequence[str] | None = None) -> Graph:
    """Unit-weight graph from an (unordered, possibly duplicated) edge list.

    ``(i, j)`` and ``(j, i)`` describe the same edge. ``n`` defaults to the
    number of labels or to ``1 + max id``.
    """
    edges = [(int(i), int(j)) for i, j in edge_list]
    if n is None:
        if labels is not None:
            n = len(labels)
        else:
            n = 1 + max((max(e) for e in edges), default=-1)
    a = np.zeros((n, n))
    for i, j in edges:
        if i == j:
            raise GraphError(f"self-loop on vertex {i}")
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) out of range for n={n}")
        a[i, j] = a[j, i] = 1.0
    return Graph(a, labels=tuple(labels) if labels is not None else None)


def read_edge_list(path: str | Path) -> Graph:
    """Parse an edge-list file into a :class:`Graph`.

    One ``i j`` pair of 0-based ids per line; ``#`` starts a comment.
    Vertex names may be declared with comment lines ``# node <id> <name>``,
    which plain edge-list readers skip as ordinary comments.
    """
    edges = []
    names: dict[int, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            stripped = raw.strip()
            if stripped.startswith("#"):
                parts = stripped[1:].split(None, 2)
                if len(parts) == 3 and parts[0] == "node":
                    names[int(parts[1])] = parts[2].strip()
                continue
            line = stripped.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphError(f"{path}:{lineno}: expected 'i j', got {line!r}")
            edges.append((int(parts[0]), int(parts[1])))
    n = 1 + max([max(e) for e in edges] + list(names), default=-1)
    labels = None
    if names:
        missing = sorted(set(range(n)) - set(names))
        if missing:
            raise GraphError(f"{path}: node names missing for ids {missing[:5]}")
        labels = [names[i] for i in range(n)]
    return adjacency_from_geography(edges, n=n, labels=labels)


def write_edge_list(g: Graph, path: str | Path) -> None:
    """Write ``g`` in the edge-list format read by :func:`read_edge_list`."""
    iu, ju = np.nonzero(np.triu(g.adjacency))
    with open(path, "w") as fh:
        fh.write(f"# {g.n} nodes, {len(iu)} edges\n")
        if g.labels is not None:
            for i, name in enumerate(g.labels):
                fh.write(f"# node {i} {name}\n")
        for i, j in zip(iu, ju):
            fh.write(f"{i} {j}\n")
