"""Region graphs: weight matrices, degrees, and the spectrum used by the CAR prior.

A graph is held in edge-list form (1-based region ids, i < j, positive weight)
plus derived quantities: the degree vector (row sums of W, with isolated
regions patched to degree 1 so the degree matrix stays invertible) and the
eigenvalues of D^{-1/2} W D^{-1/2}, which bound the CAR autocorrelation
parameter through the positive-definiteness condition 1 - alpha*lambda_i > 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

__all__ = [
    "SpatialGraph",
    "build_graph",
    "from_dense",
    "dichotomize",
    "disconnected_graph",
    "ring_graph",
    "dense_adjacency",
    "eig_symmetric",
    "load_graph_csv",
    "write_graph_csv",
]

SYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class SpatialGraph:
    """Undirected weighted region graph.

    n_regions: number of regions G
    edges: tuples (i, j, w) with 1 <= i < j <= G and w > 0
    degrees: length-G row sums of W, isolated regions patched to 1.0
    spectrum: ascending eigenvalues of D^{-1/2} W D^{-1/2}
    island_flags: True where a region has no edges
    """

    n_regions: int
    edges: tuple[tuple[int, int, float], ...]
    degrees: np.ndarray
    spectrum: np.ndarray
    island_flags: np.ndarray
    # 0-based index arrays for fast quadratic forms
    edge_i: np.ndarray = field(repr=False, default=None)
    edge_j: np.ndarray = field(repr=False, default=None)
    edge_w: np.ndarray = field(repr=False, default=None)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def max_alpha(self) -> float:
        """Supremum of valid CAR autocorrelation values, 1/max eigenvalue."""
        lam_max = float(self.spectrum[-1]) if self.spectrum.size else 0.0
        return np.inf if lam_max <= 0 else 1.0 / lam_max


def eig_symmetric(a: np.ndarray, tol: float = SYMMETRY_TOL) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix; rejects asymmetry > tol."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > tol:
        raise ValueError(f"matrix is not symmetric (max asymmetry {asym:.3e} > {tol:g})")
    return np.linalg.eigvalsh(a)


def build_graph(edges, n_regions: int) -> SpatialGraph:
    """Construct a SpatialGraph from (i, j, weight) triples with 1-based ids."""
    if n_regions < 1:
        raise ValueError("n_regions must be >= 1")
    cleaned = []
    seen = set()
    for i, j, w in edges:
        i, j, w = int(i), int(j), float(w)
        if i == j:
            raise ValueError(f"self-loop on region {i}")
        if not (1 <= i <= n_regions and 1 <= j <= n_regions):
            raise ValueError(f"edge ({i},{j}) outside 1..{n_regions}")
        if w <= 0:
            raise ValueError(f"edge ({i},{j}) has nonpositive weight {w}")
        a, b = (i, j) if i < j else (j, i)
        if (a, b) in seen:
            raise ValueError(f"duplicate edge ({a},{b})")
        seen.add((a, b))
        cleaned.append((a, b, w))
    cleaned.sort()

    w_mat = np.zeros((n_regions, n_regions))
    for i, j, w in cleaned:
        w_mat[i - 1, j - 1] = w
        w_mat[j - 1, i - 1] = w
    row_sums = w_mat.sum(axis=1)
    islands = row_sums == 0.0
    degrees = np.where(islands, 1.0, row_sums)

    d_isqrt = 1.0 / np.sqrt(degrees)
    normalized = d_isqrt[:, None] * w_mat * d_isqrt[None, :]
    spectrum = eig_symmetric(normalized)

    ei = np.array([e[0] - 1 for e in cleaned], dtype=np.intp)
    ej = np.array([e[1] - 1 for e in cleaned], dtype=np.intp)
    ew = np.array([e[2] for e in cleaned], dtype=float)
    return SpatialGraph(
        n_regions=n_regions,
        edges=tuple(cleaned),
        degrees=degrees,
        spectrum=spectrum,
        island_flags=islands,
        edge_i=ei,
        edge_j=ej,
        edge_w=ew,
    )


def from_dense(w_mat: np.ndarray) -> SpatialGraph:
    """Build a graph from a dense symmetric weight matrix (zero diagonal)."""
    w_mat = np.asarray(w_mat, dtype=float)
    if w_mat.ndim != 2 or w_mat.shape[0] != w_mat.shape[1]:
        raise ValueError(f"weight matrix must be square, got {w_mat.shape}")
    asym = np.max(np.abs(w_mat - w_mat.T)) if w_mat.size else 0.0
    if asym > SYMMETRY_TOL:
        raise ValueError(f"weight matrix asymmetric (max asymmetry {asym:.3e})")
    if np.any(np.diag(w_mat) != 0):
        raise ValueError("weight matrix must have a zero diagonal")
    if np.any(w_mat < 0):
        raise ValueError("weights must be nonnegative")
    g = w_mat.shape[0]
    sym = 0.5 * (w_mat + w_mat.T)
    edges = [
        (i + 1, j + 1, sym[i, j])
        for i in range(g)
        for j in range(i + 1, g)
        if sym[i, j] > 0
    ]
    return build_graph(edges, g)


def dense_adjacency(graph: SpatialGraph) -> np.ndarray:
    """Dense symmetric weight matrix W for oracles and small problems."""
    w = np.zeros((graph.n_regions, graph.n_regions))
    w[graph.edge_i, graph.edge_j] = graph.edge_w
    w[graph.edge_j, graph.edge_i] = graph.edge_w
    return w


def dichotomize(raw: np.ndarray) -> SpatialGraph:
    """Binarize a nonnegative flow/contact matrix: edge iff flow > 0 either way.

    The raw matrix may be asymmetric (directed flows); the result connects i~j
    with weight 1 when raw[i,j] + raw[j,i] > 0.  Diagonal is ignored.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise ValueError(f"flow matrix must be square, got {raw.shape}")
    if np.any(raw < 0):
        raise ValueError("flows must be nonnegative")
    g = raw.shape[0]
    sym = raw + raw.T
    edges = [
        (i + 1, j + 1, 1.0)
        for i in range(g)
        for j in range(i + 1, g)
        if sym[i, j] > 0
    ]
    return build_graph(edges, g)


def disconnected_graph(n_regions: int) -> SpatialGraph:
    """Graph with no edges; every region is an island (independent effects)."""
    return build_graph([], n_regions)


def ring_graph(n_regions: int) -> SpatialGraph:
    """Cycle graph 1-2-...-G-1 with unit weights; handy for simulations."""
    if n_regions < 3:
        raise ValueError("a ring needs at least 3 regions")
    edges = [(i, i + 1, 1.0) for i in range(1, n_regions)] + [(1, n_regions, 1.0)]
    return build_graph(edges, n_regions)


def load_graph_csv(
    path, fmt: str = "auto", binarize: bool = False, n_regions: int | None = None
) -> SpatialGraph:
    """Load a graph from CSV.

    Two layouts are accepted:
      * dense: G x G numeric matrix with a header row of region names
      * edges: columns i, j, weight with 1-based region indices

    fmt "auto" sniffs by header: an (i, j, weight) header means edge list.
    binarize=True runs the matrix through dichotomize (for flow data).
    n_regions overrides the edge-list inference max(i, j); required when the
    highest-numbered region is isolated.
    """
    df = pd.read_csv(path)
    cols = [c.strip().lower() for c in df.columns]
    is_edges = fmt == "edges" or (fmt == "auto" and cols[: 3] == ["i", "j", "weight"])
    if is_edges:
        if len(df.columns) < 3:
            raise ValueError(f"edge-list CSV needs columns i,j,weight, got {list(df.columns)}")
        inferred = int(max(df.iloc[:, 0].max(), df.iloc[:, 1].max())) if len(df) else 0
        n_regions = n_regions if n_regions is not None else inferred
        edges = [(int(a), int(b), float(w)) for a, b, w in df.iloc[:, :3].itertuples(index=False)]
        graph = build_graph(edges, n_regions)
        if binarize:
            graph = dichotomize(dense_adjacency(graph))
        return graph
    mat = df.to_numpy(dtype=float)
    if mat.shape[0] != mat.shape[1]:
        raise ValueError(
            f"dense graph CSV must be square (G rows x G columns), got {mat.shape}"
        )
    if binarize:
        return dichotomize(mat)
    return from_dense(mat)


def write_graph_csv(graph: SpatialGraph, path, names: list[str] | None = None) -> None:
    """Write the dense layout: header of region names, G x G weight rows."""
    w = dense_adjacency(graph)
    names = names or [f"region_{k + 1}" for k in range(graph.n_regions)]
    pd.DataFrame(w, columns=names).to_csv(path, index=False)
