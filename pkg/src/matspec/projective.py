"""Discretized unit sphere / projective space, group action and cocycles.

Grids for d in {1, 2, 3}; Monte Carlo code elsewhere works in any d.  A
projective grid stores one representative per antipodal pair, and every
operation that takes unit vectors accepts arbitrary representatives (the
mode-aware distance folds signs).  Interpolation is linear in angle for
d = 2 and inverse-distance over the 3 nearest nodes for d = 3; both are
exact at nodes.  The eigenfunctions this package interpolates are Holder
continuous, so low-order interpolation suffices; it is the dominant but
controlled discretization error source.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DirectionGrid",
    "GridFunction",
    "GridMeasure",
    "build_grid",
    "act",
    "act_many",
    "distance",
    "interpolate",
    "interp_stencil",
    "contact_cocycle",
    "wedge_norm",
]

SPHERE = "sphere"
PROJECTIVE = "projective"


@dataclass(frozen=True)
class DirectionGrid:
    """Node set on S^{d-1} (mode "sphere") or P^{d-1} (mode "projective").

    quadrature_weights approximate the rotation-invariant measure and sum
    to 1; neighbors holds per-node nearest-neighbor indices.
    """

    dimension: int
    mode: str
    nodes: np.ndarray            # (N, d), unit rows
    quadrature_weights: np.ndarray  # (N,), positive, sums to 1
    neighbors: np.ndarray        # (N, k) nearest-neighbor indices

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    # d=2 grids are uniform in angle; cached here for the fast interp path
    @property
    def angles(self) -> np.ndarray:
        return np.arctan2(self.nodes[:, 1], self.nodes[:, 0])

    @property
    def angle_span(self) -> float:
        return np.pi if self.mode == PROJECTIVE else 2.0 * np.pi


@dataclass
class GridFunction:
    """One value per grid node (complex allowed for oscillatory diagnostics)."""

    grid: DirectionGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(f"values shape {v.shape} != ({self.grid.n_nodes},)")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite values in GridFunction")
        self.values = v

    def integrate(self) -> float:
        return float(np.real(np.sum(self.values * self.grid.quadrature_weights)))


@dataclass
class GridMeasure:
    """Nonnegative mass per node."""

    grid: DirectionGrid
    masses: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if m.shape != (self.grid.n_nodes,):
            raise ValueError(f"masses shape {m.shape} != ({self.grid.n_nodes},)")
        if np.any(m < 0):
            raise ValueError("negative mass in GridMeasure")
        self.masses = m

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def pair(self, f: GridFunction | np.ndarray) -> float:
        vals = f.values if isinstance(f, GridFunction) else np.asarray(f)
        return float(np.real(np.sum(vals * self.masses)))


def build_grid(d: int, resolution: int, mode: str = PROJECTIVE) -> DirectionGrid:
    """Construct a grid: two points (d=1 sphere), uniform circle angles
    (d=2, exactly `resolution` nodes), Fibonacci lattice (d=3).

    Projective grids keep one representative per antipodal pair: half-circle
    angles for d=2, an upper-hemisphere Fibonacci lattice for d=3.
    """
    if mode not in (SPHERE, PROJECTIVE):
        raise ValueError(f"unknown mode {mode!r}")
    if d == 1:
        if mode == SPHERE:
            nodes = np.array([[1.0], [-1.0]])
            weights = np.array([0.5, 0.5])
            neighbors = np.array([[1], [0]])
        else:
            nodes = np.array([[1.0]])
            weights = np.array([1.0])
            neighbors = np.array([[0]])
        return DirectionGrid(d, mode, nodes, weights, neighbors)
    if d == 2:
        n = int(resolution)
        if n < 2:
            raise ValueError("resolution must be >= 2 for d = 2")
        span = 2.0 * np.pi if mode == SPHERE else np.pi
        theta = span * np.arange(n) / n
        nodes = np.column_stack([np.cos(theta), np.sin(theta)])
        weights = np.full(n, 1.0 / n)
        neighbors = np.column_stack([(np.arange(n) - 1) % n, (np.arange(n) + 1) % n])
        return DirectionGrid(d, mode, nodes, weights, neighbors)
    if d == 3:
        n = int(resolution)
        if n < 4:
            raise ValueError("resolution must be >= 4 for d = 3")
        k = np.arange(n)
        golden = np.pi * (3.0 - np.sqrt(5.0))
        if mode == SPHERE:
            z = 1.0 - (2.0 * k + 1.0) / n
        else:
            z = (k + 0.5) / n  # open upper hemisphere, one rep per pair
        r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
        phi = golden * k
        nodes = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
        nodes /= np.linalg.norm(nodes, axis=1, keepdims=True)
        weights = np.full(n, 1.0 / n)
        neighbors = _knn_index(nodes, mode, k_neighbors=6)
        return DirectionGrid(d, mode, nodes, weights, neighbors)
    raise ValueError(f"unsupported dimension {d}; grid path covers d in {{1,2,3}}")


def _knn_index(nodes: np.ndarray, mode: str, k_neighbors: int) -> np.ndarray:
    dots = nodes @ nodes.T
    if mode == PROJECTIVE:
        dots = np.abs(dots)
    np.fill_diagonal(dots, -np.inf)
    return np.argsort(-dots, axis=1)[:, :k_neighbors]


def act(g: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Projective action y = gx/|gx| with the norm cocycle log|gx|."""
    gx = g @ x
    norm = float(np.linalg.norm(gx))
    if norm < 1e-300:
        raise FloatingPointError("`|gx|` underflow: numerically degenerate atom")
    return gx / norm, float(np.log(norm))


def act_many(g: np.ndarray, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized act: xs has shape (M, d); returns (M, d) images, (M,) lognorms."""
    gx = xs @ g.T
    norms = np.linalg.norm(gx, axis=1)
    if np.any(norms < 1e-300):
        raise FloatingPointError("`|gx|` underflow: numerically degenerate atom")
    return gx / norms[:, None], np.log(norms)


def distance(x: np.ndarray, y: np.ndarray, mode: str) -> float:
    """Chordal distance |x-y| on the sphere; min(|x-y|, |x+y|) projectively."""
    d_minus = float(np.linalg.norm(x - y))
    if mode == SPHERE:
        return d_minus
    return min(d_minus, float(np.linalg.norm(x + y)))


def wedge_norm(u: np.ndarray, v: np.ndarray) -> float:
    """|u ^ v| = sqrt(|u|^2 |v|^2 - <u,v>^2), the area of the parallelogram."""
    g = float(u @ u) * float(v @ v) - float(u @ v) ** 2
    return float(np.sqrt(max(g, 0.0)))


def contact_cocycle(g: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """log|g(x^y)| - 2 log|gx| for a contact element (x, x^y).

    Requires |x| = 1 and |x^y| = 1 (normalize y so the wedge has unit norm).
    Orthogonal g gives 0; g = c*Id gives 0 (both norms scale away).
    """
    if abs(np.linalg.norm(x) - 1.0) > 1e-9:
        raise ValueError("x must be a unit vector")
    w = wedge_norm(x, y)
    if w < 1e-12:
        raise ValueError("degenerate contact element: |x^y| ~ 0")
    if abs(w - 1.0) > 1e-9:
        raise ValueError("normalize the pair so that |x^y| = 1")
    gx = g @ x
    gy = g @ y
    return float(np.log(wedge_norm(gx, gy)) - 2.0 * np.log(np.linalg.norm(gx)))


def interp_stencil(grid: DirectionGrid, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interpolation stencil for unit queries xs (M, d).

    Returns (idx, w) of shape (M, k) so that interpolate(f, xs) equals
    sum_j w[:, j] * f.values[idx[:, j]].  Weights are a partition of unity
    and the stencil reproduces node values exactly.
    """
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    d = grid.dimension
    n = grid.n_nodes
    if d == 1:
        if grid.mode == PROJECTIVE:
            idx = np.zeros((xs.shape[0], 1), dtype=np.intp)
        else:
            idx = (xs[:, 0] < 0).astype(np.intp)[:, None]
        return idx, np.ones_like(idx, dtype=float)
    if d == 2:
        span = grid.angle_span
        theta = np.arctan2(xs[:, 1], xs[:, 0]) % span
        step = span / n
        pos = theta / step
        j = np.floor(pos).astype(np.intp) % n
        t = pos - np.floor(pos)
        idx = np.column_stack([j, (j + 1) % n])
        w = np.column_stack([1.0 - t, t])
        return idx, w
    # d >= 3: inverse-distance weights over the 3 nearest nodes
    dots = xs @ grid.nodes.T
    if grid.mode == PROJECTIVE:
        dots = np.abs(dots)
    dist2 = np.maximum(0.0, 2.0 - 2.0 * np.clip(dots, -1.0, 1.0))
    k = min(3, n)
    idx = np.argpartition(dist2, kth=k - 1, axis=1)[:, :k]
    rows = np.arange(xs.shape[0])[:, None]
    dist = np.sqrt(dist2[rows, idx])
    exact = dist < 1e-12
    inv = 1.0 / np.maximum(dist, 1e-30)
    w = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), inv)
    w = w / w.sum(axis=1, keepdims=True)
    return idx, w


def interpolate(f: GridFunction, x: np.ndarray) -> float | np.ndarray:
    """Evaluate a grid function at unit vector(s) x; exact at grid nodes."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    idx, w = interp_stencil(f.grid, x)
    out = np.sum(f.values[idx] * w, axis=1)
    return out[0] if single else out


def export_grid_csv(grid: DirectionGrid, path) -> None:
    """Grid export: node_index, coordinates..., quadrature_weight."""
    cols = ["node_index"] + [f"x{i}" for i in range(grid.dimension)]
    cols.append("quadrature_weight")
    lines = [",".join(cols)]
    for j in range(grid.n_nodes):
        parts = [str(j)]
        parts += [f"{v:.17g}" for v in grid.nodes[j]]
        parts.append(f"{grid.quadrature_weights[j]:.17g}")
        lines.append(",".join(parts))
    from pathlib import Path

    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
