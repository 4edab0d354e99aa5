"""The k(s) curve, the tail index alpha, and Lyapunov-type diagnostics.

k(s) is the dominant eigenvalue of the s-weighted transfer operator,
equivalently lim (E|S_n|^s)^{1/n} for the product S_n of n i.i.d. atoms;
log k is convex, k(0) = 1, and the tail index alpha is the positive root
of k(alpha) = 1.  The Lyapunov exponent of the s-tilted path measure is
k'(s)/k(s) and is computed by three independent routes (finite differences
of log k, tilted Monte Carlo, grid quadrature) that must agree.

Tilted sampling realizes the s-tilted path measure through its Markov-chain
disintegration (the one-step kernel of transfer.qs_kernel) rather than by
importance weights on the untilted law, whose weights degenerate
exponentially in the path length.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .ensemble import LinearEnsemble, transpose
from .rng import stream as _rng
from .projective import PROJECTIVE, DirectionGrid, build_grid, interp_stencil
from .transfer import (
    SpectralPoint,
    k_closed_form_1d,
    k_prime_closed_form_1d,
    power_iterate,
    tilted_probs,
)

__all__ = [
    "SpectralCurve",
    "TiltedChainState",
    "KSolver",
    "k_mc_oracle",
    "solve_alpha",
    "lyapunov",
    "lyapunov_gap",
    "contraction_rate",
    "backward_direction",
    "run_tilted_chain",
    "compute_curve",
]

DEFAULT_RESOLUTION = 512





@dataclass
class TiltedChainState:
    """State of one tilted-chain realization: direction, accumulated log
    norm of the running product applied to the start direction, step count."""

    x: np.ndarray
    V: float
    n: int


@dataclass
class SpectralCurve:
    """Sampled k(s) curve with the derived scalars."""

    s_values: np.ndarray
    points: list[SpectralPoint]
    alpha: float | None = None
    k_prime_alpha: float | None = None
    lyapunov_table: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.s_values, dtype=float)
        if np.any(np.diff(s) <= 0):
            raise ValueError("s values must be strictly increasing")
        self.s_values = s

    @property
    def k_values(self) -> np.ndarray:
        return np.array([p.k for p in self.points])


class KSolver:
    """k(s) evaluations with caching; closed form in d=1, grid elsewhere."""

    def __init__(
        self,
        e: LinearEnsemble,
        grid: DirectionGrid | None = None,
        tol: float = 1e-11,
        max_iter: int = 20000,
    ):
        self.ensemble = e
        self.tol = tol
        self.max_iter = max_iter
        if e.dimension == 1:
            self.grid = grid or build_grid(1, 1, PROJECTIVE)
        else:
            self.grid = grid or build_grid(e.dimension, DEFAULT_RESOLUTION, PROJECTIVE)
        self._points: dict[float, SpectralPoint] = {}

    def k(self, s: float) -> float:
        if s < 0:
            raise ValueError("negative exponents are not supported")
        if self.ensemble.dimension == 1:
            return k_closed_form_1d(self.ensemble, s)
        return self.point(s).k

    def point(self, s: float, compute_p: bool = False) -> SpectralPoint:
        key = float(s)
        sp = self._points.get(key)
        if sp is None or (compute_p and sp.p is None):
            sp = power_iterate(
                self.ensemble, key, self.grid,
                tol=self.tol, max_iter=self.max_iter, compute_p=compute_p,
            )
            self._points[key] = sp
        return sp


def k_mc_oracle(
    e: LinearEnsemble,
    s: float,
    n: int,
    n_samples: int,
    seed: int,
    chunk: int = 1 << 15,
) -> tuple[float, float]:
    """Independent Monte Carlo oracle for k(s): (mean |S_n|^s)^{1/n} over
    n_samples products of n i.i.d. atoms, with a delta-method stderr.

    The running product is renormalized (Frobenius) every step with a log
    accumulator; the exact operator 2-norm enters once at the end, so there
    is no overflow for any n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if s == 0.0:
        return 1.0, 0.0
    d = e.dimension
    total = 0.0
    total_sq = 0.0
    done = 0
    chunk_idx = 0
    while done < n_samples:
        size = min(chunk, n_samples - done)
        rng = _rng(seed, chunk_idx)
        if d == 1:
            a = np.abs(e.matrices[:, 0, 0])
            idx = rng.choice(e.n_atoms, size=(size, n), p=e.weights)
            lognorm = np.log(a)[idx].sum(axis=1)
        else:
            mats = np.broadcast_to(np.eye(d), (size, d, d)).copy()
            logs = np.zeros(size)
            for _ in range(n):
                idx = rng.choice(e.n_atoms, size=size, p=e.weights)
                mats = np.matmul(e.matrices[idx], mats)
                fro = np.linalg.norm(mats, axis=(1, 2))
                mats /= fro[:, None, None]
                logs += np.log(fro)
            sv1 = np.linalg.svd(mats, compute_uv=False)[:, 0]
            lognorm = logs + np.log(sv1)
        w = np.exp(s * lognorm)
        total += w.sum()
        total_sq += (w * w).sum()
        done += size
        chunk_idx += 1
    m1 = total / n_samples
    var = max(total_sq / n_samples - m1 * m1, 0.0)
    se_m1 = np.sqrt(var / n_samples)
    k_hat = m1 ** (1.0 / n)
    se_k = k_hat * se_m1 / (n * m1)
    return float(k_hat), float(se_k)


def solve_alpha(
    e: LinearEnsemble,
    grid: DirectionGrid | None = None,
    bracket: tuple[float, float] = (0.1, 2.0),
    tol: float = 1e-10,
    s_cap: float = 64.0,
    solver: KSolver | None = None,
) -> float:
    """Positive root of k(alpha) = 1 by bracketed root finding.

    The user bracket is verified (k(lo) < 1 < k(hi)) and expanded
    geometrically when it fails, up to s_cap.  No sign change within the cap
    raises: that happens exactly when every product keeps spectral radius
    <= 1 or the walk is not contracting at s = 0.
    """
    ks = solver or KSolver(e, grid)
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo <= 0:
        lo = 1e-3
    tries = 0
    while ks.k(lo) >= 1.0 and tries < 60:
        lo /= 2.0
        tries += 1
    tries = 0
    while ks.k(hi) <= 1.0 and hi < s_cap:
        hi = min(2.0 * hi, s_cap)
        tries += 1
    if not (ks.k(lo) < 1.0 < ks.k(hi)):
        raise ValueError(
            "no root: k(s) - 1 has no sign change on the expanded bracket; "
            "a root needs a contracting walk (Lyapunov exponent < 0 at s=0) "
            "and some atom product with spectral radius > 1"
        )
    alpha = brentq(lambda s: ks.k(s) - 1.0, lo, hi, xtol=1e-13, rtol=8.9e-16)
    if abs(ks.k(alpha) - 1.0) > tol:
        raise ValueError(
            f"root refinement stalled: |k(alpha)-1| = {abs(ks.k(alpha)-1.0):.3e} > {tol}"
        )
    return float(alpha)


def _tilted_step(
    e: LinearEnsemble,
    sp: SpectralPoint,
    xs: np.ndarray,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """One vectorized step of the tilted chain.

    Returns (chosen atom index (M,), new directions (M, d),
    chosen-step lognorms (M,), kernel normalizers (M,))."""
    probs, normalizer, images, lognorms = tilted_probs(e, sp, xs)
    cdf = np.cumsum(probs, axis=1)
    u = rng.random((xs.shape[0], 1))
    choice = np.minimum((u > cdf).sum(axis=1), e.n_atoms - 1)
    rows = np.arange(xs.shape[0])
    return choice, images[rows, choice], lognorms[rows, choice], normalizer


def _sample_pi_nodes(
    sp: SpectralPoint, size: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw start directions from the stationary law pi^s (node masses)."""
    idx = rng.choice(sp.e.grid.n_nodes, size=size, p=sp.pi)
    return sp.e.grid.nodes[idx]


def run_tilted_chain(
    e: LinearEnsemble,
    sp: SpectralPoint,
    x0: np.ndarray,
    n_steps: int,
    seed: int,
) -> TiltedChainState:
    """Single tilted-chain trajectory; V accumulates log|g_k S_{k-1} x|."""
    rng = _rng(seed)
    x = np.atleast_2d(np.asarray(x0, dtype=float))
    V = 0.0
    for _ in range(n_steps):
        _, x, ln, _ = _tilted_step(e, sp, x, rng)
        V += float(ln[0])
    return TiltedChainState(x=x[0], V=V, n=n_steps)


def lyapunov(
    e: LinearEnsemble,
    s: float,
    method: str = "finite_diff",
    grid: DirectionGrid | None = None,
    sp: SpectralPoint | None = None,
    solver: KSolver | None = None,
    h: float = 1e-3,
    n_chains: int = 64,
    n_steps: int = 4000,
    seed: int = 0,
) -> tuple[float, float | None]:
    """Lyapunov exponent of the s-tilted walk, equal to k'(s)/k(s).

    finite_diff: Richardson-extrapolated central differences of log k
    (analytic Mellin-sum derivative in d=1, where it is exact).
    tilted_mc: long-run average of log|g x| along the tilted chain, stderr
    from independent chains; burn-in is 10% of the path, at least 100 steps.
    quadrature: node sum of pi^s(x) q^s(x, g) log|g x| on the grid.
    """
    if s < 0:
        raise ValueError("negative exponents are not supported")
    d = e.dimension
    if method == "finite_diff":
        if d == 1:
            return k_prime_closed_form_1d(e, s) / k_closed_form_1d(e, s), None
        ks = solver or KSolver(e, grid)
        hh = min(h, s / 2) if s > 0 else h

        def central(step: float) -> float:
            if s - step < 0:
                return (np.log(ks.k(s + step)) - np.log(ks.k(s))) / step
            return (np.log(ks.k(s + step)) - np.log(ks.k(s - step))) / (2 * step)

        c1 = central(hh)
        c2 = central(hh / 2)
        return float((4.0 * c2 - c1) / 3.0), None
    if method == "quadrature":
        if d == 1:
            a = np.abs(e.matrices[:, 0, 0])
            q = e.weights * a**s / k_closed_form_1d(e, s)
            q = q / q.sum()
            return float(np.sum(q * np.log(a))), None
        if sp is None:
            sp = (solver or KSolver(e, grid)).point(s)
        probs, _, _, lognorms = tilted_probs(e, sp, sp.e.grid.nodes)
        per_node = np.sum(probs * lognorms, axis=1)
        return float(np.sum(sp.pi * per_node)), None
    if method == "tilted_mc":
        rng = _rng(seed, 101)
        burn = max(100, n_steps // 10)
        if d == 1:
            a = np.abs(e.matrices[:, 0, 0])
            q = e.weights * a**s / k_closed_form_1d(e, s)
            q = q / q.sum()
            draws = rng.choice(len(a), size=(n_chains, n_steps), p=q)
            vals = np.log(a)[draws].mean(axis=1)
            return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(n_chains))
        if sp is None:
            sp = (solver or KSolver(e, grid)).point(s)
        x = _sample_pi_nodes(sp, n_chains, rng)
        sums = np.zeros(n_chains)
        for step in range(n_steps):
            _, x, ln, _ = _tilted_step(e, sp, x, rng)
            if step >= burn:
                sums += ln
        means = sums / (n_steps - burn)
        return float(means.mean()), float(means.std(ddof=1) / np.sqrt(n_chains))
    raise ValueError(f"unknown method {method!r}")


def _wedge_operators(e: LinearEnsemble) -> np.ndarray:
    """Per-atom action on 2-vectors: det (d=2) or cofactor matrix (d=3)."""
    d = e.dimension
    if d == 2:
        return np.linalg.det(e.matrices)  # scalar multipliers
    if d == 3:
        dets = np.linalg.det(e.matrices)
        invT = np.transpose(np.linalg.inv(e.matrices), (0, 2, 1))
        return dets[:, None, None] * invT
    raise ValueError("pair contraction diagnostics cover d in {2, 3}")


def _pair_contraction_logs(
    e: LinearEnsemble,
    sp: SpectralPoint,
    x0: np.ndarray,
    v: np.ndarray,
    w: np.ndarray,
    n: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """log of the sine-distance ratio after n tilted steps, per path.

    Works in log space through the wedge cocycle
    log sin(angle(S v, S w)) = log|S (v^w)| - log|S v| - log|S w|,
    so arbitrarily strong contraction never underflows.  x0, v, w are
    (M, d) rows; the chain is driven from x0 (same atoms act on v and w).
    """
    d = e.dimension
    wedge_ops = _wedge_operators(e)
    x = x0.copy()
    v_dir = v.copy()
    w_dir = w.copy()
    v_log = np.zeros(len(v))
    w_log = np.zeros(len(v))
    if d == 2:
        cross0 = v[:, 0] * w[:, 1] - v[:, 1] * w[:, 0]
        wedge_log = np.log(np.abs(cross0))
        wedge_dir = None
    else:
        cr = np.cross(v, w)
        nrm = np.linalg.norm(cr, axis=1)
        wedge_log = np.log(nrm)
        wedge_dir = cr / nrm[:, None]
    sin0 = wedge_log.copy()  # v, w are unit: log sin = wedge log
    for _ in range(n):
        choice, x, _, _ = _tilted_step(e, sp, x, rng)
        g = e.matrices[choice]
        gv = np.einsum("nij,nj->ni", g, v_dir)
        gw = np.einsum("nij,nj->ni", g, w_dir)
        nv = np.linalg.norm(gv, axis=1)
        nw = np.linalg.norm(gw, axis=1)
        v_dir = gv / nv[:, None]
        w_dir = gw / nw[:, None]
        v_log += np.log(nv)
        w_log += np.log(nw)
        if d == 2:
            wedge_log += np.log(np.abs(wedge_ops[choice]))
        else:
            y = np.einsum("nij,nj->ni", wedge_ops[choice], wedge_dir)
            ny = np.linalg.norm(y, axis=1)
            wedge_dir = y / ny[:, None]
            wedge_log += np.log(ny)
    sin_n = wedge_log - v_log - w_log
    return sin_n - sin0


def _random_unit(rng: np.random.Generator, size: int, d: int) -> np.ndarray:
    x = rng.standard_normal((size, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def lyapunov_gap(
    e: LinearEnsemble,
    s: float,
    n: int = 40,
    n_pairs: int = 24,
    n_paths: int = 64,
    seed: int = 0,
    grid: DirectionGrid | None = None,
    sp: SpectralPoint | None = None,
) -> tuple[float, float]:
    """Estimated difference of the two leading Lyapunov exponents: the
    per-step tilted-mean log contraction of direction pairs, maximized over
    sampled (x, v, v'); strictly negative when the dominant exponent is
    simple.  Returns (gap estimate, stderr of the maximizing pair).
    """
    if e.dimension < 2:
        raise ValueError("the pair-contraction gap needs d >= 2")
    if sp is None:
        sp = KSolver(e, grid).point(s)
    rng = _rng(seed, 202)
    best = -np.inf
    best_se = np.nan
    for pair in range(n_pairs):
        x0 = np.repeat(_random_unit(rng, 1, e.dimension), n_paths, axis=0)
        v = np.repeat(_random_unit(rng, 1, e.dimension), n_paths, axis=0)
        w = np.repeat(_random_unit(rng, 1, e.dimension), n_paths, axis=0)
        ratios = _pair_contraction_logs(e, sp, x0, v, w, n, rng) / n
        m = float(ratios.mean())
        se = float(ratios.std(ddof=1) / np.sqrt(n_paths))
        if m > best:
            best, best_se = m, se
    return best, best_se


def contraction_rate(
    e: LinearEnsemble,
    s: float,
    eps: float,
    n: int = 30,
    seed: int = 0,
    n_pairs: int = 64,
    n_paths: int = 128,
    grid: DirectionGrid | None = None,
    sp: SpectralPoint | None = None,
) -> float:
    """n-th root of sup over probe pairs of the tilted mean of
    (distance ratio)^eps; below 1 in the Doeblin-Fortet regime.

    The sup is approximated on 64 quasi-random pairs plus the 8 worst pairs
    of a coarse pre-scan, re-run with a 4x path budget.  The sine distance
    stands in for the chordal one: identical exponential rate, bounded
    multiplicative deviation that the n-th root washes out.
    """
    eps_max = 1.0 if s == 0.0 else min(1.0, s)
    if not 0.0 < eps <= eps_max:
        raise ValueError("eps must lie in (0, min(1, s)] (Holder range)")
    if e.dimension < 2:
        raise ValueError("contraction diagnostics need d >= 2")
    if sp is None:
        sp = KSolver(e, grid).point(s)
    rng = _rng(seed, 303)

    def run_pairs(k_pairs: int, paths: int, pre: list | None = None):
        results = []
        for j in range(k_pairs):
            if pre is None:
                x0 = np.repeat(_random_unit(rng, 1, e.dimension), paths, axis=0)
                v = np.repeat(_random_unit(rng, 1, e.dimension), paths, axis=0)
                w = np.repeat(_random_unit(rng, 1, e.dimension), paths, axis=0)
            else:
                x0, v, w = (np.repeat(arr[:1], paths, axis=0) for arr in pre[j])
            logs = _pair_contraction_logs(e, sp, x0, v, w, n, rng)
            results.append((float(np.mean(np.exp(eps * logs))), (x0, v, w)))
        return results

    coarse = run_pairs(n_pairs, max(8, n_paths // 4))
    coarse.sort(key=lambda t: -t[0])
    worst = [t[1] for t in coarse[:8]]
    refined = run_pairs(len(worst), n_paths, pre=worst)
    sup_ratio = max(max(r for r, _ in coarse), max(r for r, _ in refined))
    return float(sup_ratio ** (1.0 / n))


def backward_direction(
    e: LinearEnsemble,
    s: float,
    n: int = 200,
    seed: int = 0,
    n_probes: int = 32,
    n_repeats: int = 200,
    grid: DirectionGrid | None = None,
    sp: SpectralPoint | None = None,
    sp_star: SpectralPoint | None = None,
) -> dict:
    """Dominant backward direction of a long tilted product.

    For each repeat, the top left-singular direction z of S_n is extracted
    and |S_n x|/|S_n| is compared with |<z, x>| over probe directions; the
    empirical law of z across repeats is compared with the stationary law
    of the transposed chain by a nearest-node histogram distance (TV).
    Flags the run when the product shows no contraction (isometries).
    """
    if e.dimension < 2:
        raise ValueError("the backward direction needs d >= 2")
    solver = KSolver(e, grid)
    if sp is None:
        sp = solver.point(s)
    if sp_star is None:
        sp_star = power_iterate(
            transpose(e), s, solver.grid, tol=solver.tol, compute_p=False
        )
    rng = _rng(seed, 404)
    d = e.dimension
    probes = _random_unit(rng, n_probes, d)
    grid_nodes = sp_star.e.grid
    x = _sample_pi_nodes(sp, n_repeats, rng)
    mats = np.broadcast_to(np.eye(d), (n_repeats, d, d)).copy()
    for _ in range(n):
        choice, x, _, _ = _tilted_step(e, sp, x, rng)
        mats = np.matmul(e.matrices[choice], mats)
        fro = np.linalg.norm(mats, axis=(1, 2))
        mats /= fro[:, None, None]
    # |S_n x| ~ sigma_1 |<v_1, x>|: the backward direction is the top right
    # singular vector of S_n (equivalently the dominant direction of S_n^*)
    _, sv, vt = np.linalg.svd(mats)
    z = vt[:, 0, :]
    ratio_gap = sv[:, 1] / sv[:, 0]
    degenerate = int(np.sum(ratio_gap > 0.9))
    # probe verification on normalized products (scale cancels)
    norms_x = np.linalg.norm(np.einsum("nij,pj->npi", mats, probes), axis=2)
    pred = np.abs(z @ probes.T)
    resid = np.abs(norms_x / sv[:, :1] - pred)
    max_residual = float(resid.max())
    # nearest-node histogram of z versus the transposed stationary law,
    # aggregated into coarse sectors so the TV distance is meaningful at
    # moderate repeat counts
    idx, _ = interp_stencil(grid_nodes, z)
    z_hits = np.zeros(grid_nodes.n_nodes)
    np.add.at(z_hits, idx[:, 0], 1.0)
    emp = z_hits / z_hits.sum()
    target = sp_star.pi
    n_sectors = min(16, grid_nodes.n_nodes)
    sector = (np.arange(grid_nodes.n_nodes) * n_sectors) // grid_nodes.n_nodes
    emp_sec = np.bincount(sector, weights=emp, minlength=n_sectors)
    tgt_sec = np.bincount(sector, weights=target, minlength=n_sectors)
    tv = 0.5 * float(np.abs(emp_sec - tgt_sec).sum())
    return {
        "z_star": z[0],
        "max_probe_residual": max_residual,
        "law_tv_distance": tv,
        "degenerate_paths": degenerate,
        "flag_no_contraction": degenerate > n_repeats // 2,
    }


def compute_curve(
    e: LinearEnsemble,
    s_values: np.ndarray,
    grid: DirectionGrid | None = None,
    tol: float = 1e-11,
    solve_root: bool = True,
    seed: int = 0,
    mc_check: bool = False,
) -> SpectralCurve:
    """Solve the eigen-problem along an s-grid and attach alpha, k'(alpha)
    and the Lyapunov table (finite_diff and quadrature routes; tilted_mc
    when mc_check is set)."""
    ks = KSolver(e, grid, tol=tol)
    s_values = np.asarray(sorted(float(s) for s in s_values))
    points = [ks.point(s, compute_p=True) for s in s_values]
    curve = SpectralCurve(s_values=s_values, points=points)
    table: dict[str, list[float]] = {"finite_diff": [], "quadrature": []}
    if mc_check:
        table["tilted_mc"] = []
        table["tilted_mc_se"] = []
    for s, sp in zip(s_values, points):
        table["finite_diff"].append(lyapunov(e, s, "finite_diff", solver=ks)[0])
        table["quadrature"].append(lyapunov(e, s, "quadrature", sp=sp, solver=ks)[0])
        if mc_check:
            L, se = lyapunov(e, s, "tilted_mc", sp=sp, solver=ks, seed=seed)
            table["tilted_mc"].append(L)
            table["tilted_mc_se"].append(se if se is not None else np.nan)
    curve.lyapunov_table = table
    if solve_root:
        try:
            curve.alpha = solve_alpha(e, solver=ks)
            curve.k_prime_alpha = (
                lyapunov(e, curve.alpha, "finite_diff", solver=ks)[0]
                * ks.k(curve.alpha)
            )
        except ValueError:
            curve.alpha = None
    return curve
