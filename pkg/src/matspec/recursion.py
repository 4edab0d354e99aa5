"""Stationary law of the affine recursion X_{n+1} = A X_n + B and its tail.

Sampling is backward: R_n = sum_k A_1...A_{k-1} B_k converges pointwise to
a stationary draw when the Lyapunov exponent is negative, so each sample is
an independent realization of R up to a recorded truncation error (forward
iteration would only converge in law).  Tail diagnostics estimate the decay
index and the directional tail constants two independent ways: order
statistics (Hill) plus plateau of t^alpha P{<R,u> > t}, and the Mellin pole
route (alpha - s) E<R,u>_+^s -> alpha C(u) as s -> alpha-.

Means of |R| can be infinite at alpha <= 1 (the shipped d=1 reference is
exactly critical: E A = 1); medians are reported alongside for that reason.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import stream as _rng

from .ensemble import AffineEnsemble, ensemble_hash
from .projective import interp_stencil
from .transfer import SpectralPoint

__all__ = [
    "TailSampleBank",
    "TailReport",
    "sample_stationary",
    "hill_estimator",
    "hill_stability",
    "empirical_tail",
    "directional_profile",
    "mellin_profile",
    "moment_check",
    "classify_tail_case",
]





@dataclass
class TailSampleBank:
    """Independent stationary draws of R with truncation diagnostics.

    truncation_diag is the worst observed |last backward term| / |R|;
    remainder_bound is |S_n| max|B| / (1 - decay) with the decay rate
    estimated from the sampled products.  A bank whose diagnostic exceeds
    the configured cutoff is flagged under-converged rather than rejected.
    """

    ensemble_label: str
    ensemble_sha: str
    samples: np.ndarray
    n_steps: int
    seed: int
    truncation_diag: float
    remainder_bound: float
    under_converged: bool

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def norms(self) -> np.ndarray:
        if self.samples.ndim == 1:
            return np.abs(self.samples)
        return np.linalg.norm(self.samples, axis=1)

    def directional(self, u: np.ndarray) -> np.ndarray:
        if self.samples.ndim == 1:
            return self.samples * float(np.asarray(u).reshape(-1)[0])
        return self.samples @ np.asarray(u, dtype=float)


@dataclass
class TailReport:
    """Summary of the heavy-tail diagnostics for one bank."""

    alpha_spectral: float
    alpha_hill: float
    alpha_hill_ci: tuple[float, float]
    hill_k: int
    directional_constants: dict = field(default_factory=dict)
    proportionality_cv: float | None = None
    case_label: str = "unknown"
    mellin_constants: dict = field(default_factory=dict)


def _sample_chunk(
    ae: AffineEnsemble, n_steps: int, size: int, seed: int, chunk_idx: int
) -> tuple[np.ndarray, float, float, float]:
    """One independent chunk of backward draws.

    Returns (samples (size, d), worst last-term ratio, worst product norm,
    median per-step log decay)."""
    d = ae.dimension
    rng = _rng(seed, chunk_idx)
    if d == 1:
        a = ae.matrices[:, 0, 0]
        b = ae.translations[:, 0]
        r = np.zeros(size)
        prod = np.ones(size)
        last_term = np.zeros(size)
        steps_done = n_steps
        for k in range(n_steps):
            idx = rng.choice(ae.n_atoms, size=size, p=ae.weights)
            last_term = prod * b[idx]
            r += last_term
            prod = prod * a[idx]
            if np.max(np.abs(prod)) < 1e-12:
                steps_done = k + 1
                break
        prod_norm = np.abs(prod)
        res = r[:, None]
        last_norms = np.abs(last_term)
    else:
        r = np.zeros((size, d))
        prod = np.broadcast_to(np.eye(d), (size, d, d)).copy()
        last_term = np.zeros((size, d))
        steps_done = n_steps
        for k in range(n_steps):
            idx = rng.choice(ae.n_atoms, size=size, p=ae.weights)
            last_term = np.einsum("nij,nj->ni", prod, ae.translations[idx])
            r += last_term
            prod = np.matmul(prod, ae.matrices[idx])
            if np.max(np.abs(prod)) < 1e-12:
                steps_done = k + 1
                break
        prod_norm = np.linalg.norm(prod, axis=(1, 2))
        res = r
        last_norms = np.linalg.norm(last_term, axis=1)
    median_log = float(np.median(np.log(np.maximum(prod_norm, 1e-300))))
    norms = np.linalg.norm(res, axis=1)
    nz = norms > 0
    worst_ratio = float((last_norms[nz] / norms[nz]).max()) if nz.any() else 0.0
    return res, worst_ratio, float(prod_norm.max()), median_log / steps_done


def sample_stationary(
    ae: AffineEnsemble,
    n_steps: int,
    n_samples: int,
    seed: int,
    trunc_cutoff: float = 1e-8,
    chunk: int = 1 << 17,
    lyapunov_negative: bool | None = None,
    n_workers: int = 1,
) -> TailSampleBank:
    """Backward-iterate the recursion to produce n_samples stationary draws.

    Iteration stops at n_steps or once every running product norm is below
    1e-12.  Pass lyapunov_negative=True when the contraction hypothesis was
    verified upstream; None leaves a runtime check: a sampled product whose
    median norm fails to decay aborts the run.  Chunks carry independent
    streams and are merged in index order, so n_workers never changes the
    result.
    """
    d = ae.dimension
    out = np.empty((n_samples, d))
    sizes = []
    done = 0
    while done < n_samples:
        sizes.append(min(chunk, n_samples - done))
        done += sizes[-1]
    if n_workers > 1 and len(sizes) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(
                pool.map(
                    lambda args: _sample_chunk(ae, n_steps, args[1], seed, args[0]),
                    enumerate(sizes),
                )
            )
    else:
        results = [
            _sample_chunk(ae, n_steps, size, seed, i) for i, size in enumerate(sizes)
        ]
    worst_last_ratio = 0.0
    worst_prod = 0.0
    decay_logs: list[float] = []
    pos = 0
    max_b = float(np.linalg.norm(ae.translations, axis=1).max())
    for res, ratio, prod_max, decay_log in results:
        out[pos : pos + res.shape[0]] = res
        pos += res.shape[0]
        worst_last_ratio = max(worst_last_ratio, ratio)
        worst_prod = max(worst_prod, prod_max)
        decay_logs.append(decay_log)
    if lyapunov_negative is None and max(decay_logs) >= 0.0:
        raise RuntimeError(
            "backward partial sums are not converging: "
            "Lyapunov exponent >= 0 suspected"
        )
    decay = float(np.exp(np.mean(decay_logs)))
    remainder = worst_prod * max_b / max(1.0 - decay, 1e-12) if decay < 1 else np.inf
    samples = out[:, 0] if d == 1 else out
    return TailSampleBank(
        ensemble_label=ae.label,
        ensemble_sha=ensemble_hash(ae),
        samples=samples,
        n_steps=n_steps,
        seed=seed,
        truncation_diag=worst_last_ratio,
        remainder_bound=float(remainder),
        under_converged=bool(worst_last_ratio > trunc_cutoff),
    )


def _statistic_values(bank: TailSampleBank, statistic) -> np.ndarray:
    if isinstance(statistic, str):
        if statistic != "norm":
            raise ValueError("statistic must be 'norm' or a direction vector")
        return bank.norms()
    vals = bank.directional(np.asarray(statistic, dtype=float))
    return vals[vals > 0]


def hill_estimator(
    bank: TailSampleBank | np.ndarray,
    statistic="norm",
    k_order: int = 1000,
) -> tuple[float, tuple[float, float]]:
    """Hill estimate of the tail index from the top k_order order statistics.

    alpha_hat = k / sum log(X_(i) / X_(k+1)); the CI is the asymptotic
    normal band alpha_hat (1 +- 1.96/sqrt(k)).
    """
    if isinstance(bank, TailSampleBank):
        data = _statistic_values(bank, statistic)
    else:
        data = np.asarray(bank, dtype=float)
        data = data[data > 0]
    n = data.size
    if k_order >= n / 2:
        raise ValueError(f"k_order = {k_order} too large for {n} positive values")
    if n == 0:
        raise ValueError("no positive values for the requested statistic")
    top = np.partition(data, n - k_order - 1)[n - k_order - 1 :]
    top.sort()
    x_ref = top[0]
    logs = np.log(top[1:] / x_ref)
    alpha_hat = k_order / logs.sum()
    half = 1.96 / np.sqrt(k_order)
    return float(alpha_hat), (float(alpha_hat * (1 - half)), float(alpha_hat * (1 + half)))


def hill_stability(
    bank: TailSampleBank | np.ndarray,
    statistic="norm",
    k_grid: np.ndarray | None = None,
) -> dict:
    """Hill estimates across a k-scan with a plateau flag.

    No stabilization across the scan (max/min ratio above 2) is reported as
    "no power tail": bounded data drives the estimate upward as k shrinks.
    """
    if isinstance(bank, TailSampleBank):
        data = _statistic_values(bank, statistic)
    else:
        data = np.asarray(bank, dtype=float)
        data = data[data > 0]
    n = data.size
    if k_grid is None:
        k_grid = np.unique(
            np.geomspace(max(10, n // 1000), max(20, n // 10), 12).astype(int)
        )
    rows = []
    for k in k_grid:
        if k >= n / 2:
            continue
        a, ci = hill_estimator(data, k_order=int(k))
        rows.append((int(k), a, ci[0], ci[1]))
    alphas = np.array([r[1] for r in rows])
    ratio = float(alphas.max() / alphas.min()) if len(alphas) else np.inf
    return {
        "table": rows,
        "spread_ratio": ratio,
        "power_tail": bool(ratio <= 2.0),
    }


def empirical_tail(
    bank: TailSampleBank,
    u: np.ndarray,
    alpha: float,
    t_grid: np.ndarray | None = None,
    min_exceedances: int = 100,
    n_boot: int = 200,
    boot_seed: int = 12345,
) -> dict:
    """Table of t^alpha P{<R,u> > t} with a plateau estimate of C(u).

    The plateau is the exceedance-weighted mean over the largest decade of t
    still holding >= min_exceedances samples; its CI is a multinomial
    bootstrap over the layer counts of that decade.
    """
    vals = bank.directional(np.asarray(u, dtype=float))
    pos = vals[vals > 0]
    n = bank.n_samples
    if pos.size < min_exceedances:
        raise ValueError("insufficient exceedances at every threshold")
    if t_grid is None:
        t_lo = float(np.quantile(pos, 0.5))
        t_hi = float(pos.max()) * 0.5
        if t_lo <= 0 or t_hi <= t_lo:
            raise ValueError("degenerate positive part; cannot build a t grid")
        t_grid = np.geomspace(t_lo, t_hi, 48)
    t_grid = np.asarray(sorted(t_grid))
    counts = np.array([(pos > t).sum() for t in t_grid])
    y = t_grid**alpha * counts / n
    ok = counts >= min_exceedances
    if not ok.any():
        raise ValueError("insufficient exceedances at every t in the grid")
    t_top = t_grid[ok][-1]
    window = (t_grid >= t_top / 10.0) & (t_grid <= t_top) & (counts > 0)
    w_counts = counts[window].astype(float)
    plateau = float(np.sum(w_counts * y[window]) / w_counts.sum())
    # multinomial bootstrap over the layer counts of the window
    tw = t_grid[window]
    cw = counts[window]
    layers = np.empty(len(tw) + 1, dtype=float)
    layers[0] = n - cw[0]
    layers[1:-1] = cw[:-1] - cw[1:]
    layers[-1] = cw[-1]
    probs = layers / n
    rng = _rng(boot_seed)
    draws = rng.multinomial(n, probs, size=n_boot)
    boot_counts = draws[:, ::-1].cumsum(axis=1)[:, ::-1][:, 1:]  # exceed counts
    boot_y = tw**alpha * boot_counts / n
    bw = boot_counts.astype(float)
    denom = bw.sum(axis=1)
    denom[denom == 0] = 1.0
    boot_plateau = (bw * boot_y).sum(axis=1) / denom
    lo, hi = np.quantile(boot_plateau, [0.025, 0.975])
    return {
        "t": t_grid,
        "counts": counts,
        "scaled_tail": y,
        "window": (float(t_top / 10.0), float(t_top)),
        "plateau": plateau,
        "ci": (float(lo), float(hi)),
    }


def directional_profile(
    bank: TailSampleBank,
    sp_star_alpha: SpectralPoint,
    directions: np.ndarray,
    alpha: float,
    e_values: np.ndarray | None = None,
    min_exceedances: int = 100,
) -> dict:
    """Ratios C_hat(u) / *e^alpha(u) across directions and their coefficient
    of variation; direction-independent in the no-invariant-cone case.

    e_values overrides the denominator (pass cone-restricted eigenfunction
    values when an invariant cone splits the sphere objects).
    """
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    if e_values is None:
        idx, w = interp_stencil(sp_star_alpha.e.grid, directions)
        e_values = np.sum(sp_star_alpha.e.values[idx] * w, axis=1)
    ratios = []
    constants = {}
    for u, ev in zip(directions, e_values):
        try:
            res = empirical_tail(bank, u, alpha, min_exceedances=min_exceedances)
        except ValueError:
            continue
        constants[tuple(np.round(u, 6))] = (res["plateau"], res["ci"])
        ratios.append(res["plateau"] / ev)
    if not ratios:
        raise ValueError("no direction had enough exceedances")
    ratios = np.array(ratios)
    cv = float(ratios.std(ddof=1) / ratios.mean()) if len(ratios) > 1 else 0.0
    return {"constants": constants, "ratios": ratios, "cv": cv}


def mellin_profile(
    bank: TailSampleBank,
    u: np.ndarray,
    alpha: float,
    s_grid: np.ndarray | None = None,
    n_batches: int = 25,
) -> dict:
    """Pole-route estimate of C(u): extrapolate (alpha - s) E<R,u>_+^s
    linearly to s = alpha and divide by alpha.

    The fit weights each s by an inverse batch-means variance, which keeps
    the noisy near-pole moments from dominating.  s values whose empirical
    moment overflows are dropped (adaptive clip).  At desk-scale sample
    sizes the empirical moment misses the tail mass above the observed
    maximum, so the estimate runs systematically a little low; the
    cross-check budget against the plateau route absorbs that.
    """
    if s_grid is None:
        s_grid = np.linspace(0.5 * alpha, 0.9 * alpha, 8)
    s_grid = np.asarray(sorted(s_grid))
    if s_grid.max() < 0.9 * alpha:
        raise ValueError("s grid must approach alpha (max >= 0.9 alpha)")
    vals = bank.directional(np.asarray(u, dtype=float))
    pos = vals[vals > 0]
    n = bank.n_samples
    nb = pos.size // n_batches
    if nb < 2:
        raise ValueError("too few positive values for a batch-weighted fit")
    scale = pos.size / n  # batch means cover the positive part only
    rows = []
    for s in s_grid:
        if s <= 0 or s >= alpha:
            continue
        with np.errstate(over="ignore"):
            powed = pos**s
            m = (alpha - s) * float(powed.sum()) / n
        if not np.isfinite(m):
            continue  # clip: too close to alpha for these samples
        bm = (alpha - s) * powed[: nb * n_batches].reshape(n_batches, nb).mean(axis=1)
        se = float(bm.std(ddof=1) * scale / np.sqrt(n_batches))
        rows.append((float(s), m, max(se, 1e-12)))
    if len(rows) < 3:
        raise ValueError("fewer than 3 usable s values after clipping")
    arr = np.array(rows)
    ss, ms, ses = arr[:, 0], arr[:, 1], arr[:, 2]
    w = 1.0 / ses**2
    sw = w.sum()
    sx = (w * ss).sum()
    sy = (w * ms).sum()
    sxx = (w * ss * ss).sum()
    sxy = (w * ss * ms).sum()
    den = sw * sxx - sx * sx
    slope = (sw * sxy - sx * sy) / den
    intercept = (sy - slope * sx) / sw
    limit = float(intercept + slope * alpha)
    var = (sxx - 2 * alpha * sx + alpha * alpha * sw) / den
    return {
        "table": [(s, m) for s, m, _ in rows],
        "pole_limit": limit,
        "c_estimate": limit / alpha,
        "c_se": float(np.sqrt(max(var, 0.0)) / alpha),
    }


def moment_check(
    bank: TailSampleBank,
    beta_grid: np.ndarray,
    k_values: dict[float, float] | None = None,
    n_batches: int = 10,
) -> list[dict]:
    """Empirical E|R|^beta with batch stability and divergence flags.

    Finite exactly when k(beta) < 1; at beta >= alpha the empirical moment
    is dominated by extremes (large max_share) and grows with the sample.
    """
    norms = bank.norms()
    n = norms.size
    batch = n // n_batches
    rows = []
    for beta in np.asarray(beta_grid, dtype=float):
        powed = norms**beta if beta != 0 else np.ones_like(norms)
        mean = float(powed.mean())
        bm = powed[: batch * n_batches].reshape(n_batches, batch).mean(axis=1)
        spread = float(bm.std(ddof=1) / mean) if mean > 0 else np.inf
        max_share = float(powed.max() / powed.sum()) if powed.sum() > 0 else 0.0
        prefix = float(powed[: max(1, n // 10)].mean())
        growth = mean / prefix if prefix > 0 else np.inf
        k_beta = None if k_values is None else k_values.get(float(beta))
        expected_divergent = bool(k_beta is not None and k_beta >= 1.0)
        rows.append(
            {
                "beta": float(beta),
                "k_beta": k_beta,
                "mean": mean,
                "median": float(np.median(powed)),
                "batch_rel_spread": spread,
                "max_share": max_share,
                "growth_vs_prefix": float(growth),
                "expected_divergent": expected_divergent,
                "empirically_unstable": bool(max_share > 0.02),
            }
        )
    return rows


def classify_tail_case(
    ae: AffineEnsemble,
    cone_case: str,
    attractor_center: np.ndarray | None = None,
    n_paths: int = 4096,
    n_steps: int = 400,
    seed: int = 0,
    top_quantile: float = 0.995,
    min_hits: int = 5,
) -> str:
    """Trichotomy of the stationary tail: "I" without an invariant cone;
    with one, "II'" when large forward states charge both antipodal
    attractor sides and "II''" when only one side is charged.

    A side counts as charged when at least min_hits census states above the
    top-quantile magnitude cut lie on it; the minority constant can be tiny,
    so the decision is count-based, with the cut required to clear the
    additive scale (else the census cannot see the tail and reports
    unknown).
    """
    if cone_case == "I":
        return "I"
    if cone_case != "II" or attractor_center is None:
        return "unknown"
    center = np.asarray(attractor_center, dtype=float)
    rng = _rng(seed, 777)
    d = ae.dimension
    x = rng.standard_normal((n_paths, d)) * 0.1
    dirs: list[np.ndarray] = []
    norm_cut: list[np.ndarray] = []
    for k in range(n_steps):
        idx = rng.choice(ae.n_atoms, size=n_paths, p=ae.weights)
        x = np.einsum("nij,nj->ni", ae.matrices[idx], x) + ae.translations[idx]
        if k >= n_steps // 2:
            nx = np.linalg.norm(x, axis=1)
            dirs.append((x / np.maximum(nx, 1e-300)[:, None]).copy())
            norm_cut.append(nx.copy())
    directions = np.vstack(dirs)
    magnitudes = np.concatenate(norm_cut)
    cut = np.quantile(magnitudes, top_quantile)
    scale_b = float(np.linalg.norm(ae.translations, axis=1).max())
    if cut < 10.0 * scale_b:
        return "unknown"
    big = directions[magnitudes >= cut]
    if big.size == 0:
        return "unknown"
    side = big @ center
    hits_plus = int((side > 0).sum())
    hits_minus = int((side < 0).sum())
    if hits_plus >= min_hits and hits_minus >= min_hits:
        return "II'"
    return "II''"
