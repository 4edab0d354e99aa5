"""Renewal asymptotics of the linear walk and the dual ladder walk.

Expanding regime (Lyapunov exponent > 0): the mean number of visits of
S_n v to a log-annulus of width h around direction probes converges, as the
start v -> 0, to h * nu(probe) / L; measured visit counts are compared with
that prediction, never fitted to it.

Contracting regime with tail index alpha: level-crossing probabilities
P{sup_n |S_n u| > t} decay like t^{-alpha} A e^alpha(u); naive counting
starves at useful t, so the tilted chain supplies an exact
importance-sampling estimate with per-path likelihood ratio
k(alpha)^n e^alpha(u) / (e^alpha(S_n.u) |S_n u|^alpha) evaluated at the
first crossing.  The dual ladder walk (u_n, p_n) drives the positivity of
directional tail constants: its ladder epochs are the record times of
p^{-1} p_n |S'_n u| and the mean inter-record gap ties the ladder height
growth rate to L(alpha).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import AffineEnsemble, LinearEnsemble, transpose
from .projective import interp_stencil
from .rng import stream as _rng
from .spectrum import _tilted_step
from .transfer import SpectralPoint, tilted_probs

__all__ = [
    "RenewalReport",
    "DualWalkRecord",
    "AnnulusFunction",
    "potential_profile_expanding",
    "cramer_constant",
    "tilted_potential_profile",
    "dual_walk_simulate",
]


@dataclass(frozen=True)
class AnnulusFunction:
    """Indicator test function: log-magnitude window x directional cap.

    probe_center None means all directions; otherwise membership is chordal
    distance to the (sign-folded) center below probe_radius.
    """

    name: str
    log_lo: float
    log_hi: float
    probe_center: np.ndarray | None = None
    probe_radius: float = 0.5

    def direction_mask(self, dirs: np.ndarray) -> np.ndarray:
        if self.probe_center is None:
            return np.ones(dirs.shape[0], dtype=bool)
        c = np.asarray(self.probe_center, dtype=float)
        dots = np.abs(dirs @ c)
        dist = np.sqrt(np.maximum(0.0, 2.0 - 2.0 * np.clip(dots, -1.0, 1.0)))
        return dist < self.probe_radius

    def probe_mass(self, nu) -> float:
        """nu-mass of the directional cap (GridMeasure)."""
        if self.probe_center is None:
            return 1.0
        mask = self.direction_mask(nu.grid.nodes)
        return float(nu.masses[mask].sum())


@dataclass
class RenewalReport:
    """Measured-vs-predicted table; predictions come only from spectral
    inputs, never from the measured values."""

    regime: str
    rows: list[dict] = field(default_factory=list)
    caveats: list[str] = field(default_factory=list)


def potential_profile_expanding(
    e: LinearEnsemble,
    test_functions: list[AnnulusFunction],
    L: float,
    n_paths: int = 4096,
    max_steps: int = 2000,
    seed: int = 0,
    v0_scale: float = 2.0**-30,
    nu=None,
    arithmetic_caveat: bool = False,
) -> RenewalReport:
    """Visit counts of the expanding walk to annulus functions versus the
    renewal prediction (log_hi - log_lo) * nu(probe) / L.

    L must be the s=0 Lyapunov exponent, estimated positive upstream; paths
    that fail to climb past every window within max_steps are flagged.
    """
    if L <= 0:
        raise ValueError("expanding profile requires a positive Lyapunov exponent")
    rng = _rng(seed, 550)
    d = e.dimension
    x = rng.standard_normal((n_paths, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    logmag = np.full(n_paths, np.log(v0_scale))
    top = max(f.log_hi for f in test_functions)
    counts = np.zeros((len(test_functions), n_paths))
    active = np.ones(n_paths, dtype=bool)
    steps = 0
    while active.any() and steps < max_steps:
        dirs = x[active]
        mags = logmag[active]
        for j, f in enumerate(test_functions):
            inside = (mags >= f.log_lo) & (mags < f.log_hi)
            if inside.any():
                sel = inside & f.direction_mask(dirs)
                idxs = np.flatnonzero(active)[sel]
                counts[j, idxs] += 1.0
        idx = rng.choice(e.n_atoms, size=int(active.sum()), p=e.weights)
        g = e.matrices[idx]
        y = np.einsum("nij,nj->ni", g, dirs)
        norms = np.linalg.norm(y, axis=1)
        x[active] = y / norms[:, None]
        logmag[active] = mags + np.log(norms)
        active[active] = logmag[active, None][:, 0] <= top + 10.0
        steps += 1
    stuck = int(active.sum())
    report = RenewalReport(regime="expanding")
    if arithmetic_caveat:
        report.caveats.append(
            "arithmetic log-lattice: pointwise renewal limit not guaranteed; "
            "mean-level comparison with wide tolerance only"
        )
    if stuck:
        report.caveats.append(f"{stuck} paths had not left the window region "
                              f"after {max_steps} steps")
    for j, f in enumerate(test_functions):
        measured = float(counts[j].mean())
        se = float(counts[j].std(ddof=1) / np.sqrt(n_paths))
        mass = f.probe_mass(nu) if nu is not None else 1.0
        predicted = (f.log_hi - f.log_lo) * mass / L
        report.rows.append(
            {
                "name": f.name,
                "measured": measured,
                "predicted": float(predicted),
                "stderr": se,
                "flag": "stuck-paths" if stuck else "",
            }
        )
    return report


def cramer_constant(
    e: LinearEnsemble,
    alpha: float,
    u: np.ndarray,
    t_grid: np.ndarray,
    n_paths: int,
    seed: int,
    method: str = "tilted",
    sp: SpectralPoint | None = None,
    max_steps: int = 4000,
    drop_nats: float = 60.0,
    min_hits: int = 25,
) -> list[dict]:
    """Table of A_hat(u, t) = t^alpha P{sup_n |S_n u| > t} per threshold.

    naive: direct path counting under the untilted walk; a path retires once
    its log magnitude falls drop_nats below its running maximum (the sup can
    then no longer move at the thresholds of interest).  Rows with fewer
    than min_hits exceedances are flagged starved.

    tilted: sequential importance sampling under the alpha-tilted chain with
    the exact likelihood ratio at first crossing; every path crosses every
    level since the tilted drift is positive.
    """
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    log_ts = np.log(np.asarray(sorted(t_grid)))
    t_arr = np.exp(log_ts)
    rng = _rng(seed, 660)
    if method == "naive":
        d = e.dimension
        x = np.tile(u, (n_paths, 1))
        logmag = np.zeros(n_paths)
        running_max = np.zeros(n_paths)
        active = np.ones(n_paths, dtype=bool)
        steps = 0
        while active.any() and steps < max_steps:
            sel = np.flatnonzero(active)
            idx = rng.choice(e.n_atoms, size=sel.size, p=e.weights)
            g = e.matrices[idx]
            y = np.einsum("nij,nj->ni", g, x[sel])
            norms = np.linalg.norm(y, axis=1)
            x[sel] = y / norms[:, None]
            logmag[sel] += np.log(norms)
            running_max[sel] = np.maximum(running_max[sel], logmag[sel])
            done = logmag[sel] < running_max[sel] - drop_nats
            active[sel[done]] = False
            steps += 1
        rows = []
        for lt, t in zip(log_ts, t_arr):
            hits = int((running_max > lt).sum())
            p_hat = hits / n_paths
            se = np.sqrt(max(p_hat * (1 - p_hat), 0.0) / n_paths)
            rows.append(
                {
                    "t": float(t),
                    "estimate": float(t**alpha * p_hat),
                    "stderr": float(t**alpha * se),
                    "hits": hits,
                    "flag": "starved" if hits < min_hits else "",
                }
            )
        return rows
    if method != "tilted":
        raise ValueError(f"unknown method {method!r}")
    if sp is None:
        raise ValueError("tilted method needs the spectral point at alpha")
    idx0, w0 = interp_stencil(sp.e.grid, u[None, :])
    e_at_u = float(np.sum(sp.e.values[idx0] * w0))
    x = np.tile(u, (n_paths, 1))
    logmag = np.zeros(n_paths)
    lognorm_acc = np.zeros(n_paths)  # sum of log one-step kernel normalizers
    # per threshold: accumulated weight sums at first crossing
    weight_sum = np.zeros(len(log_ts))
    weight_sq = np.zeros(len(log_ts))
    crossed = np.zeros((n_paths, len(log_ts)), dtype=bool)
    steps = 0
    top = log_ts[-1]
    active = np.ones(n_paths, dtype=bool)
    while active.any() and steps < max_steps:
        sel = np.flatnonzero(active)
        _, x_new, ln, norm_step = _tilted_step(e, sp, x[sel], rng)
        x[sel] = x_new
        logmag[sel] += ln
        # the simulated kernel normalizes by the grid normalizer (= k(alpha)
        # up to discretization); folding the actual normalizers into the
        # likelihood ratio keeps the estimator exactly unbiased for the
        # chain that was simulated
        lognorm_acc[sel] += np.log(norm_step)
        idx1, w1 = interp_stencil(sp.e.grid, x_new)
        e_here = np.sum(sp.e.values[idx1] * w1, axis=1)
        logw = (np.log(e_at_u) - np.log(e_here) - alpha * logmag[sel]
                + lognorm_acc[sel])
        for j, lt in enumerate(log_ts):
            newly = (logmag[sel] > lt) & (~crossed[sel, j])
            if newly.any():
                wvals = np.exp(logw[newly])
                weight_sum[j] += wvals.sum()
                weight_sq[j] += (wvals**2).sum()
                crossed[sel[newly], j] = True
        active[sel] = logmag[sel] <= top
        steps += 1
    rows = []
    for j, (lt, t) in enumerate(zip(log_ts, t_arr)):
        n_cross = int(crossed[:, j].sum())
        p_hat = weight_sum[j] / n_paths
        var = max(weight_sq[j] / n_paths - p_hat**2, 0.0)
        se = np.sqrt(var / n_paths)
        rows.append(
            {
                "t": float(t),
                "estimate": float(t**alpha * p_hat),
                "stderr": float(t**alpha * se),
                "hits": n_cross,
                "flag": "" if n_cross == n_paths else "incomplete-crossings",
            }
        )
    return rows


def tilted_potential_profile(
    e: LinearEnsemble,
    alpha: float,
    u: np.ndarray,
    t: float,
    test_functions: list[AnnulusFunction],
    n_paths: int,
    seed: int,
    sp: SpectralPoint,
    L_alpha: float,
    nu_alpha=None,
    max_steps: int = 4000,
) -> RenewalReport:
    """t^{-alpha} sum_k E[f(S_k(t u))] for annulus functions f, against the
    prediction e^alpha(u)/L(alpha) * nu^alpha(probe) * (c1^-a - c2^-a)/a.

    Every step contributes through its own likelihood ratio, so the sum is
    an exact reweighting of the untilted potential.
    """
    u = np.asarray(u, dtype=float)
    u = u / np.linalg.norm(u)
    rng = _rng(seed, 770)
    idx0, w0 = interp_stencil(sp.e.grid, u[None, :])
    e_at_u = float(np.sum(sp.e.values[idx0] * w0))
    x = np.tile(u, (n_paths, 1))
    logmag = np.zeros(n_paths)
    lognorm_acc = np.zeros(n_paths)
    acc = np.zeros((len(test_functions), n_paths))
    windows = [(f.log_lo - np.log(t), f.log_hi - np.log(t)) for f in test_functions]
    top = max(hi for _, hi in windows)
    active = np.ones(n_paths, dtype=bool)
    steps = 0
    while active.any() and steps < max_steps:
        sel = np.flatnonzero(active)
        _, x_new, ln, norm_step = _tilted_step(e, sp, x[sel], rng)
        x[sel] = x_new
        logmag[sel] += ln
        lognorm_acc[sel] += np.log(norm_step)
        idx1, w1 = interp_stencil(sp.e.grid, x_new)
        e_here = np.sum(sp.e.values[idx1] * w1, axis=1)
        logw = (np.log(e_at_u) - np.log(e_here) - alpha * logmag[sel]
                + lognorm_acc[sel])
        for j, (f, (lo, hi)) in enumerate(zip(test_functions, windows)):
            inside = (logmag[sel] >= lo) & (logmag[sel] < hi)
            if inside.any():
                sel_in = inside & f.direction_mask(x_new)
                acc[j, sel[sel_in]] += np.exp(logw[sel_in])
        active[sel] = logmag[sel] <= top + 5.0
        steps += 1
    report = RenewalReport(regime="contracting-tilted")
    for j, f in enumerate(test_functions):
        vals = acc[j] * t ** (-alpha)
        measured = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(n_paths))
        mass = f.probe_mass(nu_alpha) if nu_alpha is not None else 1.0
        c1, c2 = np.exp(f.log_lo), np.exp(f.log_hi)
        predicted = e_at_u / L_alpha * mass * (c1**-alpha - c2**-alpha) / alpha
        report.rows.append(
            {
                "name": f.name,
                "measured": measured,
                "predicted": float(predicted),
                "stderr": se,
                "flag": "",
            }
        )
    return report


@dataclass
class DualWalkRecord:
    """Batch summary of the alpha-tilted dual walk (u_n, p_n).

    first_tau < 0 marks starts whose first ladder epoch was not reached
    within the step budget; sign_preserved records that p^{-1} p_tau > 0 at
    every recorded epoch (a construction invariant, asserted not assumed).
    """

    start_p: float
    n_starts: int
    n_steps: int
    first_tau: np.ndarray
    n_epochs: np.ndarray
    mean_gap: float
    gamma_tau: float
    height_rate: float
    height_rate_se: float
    eps_moment: float
    eps_moment_cv: float
    sign_preserved: bool
    zero_hits: int


def dual_walk_simulate(
    ae: AffineEnsemble,
    sp_star_alpha: SpectralPoint,
    L_alpha: float,
    p0: float = 1.0,
    u0: np.ndarray | None = None,
    n_starts: int = 1024,
    n_steps: int = 400,
    seed: int = 0,
    eps: float = 0.1,
    n_batches: int = 10,
) -> DualWalkRecord:
    """Simulate the dual chain u_{n+1} = A*.u_n,
    p_{n+1} = (p_n + <B, u_n>) / |A* u_n| with atoms drawn from the
    alpha-tilted transposed kernel, and record its ladder structure.

    Ladder epochs are the successive record times of p^{-1} p_n |S'_n u|
    (tracked in logs, so growth never overflows); gamma_tau = L(alpha) *
    mean inter-record gap, and height_rate is the direct batch estimate of
    (1/n) log(|S'_{tau_n} u| p_{tau_n} / p), which must match gamma_tau.
    """
    if p0 == 0.0:
        raise ValueError("p0 must be nonzero")
    lin_star = transpose(ae.linear_part)
    d = ae.dimension
    rng = _rng(seed, 880)
    if u0 is None:
        u = rng.standard_normal((n_starts, d))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
    else:
        u = np.tile(np.asarray(u0, dtype=float) / np.linalg.norm(u0), (n_starts, 1))
    p = np.full(n_starts, float(p0))
    logS = np.zeros(n_starts)
    log_record = np.zeros(n_starts)  # record of log(p^{-1} p_n |S'_n u|), start 0
    has_record = np.zeros(n_starts, dtype=bool)
    first_tau = np.full(n_starts, -1, dtype=int)
    n_epochs = np.zeros(n_starts, dtype=int)
    last_epoch = np.zeros(n_starts, dtype=int)
    gap_sum = np.zeros(n_starts)
    sign_ok = True
    zero_hits = 0
    eps_sums: list[np.ndarray] = []
    burn = max(50, n_steps // 10)
    for step in range(1, n_steps + 1):
        probs, _, images, lognorms = tilted_probs(lin_star, sp_star_alpha, u)
        cdf = np.cumsum(probs, axis=1)
        draw = rng.random((n_starts, 1))
        choice = np.minimum((draw > cdf).sum(axis=1), lin_star.n_atoms - 1)
        rows = np.arange(n_starts)
        b = ae.translations[choice]
        bu = np.sum(b * u, axis=1)
        ln = lognorms[rows, choice]
        p_new = (p + bu) / np.exp(ln)
        exact_zero = p_new == 0.0
        if exact_zero.any():
            zero_hits += int(exact_zero.sum())
            p_new = np.where(exact_zero, np.finfo(float).tiny, p_new)
        u = images[rows, choice]
        logS += ln
        p = p_new
        ratio = p / p0
        positive = ratio > 0
        logv = np.where(positive, np.log(np.abs(ratio)) + logS, -np.inf)
        # strict increase with a 1e-9 nat margin: absorbs the measure-zero
        # boundary v_n == record (e.g. the B = 0 walk where v_n is exactly 1)
        # without touching genuine ladder heights, which are O(L(alpha))
        is_record = positive & (
            np.where(has_record, logv > log_record + 1e-9, logv > 1e-9)
        )
        if is_record.any():
            if not np.all(ratio[is_record] > 0):
                sign_ok = False
            newly_first = is_record & (first_tau < 0)
            first_tau[newly_first] = step
            gap_sum[is_record] += step - np.where(
                n_epochs[is_record] > 0, last_epoch[is_record], 0
            )
            n_epochs[is_record] += 1
            last_epoch[is_record] = step
            log_record[is_record] = logv[is_record]
            has_record[is_record] = True
        if step > burn:
            eps_sums.append(np.abs(p) ** eps)
    eps_arr = np.array(eps_sums)  # (steps_after_burn, n_starts)
    eps_moment = float(eps_arr.mean())
    nb = max(2, n_batches)
    cut = (eps_arr.shape[0] // nb) * nb
    batches = eps_arr[:cut].reshape(nb, -1).mean(axis=1)
    eps_cv = float(batches.std(ddof=1) / batches.mean()) if batches.mean() > 0 else np.inf
    with_epochs = n_epochs > 0
    if with_epochs.any():
        mean_gap = float((gap_sum[with_epochs] / n_epochs[with_epochs]).mean())
        rates = (log_record[with_epochs]) / n_epochs[with_epochs]
        height_rate = float(rates.mean())
        height_se = float(rates.std(ddof=1) / np.sqrt(max(with_epochs.sum(), 2)))
    else:
        mean_gap = height_rate = height_se = float("nan")
    return DualWalkRecord(
        start_p=float(p0),
        n_starts=n_starts,
        n_steps=n_steps,
        first_tau=first_tau,
        n_epochs=n_epochs,
        mean_gap=mean_gap,
        gamma_tau=float(L_alpha * mean_gap),
        height_rate=height_rate,
        height_rate_se=height_se,
        eps_moment=eps_moment,
        eps_moment_cv=eps_cv,
        sign_preserved=sign_ok,
        zero_hits=zero_hits,
    )
