"""Discretized transfer operators and their dominant eigen-objects.

For a finite-support measure mu on GL(d) and s >= 0, the weighted operator

    (P^s f)(x) = sum_i w_i |g_i x|^s f(g_i . x)

acts on functions over the direction grid; interpolation closes the action
on grid values.  The adjoint uses the *same* interpolation stencil, so grid
duality <P^s f, sigma> = <f, (P^s)* sigma> holds exactly up to float
summation order.  Alternating power iteration on the pair produces the
dominant eigenvalue k(s), the positive eigenfunction e^s and the
eigenmeasure nu^s, normalized so that nu^s has mass 1 and nu^s(e^s) = 1.
That normalization pins the rank-one projector nu^s (x) e^s uniquely.

The one-step tilted Markov kernel

    q^s(x, g_i) ~ w_i |g_i x|^s e^s(g_i.x) / e^s(x)

is the sampling device used by every rare-event and Lyapunov routine
downstream; its exact normalizer equals k(s) up to discretization and is
always returned as a diagnostic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ensemble import LinearEnsemble, transpose
from .projective import (
    PROJECTIVE,
    SPHERE,
    DirectionGrid,
    GridFunction,
    GridMeasure,
    act_many,
    build_grid,
    interp_stencil,
)

__all__ = [
    "SpectralPoint",
    "TransferOperator",
    "apply_ps",
    "apply_ps_adjoint",
    "power_iterate",
    "k_closed_form_1d",
    "k_prime_closed_form_1d",
    "cross_check_es",
    "qs_kernel",
    "tilted_probs",
    "sphere_extremal_measures",
    "ExtremalPair",
    "complex_radius_ratio",
]


@dataclass
class SpectralPoint:
    """Solved eigen-problem of P^s at one exponent s.

    e is strictly positive at every node; nu has total mass 1 and
    nu(e) = 1 within 1e-8.  residual_e is the relative sup-norm residual of
    the eigen-equation, residual_nu the relative l1 residual of the adjoint.
    """

    s: float
    k: float
    e: GridFunction
    nu: GridMeasure
    p: float | None
    iterations: int
    residual_e: float
    residual_nu: float
    mode: str
    converged: bool = True
    warning: str = ""

    @property
    def pi(self) -> np.ndarray:
        """Stationary law pi^s = e^s nu^s of the tilted chain (probability)."""
        m = self.e.values * self.nu.masses
        return m / m.sum()


class TransferOperator:
    """P^s frozen against one (ensemble, grid, s): precomputed stencils.

    apply/apply_adjoint are exact transposes of each other on the grid.
    """

    def __init__(self, e: LinearEnsemble, grid: DirectionGrid, s: float):
        if s < 0:
            raise ValueError("negative exponents are not supported")
        self.ensemble = e
        self.grid = grid
        self.s = float(s)
        self._idx = []
        self._w = []          # stencil weights, rows sum to 1
        self._lognorm = []    # log|g_i x_j| per node
        for g in e.matrices:
            images, lognorms = act_many(g, grid.nodes)
            idx, w = interp_stencil(grid, images)
            self._idx.append(idx)
            self._w.append(w)
            self._lognorm.append(lognorms)

    def apply(self, values: np.ndarray) -> np.ndarray:
        out = np.zeros_like(values)
        for wi, idx, w, ln in zip(
            self.ensemble.weights, self._idx, self._w, self._lognorm
        ):
            interp = np.sum(values[idx] * w, axis=1)
            out = out + wi * np.exp(self.s * ln) * interp
        return out

    def apply_adjoint(self, masses: np.ndarray) -> np.ndarray:
        out = np.zeros_like(masses)
        for wi, idx, w, ln in zip(
            self.ensemble.weights, self._idx, self._w, self._lognorm
        ):
            contrib = (wi * np.exp(self.s * ln) * masses)[:, None] * w
            np.add.at(out, idx, contrib)
        return out

    def apply_oscillatory(self, values: np.ndarray, t: float) -> np.ndarray:
        """P^{s+it} on complex grid values (diagnostic use only)."""
        out = np.zeros_like(values, dtype=complex)
        for wi, idx, w, ln in zip(
            self.ensemble.weights, self._idx, self._w, self._lognorm
        ):
            interp = np.sum(values[idx] * w, axis=1)
            out = out + wi * np.exp((self.s + 1j * t) * ln) * interp
        return out


def apply_ps(e: LinearEnsemble, s: float, f: GridFunction) -> GridFunction:
    """(P^s f)(x_node) = sum_i w_i |g_i x|^s interp(f, g_i.x)."""
    op = TransferOperator(e, f.grid, s)
    return GridFunction(f.grid, op.apply(f.values))


def apply_ps_adjoint(e: LinearEnsemble, s: float, sigma: GridMeasure) -> GridMeasure:
    """Adjoint push: deposits w_i |g_i x|^s * mass onto the interpolation
    stencil of g_i.x, so that grid duality with apply_ps is exact."""
    op = TransferOperator(e, sigma.grid, s)
    return GridMeasure(sigma.grid, op.apply_adjoint(sigma.masses))


def k_closed_form_1d(e: LinearEnsemble, s: float) -> float:
    """d=1 bypass: k(s) = sum_i w_i |a_i|^s (exactly 1 at s=0)."""
    if e.dimension != 1:
        raise ValueError("closed form requires d = 1")
    if s == 0.0:
        return 1.0
    a = np.abs(e.matrices[:, 0, 0])
    return float(np.sum(e.weights * a**s))


def k_prime_closed_form_1d(e: LinearEnsemble, s: float) -> float:
    """d=1 derivative: k'(s) = sum_i w_i |a_i|^s log|a_i|."""
    if e.dimension != 1:
        raise ValueError("closed form requires d = 1")
    a = np.abs(e.matrices[:, 0, 0])
    return float(np.sum(e.weights * a**s * np.log(a)))


def power_iterate(
    e: LinearEnsemble,
    s: float,
    grid: DirectionGrid,
    tol: float = 1e-10,
    max_iter: int = 20000,
    compute_p: bool = True,
    warn_not_ip: bool = False,
) -> SpectralPoint:
    """Alternating normalized power iteration for (k(s), e^s, nu^s).

    k is the Rayleigh quotient <P^s e, nu>/<e, nu>; iteration stops when the
    eigenfunction and eigenmeasure residuals both fall below tol.  Without
    irreducibility + proximality the limit pair need not be unique; the
    result is still returned, flagged via ``warning`` when requested.
    p(s) = integral of |<x,y>|^s d nu^s(x) d *nu^s(y) is quadrature against
    the transposed-ensemble eigenmeasure (skipped when compute_p=False).
    """
    if s < 0:
        raise ValueError("negative exponents are not supported")
    op = TransferOperator(e, grid, s)
    n = grid.n_nodes
    f = np.ones(n)
    sigma = grid.quadrature_weights.copy()
    k_est = 1.0
    res_e = res_nu = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        f_new = op.apply(f)
        sig_new = op.apply_adjoint(sigma)
        k_est = float(np.sum(f_new * sigma) / np.sum(f * sigma))
        res_e = float(np.max(np.abs(f_new - k_est * f)) / np.max(np.abs(f)))
        res_nu = float(
            np.sum(np.abs(sig_new - k_est * sigma)) / (abs(k_est) * sigma.sum())
        )
        f = f_new / f_new.max()
        sigma = sig_new / sig_new.sum()
        if res_e < tol and res_nu < tol:
            break
    converged = res_e < tol and res_nu < tol
    if s == 0.0:
        k_est = 1.0  # P^0 is a Markov operator: dominant eigenvalue is 1
    # normalize: nu total mass 1 (already), nu(e) = 1
    sigma = sigma / sigma.sum()
    f = f / np.sum(f * sigma)
    point = SpectralPoint(
        s=float(s),
        k=k_est,
        e=GridFunction(grid, f),
        nu=GridMeasure(grid, sigma),
        p=None,
        iterations=it,
        residual_e=res_e,
        residual_nu=res_nu,
        mode=grid.mode,
        converged=converged,
        warning="" if converged else f"not converged after {it} iterations",
    )
    if warn_not_ip and not point.warning:
        point.warning = (
            "irreducibility/proximality not verified: eigen-pair may be non-unique"
        )
    if compute_p:
        star = power_iterate(
            transpose(e), s, grid, tol=tol, max_iter=max_iter, compute_p=False
        )
        point.p = _pairing_p(point, star)
    return point


def _pairing_p(sp: SpectralPoint, sp_star: SpectralPoint) -> float:
    """p(s) = sum_{x,y} |<x,y>|^s nu^s(x) *nu^s(y) on the grid."""
    dots = np.abs(sp.nu.grid.nodes @ sp_star.nu.grid.nodes.T)
    if sp.s == 0.0:
        kernel = np.ones_like(dots)
    else:
        kernel = dots**sp.s
    return float(sp.nu.masses @ kernel @ sp_star.nu.masses)


def cross_check_es(sp: SpectralPoint, sp_star: SpectralPoint) -> float:
    """Structural residual of the integral identity
    p(s) e^s(x) = integral |<x,y>|^s d *nu^s(y), in sup norm relative to
    max e^s.  Independent of the power-iteration path that produced e^s.
    """
    if sp.s != sp_star.s:
        raise ValueError("both spectral points must share the same exponent s")
    p = sp.p if sp.p is not None else _pairing_p(sp, sp_star)
    dots = np.abs(sp.e.grid.nodes @ sp_star.nu.grid.nodes.T)
    kernel = np.ones_like(dots) if sp.s == 0.0 else dots**sp.s
    rhs = kernel @ sp_star.nu.masses
    return float(np.max(np.abs(p * sp.e.values - rhs)) / np.max(sp.e.values))


def tilted_probs(
    e: LinearEnsemble, sp: SpectralPoint, xs: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized one-step tilted kernel at unit rows xs (M, d).

    Returns (probs (M, m), normalizer (M,), images (M, m, d),
    lognorms (M, m)); probs rows are normalized, and normalizer / k(s) ~ 1
    up to discretization.
    """
    xs = np.atleast_2d(xs)
    m = e.n_atoms
    M = xs.shape[0]
    images = np.empty((M, m, xs.shape[1]))
    lognorms = np.empty((M, m))
    raw = np.empty((M, m))
    idx0, w0 = interp_stencil(sp.e.grid, xs)
    e_here = np.sum(sp.e.values[idx0] * w0, axis=1)
    for i in range(m):
        y, ln = act_many(e.matrices[i], xs)
        idx, w = interp_stencil(sp.e.grid, y)
        e_img = np.sum(sp.e.values[idx] * w, axis=1)
        images[:, i] = y
        lognorms[:, i] = ln
        raw[:, i] = e.weights[i] * np.exp(sp.s * ln) * e_img / e_here
    normalizer = raw.sum(axis=1)
    return raw / normalizer[:, None], normalizer, images, lognorms


def qs_kernel(
    e: LinearEnsemble, sp: SpectralPoint, x: np.ndarray
) -> tuple[np.ndarray, float]:
    """Discrete tilted distribution over atoms at direction x.

    Returns (probabilities, normalizer); the normalizer equals k(s) up to
    discretization error.  At s = 0 the tilt vanishes and the probabilities
    are the atom weights.
    """
    probs, normalizer, _, _ = tilted_probs(e, sp, np.asarray(x, dtype=float))
    return probs[0], float(normalizer[0])


@dataclass
class ExtremalPair:
    """Case-II sphere objects: the two extremal stationary pairs.

    point_plus / point_minus package each side as a SpectralPoint with mode
    "sphere-cone-restricted"; their k must agree with the projective one.
    """

    pi_plus: GridMeasure
    pi_minus: GridMeasure
    nu_plus: GridMeasure
    nu_minus: GridMeasure
    e_plus: GridFunction
    e_minus: GridFunction
    point_plus: SpectralPoint | None = None
    point_minus: SpectralPoint | None = None


def _antipode_map(grid: DirectionGrid) -> np.ndarray:
    """Index map sending each node to the node nearest to its antipode."""
    dots = (-grid.nodes) @ grid.nodes.T
    return np.argmax(dots, axis=1)


def sphere_extremal_measures(
    e: LinearEnsemble,
    s: float,
    grid: DirectionGrid,
    attractor_points: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 20000,
) -> ExtremalPair:
    """Extremal stationary pairs on the sphere when a proper convex cone is
    preserved (cone case II).

    The eigenmeasure nu_+^s comes from adjoint iteration masked to the grid
    nodes on the attractor side (images leak across only through
    interpolation and are zeroed); pi_- is the exact antipodal reflection of
    pi_+.  e_+^s is recovered from the transposed-ensemble cone eigenmeasure
    through the half-space pairing p(s) e_+^s(u) = integral <u,u'>_+^s
    d *nu_+^s(u'), and e_+ + e_- should reproduce the projective
    eigenfunction lifted to the sphere.
    """
    if grid.mode != SPHERE:
        raise ValueError("extremal measures live on a sphere-mode grid")
    attractor_points = np.atleast_2d(attractor_points)
    if attractor_points.size == 0:
        raise ValueError("attractor cone not identified: no points supplied")
    # nodes closer to the attractor than to its antipodal image
    d_plus = _min_chord(grid.nodes, attractor_points)
    d_minus = _min_chord(grid.nodes, -attractor_points)
    plus_mask = d_plus < d_minus
    if not plus_mask.any() or plus_mask.all():
        raise ValueError("attractor cone does not separate the grid")
    op = TransferOperator(e, grid, s)
    sigma = np.where(plus_mask, grid.quadrature_weights, 0.0)
    sigma /= sigma.sum()
    k_est = 1.0
    res = np.inf
    iters = 0
    for iters in range(1, max_iter + 1):
        sig_new = op.apply_adjoint(sigma)
        sig_new[~plus_mask] = 0.0
        k_est = sig_new.sum() / sigma.sum()
        res = np.sum(np.abs(sig_new - k_est * sigma)) / (k_est * sigma.sum())
        sigma = sig_new / sig_new.sum()
        if res < tol:
            break
    nu_plus = sigma
    amap = _antipode_map(grid)
    nu_minus = np.zeros_like(nu_plus)
    np.add.at(nu_minus, amap, nu_plus)

    # transposed-ensemble cone data for the e_+ transform
    e_star = transpose(e)
    star_attr = _cone_attractor(e_star, attractor_points, seed=0)
    d_plus_s = _min_chord(grid.nodes, star_attr)
    d_minus_s = _min_chord(grid.nodes, -star_attr)
    star_mask = d_plus_s < d_minus_s
    op_star = TransferOperator(e_star, grid, s)
    tau = np.where(star_mask, grid.quadrature_weights, 0.0)
    tau /= tau.sum()
    for _ in range(max_iter):
        tau_new = op_star.apply_adjoint(tau)
        tau_new[~star_mask] = 0.0
        res = np.sum(np.abs(tau_new - (tau_new.sum() / tau.sum()) * tau)) / tau_new.sum()
        tau = tau_new / tau_new.sum()
        if res < tol:
            break
    # p(s) from the projective eigen-problem (pairing normalization)
    proj_grid = build_grid(grid.dimension, grid.n_nodes // 2 or 1, PROJECTIVE)
    sp_proj = power_iterate(e, s, proj_grid, tol=tol, compute_p=True)
    p_s = sp_proj.p if sp_proj.p else 1.0

    dots = grid.nodes @ grid.nodes.T
    plus_kernel = np.maximum(dots, 0.0) ** s if s > 0 else (dots > 0).astype(float)
    e_plus_vals = (plus_kernel @ tau) / p_s
    tau_minus = np.zeros_like(tau)
    np.add.at(tau_minus, amap, tau)
    e_minus_vals = (plus_kernel @ tau_minus) / p_s

    pi_plus = nu_plus * np.maximum(e_plus_vals, 0.0)
    pi_minus = nu_minus * np.maximum(e_minus_vals, 0.0)
    mode = "sphere-cone-restricted"

    def _restricted_point(e_vals, nu_masses):
        return SpectralPoint(
            s=float(s), k=float(k_est),
            e=GridFunction(grid, np.maximum(e_vals, 0.0)),
            nu=GridMeasure(grid, nu_masses), p=p_s,
            iterations=iters, residual_e=float(res), residual_nu=float(res),
            mode=mode, converged=bool(res < tol),
        )

    return ExtremalPair(
        pi_plus=GridMeasure(grid, pi_plus / max(pi_plus.sum(), 1e-300)),
        pi_minus=GridMeasure(grid, pi_minus / max(pi_minus.sum(), 1e-300)),
        nu_plus=GridMeasure(grid, nu_plus),
        nu_minus=GridMeasure(grid, nu_minus),
        e_plus=GridFunction(grid, e_plus_vals),
        e_minus=GridFunction(grid, e_minus_vals),
        point_plus=_restricted_point(e_plus_vals, nu_plus),
        point_minus=_restricted_point(e_minus_vals, nu_minus),
    )


def _min_chord(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    dots = nodes @ points.T
    return np.sqrt(np.maximum(0.0, 2.0 - 2.0 * dots.max(axis=1)))


def _cone_attractor(e: LinearEnsemble, hint: np.ndarray, seed: int) -> np.ndarray:
    """Late-time sphere directions of the e-chain, sign-aligned to a hint."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((32, e.dimension))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    for _ in range(200):
        idx = rng.integers(0, e.n_atoms, size=x.shape[0])
        x = np.einsum("nij,nj->ni", e.matrices[idx], x)
        x /= np.linalg.norm(x, axis=1, keepdims=True)
    center = hint.mean(axis=0)
    sign = np.where(x @ center >= 0, 1.0, -1.0)
    return x * sign[:, None]


def complex_radius_ratio(
    e: LinearEnsemble,
    s: float,
    t: float,
    grid: DirectionGrid,
    n_iter: int = 300,
    seed: int = 0,
) -> float:
    """Diagnostic estimate of r(P^{s+it}) / k(s) via normalized iteration.

    The oscillatory operator P^z f(x) = sum_i w_i |g_i x|^s e^{i t log|g_i x|}
    f(g_i.x) has spectral radius strictly below k(s) when t != 0 (for
    ensembles with the standing hypotheses); no complex eigen-pair is
    extracted, only the growth-rate ratio.
    """
    sp = power_iterate(e, s, grid, compute_p=False)
    op = TransferOperator(e, grid, s)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(grid.n_nodes) + 1j * rng.standard_normal(grid.n_nodes)
    growths = []
    for it in range(n_iter):
        out = op.apply_oscillatory(f, t)
        norm = np.abs(out).max()
        if norm < 1e-300:
            return 0.0
        growths.append(np.log(norm))
        f = out / norm
    tail = growths[n_iter // 2:]
    return float(np.exp(np.mean(tail)) / sp.k)
