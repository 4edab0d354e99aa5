"""Finite-support matrix and affine ensembles, with hypothesis diagnostics.

A linear ensemble is a finitely supported probability measure on invertible
d x d matrices; an affine ensemble carries a translation per atom.  The
checks in this module (proximality, strong irreducibility, cone
classification, non-arithmeticity) are numerical heuristics: they report
``pass`` only with a concrete witness and fall back to ``inconclusive``
rather than claiming certainty they lack.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

__all__ = [
    "LinearEnsemble",
    "AffineEnsemble",
    "ValidationReport",
    "EnsembleError",
    "operator_norm",
    "gamma",
    "validate_linear",
    "transpose",
    "check_proximality",
    "check_strong_irreducibility",
    "classify_cone_case",
    "check_nonarithmetic_1d",
    "load_ensemble",
    "save_ensemble",
    "ensemble_hash",
]

WEIGHT_TOL = 1e-12
DET_TOL = 1e-12
ANGULAR_TOL = 1e-3  # cone attractor symmetry margin, radians


class EnsembleError(ValueError):
    """Structural defect in an ensemble definition."""


def operator_norm(g: np.ndarray) -> float:
    """Euclidean operator norm (largest singular value)."""
    return float(np.linalg.svd(g, compute_uv=False)[0])


def gamma(g: np.ndarray) -> float:
    """max(|g|, |g^-1|) in operator norm; >= 1 for every invertible g."""
    sv = np.linalg.svd(g, compute_uv=False)
    return float(max(sv[0], 1.0 / sv[-1]))


@dataclass(frozen=True)
class LinearEnsemble:
    """Finite-support probability measure on GL(d, R).

    ``matrices`` has shape (m, d, d) and ``weights`` shape (m,); weights are
    strictly positive and sum to 1 within 1e-12.
    """

    dimension: int
    matrices: np.ndarray
    weights: np.ndarray
    label: str = ""

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "weights", w)
        d = self.dimension
        if d < 1:
            raise EnsembleError(f"dimension must be >= 1, got {d}")
        if mats.ndim != 3 or mats.shape[1:] != (d, d):
            raise EnsembleError(
                f"matrices must have shape (m, {d}, {d}), got {mats.shape}"
            )
        if w.shape != (mats.shape[0],):
            raise EnsembleError("one weight per matrix required")
        if np.any(w <= 0):
            bad = int(np.argmin(w))
            raise EnsembleError(f"atom {bad}: weight {w[bad]} not strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise EnsembleError(f"weights sum {w.sum():.17g}, expected 1")
        for i, g in enumerate(mats):
            scale = float(np.abs(g).max())
            if scale == 0.0 or abs(np.linalg.det(g)) <= DET_TOL * scale**d:
                raise EnsembleError(f"atom {i}: matrix is singular")

    @property
    def n_atoms(self) -> int:
        return self.matrices.shape[0]

    def atom_gammas(self) -> np.ndarray:
        return np.array([gamma(g) for g in self.matrices])


@dataclass(frozen=True)
class AffineEnsemble:
    """Finite-support measure on the affine group: atoms (A_i, B_i, w_i).

    A common fixed point of all atoms degenerates the recursion to a linear
    one (stationary law = a point mass), so it is rejected by default;
    allow_fixed_point=True keeps such deliberately degenerate ensembles
    constructible for diagnostics and trivial-case tests.
    """

    dimension: int
    matrices: np.ndarray
    translations: np.ndarray
    weights: np.ndarray
    label: str = ""
    allow_fixed_point: bool = False

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        trans = np.asarray(self.translations, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "translations", trans)
        object.__setattr__(self, "weights", w)
        # the linear projection must itself be a valid ensemble
        linear = LinearEnsemble(self.dimension, mats, w, label=self.label)
        object.__setattr__(self, "_linear", linear)
        if trans.shape != (mats.shape[0], self.dimension):
            raise EnsembleError(
                f"translations must have shape (m, {self.dimension}), got {trans.shape}"
            )
        resid = self._common_fixed_point_residual()
        object.__setattr__(self, "fixed_point_residual", resid)
        if resid <= 1e-9 and not self.allow_fixed_point:
            raise EnsembleError(
                "supp lambda has a fixed point: the system (I - A_i) x = B_i "
                "is simultaneously solvable"
            )

    def _common_fixed_point_residual(self) -> float:
        """Least-squares residual of the stacked system (I - A_i) x = B_i.

        Residual ~ 0 means every atom fixes a common point and the recursion
        degenerates to a linear one.
        """
        d = self.dimension
        eye = np.eye(d)
        lhs = np.concatenate([eye - a for a in self.matrices], axis=0)
        rhs = self.translations.reshape(-1)
        x, *_ = np.linalg.lstsq(lhs, rhs, rcond=None)
        scale = 1.0 + float(np.abs(rhs).max(initial=0.0))
        return float(np.linalg.norm(lhs @ x - rhs)) / scale

    @property
    def n_atoms(self) -> int:
        return self.matrices.shape[0]

    @property
    def linear_part(self) -> LinearEnsemble:
        return self._linear  # type: ignore[attr-defined]


@dataclass
class ValidationReport:
    """Outcome of the structural and hypothesis checks.

    Verdicts are "pass" / "fail" / "inconclusive"; a verdict is never "pass"
    without a concrete witness recorded in ``evidence``.
    """

    irreducibility_verdict: str = "inconclusive"
    proximality_verdict: str = "inconclusive"
    cone_case: str = "unknown"
    nonarithmetic_verdict: str = "inconclusive"  # meaningful for d=1 only
    evidence: dict = field(default_factory=dict)

    def structural_pass(self) -> bool:
        return bool(self.evidence.get("structural", False))


def validate_linear(e: LinearEnsemble) -> ValidationReport:
    """Structural validation: re-checks invariants, records per-atom norms.

    Deterministic and side-effect free; invalid input raises EnsembleError
    at construction, so an existing LinearEnsemble always passes here.
    """
    report = ValidationReport()
    norms = np.array([operator_norm(g) for g in e.matrices])
    inv_norms = np.array([operator_norm(np.linalg.inv(g)) for g in e.matrices])
    report.evidence["structural"] = True
    report.evidence["atom_norms"] = norms.tolist()
    report.evidence["atom_inverse_norms"] = inv_norms.tolist()
    report.evidence["atom_gammas"] = np.maximum(norms, inv_norms).tolist()
    if e.dimension == 1:
        report.irreducibility_verdict = "pass"
        report.evidence["irreducibility"] = "d=1: no proper nonzero subspaces"
    return report


def transpose(e: LinearEnsemble) -> LinearEnsemble:
    """Push-forward under g -> g^T; weights unchanged."""
    return LinearEnsemble(
        e.dimension,
        np.transpose(e.matrices, (0, 2, 1)).copy(),
        e.weights.copy(),
        label=(e.label + "*") if e.label else "*",
    )


def _proximality_gap(g: np.ndarray) -> tuple[float, bool]:
    """Relative modulus gap of the top eigenvalue and whether it is real/simple."""
    ev = np.linalg.eigvals(g)
    order = np.argsort(-np.abs(ev))
    ev = ev[order]
    top = ev[0]
    if len(ev) == 1:
        return np.inf, abs(top.imag) <= 1e-12 * abs(top)
    gap = (abs(top) - abs(ev[1])) / abs(top)
    real_simple = abs(top.imag) <= 1e-9 * abs(top)
    return float(gap), bool(real_simple)


def check_proximality(
    e: LinearEnsemble,
    max_word_length: int = 8,
    n_random_words: int = 200,
    seed: int = 0,
) -> tuple[str, dict]:
    """Search products of atoms for one with a simple dominant real eigenvalue.

    Returns ("pass", witness) when some word g in the semigroup has a real
    top eigenvalue exceeding the second modulus by a relative gap > 1e-6,
    else ("inconclusive", diagnostics).  Absence of a witness is not
    disproof, so "fail" is never returned.
    """
    if e.dimension < 2:
        return "pass", {"witness_word": [], "note": "d=1: scalars are proximal"}
    rng = np.random.default_rng(seed)
    best = {"gap": -np.inf, "word": None}
    # exhaustive short words first, then random longer ones
    words: list[tuple[int, ...]] = [(i,) for i in range(e.n_atoms)]
    if e.n_atoms >= 2:
        words += [(i, j) for i in range(e.n_atoms) for j in range(e.n_atoms)]
    for _ in range(n_random_words):
        length = int(rng.integers(1, max_word_length + 1))
        words.append(tuple(rng.integers(0, e.n_atoms, size=length)))
    for word in words:
        g = np.eye(e.dimension)
        for idx in word:
            g = e.matrices[idx] @ g
            norm = np.abs(g).max()
            if norm > 1e100:
                g = g / norm  # eigenvalue gap is scale invariant
        gap, real_simple = _proximality_gap(g)
        if real_simple and gap > best["gap"]:
            best = {"gap": gap, "word": list(map(int, word))}
        if real_simple and gap > 1e-6:
            return "pass", {
                "witness_word": list(map(int, word)),
                "relative_gap": gap,
            }
    return "inconclusive", {"best_gap": best["gap"], "best_word": best["word"]}


def _canonical_directions(vs: np.ndarray, tol: float) -> np.ndarray:
    """Deduplicate unit vectors up to sign and angular tolerance."""
    out: list[np.ndarray] = []
    for v in vs:
        nv = np.linalg.norm(v)
        if nv < 1e-12:
            continue
        v = v / nv
        if not any(
            min(np.linalg.norm(v - u), np.linalg.norm(v + u)) < tol for u in out
        ):
            out.append(v)
    return np.array(out) if out else np.zeros((0, vs.shape[1]))


def check_strong_irreducibility(
    e: LinearEnsemble, n_iterations: int = 40
) -> tuple[str, dict]:
    """Orbit-closure heuristic for strong irreducibility.

    Candidate invariant lines are seeded from atom eigenvectors and closed
    under the atom actions up to angular tolerance.  A finite closed union of
    lines means a T-invariant finite union of proper subspaces exists
    ("fail"); a cardinality explosion is reported as "pass".  Only invariant
    unions of *lines* are searched, so "pass" is heuristic for d > 2.
    """
    if e.dimension == 1:
        return "pass", {"note": "d=1: vacuously strongly irreducible"}
    tol = 1e-8
    cap = 64
    seeds: list[np.ndarray] = []
    for g in e.matrices:
        vals, vecs = np.linalg.eig(g)
        for j in range(len(vals)):
            v = vecs[:, j]
            if np.abs(v.imag).max() <= 1e-9 * np.abs(v).max():
                seeds.append(v.real)
    dirs = _canonical_directions(np.array(seeds), tol)
    if dirs.shape[0] == 0:
        return "inconclusive", {"note": "no real eigenvectors to seed from"}
    for it in range(n_iterations):
        images = np.einsum("mij,kj->mki", e.matrices, dirs).reshape(
            -1, e.dimension
        )
        new_dirs = _canonical_directions(np.vstack([dirs, images]), tol)
        if new_dirs.shape[0] > cap:
            return "pass", {
                "orbit_cardinality": int(new_dirs.shape[0]),
                "iterations": it + 1,
                "cap": cap,
            }
        if new_dirs.shape[0] == dirs.shape[0]:
            return "fail", {
                "invariant_lines": dirs.tolist(),
                "cardinality": int(dirs.shape[0]),
            }
        dirs = new_dirs
    return "inconclusive", {"orbit_cardinality": int(dirs.shape[0])}


def classify_cone_case(
    e: LinearEnsemble,
    n_trajectories: int = 64,
    n_steps: int = 300,
    seed: int = 0,
) -> tuple[str, dict]:
    """Classify the sphere dynamics: "II" when a proper convex cone is
    preserved (attractor disjoint from its antipode), "I" when the late-time
    attractor is symmetric, "unknown" otherwise.

    Simulates x -> g.x on the unit sphere from many starts and compares the
    cluster of late-time directions with its antipodal image using margin
    ANGULAR_TOL.
    """
    d = e.dimension
    if d == 1:
        if np.all(e.matrices[:, 0, 0] > 0):
            return "II", {
                "note": "positive scalars preserve the half-line",
                "attractor_center": [1.0],
                "attractor_points": [[1.0]],
            }
        return "I", {"note": "sign changes force a symmetric attractor"}
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n_trajectories, d))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    idx_all = rng.integers(0, e.n_atoms, size=(n_steps, n_trajectories))
    tail: list[np.ndarray] = []
    keep_from = n_steps - max(100, n_steps // 3)
    for k in range(n_steps):
        g = e.matrices[idx_all[k]]
        x = np.einsum("nij,nj->ni", g, x)
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        if k >= keep_from:
            tail.append(x.copy())
    # Per-trajectory decision: with an invariant cone an orbit settles on one
    # side and its tail set never touches its own antipodal image; without
    # one a single orbit must approach its own antipode.  The union over
    # starts is symmetric in both cases, so pooling cannot distinguish them.
    tails = np.stack(tail, axis=1)  # (n_trajectories, tail_len, d)
    separations = np.empty(n_trajectories)
    margins = np.empty(n_trajectories)
    for t in range(n_trajectories):
        pts = tails[t]
        dots = pts @ pts.T
        min_plus = np.sqrt(np.maximum(0.0, 2.0 + 2.0 * dots.min(axis=1)))
        separations[t] = min_plus.min()
        np.fill_diagonal(dots, -np.inf)
        self_gap = np.sqrt(np.maximum(0.0, 2.0 - 2.0 * dots.max(axis=1)))
        # a fractal orbit only resolves antipodal contact down to its own
        # covering scale, so the contact margin adapts to the sampled gaps
        margins[t] = max(ANGULAR_TOL, 3.0 * float(np.quantile(self_gap, 0.9)))
    if np.all(separations > margins):
        # sign-align the pooled tail points to get one side of the attractor
        pooled = tails.reshape(-1, d)
        ref = pooled[0]
        aligned = pooled * np.where(pooled @ ref >= 0, 1.0, -1.0)[:, None]
        center = aligned.mean(axis=0)
        center /= max(np.linalg.norm(center), 1e-300)
        aligned = pooled * np.where(pooled @ center >= 0, 1.0, -1.0)[:, None]
        return "II", {
            "min_trajectory_separation": float(separations.min()),
            "attractor_points": aligned.tolist(),
            "attractor_center": center.tolist(),
        }
    touching = separations <= margins
    if touching.mean() >= 0.9:
        return "I", {
            "touching_trajectories": int(touching.sum()),
            "n_trajectories": int(n_trajectories),
            "max_separation": float(separations.max()),
            "attractor_points": tails.reshape(-1, d).tolist(),
        }
    return "unknown", {
        "min_trajectory_separation": float(separations.min()),
        "touching_trajectories": int(touching.sum()),
        "n_trajectories": int(n_trajectories),
    }


def check_nonarithmetic_1d(e: LinearEnsemble, max_denominator: int = 10**6) -> tuple[str, dict]:
    """d=1 only: "fail" when all pairwise ratios log|a_i|/log|a_j| are rational
    with denominator <= max_denominator (the group generated by log|a_i| is
    then a lattice), else "pass".
    """
    if e.dimension != 1:
        raise EnsembleError("check_nonarithmetic_1d requires d = 1")
    logs = np.log(np.abs(e.matrices[:, 0, 0]))
    nontrivial = logs[np.abs(logs) > 1e-14]
    if len(nontrivial) == 0:
        return "fail", {"note": "all atoms have |a| = 1"}
    base = nontrivial[0]
    ratios = []
    for x in nontrivial[1:]:
        r = x / base
        frac = Fraction(r).limit_denominator(max_denominator)
        ratios.append((float(r), frac.numerator, frac.denominator,
                       abs(r - frac.numerator / frac.denominator)))
    # an exactly rational ratio survives the float logs at ulp level (~1e-16
    # relative), while the best q <= 1e6 convergent of a generic irrational
    # sits ~1e-12 away; 1e-14 separates the two regimes
    all_rational = all(err <= 1e-14 * max(1.0, abs(r)) for r, _, _, err in ratios)
    if len(nontrivial) == 1 or all_rational:
        return "fail", {"ratios": ratios}
    return "pass", {"ratios": ratios}


# ---------------------------------------------------------------------------
# file format: JSON with keys dimension, atoms, label


def save_ensemble(e: LinearEnsemble | AffineEnsemble, path: str | Path) -> None:
    atoms = []
    for i in range(e.n_atoms):
        atom = {
            "matrix": [float(v) for v in e.matrices[i].reshape(-1)],
            "weight": float(e.weights[i]),
        }
        if isinstance(e, AffineEnsemble):
            atom["translation"] = [float(v) for v in e.translations[i]]
        atoms.append(atom)
    doc = {"dimension": e.dimension, "atoms": atoms, "label": e.label}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_ensemble(path: str | Path) -> LinearEnsemble | AffineEnsemble:
    """Parse the JSON ensemble format; values are read as 64-bit floats.

    Returns an AffineEnsemble when any atom carries a translation, else a
    LinearEnsemble.  Malformed atoms raise EnsembleError naming the index.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise EnsembleError(f"not valid JSON: {exc}") from exc
    try:
        d = int(doc["dimension"])
        atoms = doc["atoms"]
    except (KeyError, TypeError) as exc:
        raise EnsembleError(f"missing required key: {exc}") from exc
    label = str(doc.get("label", ""))
    mats, trans, weights = [], [], []
    has_translation = any("translation" in a for a in atoms)
    for i, a in enumerate(atoms):
        try:
            flat = np.asarray(a["matrix"], dtype=float)
            if flat.size != d * d:
                raise EnsembleError(
                    f"atom {i}: matrix has {flat.size} entries, expected {d * d}"
                )
            mats.append(flat.reshape(d, d))
            weights.append(float(a["weight"]))
            if has_translation:
                t = np.asarray(a.get("translation", np.zeros(d)), dtype=float)
                if t.size != d:
                    raise EnsembleError(
                        f"atom {i}: translation has {t.size} entries, expected {d}"
                    )
                trans.append(t)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, EnsembleError):
                raise
            raise EnsembleError(f"atom {i}: {exc}") from exc
    if has_translation:
        return AffineEnsemble(d, np.array(mats), np.array(trans), np.array(weights), label)
    return LinearEnsemble(d, np.array(mats), np.array(weights), label)


def ensemble_hash(e: LinearEnsemble | AffineEnsemble) -> str:
    """Content hash of the ensemble (sha256 over canonical bytes)."""
    import hashlib

    h = hashlib.sha256()
    h.update(str(e.dimension).encode())
    h.update(np.ascontiguousarray(e.matrices, dtype=float).tobytes())
    if isinstance(e, AffineEnsemble):
        h.update(np.ascontiguousarray(e.translations, dtype=float).tobytes())
    h.update(np.ascontiguousarray(e.weights, dtype=float).tobytes())
    return h.hexdigest()
