"""Eventual positivity of linear systems xdot = Ax.

Implements the spectral necessary/sufficient tests for (strong) eventual
positivity, a tau0 horizon estimate from a log-spaced scan of e^{At},
transformed-Lorentz invariant cones built from left eigenvectors, the
slow/fast Schur complement reduction, and the explicit similarity transform
that positivizes any system with a simple real strictly dominant eigenvalue.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .spectral import (
    NotDiagonalizableError,
    check_dominance,
    decompose,
    default_tol,
    matrix_exp,
)

VERDICT_STRONG = "strongly_eventually_positive"
VERDICT_EVENTUAL = "eventually_positive"
VERDICT_NOT = "not_eventually_positive"
VERDICT_INCONCLUSIVE = "inconclusive"

SCAN_DECADES = 4.0


@dataclass
class EvPosReport:
    """Verdict plus the positivity threshold estimate and failure witness."""

    verdict: str
    tau0_estimate: object = None    # nonneg float or None
    witness: object = None          # {"entry": [i, j], "time": t, "value": v}
    details: dict = dc_field(default_factory=dict)

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "tau0_estimate": self.tau0_estimate,
            "witness": self.witness,
            "details": self.details,
        }


def _scan_times(t_max, n_samples):
    return np.logspace(np.log10(t_max) - SCAN_DECADES, np.log10(t_max), n_samples)


def check_eventual_positivity(a, t_max=None, n_samples=400, tol=None):
    """Classify xdot = Ax per the spectral eventual-positivity theory.

    strongly_eventually_positive requires a simple real strictly dominant
    lambda1 with entrywise positive v1, w1, confirmed by a log-spaced scan of
    e^{At} that finds a threshold after which all entries stay positive (the
    tail beyond t_max is covered by the dominance gap).  Spectral necessary
    conditions failing give not_eventually_positive; weakly satisfied
    conditions are inconclusive (necessity is not sufficiency).
    """
    a = np.asarray(a, dtype=float)
    dec = decompose(a)
    if not dec.diagonalizable:
        raise NotDiagonalizableError(
            "eventual positivity test requires a diagonalizable matrix"
        )
    if tol is None:
        tol = default_tol(a)
    dom = check_dominance(dec, tol)
    lam1 = dec.eigenvalues[0]
    if t_max is None:
        t_max = 50.0 / max(abs(float(lam1.real)), tol)

    v1 = dec.v1_real()
    w1 = dec.w1_real()
    if v1[np.argmax(np.abs(v1))] < 0:
        v1, w1 = -v1, -w1

    details = {
        "dominance": dom.to_dict(),
        "lambda1": complex(lam1).real if dom.lambda1_real else str(complex(lam1)),
        "v1": v1.tolist(),
        "w1": w1.tolist(),
        "t_max": float(t_max),
        "n_samples": int(n_samples),
    }

    times = _scan_times(t_max, n_samples)
    neg_entry = None  # latest scanned time with a nonpositive entry
    threshold = 0.0
    for t in times:
        e = matrix_exp(a, t)
        i, j = np.unravel_index(np.argmin(e), e.shape)
        # strict positivity is scale-invariant: compare to the largest entry
        if e[i, j] <= 1e-12 * np.abs(e).max():
            neg_entry = {"entry": [int(i), int(j)], "time": float(t),
                         "value": float(e[i, j])}
            threshold = float(t)
    tail_clear = neg_entry is None or neg_entry["time"] < times[-1]

    # necessary conditions (Prop. on eventually positive systems, point (i))
    complex_tie = bool(
        np.any(
            (np.abs(dec.eigenvalues[1:].real - lam1.real) <= tol)
            & (np.abs(dec.eigenvalues[1:].imag) > tol)
        )
    )
    if not dom.lambda1_real or complex_tie:
        details["reason"] = (
            "a complex eigenvalue attains the dominant real part"
            if complex_tie
            else "dominant eigenvalue is not real"
        )
        return EvPosReport(VERDICT_NOT, witness=neg_entry, details=details)
    if v1.min() < -tol or w1.min() < -tol:
        details["reason"] = "dominant eigenvectors cannot be chosen nonnegative"
        return EvPosReport(VERDICT_NOT, witness=neg_entry, details=details)

    # sufficient condition (point (ii)): strict dominance + positive v1, w1
    if dom.strictly_dominant and v1.min() > tol and w1.min() > tol:
        if tail_clear:
            tau0 = 0.0 if neg_entry is None else float(
                times[np.searchsorted(times, threshold, side="right")]
            )
            details["reason"] = "spectral certificate with scan-confirmed threshold"
            return EvPosReport(VERDICT_STRONG, tau0_estimate=tau0, details=details)
        details["reason"] = (
            "spectral certificate holds but no positivity threshold was found "
            "within t_max; increase t_max"
        )
        return EvPosReport(VERDICT_INCONCLUSIVE, witness=neg_entry, details=details)

    details["reason"] = (
        "necessary spectral conditions hold but the strong certificate does not "
        "apply (necessity only)"
    )
    return EvPosReport(VERDICT_INCONCLUSIVE, witness=neg_entry, details=details)


def schur_reduce(a, slow, fast):
    """Slow/fast Schur complement A_ss - A_sf A_ff^{-1} A_fs (0-based indices)."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    slow = list(slow)
    fast = list(fast)
    if sorted(slow + fast) != list(range(n)):
        raise ValueError("slow and fast index sets must partition 0..n-1")
    ss = a[np.ix_(slow, slow)]
    sf = a[np.ix_(slow, fast)]
    fs = a[np.ix_(fast, slow)]
    ff = a[np.ix_(fast, fast)]
    if abs(np.linalg.det(ff)) < 1e-14 * max(1.0, np.linalg.norm(ff)):
        raise np.linalg.LinAlgError("fast-fast block is singular")
    return ss - sf @ np.linalg.solve(ff, fs)


@dataclass
class LorentzConeSpec:
    """Transformed Lorentz cone from left eigenvectors.

    Membership: ||(W y)[1:]|| <= (W y)[0], realized with real rows w1^T then
    sqrt(alpha_i) w_i^T (complex conjugate pairs contribute
    sqrt(2 alpha) Re(w_i)^T and sqrt(2 alpha) Im(w_i)^T, which reproduces
    alpha_i |w_i^T y|^2 exactly for equal alpha on the pair).
    """

    w_matrix: np.ndarray  # (n, n) real, invertible
    alpha: np.ndarray     # (n-1,) positive

    @property
    def condition_number(self):
        return float(np.linalg.cond(self.w_matrix))

    @classmethod
    def from_decomposition(cls, dec, alpha, tol=None):
        if tol is None:
            tol = default_tol(dec.matrix)
        n = dec.n
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (n - 1,) or np.any(alpha <= 0):
            raise ValueError("alpha must be positive with one entry per i >= 2")
        rows = [dec.w1_real()]
        i = 1
        while i < n:
            lam = dec.eigenvalues[i]
            w = dec.left[:, i]
            if abs(lam.imag) <= tol:
                rows.append(np.sqrt(alpha[i - 1]) * np.real(w))
                i += 1
            else:
                # conjugate pair; same alpha on both members
                rows.append(np.sqrt(2.0 * alpha[i - 1]) * np.real(w))
                rows.append(np.sqrt(2.0 * alpha[i - 1]) * np.imag(w))
                i += 2
        return cls(w_matrix=np.asarray(rows), alpha=alpha)

    def quadratic_parts(self, y):
        z = self.w_matrix @ np.asarray(y, dtype=float)
        return float(np.linalg.norm(z[1:])), float(z[0])


def cone_alpha_membership(spec, y):
    """Classify y against the cone: 'inside', 'boundary', or 'outside'."""
    q, s = spec.quadratic_parts(y)
    band = 1e-10 * max(1.0, abs(s), q)
    if abs(q - s) <= band:
        return "boundary"
    return "inside" if q < s else "outside"


def _orthant_interior_contains_unit_vectors(dec, gamma, tol, margin):
    """All e^j strictly inside K_gamma (enough, by convexity, for the orthant)."""
    spec = LorentzConeSpec.from_decomposition(dec, gamma, tol)
    for j in range(dec.n):
        q, s = spec.quadratic_parts(np.eye(dec.n)[j])
        if not q < s * (1.0 - 1e-12) - margin:
            return False
    return True


def _boundary_shell(spec, n_dirs, rng):
    """Unit-norm points on the cone boundary (z1 = ||z[1:]||) mapped back."""
    n = spec.w_matrix.shape[0]
    if n == 2:
        zetas = np.array([[1.0], [-1.0]])
    else:
        zetas = rng.normal(size=(n_dirs, n - 1))
        zetas /= np.linalg.norm(zetas, axis=1, keepdims=True)
    w_inv = np.linalg.inv(spec.w_matrix)
    z = np.concatenate([np.ones((len(zetas), 1)), zetas], axis=1)
    ys = z @ w_inv.T
    return ys / np.linalg.norm(ys, axis=1, keepdims=True)


def _cone_inside_orthant(dec, beta, tol, margin, n_dirs, rng):
    spec = LorentzConeSpec.from_decomposition(dec, beta, tol)
    shell = _boundary_shell(spec, n_dirs, rng)
    return bool(np.all(shell.min(axis=1) > margin))


def find_alpha_certificates(dec, tol=None, margin=1e-9, n_boundary=20000,
                            factor=2.0, lo=1e-6, hi=1e6):
    """Search for beta (cone inside the open orthant) and gamma (orthant
    inside the open cone), the pair certifying strong eventual positivity.

    Uniform vectors are searched geometrically first, then refined per
    component; the beta inclusion is decided by dense deterministic sampling
    of the cone's unit-norm boundary shell.  Returns None when either search
    exhausts its bounds (infeasible at the searched scales).
    """
    if tol is None:
        tol = default_tol(dec.matrix)
    dom = check_dominance(dec, tol)
    if not (dom.strictly_dominant and dom.lambda1_real and dom.lambda1_negative):
        raise ValueError(
            "alpha-cone certificates need a simple real negative strictly "
            "dominant eigenvalue"
        )
    n = dec.n

    # gamma: shrink until the orthant fits inside the cone
    g = 1.0
    while g >= lo:
        if _orthant_interior_contains_unit_vectors(dec, np.full(n - 1, g), tol, margin):
            break
        g /= factor
    else:
        return None
    gamma = np.full(n - 1, g)
    for i in range(n - 1):  # per-component refinement: grow while feasible
        while gamma[i] * factor <= hi:
            trial = gamma.copy()
            trial[i] *= factor
            if not _orthant_interior_contains_unit_vectors(dec, trial, tol, margin):
                break
            gamma = trial

    # beta: grow until the cone fits inside the open orthant
    rng = np.random.default_rng(181818)  # fixed sample set: deterministic verdicts
    b = 1.0
    while b <= hi:
        if _cone_inside_orthant(dec, np.full(n - 1, b), tol, margin, n_boundary, rng):
            break
        b *= factor
    else:
        return None
    beta = np.full(n - 1, b)
    for i in range(n - 1):  # refinement: shrink while feasible (larger cone)
        while beta[i] / factor >= lo:
            trial = beta.copy()
            trial[i] /= factor
            if not _cone_inside_orthant(dec, trial, tol, margin, n_boundary, rng):
                break
            beta = trial

    return {"beta": beta, "gamma": gamma}


def similarity_positivize(dec, tol=None):
    """Invertible S with S 1 = v1 and w1^T S = 1^T/n, per the explicit
    rank-one construction; S^{-1} A S is then (strongly) eventually positive.

    The states are permuted first so the pivot entry is the largest-magnitude
    entry of w1.
    """
    if tol is None:
        tol = default_tol(dec.matrix)
    dom = check_dominance(dec, tol)
    if not (dom.lambda1_real and dom.strictly_dominant):
        raise ValueError(
            "similarity positivization needs a simple real strictly dominant "
            "eigenvalue"
        )
    n = dec.n
    v = dec.v1_real()
    w = dec.w1_real()

    p = int(np.argmax(np.abs(w)))
    perm = np.arange(n)
    perm[[0, p]] = perm[[p, 0]]
    pmat = np.eye(n)[perm]  # pmat @ x permutes x
    vh = pmat @ v
    wh = pmat @ w
    if abs(wh[0]) < 1e-12 * max(1.0, np.linalg.norm(w)):
        raise ValueError("pivot entry of w1 is too small")

    ones = np.ones(n)
    s_hat = np.eye(n) / n
    s_hat[:, 0] += vh - ones / n
    s_hat[0, :] += (ones - wh) / (wh[0] * n)
    s_hat[0, 0] += -1.0 / wh[0] + (wh @ ones) / (wh[0] * n)

    s = pmat.T @ s_hat
    # construction guarantees, audited here
    if np.linalg.norm(s @ ones - v, np.inf) > 1e-9 * max(1.0, np.linalg.norm(v)):
        raise RuntimeError("similarity transform failed S 1 = v1 audit")
    if np.linalg.norm(w @ s - ones / n, np.inf) > 1e-9:
        raise RuntimeError("similarity transform failed w1^T S = 1/n audit")
    transformed = np.linalg.solve(s, dec.matrix @ s)
    report = check_eventual_positivity(transformed, tol=tol)
    if report.verdict == VERDICT_NOT:
        raise RuntimeError(
            "transformed system reported not_eventually_positive; this "
            "contradicts the construction"
        )
    return s
