"""Dense eigenstructure with slow-mode-first ordering and Perron-Frobenius tests.

Eigenvalues are sorted by descending real part; within a real-part tie the
real eigenvalue leads (ascending |Im|), then ascending imaginary part for
determinism.  Right and left eigenvectors are paired by eigenvalue matching
and biorthonormalized so that w_i^T v_j = delta_ij.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.linalg import expm
from scipy.optimize import linear_sum_assignment


class NotDiagonalizableError(ValueError):
    """Raised when a computation requires a diagonalizable matrix."""


def default_tol(a):
    """Default spectral tolerance, 1e-8 scaled by the matrix norm."""
    return 1e-8 * max(1.0, float(np.linalg.norm(a)))


@dataclass
class SpectralDecomposition:
    """Eigenvalues with biorthonormal right/left eigenvector columns."""

    eigenvalues: np.ndarray  # complex, descending real part
    right: np.ndarray        # columns v_i
    left: np.ndarray         # columns w_i, w_i^T v_j = delta_ij when diagonalizable
    diagonalizable: bool
    matrix: np.ndarray

    @property
    def n(self):
        return self.eigenvalues.shape[0]

    @property
    def a_norm(self):
        return float(np.linalg.norm(self.matrix))

    def v(self, i):
        return self.right[:, i]

    def w(self, i):
        return self.left[:, i]

    def v1_real(self):
        return np.real(self.right[:, 0])

    def w1_real(self):
        return np.real(self.left[:, 0])


@dataclass
class DominanceReport:
    """Flags encoding the spectral preconditions of the certificates."""

    lambda1_real: bool
    lambda1_simple: bool
    lambda1_negative: bool
    strictly_dominant: bool  # implies lambda1_simple
    a2_holds: bool           # no eigenvalue with (near-)zero real part
    gap: float               # Re(lambda1) - max_{j>=2} Re(lambda_j)

    def to_dict(self):
        return {
            "lambda1_real": self.lambda1_real,
            "lambda1_simple": self.lambda1_simple,
            "lambda1_negative": self.lambda1_negative,
            "strictly_dominant": self.strictly_dominant,
            "a2_holds": self.a2_holds,
            "gap": self.gap,
        }


class PFClass(Enum):
    PF_N = "PF_n"
    WPF_N_ONLY = "WPF_n_only"
    NEITHER = "neither"


def _sort_order(values):
    # descending real part; ties: real eigenvalue first, then ascending Im
    return np.lexsort((values.imag, np.abs(values.imag), -values.real))


def decompose(a):
    """Full eigendecomposition of a real square matrix (n <= 50).

    Left eigenvectors come from the transpose and are re-paired to the right
    ones by eigenvalue matching.  Clusters of (numerically) repeated
    eigenvalues are biorthonormalized jointly; failure to do so marks the
    decomposition non-diagonalizable.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    n = a.shape[0]
    if n > 50:
        raise ValueError("dense decomposition limited to n <= 50")

    tol = default_tol(a)
    vals, vr = np.linalg.eig(a)
    lvals, wl = np.linalg.eig(a.T)

    order = _sort_order(vals)
    vals = vals[order]
    vr = vr[:, order]

    # pair left eigenvectors to right ones by eigenvalue proximity
    cost = np.abs(vals[:, None] - lvals[None, :])
    rows, cols = linear_sum_assignment(cost)
    wl = wl[:, cols[np.argsort(rows)]]

    vr = vr / np.linalg.norm(vr, axis=0)

    # biorthonormalize cluster-wise: W_c <- W_c (W_c^T V_c)^{-T}
    diagonalizable = bool(np.linalg.cond(vr) < 1e12)
    assigned = np.zeros(n, dtype=bool)
    i = 0
    while i < n:
        cluster = [i]
        for j in range(i + 1, n):
            if abs(vals[j] - vals[i]) <= tol:
                cluster.append(j)
            else:
                break
        idx = np.array(cluster)
        g = wl[:, idx].T @ vr[:, idx]
        if np.linalg.cond(g) > 1e12:
            diagonalizable = False
        else:
            wl[:, idx] = wl[:, idx] @ np.linalg.inv(g).T
        assigned[idx] = True
        i = cluster[-1] + 1

    if diagonalizable:
        resid = np.abs(wl.T @ vr - np.eye(n)).max()
        if resid > 1e-10:
            diagonalizable = False

    # phase/sign normalization for real eigenvalues: largest-|.| entry of v
    # real positive, w rescaled to preserve w^T v = 1
    for k in range(n):
        if abs(vals[k].imag) <= tol:
            vals[k] = vals[k].real
            pivot = vr[np.argmax(np.abs(vr[:, k])), k]
            if abs(pivot) > 0:
                phase = pivot / abs(pivot)
                vr[:, k] = vr[:, k] / phase
                wl[:, k] = wl[:, k] * phase
            if np.max(np.abs(vr[:, k].imag)) <= 1e-9:
                vr[:, k] = vr[:, k].real
            if np.max(np.abs(wl[:, k].imag)) <= 1e-9:
                wl[:, k] = wl[:, k].real

    return SpectralDecomposition(
        eigenvalues=vals, right=vr, left=wl, diagonalizable=diagonalizable, matrix=a
    )


def check_dominance(dec, tol=None):
    """Evaluate realness/simplicity/dominance of the leading eigenvalue."""
    if tol is None:
        tol = default_tol(dec.matrix)
    vals = dec.eigenvalues
    lam1 = vals[0]
    lambda1_real = abs(lam1.imag) <= tol
    if dec.n == 1:
        simple = True
        gap = np.inf
    else:
        simple = np.min(np.abs(vals[1:] - lam1)) > tol
        gap = float(lam1.real - np.max(vals[1:].real))
    strictly_dominant = bool(lambda1_real and simple and gap > tol)
    return DominanceReport(
        lambda1_real=bool(lambda1_real),
        lambda1_simple=bool(simple),
        lambda1_negative=bool(lam1.real < -tol),
        strictly_dominant=strictly_dominant,
        a2_holds=bool(np.min(np.abs(vals.real)) > tol),
        gap=gap,
    )


def _orient_nonneg(vec):
    """Flip sign so the largest-magnitude entry is positive; report min entry."""
    v = np.real(vec)
    pivot = v[np.argmax(np.abs(v))]
    if pivot < 0:
        v = -v
    return v, float(v.min())


def classify_pf(a, tol=None):
    """Classify A as PF_n, WPF_n_only, or neither.

    PF_n: rho(A) is a simple positive eigenvalue, strictly dominant in
    modulus, with strictly positive right and left eigenvectors.  The weak
    version drops simplicity/strict dominance/strict positivity but still
    requires rho(A) itself to be an eigenvalue with nonnegative eigenvectors
    for both A and A^T.
    """
    a = np.asarray(a, dtype=float)
    if tol is None:
        tol = default_tol(a)
    dec = decompose(a)
    vals = dec.eigenvalues
    rho = float(np.max(np.abs(vals)))
    if rho <= tol:  # nilpotent-like: spectral radius not positive
        return PFClass.NEITHER

    # candidates: real eigenvalues attaining the spectral radius
    cand = [
        k
        for k in range(dec.n)
        if abs(vals[k].imag) <= tol and vals[k].real > tol and abs(vals[k]) >= rho - tol
    ]
    if not cand:
        return PFClass.NEITHER

    best = None
    for k in cand:
        v, vmin = _orient_nonneg(dec.right[:, k])
        w, wmin = _orient_nonneg(dec.left[:, k])
        if vmin >= -tol and wmin >= -tol:
            best = (k, vmin, wmin)
            break
    if best is None:
        return PFClass.NEITHER

    k, vmin, wmin = best
    others = np.delete(np.abs(vals), k)
    simple = dec.n == 1 or np.min(np.abs(np.delete(vals, k) - vals[k])) > tol
    strictly_dominant_mod = others.size == 0 or rho - np.max(others) > tol
    if simple and strictly_dominant_mod and vmin > tol and wmin > tol:
        return PFClass.PF_N
    return PFClass.WPF_N_ONLY


def matrix_exp(a, t):
    """e^{At} via scipy's scaling-and-squaring Pade implementation."""
    a = np.asarray(a, dtype=float)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    result = expm(a * t)
    if not np.all(np.isfinite(result)):
        raise OverflowError(
            f"matrix exponential overflowed at t={t} (unstable spectrum?)"
        )
    return result
