"""Cone variants inducing partial orders: orthants, transformed Lorentz
cones, and finitely generated polyhedral cones.

Every variant decides membership, strict (interior) membership, and dual
membership.  Strictness margins are relative to the vector norm so the
tests are scale-invariant.  Batch variants take (m, n) stacks of vectors
and vectorize, which the isostable scans rely on.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from .linear import LorentzConeSpec

DEFAULT_TOL = 1e-9


class ConeError(ValueError):
    pass


def _norms(ys):
    return np.maximum(np.linalg.norm(ys, axis=1), 1e-300)


@dataclass(frozen=True)
class OrthantSignature:
    """Orthant diag(sigma) R^n_{>=0}; self-dual."""

    sigma: tuple

    def __post_init__(self):
        if any(s not in (-1, 1) for s in self.sigma):
            raise ConeError("orthant signature entries must be +1 or -1")

    @property
    def dim(self):
        return len(self.sigma)

    def _sig(self):
        return np.asarray(self.sigma, dtype=float)

    def membership_many(self, ys, tol=DEFAULT_TOL):
        ys = np.atleast_2d(ys)
        return np.all(ys * self._sig() >= -tol * _norms(ys)[:, None], axis=1)

    def strict_membership_many(self, ys, margin=DEFAULT_TOL):
        ys = np.atleast_2d(ys)
        return np.all(ys * self._sig() > margin * _norms(ys)[:, None], axis=1)

    def membership(self, y, tol=DEFAULT_TOL):
        return bool(self.membership_many(np.asarray(y)[None, :], tol)[0])

    def strict_membership(self, y, margin=DEFAULT_TOL):
        return bool(self.strict_membership_many(np.asarray(y)[None, :], margin)[0])

    def dual_membership(self, c, tol=DEFAULT_TOL):
        return self.membership(c, tol)

    def strict_dual_membership(self, c, margin=DEFAULT_TOL):
        return self.strict_membership(c, margin)

    def sample(self, rng, count, scale=1.0):
        return self._sig() * np.abs(rng.normal(size=(count, self.dim))) * scale

    def describe(self):
        return {"type": "orthant", "sigma": list(self.sigma)}


@dataclass(frozen=True)
class TransformedLorentz:
    """Cone {y : ||(W y)[1:]|| <= (W y)[0]} for an invertible W."""

    spec: LorentzConeSpec

    @property
    def dim(self):
        return self.spec.w_matrix.shape[0]

    def _parts_many(self, ys):
        z = np.atleast_2d(ys) @ self.spec.w_matrix.T
        return np.linalg.norm(z[:, 1:], axis=1), z[:, 0]

    def membership_many(self, ys, tol=DEFAULT_TOL):
        q, s = self._parts_many(ys)
        scale = np.maximum(np.abs(s), q) + 1e-300
        return q <= s + tol * scale

    def strict_membership_many(self, ys, margin=DEFAULT_TOL):
        q, s = self._parts_many(ys)
        scale = np.maximum(np.abs(s), q) + 1e-300
        return (s > 0) & (q < s - margin * scale)

    def membership(self, y, tol=DEFAULT_TOL):
        return bool(self.membership_many(np.asarray(y)[None, :], tol)[0])

    def strict_membership(self, y, margin=DEFAULT_TOL):
        return bool(self.strict_membership_many(np.asarray(y)[None, :], margin)[0])

    def dual_membership(self, c, tol=DEFAULT_TOL):
        # y in K iff W y in Lorentz (self-dual), so K* = {c : W^{-T} c in L}
        z = np.linalg.solve(self.spec.w_matrix.T, np.asarray(c, dtype=float))
        q = np.linalg.norm(z[1:])
        scale = max(abs(z[0]), q) + 1e-300
        return q <= z[0] + tol * scale

    def strict_dual_membership(self, c, margin=DEFAULT_TOL):
        z = np.linalg.solve(self.spec.w_matrix.T, np.asarray(c, dtype=float))
        q = np.linalg.norm(z[1:])
        scale = max(abs(z[0]), q) + 1e-300
        return z[0] > 0 and q < z[0] - margin * scale

    def sample(self, rng, count, scale=1.0):
        zeta = rng.normal(size=(count, self.dim - 1))
        zeta /= np.linalg.norm(zeta, axis=1, keepdims=True)
        radii = rng.uniform(0.0, 0.999, size=(count, 1))
        z = np.concatenate([np.ones((count, 1)), zeta * radii], axis=1)
        ys = np.linalg.solve(self.spec.w_matrix, z.T).T
        return ys * scale / _norms(ys)[:, None]

    def describe(self):
        return {
            "type": "transformed_lorentz",
            "w_matrix": self.spec.w_matrix.tolist(),
            "alpha": self.spec.alpha.tolist(),
            "condition_number": self.spec.condition_number,
        }


def _normals_2d(gens):
    angles = np.arctan2(gens[:, 1], gens[:, 0])
    order = np.argsort(angles)
    span = angles[order[-1]] - angles[order[0]]
    if span >= np.pi + 1e-12:
        raise ConeError("2D generators span more than a half-plane (not pointed)")
    g_lo = gens[order[0]]
    g_hi = gens[order[-1]]
    n_lo = np.array([-g_lo[1], g_lo[0]])   # +90 degrees
    n_hi = np.array([g_hi[1], -g_hi[0]])   # -90 degrees
    normals = [n_lo, n_hi]
    if abs(span - np.pi) <= 1e-12:  # half-plane: the two normals coincide
        normals = [n_lo]
    return np.asarray(normals)


def _normals_3d(gens):
    from scipy.spatial import ConvexHull

    unit = gens / np.linalg.norm(gens, axis=1, keepdims=True)
    pts = np.vstack([np.zeros(3), unit])
    try:
        hull = ConvexHull(pts, qhull_options="QJ")
    except Exception as exc:  # pragma: no cover - qhull failure surface
        raise ConeError(f"conic hull construction failed: {exc}") from exc
    normals = []
    for eq in hull.equations:
        n, off = eq[:3], eq[3]
        if abs(off) <= 1e-9:  # facet through the apex: supporting hyperplane
            cand = -n  # hull interior satisfies n.x + off <= 0
            if np.all(unit @ cand >= -1e-9):
                normals.append(cand / np.linalg.norm(cand))
    if not normals:
        raise ConeError("generators span R^3 (cone has empty H-representation)")
    return np.unique(np.round(np.asarray(normals), 12), axis=0)


@dataclass(frozen=True)
class PolyhedralGenerated:
    """Conic hull of finitely many generator rays (n <= 3 for interior tests).

    Dual membership is exact: c in K* iff c . g >= 0 for every generator.
    Primal membership uses the facet normals of the conic hull.
    """

    generators: np.ndarray  # (k, n) rows
    _normals_cache: list = dc_field(default_factory=list, compare=False)

    def __post_init__(self):
        gens = np.atleast_2d(np.asarray(self.generators, dtype=float))
        if np.any(np.linalg.norm(gens, axis=1) < 1e-300):
            raise ConeError("zero generator ray")
        object.__setattr__(self, "generators", gens)

    @property
    def dim(self):
        return self.generators.shape[1]

    def normals(self):
        """Inward facet normals: K = {y : N y >= 0}."""
        if not self._normals_cache:
            n = self.dim
            gens = self.generators
            if n == 1:
                self._normals_cache.append(np.sign(gens[:1]))
            elif n == 2:
                self._normals_cache.append(_normals_2d(gens))
            elif n == 3:
                self._normals_cache.append(_normals_3d(gens))
            else:
                raise ConeError(
                    "polyhedral membership implemented for n <= 3 only"
                )
        return self._normals_cache[0]

    def membership_many(self, ys, tol=DEFAULT_TOL):
        ys = np.atleast_2d(ys)
        proj = ys @ self.normals().T
        return np.all(proj >= -tol * _norms(ys)[:, None], axis=1)

    def strict_membership_many(self, ys, margin=DEFAULT_TOL):
        ys = np.atleast_2d(ys)
        proj = ys @ self.normals().T
        return np.all(proj > margin * _norms(ys)[:, None], axis=1)

    def membership(self, y, tol=DEFAULT_TOL):
        return bool(self.membership_many(np.asarray(y)[None, :], tol)[0])

    def strict_membership(self, y, margin=DEFAULT_TOL):
        return bool(self.strict_membership_many(np.asarray(y)[None, :], margin)[0])

    def dual_membership(self, c, tol=DEFAULT_TOL):
        c = np.asarray(c, dtype=float)
        gnorm = np.linalg.norm(self.generators, axis=1)
        return bool(np.all(self.generators @ c >= -tol * gnorm * np.linalg.norm(c)))

    def strict_dual_membership(self, c, margin=DEFAULT_TOL):
        c = np.asarray(c, dtype=float)
        gnorm = np.linalg.norm(self.generators, axis=1)
        return bool(np.all(self.generators @ c > margin * gnorm * np.linalg.norm(c)))

    def sample(self, rng, count, scale=1.0):
        coeffs = np.abs(rng.normal(size=(count, self.generators.shape[0])))
        ys = coeffs @ self.generators
        return ys * scale / _norms(ys)[:, None]

    def describe(self):
        return {"type": "polyhedral", "generators": self.generators.tolist()}


def cone_from_json(doc):
    """Build a cone from its JSON description (inverse of describe())."""
    kind = doc.get("type")
    if kind == "orthant":
        return OrthantSignature(tuple(int(s) for s in doc["sigma"]))
    if kind == "polyhedral":
        return PolyhedralGenerated(np.asarray(doc["generators"], dtype=float))
    if kind == "transformed_lorentz":
        spec = LorentzConeSpec(
            w_matrix=np.asarray(doc["w_matrix"], dtype=float),
            alpha=np.asarray(doc["alpha"], dtype=float),
        )
        return TransformedLorentz(spec)
    raise ConeError(f"unknown cone type {kind!r}")


def all_orthant_signatures(n):
    """All 2^n orthant signatures (antipodal pairs induce the same order)."""
    out = []
    for bits in range(2**n):
        out.append(OrthantSignature(
            tuple(1 if bits & (1 << k) else -1 for k in range(n))
        ))
    return out
