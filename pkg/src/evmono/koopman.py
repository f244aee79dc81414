"""Dominant Koopman eigenfunction s1 and its gradient via Laplace averages.

s1 is evaluated pointwise from the terminal estimate

    s1(x) ~= exp(-lambda1*T) * w1^T (phi(T, x) - x*)

whose limit equals the Laplace average of the observable g(x) = w1^T (x-x*);
convergence is gated by agreement of the estimates at 0.6T, 0.8T and T.  The
gradient uses the prolonged system with observable w1^T delta-x, one tangent
column per state direction.  Points where the estimate blows up between
checkpoints are flagged divergent (outside the basin of attraction).
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field

import numpy as np

from .ode import (
    DivergenceError,
    IntegrationError,
    integrate,
    integrate_prolonged,
    integrate_stops,
)
from .spectral import check_dominance, decompose

GATE_REL = 1e-3          # checkpoint agreement for accepting an estimate
GROWTH_CAP = 10.0        # estimate growth between checkpoints flagging divergence
CHECKPOINT_FRACTIONS = (0.6, 0.8, 1.0)


class SpectralPreconditionError(ValueError):
    """The dominant eigenvalue is not simple, real, negative, strictly dominant."""


@dataclass
class KoopmanSpec:
    """Equilibrium-anchored spectral data used by the Laplace averages."""

    x_star: np.ndarray
    dec: object
    lambda1: float
    v1: np.ndarray
    w1: np.ndarray
    gap: float

    def default_t_end(self):
        return max(10.0 / abs(self.lambda1), 10.0 / self.gap)

    def to_dict(self):
        return {
            "x_star": self.x_star.tolist(),
            "lambda1": self.lambda1,
            "v1": self.v1.tolist(),
            "w1": self.w1.tolist(),
            "gap": self.gap,
        }


def make_koopman_spec(field, x_star, tol=None, orient=None):
    """Build the spec at an equilibrium, refusing unsuitable spectra.

    The (v1, w1) pair is a gauge choice: both signs give valid eigenfunction
    normalizations.  By default the pair is oriented so that sum(w1) > 0
    (largest-|.| entry of w1 positive on a tie); pass ``orient`` to fix the
    sign so that orient . v1 > 0 instead, e.g. to match a published vector.
    """
    x_star = np.asarray(x_star, dtype=float)
    jac = field.dyn_jacobian(x_star)
    dec = decompose(jac)
    if not dec.diagonalizable:
        raise SpectralPreconditionError("Jacobian at x* is not diagonalizable")
    dom = check_dominance(dec, tol)
    if not (dom.lambda1_real and dom.lambda1_simple and dom.lambda1_negative
            and dom.strictly_dominant):
        raise SpectralPreconditionError(
            "dominant eigenvalue must be simple, real, negative and strictly "
            f"dominant; got {dec.eigenvalues.tolist()}"
        )
    lam1 = float(dec.eigenvalues[0].real)
    v1 = dec.v1_real()
    w1 = dec.w1_real()
    # normalize v1 to unit length, keep w1^T v1 = 1
    nv = np.linalg.norm(v1)
    v1 = v1 / nv
    w1 = w1 * nv
    if orient is not None:
        flip = float(np.dot(np.asarray(orient, dtype=float), v1)) < 0
    else:
        s = float(np.sum(w1))
        flip = s < 0 if abs(s) > 1e-12 else w1[np.argmax(np.abs(w1))] < 0
    if flip:
        v1, w1 = -v1, -w1
    return KoopmanSpec(
        x_star=x_star, dec=dec, lambda1=lam1, v1=v1, w1=w1, gap=dom.gap
    )


def _checkpoints(t_end):
    return np.asarray([f * t_end for f in CHECKPOINT_FRACTIONS])


def _gate(estimates, floor, what):
    """Accept the final estimate if consecutive checkpoints agree to GATE_REL."""
    norms = [max(float(np.linalg.norm(np.atleast_1d(e))), floor) for e in estimates]
    for a, b, nb in zip(estimates, estimates[1:], norms[1:]):
        if float(np.linalg.norm(np.atleast_1d(b - a))) > GATE_REL * max(nb, floor):
            raise IntegrationError(
                f"{what}: Laplace average did not converge at the given horizon "
                f"(checkpoint estimates {[repr(e) for e in estimates]})"
            )
    return estimates[-1]


def _divergence_check(estimates, floor):
    for a, b in zip(estimates, estimates[1:]):
        na = float(np.linalg.norm(np.atleast_1d(a)))
        nb = float(np.linalg.norm(np.atleast_1d(b)))
        if nb > GROWTH_CAP * max(na, floor):
            raise DivergenceError(
                "Laplace estimate grows between checkpoints; point is outside "
                "the basin of attraction"
            )


def _noise_capped_horizon(t, spec, abs_tol, est_scale):
    """Largest horizon keeping abs_tol * e^{|lambda1| T} below the gate."""
    cap = np.log(max(est_scale, 1e-6) * GATE_REL * 0.1 / abs_tol) / abs(spec.lambda1)
    return min(2.0 * t, cap)


def eval_s1(spec, field, x, t_end=None, rel_tol=1e-9, abs_tol=1e-12,
            growth_cap=GROWTH_CAP, max_steps=None):
    """Pointwise dominant eigenfunction value by terminal Laplace estimate.

    With the default horizon, a failed convergence gate retries at doubled
    horizons while integration noise (amplified by e^{-lambda1 t}) stays
    below the gate; an explicit t_end is used as given.
    """
    x = np.asarray(x, dtype=float)
    dx = x - spec.x_star
    scale = 1.0 + float(np.linalg.norm(spec.w1) * np.linalg.norm(dx))
    if np.linalg.norm(dx) <= 1e-14 * scale:
        return 0.0
    extend = t_end is None
    if extend:
        t_end = spec.default_t_end()
    floor = 1e-9 * scale
    for attempt in range(3):
        stops = _checkpoints(t_end)
        kwargs = {} if max_steps is None else {"max_steps": int(max_steps)}
        states = integrate_stops(field, x, stops, rel_tol=rel_tol,
                                 abs_tol=abs_tol, **kwargs)
        ests = [
            float(np.exp(-spec.lambda1 * t) * (spec.w1 @ (xt - spec.x_star)))
            for t, xt in zip(stops, states)
        ]
        for a, b in zip(ests, ests[1:]):
            if abs(b) > growth_cap * max(abs(a), floor):
                raise DivergenceError(
                    "Laplace estimate grows between checkpoints; point is "
                    "outside the basin of attraction"
                )
        try:
            return float(_gate(np.asarray(ests), floor, "eval_s1"))
        except IntegrationError:
            if not extend:
                raise
            longer = _noise_capped_horizon(t_end, spec, abs_tol, abs(ests[-1]))
            if longer <= t_end * 1.05 or attempt == 2:
                raise
            t_end = longer


def eval_grad_s1(spec, field, x, t_end=None, rel_tol=1e-9, abs_tol=1e-12,
                 growth_cap=GROWTH_CAP, max_steps=None):
    """Gradient of s1 from the prolonged system, one column per direction.

    Same convergence gate and horizon-extension policy as eval_s1.
    """
    x = np.asarray(x, dtype=float)
    extend = t_end is None
    if extend:
        t_end = spec.default_t_end()
    floor = 1e-9 * (1.0 + float(np.linalg.norm(spec.w1)))
    for attempt in range(3):
        stops = _checkpoints(t_end)
        kwargs = {} if max_steps is None else {"max_steps": int(max_steps)}
        pstates = integrate_prolonged(
            field, x, np.eye(field.dim), t_end, rel_tol=rel_tol, abs_tol=abs_tol,
            t_eval=stops, **kwargs,
        )
        ests = [
            np.exp(-spec.lambda1 * ps.t) * (spec.w1 @ ps.dX) for ps in pstates
        ]
        for a, b in zip(ests, ests[1:]):
            if np.linalg.norm(b) > growth_cap * max(np.linalg.norm(a), floor):
                raise DivergenceError(
                    "gradient Laplace estimate grows between checkpoints; point "
                    "is outside the basin of attraction"
                )
        try:
            return np.asarray(_gate(ests, floor, "eval_grad_s1"))
        except IntegrationError:
            if not extend:
                raise
            longer = _noise_capped_horizon(
                t_end, spec, abs_tol, float(np.linalg.norm(ests[-1]))
            )
            if longer <= t_end * 1.05 or attempt == 2:
                raise
            t_end = longer


def laplace_average_literal(spec, field, x, t_end=None, rel_tol=1e-9,
                            abs_tol=1e-12):
    """Time-averaged (1/t) integral form of the Laplace average.

    Slower-converging than the terminal estimate (O(1/t) tail), kept for
    cross-validation; a Richardson step removes the leading 1/t error.
    Quadrature runs on the accepted integration nodes.
    """
    x = np.asarray(x, dtype=float)
    if t_end is None:
        t_end = spec.default_t_end()
    traj = integrate(field, x, t_end, rel_tol=rel_tol, abs_tol=abs_tol)
    g = (traj.states - spec.x_star[None, :]) @ spec.w1
    integrand = g * np.exp(-spec.lambda1 * traj.times)
    cum = np.concatenate(
        [[0.0], np.cumsum(np.diff(traj.times) * 0.5 * (integrand[1:] + integrand[:-1]))]
    )
    a_full = cum[-1] / t_end
    a_half = np.interp(t_end / 2.0, traj.times, cum) / (t_end / 2.0)
    return float(2.0 * a_full - a_half)


@dataclass
class EigenfunctionField:
    """s1 (and optionally grad s1) sampled over an axis-aligned grid window.

    For cross-sections, ``axes`` names the state coordinates spanned by the
    grid and ``base_point`` freezes the remaining ones.  Divergent points
    (outside the basin) are masked, not errors.
    """

    axes: tuple
    base_point: np.ndarray
    window: tuple          # ((lo, hi), ...) per grid axis
    grid_shape: tuple
    s1: np.ndarray
    grad: object           # ndarray (*grid_shape, dim) or None
    divergent: np.ndarray  # bool mask
    spec_info: dict = dc_field(default_factory=dict)

    def axis_coords(self, k):
        lo, hi = self.window[k]
        return np.linspace(lo, hi, self.grid_shape[k])

    def grid_points(self):
        """Full-state coordinates of every grid node, shape (*grid_shape, dim)."""
        coords = np.meshgrid(*[self.axis_coords(k) for k in range(len(self.grid_shape))],
                             indexing="ij")
        pts = np.broadcast_to(
            self.base_point, (*self.grid_shape, len(self.base_point))
        ).copy()
        for k, ax in enumerate(self.axes):
            pts[..., ax] = coords[k]
        return pts

    def interpolate(self, y):
        """Multilinear interpolation of s1 at grid-space point y."""
        y = np.asarray(y, dtype=float)
        nd = len(self.grid_shape)
        idx = []
        frac = []
        for k in range(nd):
            xs = self.axis_coords(k)
            if not xs[0] <= y[k] <= xs[-1]:
                raise ValueError("interpolation point outside the window")
            i = min(int(np.searchsorted(xs, y[k], side="right") - 1),
                    len(xs) - 2)
            i = max(i, 0)
            idx.append(i)
            frac.append((y[k] - xs[i]) / (xs[i + 1] - xs[i]))
        acc = 0.0
        for corner in np.ndindex(*([2] * nd)):
            node = tuple(idx[k] + corner[k] for k in range(nd))
            if self.divergent[node]:
                raise DivergenceError("interpolation cell touches divergent node")
            wgt = 1.0
            for k in range(nd):
                wgt *= frac[k] if corner[k] else (1.0 - frac[k])
            acc += wgt * self.s1[node]
        return float(acc)

    def dump(self, fh):
        """Columns: x1 .. xn s1 [ds1_1 .. ds1_n] divergent."""
        pts = self.grid_points()
        for node in np.ndindex(*self.grid_shape):
            row = list(pts[node])
            row.append(self.s1[node])
            if self.grad is not None:
                row.extend(self.grad[node])
            fh.write(" ".join(repr(float(v)) for v in row)
                     + f" {int(self.divergent[node])}\n")

    def sidecar(self):
        return {
            "axes": list(self.axes),
            "base_point": self.base_point.tolist(),
            "window": [list(w) for w in self.window],
            "grid_shape": list(self.grid_shape),
            "spec": self.spec_info,
        }

    def write_sidecar(self, fh):
        json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def eval_field_on_grid(spec, field, window, grid_shape, with_gradients=False,
                       axes=None, base_point=None, t_end=None,
                       rel_tol=1e-9, abs_tol=1e-12, jobs=1, max_steps=None):
    """Sample s1 (and optionally its gradient) on a grid window.

    Output is deterministic and independent of ``jobs``: every grid node is
    an independent task writing to its own pre-indexed slot.
    """
    window = tuple((float(lo), float(hi)) for lo, hi in window)
    grid_shape = tuple(int(g) for g in grid_shape)
    if len(window) != len(grid_shape):
        raise ValueError("window and grid_shape rank mismatch")
    for (lo, hi), g in zip(window, grid_shape):
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise ValueError("window must be finite with positive extent")
        if g < 2:
            raise ValueError("grid_shape entries must be >= 2")
    if axes is None:
        axes = tuple(range(field.dim))
    axes = tuple(int(a) for a in axes)
    if len(axes) != len(grid_shape):
        raise ValueError("axes and grid rank mismatch")
    if base_point is None:
        if len(axes) != field.dim:
            raise ValueError("base_point required for cross-sections")
        base_point = np.zeros(field.dim)
    base_point = np.asarray(base_point, dtype=float)

    coords = [np.linspace(lo, hi, g) for (lo, hi), g in zip(window, grid_shape)]
    s1 = np.full(grid_shape, np.nan)
    grad = np.full((*grid_shape, field.dim), np.nan) if with_gradients else None
    divergent = np.zeros(grid_shape, dtype=bool)
    nodes = list(np.ndindex(*grid_shape))

    extra = {} if max_steps is None else {"max_steps": int(max_steps)}

    def work(node):
        x = base_point.copy()
        for k, ax in enumerate(axes):
            x[ax] = coords[k][node[k]]
        try:
            if with_gradients:
                g = eval_grad_s1(spec, field, x, t_end=t_end,
                                 rel_tol=rel_tol, abs_tol=abs_tol, **extra)
                v = eval_s1(spec, field, x, t_end=t_end,
                            rel_tol=rel_tol, abs_tol=abs_tol, **extra)
            else:
                g = None
                v = eval_s1(spec, field, x, t_end=t_end,
                            rel_tol=rel_tol, abs_tol=abs_tol, **extra)
        except (DivergenceError, IntegrationError):
            divergent[node] = True
            return
        s1[node] = v
        if with_gradients:
            grad[node] = g

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(work, nodes))
    else:
        for node in nodes:
            work(node)

    return EigenfunctionField(
        axes=axes,
        base_point=base_point,
        window=window,
        grid_shape=grid_shape,
        s1=s1,
        grad=grad,
        divergent=divergent,
        spec_info=spec.to_dict(),
    )

@dataclass
class Isostable:
    """One connected level-set polyline of |s1| in a 2D cross-section.

    ``sign`` records which signed branch (s1 = +level or s1 = -level) the
    polyline came from; order-comparability statements apply per signed
    branch, where s1 is constant.
    """

    level: float
    points: np.ndarray  # (m, 2) vertices in the grid-axis state coordinates
    sign: int = 1


def _cell_crossings(xs, ys, z, c, i, j):
    """Linear crossings of z = c on the four edges of cell (i, j)."""
    corners = (
        (z[i, j], xs[i], ys[j]),
        (z[i + 1, j], xs[i + 1], ys[j]),
        (z[i + 1, j + 1], xs[i + 1], ys[j + 1]),
        (z[i, j + 1], xs[i], ys[j + 1]),
    )
    edges = ((0, 1), (1, 2), (3, 2), (0, 3))
    pts = []
    for ea, eb in edges:
        za, xa, ya = corners[ea]
        zb, xb, yb = corners[eb]
        if (za - c) * (zb - c) < 0.0:
            t = (c - za) / (zb - za)
            pts.append((xa + t * (xb - xa), ya + t * (yb - ya)))
        elif za == c and zb != c:
            pts.append((xa, ya))
    # drop duplicates from corner hits
    uniq = []
    for p in pts:
        if not any(abs(p[0] - q[0]) < 1e-15 and abs(p[1] - q[1]) < 1e-15 for q in uniq):
            uniq.append(p)
    return uniq, corners


def _signed_contour_segments(xs, ys, z, c):
    segs = []
    nx, ny = z.shape
    for i in range(nx - 1):
        for j in range(ny - 1):
            if np.any(np.isnan(z[i:i + 2, j:j + 2])):
                continue
            pts, corners = _cell_crossings(xs, ys, z, c, i, j)
            if len(pts) == 2:
                segs.append((pts[0], pts[1]))
            elif len(pts) == 4:
                # saddle cell: pair crossings using the centre value
                centre = np.mean([cr[0] for cr in corners])
                # edge order is bottom, right, top, left
                if (corners[0][0] - c) * (centre - c) > 0:
                    segs.append((pts[0], pts[3]))
                    segs.append((pts[1], pts[2]))
                else:
                    segs.append((pts[0], pts[1]))
                    segs.append((pts[2], pts[3]))
    return segs


def _chain_segments(segs, tol):
    """Merge raw cell segments into polylines by matching endpoints."""

    def key(p):
        return (round(p[0] / tol), round(p[1] / tol))

    adj = {}
    for s, (p, q) in enumerate(segs):
        adj.setdefault(key(p), []).append((s, 0))
        adj.setdefault(key(q), []).append((s, 1))

    used = [False] * len(segs)
    chains = []
    for s0 in range(len(segs)):
        if used[s0]:
            continue
        used[s0] = True
        chain = [segs[s0][0], segs[s0][1]]
        for end in (1, 0):
            while True:
                k = key(chain[-1] if end == 1 else chain[0])
                nxt = [(s, e) for (s, e) in adj.get(k, []) if not used[s]]
                if not nxt:
                    break
                s, e = nxt[0]
                used[s] = True
                p_new = segs[s][1 - e]
                if end == 1:
                    chain.append(p_new)
                else:
                    chain.insert(0, p_new)
        chains.append(np.asarray(chain))
    return chains


def extract_isostables(field2d, levels):
    """Marching-squares contours of |s1| at the given levels.

    |s1| = alpha is extracted as the union of the signed contours s1 = alpha
    and s1 = -alpha (identical level sets, numerically better behaved near
    the zero isostable through x*).  Divergent-cornered cells are skipped.
    Levels outside the sampled range yield no polylines.
    """
    if len(field2d.grid_shape) != 2:
        raise ValueError("isostable extraction needs a 2D field or cross-section")
    xs = field2d.axis_coords(0)
    ys = field2d.axis_coords(1)
    z = field2d.s1.copy()
    z[field2d.divergent] = np.nan
    tol = 1e-9 * max(xs[-1] - xs[0], ys[-1] - ys[0])
    out = []
    for level in levels:
        level = float(level)
        if level < 0:
            raise ValueError("isostable levels are |s1| values, must be >= 0")
        targets = [(level, 1)] if level == 0.0 else [(level, 1), (-level, -1)]
        for c, sign in targets:
            for chain in _chain_segments(_signed_contour_segments(xs, ys, z, c), tol):
                out.append(Isostable(level=level, points=chain, sign=sign))
    return out


def dump_isostables(isostables, fh):
    """Plain-text rows: level x y (blank line between polylines)."""
    for iso in isostables:
        for x, y in iso.points:
            fh.write(f"{iso.level!r} {float(x)!r} {float(y)!r}\n")
        fh.write("\n")
