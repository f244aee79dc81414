"""Monotonicity and eventual-monotonicity certificates.

The sampled spectral certificate: the system is strongly eventually monotone
with respect to some cone iff v1 . grad s1(x) > 0 throughout the basin; a
concrete cone K additionally needs v1 in int(K) and grad s1(x) in int(K*).
All basin-wide quantifiers are discharged by sampling (low-discrepancy
points, strict relative margins); reports carry sample counts and margins,
so a verdict is a sampled certificate, never a proof.  Apparent violations
must persist under one integration-tolerance refinement before they falsify
(guarding against slightly negative gradient components from numerics).
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.stats import qmc

from .cones import OrthantSignature, PolyhedralGenerated
from .koopman import eval_grad_s1, eval_s1
from .ode import DivergenceError, IntegrationError, integrate_stops

MARGIN_REL = 1e-6
REFINE_FACTOR = 100.0

VERDICT_SEM = "strongly_eventually_monotone"
VERDICT_NECESSARY = "necessary_conditions_hold"
VERDICT_FALSIFIED = "falsified"
VERDICT_INCONCLUSIVE = "inconclusive"


# ---------------------------------------------------------------------------
# sampling helpers


def halton_points(window, count, seed=0):
    """Deterministic low-discrepancy points inside an axis-aligned window."""
    window = [(float(lo), float(hi)) for lo, hi in window]
    sampler = qmc.Halton(d=len(window), scramble=False, seed=seed)
    unit = sampler.random(count)
    lo = np.array([w[0] for w in window])
    hi = np.array([w[1] for w in window])
    return lo + unit * (hi - lo)


def ordered_pairs_in_window(window, cone, count, rng, sep_frac=0.25):
    """Random pairs (x, y) with x - y in the cone, both inside the window."""
    lo = np.array([float(w[0]) for w in window])
    hi = np.array([float(w[1]) for w in window])
    extent = hi - lo
    pairs = []
    attempts = 0
    while len(pairs) < count and attempts < 200 * count:
        attempts += 1
        y = lo + rng.uniform(size=len(lo)) * extent
        d = cone.sample(rng, 1)[0]
        d = d / np.linalg.norm(d) * rng.uniform(0.05, sep_frac) * np.linalg.norm(extent)
        x = y + d
        if np.all(x >= lo) and np.all(x <= hi):
            pairs.append((x, y))
    if len(pairs) < count:
        raise ValueError(
            "could not place enough ordered pairs inside the window; "
            "is the cone compatible with the window extent?"
        )
    return pairs


# ---------------------------------------------------------------------------
# Kamke-Mueller orthant check


@dataclass
class KamkeMullerResult:
    consistent: bool
    witness: object = None  # (x, i, j) of the first violating off-diagonal

    def to_dict(self):
        w = self.witness
        return {
            "consistent": self.consistent,
            "witness": None if w is None else
            {"x": w[0].tolist(), "i": int(w[1]), "j": int(w[2])},
        }


def kamke_muller_check(field, samples, sigma, tol=1e-9):
    """Sign check of D J(x) D off-diagonals for D = diag(sigma).

    Nonnegative off-diagonals at every sample are consistent with
    monotonicity w.r.t. the orthant diag(sigma) R^n_{>=0}; the first
    negative entry is returned as a witness.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise ValueError("samples must be nonempty")
    d = np.asarray(sigma, dtype=float)
    for x in samples:
        jac = field.dyn_jacobian(x)
        scaled = d[:, None] * jac * d[None, :]
        bound = -tol * max(1.0, np.abs(jac).max())
        off = scaled - np.diag(np.diag(scaled))
        if off.min() < bound:
            i, j = np.unravel_index(np.argmin(off), off.shape)
            return KamkeMullerResult(False, witness=(x, int(i), int(j)))
    return KamkeMullerResult(True)


# ---------------------------------------------------------------------------
# structured certificate report


@dataclass
class CertReport:
    """Certificate verdict with named checks and concrete witnesses."""

    verdict: str
    cone: object = None          # Cone instance or None
    evidence: list = dc_field(default_factory=list)
    samples_used: int = 0
    margin_rel: float = MARGIN_REL

    def add(self, name, passed, **extra):
        self.evidence.append({"name": name, "passed": bool(passed), **extra})

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "cone": None if self.cone is None else self.cone.describe(),
            "evidence": self.evidence,
            "samples_used": self.samples_used,
            "margin_rel": self.margin_rel,
        }


def _grad_with_refinement(spec, field, x, t_end, rel_tol, abs_tol):
    """Gradient estimate plus a tighter-tolerance re-evaluation callback."""
    g = eval_grad_s1(spec, field, x, t_end=t_end, rel_tol=rel_tol, abs_tol=abs_tol)

    def refine():
        return eval_grad_s1(
            spec, field, x, t_end=t_end,
            rel_tol=max(rel_tol / REFINE_FACTOR, 1e-13),
            abs_tol=max(abs_tol / REFINE_FACTOR, 1e-13),
        )

    return g, refine


def certify_sem(spec, field, sample_points, cone_hint=None, margin_rel=MARGIN_REL,
                t_end=None, rel_tol=1e-9, abs_tol=1e-12, synthesize=True):
    """Sampled certificate of strong eventual monotonicity.

    Checks v1 . grad s1(x) > margin at every sample; with a cone hint,
    additionally v1 strictly inside the cone and every gradient strictly
    inside its dual.  Divergent samples are dropped and reported.  Without a
    hint, a passing run attempts cone synthesis from the gradient sign
    pattern / conic hull; verdict strongly_eventually_monotone always names
    its cone.
    """
    report = CertReport(verdict=VERDICT_INCONCLUSIVE, margin_rel=margin_rel)
    report.add("spectral_preconditions", True,
               lambda1=spec.lambda1, gap=spec.gap, v1=spec.v1.tolist())

    grads = []
    kept = []
    divergent = 0
    for x in sample_points:
        x = np.asarray(x, dtype=float)
        try:
            g, refine = _grad_with_refinement(spec, field, x, t_end, rel_tol, abs_tol)
        except DivergenceError:
            divergent += 1
            continue
        except IntegrationError:
            divergent += 1
            continue
        grads.append((x, g, refine))
        kept.append(x)
    if not grads:
        raise ValueError("all sample points diverged; window is outside the basin")
    report.samples_used = len(grads)
    report.add("samples", True, kept=len(grads), divergent=divergent)

    # core condition: v1 . grad s1 > 0 (cone-free certificate of existence)
    worst = np.inf
    witness = None
    refined_grads = []
    for x, g, refine in grads:
        margin = margin_rel * np.linalg.norm(g)
        val = float(spec.v1 @ g)
        if val <= margin:
            g2 = refine()
            val2 = float(spec.v1 @ g2)
            if val2 <= margin_rel * np.linalg.norm(g2):
                witness = {"x": x.tolist(), "grad_s1": g2.tolist(), "value": val2}
                worst = min(worst, val2)
                refined_grads.append((x, g2))
                continue
            g = g2
            val = val2
        worst = min(worst, val)
        refined_grads.append((x, g))
    core_ok = witness is None
    report.add("v1_grad_s1_positive", core_ok, min_value=float(worst),
               witness=witness)
    if not core_ok:
        report.verdict = VERDICT_FALSIFIED
        return report

    gradients = np.asarray([g for _, g in refined_grads])

    if cone_hint is not None:
        v1_ok = cone_hint.strict_membership(spec.v1, margin_rel)
        report.add("v1_in_cone_interior", v1_ok, v1=spec.v1.tolist())
        grad_witness = None
        for x, g in refined_grads:
            if not cone_hint.strict_dual_membership(g, margin_rel):
                grad_witness = {"x": x.tolist(), "grad_s1": g.tolist()}
                break
        report.add("gradients_in_dual_interior", grad_witness is None,
                   witness=grad_witness)
        if v1_ok and grad_witness is None:
            report.verdict = VERDICT_SEM
            report.cone = cone_hint
        else:
            report.verdict = VERDICT_FALSIFIED
            report.cone = cone_hint
        return report

    if synthesize:
        cone, reason = synthesize_candidate_cone(spec.v1, gradients,
                                                 margin=margin_rel)
        report.add("cone_synthesis", cone is not None, reason=reason)
        if cone is not None:
            report.verdict = VERDICT_SEM
            report.cone = cone
            return report
    report.verdict = VERDICT_NECESSARY
    return report


# ---------------------------------------------------------------------------
# candidate-cone synthesis


def _orthant_from_signs(v1, gradients, margin):
    rows = np.vstack([v1[None, :], gradients])
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    scaled = rows / norms
    sigma = []
    for comp in scaled.T:
        if np.all(comp > margin):
            sigma.append(1)
        elif np.all(comp < -margin):
            sigma.append(-1)
        else:
            return None
    return OrthantSignature(tuple(sigma))


def _dual_wedge_2d(gradients, inflate):
    angles = np.arctan2(gradients[:, 1], gradients[:, 0])
    # unwrap to a contiguous fan (handles fans straddling the -pi cut)
    base = angles[0]
    rel = np.mod(angles - base + np.pi, 2 * np.pi) - np.pi
    lo = base + rel.min() - inflate
    hi = base + rel.max() + inflate
    if hi - lo >= np.pi:
        return None
    r1 = np.array([np.cos(hi - np.pi / 2), np.sin(hi - np.pi / 2)])
    r2 = np.array([np.cos(lo + np.pi / 2), np.sin(lo + np.pi / 2)])
    return PolyhedralGenerated(np.vstack([r1, r2]))


def _dual_cone_3d(gradients, inflate):
    unit = gradients / np.linalg.norm(gradients, axis=1, keepdims=True)
    rays = []
    k = len(unit)
    for i in range(k):
        for j in range(i + 1, k):
            r = np.cross(unit[i], unit[j])
            nr = np.linalg.norm(r)
            if nr < 1e-12:
                continue
            r = r / nr
            for cand in (r, -r):
                if np.all(unit @ cand >= inflate):
                    rays.append(cand)
    if len(rays) < 2:
        return None
    rays = np.unique(np.round(np.asarray(rays), 10), axis=0)
    try:
        cone = PolyhedralGenerated(rays)
        cone.normals()
    except Exception:
        return None
    return cone


def synthesize_candidate_cone(v1, gradients, margin=MARGIN_REL):
    """Candidate order cone from the dominant eigenvector and gradient samples.

    Tries the common strict sign pattern first (orthant); otherwise, for
    n <= 3, builds the dual of the margin-inflated conic hull of the
    gradients and keeps it only if v1 sits strictly inside.  Returns
    (cone_or_None, reason).
    """
    v1 = np.asarray(v1, dtype=float)
    gradients = np.atleast_2d(np.asarray(gradients, dtype=float))
    if gradients.size == 0:
        raise ValueError("gradients must be nonempty")
    if not np.all(np.isfinite(gradients)):
        raise ValueError("gradients must be finite")
    n = v1.shape[0]

    orthant = _orthant_from_signs(v1, gradients, margin)
    if orthant is not None:
        return orthant, "common strict sign pattern"
    if n > 3:
        return None, "polyhedral synthesis limited to n <= 3"

    inflate = max(margin, 1e-4)
    if n == 2:
        cone = _dual_wedge_2d(gradients, inflate)
    elif n == 3:
        cone = _dual_cone_3d(gradients, inflate)
    else:
        return None, "cone synthesis needs n >= 2"
    if cone is None:
        return None, "gradient fan admits no pointed dual cone"
    if not cone.strict_membership(v1, margin):
        return None, "v1 is not strictly inside the synthesized cone"
    for g in gradients:
        if not cone.strict_dual_membership(g, 0.0):
            return None, "synthesized cone fails the gradient dual check"
    return cone, "dual of the inflated gradient hull"


# ---------------------------------------------------------------------------
# simulation probes


@dataclass
class OrderProbeReport:
    tau0_estimates: list
    counterexample: object = None
    rejected_pairs: int = 0
    failed_pairs: int = 0

    def to_dict(self):
        return {
            "tau0_estimates": self.tau0_estimates,
            "counterexample": self.counterexample,
            "rejected_pairs": self.rejected_pairs,
            "failed_pairs": self.failed_pairs,
        }


def order_probe_checkpoints(horizon, n_checkpoints=32):
    """Log-spaced probe times on (0, horizon], three decades deep."""
    return np.logspace(np.log10(horizon) - 3.0, np.log10(horizon), n_checkpoints)


def empirical_order_probe(field, cone, pairs, horizon, n_checkpoints=32,
                          rel_tol=1e-9, abs_tol=1e-12):
    """Direct order-preservation probe along trajectories of ordered pairs.

    Pairs violating x >=_K y at t = 0 are rejected.  Per surviving pair the
    report carries the earliest checkpoint after which cone membership of
    phi(t,x) - phi(t,y) holds through the horizon (0.0 when it holds from
    the first checkpoint), or a counterexample when membership fails within
    the final quarter of the checkpoints.
    """
    times = order_probe_checkpoints(horizon, n_checkpoints)
    tail_start = int(np.ceil(0.75 * len(times)))
    tau0s = []
    rejected = 0
    failed = 0
    counterexample = None
    for idx, (x, y) in enumerate(pairs):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if not cone.membership(x - y):
            rejected += 1
            continue
        try:
            xs = integrate_stops(field, x, times, rel_tol=rel_tol, abs_tol=abs_tol)
            ys = integrate_stops(field, y, times, rel_tol=rel_tol, abs_tol=abs_tol)
        except IntegrationError:
            failed += 1
            continue
        member = cone.membership_many(xs - ys)
        if member.all():
            tau0s.append(0.0)
            continue
        last_bad = int(np.max(np.nonzero(~member)[0]))
        if last_bad >= tail_start:
            if counterexample is None:
                counterexample = {
                    "pair_index": idx,
                    "time": float(times[last_bad]),
                    "x": x.tolist(),
                    "y": y.tolist(),
                }
            tau0s.append(None)
        else:
            tau0s.append(float(times[last_bad + 1]))
    return OrderProbeReport(
        tau0_estimates=tau0s,
        counterexample=counterexample,
        rejected_pairs=rejected,
        failed_pairs=failed,
    )


def isostable_comparability_scan(isostables, cone, margin=MARGIN_REL,
                                 max_points_per_level=400):
    """All-pairs scan of each |s1| level set for strictly comparable points.

    An empty violation list is consistent with strong eventual monotonicity
    w.r.t. the cone (level sets of a strictly monotone s1 cannot contain
    comparable points); any returned pair witnesses the opposite.  Points are
    grouped per signed branch of |s1| = level, where s1 itself is constant.
    """
    by_level = {}
    for iso in isostables:
        by_level.setdefault((iso.level, getattr(iso, "sign", 1)), []).append(iso.points)
    violations = []
    for (level, _sign), chunks in sorted(by_level.items()):
        pts = np.vstack(chunks)
        if len(pts) > max_points_per_level:
            stride = int(np.ceil(len(pts) / max_points_per_level))
            pts = pts[::stride]
        if len(pts) < 2:
            continue
        diffs = pts[:, None, :] - pts[None, :, :]
        flat = diffs.reshape(-1, pts.shape[1])
        hits = cone.strict_membership_many(flat, margin)
        for k in np.nonzero(hits)[0]:
            i, j = divmod(int(k), len(pts))
            if i == j:
                continue
            violations.append({
                "level": float(level),
                "greater": pts[i].tolist(),
                "lesser": pts[j].tolist(),
            })
    return violations


@dataclass
class FlowDirectionReport:
    checked: int
    violations: list

    def to_dict(self):
        return {"checked": self.checked, "violations": self.violations}


def flow_direction_probe(field, spec, cone, samples, margin=MARGIN_REL):
    """Check f(x) is never strictly above the equilibrium ordering.

    For samples with x >_K x*, an eventually monotone system cannot have
    f(x) >_K 0 (the trajectory would climb away from x*); any such sample is
    evidence against the certified cone.
    """
    checked = 0
    violations = []
    fscale = 0.0
    pending = []
    for x in samples:
        x = np.asarray(x, dtype=float)
        d = x - spec.x_star
        if np.linalg.norm(d) < 1e-12 or not cone.membership(d):
            continue
        f = field.dyn_rhs(x)
        fscale = max(fscale, np.linalg.norm(f))
        pending.append((x, f))
        checked += 1
    floor = 1e-9 * max(fscale, 1e-12)
    for x, f in pending:
        if np.linalg.norm(f) > floor and cone.membership(f, tol=margin):
            violations.append({"x": x.tolist(), "f": f.tolist()})
    return FlowDirectionReport(checked=checked, violations=violations)
