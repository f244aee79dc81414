import numpy as np
import pytest

from evmono.linear import (
    LorentzConeSpec,
    VERDICT_NOT,
    VERDICT_STRONG,
    check_eventual_positivity,
    cone_alpha_membership,
    find_alpha_certificates,
    schur_reduce,
    similarity_positivize,
)
from evmono.models import EXAMPLE1_MATRIX, COUNTEREXAMPLE_MATRIX
from evmono.ode import integrate
from evmono.spectral import NotDiagonalizableError, decompose, matrix_exp
from evmono.dsl import VectorField

METZLER = np.array([[-3.0, 7.0], [2.0, -7.0]])


def _random_dominant_stable(rng, n=4, negative=True):
    """Random matrix with simple real strictly dominant (negative) lambda1
    and positive dominant eigenvectors where needed by the caller."""
    while True:
        lams = -np.sort(rng.uniform(0.3, 5.0, size=n))
        if negative:
            lams = lams - 0.1
        lams[0] = lams[1] + rng.uniform(0.5, 2.0)
        if negative and lams[0] >= -0.05:
            lams -= lams[0] + 0.2
        v = rng.normal(size=(n, n))
        if abs(np.linalg.det(v)) < 1e-3:
            continue
        a = v @ np.diag(lams) @ np.linalg.inv(v)
        dec = decompose(a)
        from evmono.spectral import check_dominance

        if check_dominance(dec).strictly_dominant:
            return a, dec


def test_metzler_strongly_eventually_positive():
    report = check_eventual_positivity(METZLER)
    assert report.verdict == VERDICT_STRONG
    assert report.tau0_estimate == 0.0


def test_counterexample_not_eventually_positive():
    report = check_eventual_positivity(COUNTEREXAMPLE_MATRIX)
    assert report.verdict == VERDICT_NOT
    assert "complex" in report.details["reason"]
    assert report.witness is not None


def test_example1_scaled_strongly_eventually_positive():
    scaled = EXAMPLE1_MATRIX.copy()
    scaled[2] /= 0.25
    report = check_eventual_positivity(scaled)
    assert report.verdict == VERDICT_STRONG
    assert report.tau0_estimate > 0.0
    t0 = report.tau0_estimate
    # strong verdict implies entrywise positivity for sampled t >= tau0
    for t in np.linspace(t0, 5 * t0, 7):
        e = matrix_exp(scaled, t)
        assert e.min() > 0.0


def test_not_diagonalizable_rejected():
    with pytest.raises(NotDiagonalizableError):
        check_eventual_positivity(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_strong_verdict_bridges_to_positive_trajectories(rng):
    # Def: for x > 0 the flow e^{At} x is entrywise positive past tau0
    scaled = EXAMPLE1_MATRIX.copy()
    scaled[2] /= 0.25
    report = check_eventual_positivity(scaled)
    t0 = report.tau0_estimate
    for _ in range(100):
        x = rng.uniform(0.05, 1.0, size=3)
        for t in np.linspace(t0, 3 * t0 + 1.0, 5):
            assert np.all(matrix_exp(scaled, t) @ x > 0)


def test_schur_reduce_example1_exact():
    reduced = schur_reduce(EXAMPLE1_MATRIX, slow=[0, 1], fast=[2])
    assert np.array_equal(reduced, METZLER)


def test_schur_reduce_block_diagonal_identity():
    a = np.zeros((4, 4))
    a[:2, :2] = [[1.0, 2.0], [3.0, 4.0]]
    a[2:, 2:] = [[-1.0, 0.5], [0.0, -2.0]]
    assert np.array_equal(schur_reduce(a, [0, 1], [2, 3]), a[:2, :2])


def test_schur_reduce_matches_scaled_spectrum(rng):
    for _ in range(5):
        a = rng.normal(size=(4, 4))
        a[3, 3] = -abs(a[3, 3]) - 3.0  # stable fast block
        reduced = schur_reduce(a, [0, 1, 2], [3])
        eps = 1e-6
        scaled = a.copy()
        scaled[3] /= eps
        slow_eigs = np.sort(decompose(reduced).eigenvalues.real)
        full = decompose(scaled).eigenvalues
        full_slow = np.sort(full.real)[-3:]
        assert np.allclose(slow_eigs, full_slow, atol=1e-3)


def test_schur_reduce_singular_fast_block():
    a = np.eye(3)
    a[2, 2] = 0.0
    with pytest.raises(np.linalg.LinAlgError):
        schur_reduce(a, [0, 1], [2])


def test_schur_reduce_trajectory_tracking():
    # trajectories of the eps-scaled full system track the reduced system
    eps = 1e-4
    names = ("x1", "x2", "x3")
    full = VectorField.parse(
        "-6*x1 + 10*x2 + 4*x3; -7*x1 + 2*x2 + 12*x3; 3*x1 - 3*x2 - 4*x3",
        names, lhs_scale=[1.0, 1.0, eps],
    )
    red = VectorField.parse("-3*x1 + 7*x2; 2*x1 - 7*x2", ("x1", "x2"))
    x0 = np.array([0.8, 0.5])
    x0_full = np.array([0.8, 0.5, 0.0])
    tf = integrate(full, x0_full, 4.0, rel_tol=1e-9)
    tr = integrate(red, x0, 4.0, rel_tol=1e-9)
    for t in np.linspace(1.0, 4.0, 7):
        a = tf.sample(np.array([t]))[0][:2]
        b = tr.sample(np.array([t]))[0]
        assert np.abs(a - b).max() < 0.05


def test_cone_membership_examples():
    dec = decompose(METZLER)
    spec = LorentzConeSpec.from_decomposition(dec, np.array([1.0]))
    v1 = dec.v1_real()
    assert cone_alpha_membership(spec, v1) == "inside"
    assert cone_alpha_membership(spec, -v1) == "outside"
    assert spec.condition_number < 1e3


def test_cone_boundary_crossing_matches_closed_form():
    dec = decompose(METZLER)
    alpha = np.array([2.5])
    spec = LorentzConeSpec.from_decomposition(dec, alpha)
    v1, v2 = dec.v1_real(), np.real(dec.v(1))
    w2 = np.real(dec.w(1))
    # y = v1 + c v2 crosses the boundary where sqrt(alpha) |c| |w2.v2| = w1.v1
    c_star = 1.0 / np.sqrt(alpha[0])  # since w1.v1 = 1 and w2.v2 = 1
    lo, hi = 0.0, 10.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if cone_alpha_membership(spec, v1 + mid * v2) == "outside":
            hi = mid
        else:
            lo = mid
    assert 0.5 * (lo + hi) == pytest.approx(c_star, rel=1e-6)


def test_find_alpha_certificates_metzler():
    dec = decompose(METZLER)
    certs = find_alpha_certificates(dec)
    assert certs is not None
    beta, gamma = certs["beta"], certs["gamma"]
    spec_b = LorentzConeSpec.from_decomposition(dec, beta)
    spec_g = LorentzConeSpec.from_decomposition(dec, gamma)
    rng = np.random.default_rng(7)
    # audit: K_beta members (sampled) are in the open orthant, and random
    # nonnegative vectors are inside K_gamma
    w_inv = np.linalg.inv(spec_b.w_matrix)
    for _ in range(10**5 // 100):  # 1000 boundary + bulk samples per batch
        z = np.concatenate([[1.0], rng.uniform(-1, 1, 1)])
        z[1:] *= rng.uniform(0, 1)
        y = w_inv @ z
        assert cone_alpha_membership(spec_b, y) != "outside"
        assert y.min() > -1e-9 * np.linalg.norm(y)
    for _ in range(1000):
        y = rng.uniform(0, 1, 2)
        assert cone_alpha_membership(spec_g, y) != "outside"


def test_alpha_infeasible_when_v1_touches_orthant_boundary():
    # v1 with a zero component: K_beta cannot be interior to the orthant
    a = np.diag([-1.0, -2.0, -3.0])  # v1 = e1 sits on the orthant boundary
    dec = decompose(a)
    assert find_alpha_certificates(dec) is None


def test_alpha_rejected_for_complex_dominant():
    rot = np.array([[-1.0, -3.0], [3.0, -1.0]])
    with pytest.raises(ValueError):
        find_alpha_certificates(decompose(rot))


def test_semigroup_cone_invariance(rng):
    # K_alpha is invariant under e^{At} for dominant spectra
    for _ in range(5):
        a, dec = _random_dominant_stable(rng, n=4)
        alpha = rng.uniform(0.2, 5.0, size=3)
        spec = LorentzConeSpec.from_decomposition(dec, alpha)
        w_inv = np.linalg.inv(spec.w_matrix)
        for _ in range(20):
            zeta = rng.normal(size=3)
            zeta *= rng.uniform(0, 1) / np.linalg.norm(zeta)
            y = w_inv @ np.concatenate([[1.0], zeta])
            assert cone_alpha_membership(spec, y) != "outside"
            for t in (0.5, 1.0, 5.0):
                yt = matrix_exp(a, t) @ y
                assert cone_alpha_membership(spec, yt) != "outside"


def test_attractor_property(rng):
    # trajectories with w1.x > 0 align with v1: angle decreases monotonically
    a, dec = _random_dominant_stable(rng, n=3)
    v1 = dec.v1_real()
    w1 = dec.w1_real()
    from evmono.spectral import check_dominance

    gap = check_dominance(dec).gap
    for _ in range(10):
        x = rng.normal(size=3)
        if w1 @ x <= 1e-3:
            x = x + v1 * (1e-3 - w1 @ x) / (w1 @ v1)
        times = np.geomspace(5.0 / gap, 50.0 / gap, 12)
        angles = []
        for t in times:
            y = matrix_exp(a, t) @ x
            c = abs(v1 @ y) / (np.linalg.norm(v1) * np.linalg.norm(y))
            angles.append(np.arccos(min(1.0, c)))
        # 1e-7 slack: arccos noise floor near perfect alignment is ~sqrt(eps)
        assert all(b <= a_ + 1e-7 for a_, b in zip(angles, angles[1:]))


def test_similarity_positivize_formula_collapse():
    # v1 = 1, w1 = 1/n: the construction returns the identity
    a = np.array([[-2.0, 1.0], [1.0, -2.0]])
    dec = decompose(a)
    s = similarity_positivize(dec)
    v1 = dec.v1_real()
    assert np.allclose(s @ np.ones(2), v1, atol=1e-12)
    assert np.allclose(dec.w1_real() @ s, np.ones(2) / 2, atol=1e-12)


def test_similarity_positivize_negative_offdiagonal():
    a = np.array([[-1.0, -0.1], [-0.1, -2.0]])
    dec = decompose(a)
    s = similarity_positivize(dec)
    transformed = np.linalg.solve(s, a @ s)
    report = check_eventual_positivity(transformed)
    assert report.verdict == VERDICT_STRONG
    assert np.abs(s @ np.ones(2) - dec.v1_real()).max() < 1e-12
    assert np.abs(dec.w1_real() @ s - 0.5).max() < 1e-12


def test_similarity_positivize_rejects_complex_dominant():
    rot = np.array([[-1.0, -3.0], [3.0, -1.0]])
    with pytest.raises(ValueError):
        similarity_positivize(decompose(rot))
