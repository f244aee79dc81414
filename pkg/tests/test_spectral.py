import numpy as np
import pytest

from evmono.spectral import (
    PFClass,
    check_dominance,
    classify_pf,
    decompose,
    matrix_exp,
)

COUNTEREXAMPLE = np.array([[-10.0, -10.0, 14.0], [4.0, 1.0, -11.0], [0.0, 3.0, -9.0]])


def test_counterexample_eigenvalues_and_ordering():
    dec = decompose(COUNTEREXAMPLE)
    assert dec.eigenvalues[0] == pytest.approx(-6.0, abs=1e-8)
    assert abs(dec.eigenvalues[0].imag) < 1e-10
    pair = sorted(dec.eigenvalues[1:], key=lambda v: v.imag)
    assert pair[0] == pytest.approx(-6.0 - 6.0j, abs=1e-8)
    assert pair[1] == pytest.approx(-6.0 + 6.0j, abs=1e-8)
    dom = check_dominance(dec)
    assert dom.lambda1_real and dom.lambda1_simple and dom.lambda1_negative
    assert not dom.strictly_dominant  # complex pair ties the real part
    assert dom.a2_holds
    # the dominant eigenvectors are positive even though the system is not
    # eventually positive
    assert dec.v1_real().min() > 0 and dec.w1_real().min() > 0


def test_metzler_2x2_spectrum():
    dec = decompose(np.array([[-3.0, 7.0], [2.0, -7.0]]))
    roots = sorted([(-10 + np.sqrt(72)) / 2, (-10 - np.sqrt(72)) / 2], reverse=True)
    assert np.allclose(dec.eigenvalues.real, roots, atol=1e-10)
    dom = check_dominance(dec)
    assert dom.strictly_dominant and dom.lambda1_negative


def test_identity_matrix():
    dec = decompose(np.eye(2))
    assert dec.diagonalizable
    assert np.allclose(dec.eigenvalues, [1.0, 1.0])


def test_zero_matrix_fails_a2():
    assert not check_dominance(decompose(np.zeros((2, 2)))).a2_holds


def test_defective_matrix_flagged():
    dec = decompose(np.array([[0.0, 1.0], [0.0, 0.0]]))
    assert not dec.diagonalizable


def test_sign_normalization_and_biorthonormality(rng):
    for _ in range(20):
        a = rng.normal(size=(6, 6))
        dec = decompose(a)
        if not dec.diagonalizable:
            continue
        assert np.abs(dec.left.T @ dec.right - np.eye(6)).max() < 1e-10
        resid = np.abs(dec.right @ np.diag(dec.eigenvalues) @ dec.left.T - a)
        assert resid.max() < 1e-8 * max(1.0, np.linalg.norm(a))
        lam1 = dec.eigenvalues[0]
        if abs(lam1.imag) < 1e-10:
            v1 = dec.v1_real()
            assert v1[np.argmax(np.abs(v1))] > 0
            assert np.real(dec.w(0) @ dec.v(0)) > 0


def test_eigenvector_residual(rng):
    for _ in range(10):
        a = rng.normal(size=(5, 5))
        dec = decompose(a)
        for i in range(5):
            resid = np.linalg.norm(a @ dec.v(i) - dec.eigenvalues[i] * dec.v(i))
            assert resid < 1e-8 * max(1.0, np.linalg.norm(a))


def test_classify_pf_examples():
    assert classify_pf(np.array([[0.0, 1.0], [1.0, 0.0]])) is PFClass.WPF_N_ONLY
    assert classify_pf(np.array([[2.0, 1.0], [1.0, 2.0]])) is PFClass.PF_N
    assert classify_pf(np.array([[0.0, 1.0], [0.0, 0.0]])) is PFClass.NEITHER


def test_classify_pf_positive_matrices_always_pf(rng):
    for _ in range(40):
        n = int(rng.integers(2, 6))
        a = rng.uniform(0.05, 3.0, size=(n, n))
        assert classify_pf(a) is PFClass.PF_N


def test_matrix_exp_basics():
    a = np.array([[-3.0, 7.0], [2.0, -7.0]])
    assert np.allclose(matrix_exp(a, 0.0), np.eye(2), atol=1e-14)
    d = matrix_exp(np.diag([-1.0, -2.0]), 1.0)
    assert np.allclose(np.diag(d), [np.exp(-1), np.exp(-2)], rtol=1e-12)
    for t in (0.1, 1.0, 10.0):
        assert matrix_exp(a, t).min() >= 0.0  # Metzler semigroup positivity


def test_matrix_exp_overflow_guarded():
    with pytest.raises(OverflowError):
        matrix_exp(np.array([[800.0]]), 10.0)
    with pytest.raises(ValueError):
        matrix_exp(np.eye(2), np.inf)


def test_matrix_exp_semigroup_property(rng):
    for _ in range(10):
        a = rng.normal(size=(4, 4))
        a -= np.eye(4) * (np.max(np.linalg.eigvals(a).real) + 0.5)
        t, s = rng.uniform(0, 5, size=2)
        lhs = matrix_exp(a, t + s)
        rhs = matrix_exp(a, t) @ matrix_exp(a, s)
        assert np.linalg.norm(lhs - rhs) < 1e-9


def test_decompose_rejects_nonsquare_and_large():
    with pytest.raises(ValueError):
        decompose(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        decompose(np.zeros((51, 51)))
