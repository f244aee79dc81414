import io
import json

import numpy as np
import pytest

from evmono.dsl import VectorField
from evmono.koopman import (
    SpectralPreconditionError,
    eval_field_on_grid,
    eval_grad_s1,
    eval_s1,
    extract_isostables,
    laplace_average_literal,
    make_koopman_spec,
)
from evmono.ode import DivergenceError, integrate_stops
from evmono.spectral import decompose


def _linear_ctx(a=None):
    a = np.array([[-3.0, 7.0], [2.0, -7.0]]) if a is None else a
    rows = []
    names = ("x1", "x2")
    for i in range(2):
        rows.append(" + ".join(f"({a[i, j]!r})*{names[j]}" for j in range(2)))
    field = VectorField.parse(";".join(rows), names)
    spec = make_koopman_spec(field, np.zeros(2))
    return field, spec


def test_spec_construction_refuses_complex_dominant():
    field = VectorField.parse("-x1 - 3*x2; 3*x1 - x2", ("x1", "x2"))
    with pytest.raises(SpectralPreconditionError):
        make_koopman_spec(field, np.zeros(2))


def test_spec_normalization(three_state):
    spec = three_state.spec
    assert spec.lambda1 < 0
    assert spec.w1 @ spec.v1 == pytest.approx(1.0, abs=1e-10)
    assert np.linalg.norm(spec.v1) == pytest.approx(1.0, abs=1e-12)


def test_eval_s1_linear_closed_form(rng):
    field, spec = _linear_ctx()
    checked = 0
    while checked < 100:
        x = rng.uniform(-1, 1, size=2)
        oracle = spec.w1 @ x
        if abs(oracle) < 1e-3:
            continue
        val = eval_s1(spec, field, x)
        assert abs(val - oracle) / abs(oracle) < 1e-4
        checked += 1


def test_eval_s1_zero_at_equilibrium(three_state):
    assert eval_s1(three_state.spec, three_state.field, three_state.x_star) == 0.0


def test_eigenfunction_equation_three_state(three_state, rng):
    # s1(phi(t, x)) = e^{lambda1 t} s1(x)
    ctx = three_state
    lo = np.array([w[0] for w in ctx.entry.default_window])
    hi = np.array([w[1] for w in ctx.entry.default_window])
    for _ in range(6):
        x = lo + rng.uniform(size=3) * (hi - lo)
        s0 = eval_s1(ctx.spec, ctx.field, x)
        for t in (0.5, 1.0, 2.0):
            xt = integrate_stops(ctx.field, x, np.array([t]))[0]
            st = eval_s1(ctx.spec, ctx.field, xt)
            assert abs(st - np.exp(ctx.spec.lambda1 * t) * s0) <= 1e-3 * (1 + abs(s0))


def test_s1_sign_constant_and_decay_along_trajectory(three_state):
    ctx = three_state
    x = np.array([1.0, 1.0, 1.0])
    s0 = eval_s1(ctx.spec, ctx.field, x)
    for t in (1.0, 3.0):
        xt = integrate_stops(ctx.field, x, np.array([t]))[0]
        st = eval_s1(ctx.spec, ctx.field, xt)
        assert np.sign(st) == np.sign(s0)
        assert st / s0 == pytest.approx(np.exp(ctx.spec.lambda1 * t), rel=1e-3)


def test_eval_grad_linear_constant(rng):
    field, spec = _linear_ctx()
    for _ in range(5):
        x = rng.uniform(-1, 1, size=2)
        g = eval_grad_s1(spec, field, x)
        assert np.abs(g - spec.w1).max() < 1e-6


def test_eval_grad_at_equilibrium_returns_w1(three_state, fhn):
    for ctx in (three_state, fhn):
        g = eval_grad_s1(ctx.spec, ctx.field, ctx.x_star)
        assert np.abs(g - ctx.spec.w1).max() < 1e-6


def test_three_state_gradient_sign_pattern(three_state, rng):
    # gradient of s1 stays in the orthant diag(-1, 1, 1) across the basin
    ctx = three_state
    lo = np.array([w[0] for w in ctx.entry.default_window])
    hi = np.array([w[1] for w in ctx.entry.default_window])
    for _ in range(50):
        x = lo + rng.uniform(size=3) * (hi - lo)
        g = eval_grad_s1(ctx.spec, ctx.field, x)
        assert g[0] < 0 < g[1] and g[2] > 0


def test_gradient_vs_finite_differences(three_state, fhn, rng):
    for ctx in (three_state, fhn):
        lo = np.array([w[0] for w in ctx.entry.default_window])
        hi = np.array([w[1] for w in ctx.entry.default_window])
        scale = np.linalg.norm(hi - lo)
        h = 1e-4 * scale
        for _ in range(20):
            x = lo + rng.uniform(size=ctx.field.dim) * (hi - lo)
            try:
                g = eval_grad_s1(ctx.spec, ctx.field, x)
            except DivergenceError:
                continue
            fd = np.empty_like(g)
            for k in range(ctx.field.dim):
                e = np.zeros(ctx.field.dim)
                e[k] = h
                fd[k] = (
                    eval_s1(ctx.spec, ctx.field, x + e)
                    - eval_s1(ctx.spec, ctx.field, x - e)
                ) / (2 * h)
            assert np.linalg.norm(g - fd) / max(np.linalg.norm(g), 1e-12) < 1e-2


def test_generator_relation(three_state, rng):
    # f . grad s1 = lambda1 s1 pointwise
    ctx = three_state
    lo = np.array([w[0] for w in ctx.entry.default_window])
    hi = np.array([w[1] for w in ctx.entry.default_window])
    for _ in range(12):
        x = lo + rng.uniform(size=3) * (hi - lo)
        s = eval_s1(ctx.spec, ctx.field, x)
        g = eval_grad_s1(ctx.spec, ctx.field, x)
        lhs = ctx.field.dyn_rhs(x) @ g
        rhs = ctx.spec.lambda1 * s
        assert abs(lhs - rhs) <= 1e-3 * (1 + abs(rhs))


def test_flow_expansion_residual_decay(three_state, rng):
    # || phi(t,x) - x* - v1 (w1.(x-x*)) e^{lambda1 t} || <= C e^{Re(lambda2) t}
    ctx = three_state
    lam2 = float(ctx.spec.dec.eigenvalues[1].real)
    times = np.linspace(0.5, 3.5, 7)
    for _ in range(5):
        d = rng.normal(size=3)
        d *= 1e-2 / np.linalg.norm(d)
        x = ctx.x_star + d
        s1_lin = ctx.spec.w1 @ d
        states = integrate_stops(ctx.field, x, times)
        resid = [
            np.linalg.norm(
                xt - ctx.x_star - ctx.spec.v1 * s1_lin * np.exp(ctx.spec.lambda1 * t)
            )
            for t, xt in zip(times, states)
        ]
        c_fit = resid[0] / np.exp(lam2 * times[0])
        for t, r in zip(times[1:], resid[1:]):
            assert r <= 1.5 * c_fit * np.exp(lam2 * t) + 1e-12


def test_literal_laplace_average_cross_validation(three_state, rng):
    # the (1/t) integral form agrees with the terminal estimate
    field, spec = _linear_ctx()
    for _ in range(10):
        x = rng.uniform(-1, 1, size=2)
        if abs(spec.w1 @ x) < 1e-2:
            continue
        lit = laplace_average_literal(spec, field, x)
        assert lit == pytest.approx(spec.w1 @ x, rel=1e-2)
    ctx = three_state
    for _ in range(10):
        x = ctx.x_star + rng.uniform(-0.5, 0.5, size=3)
        term = eval_s1(ctx.spec, ctx.field, x)
        if abs(term) < 1e-2:
            continue
        lit = laplace_average_literal(ctx.spec, ctx.field, x)
        assert lit == pytest.approx(term, rel=1e-2)


def test_divergence_detection_other_basin(toxin_relaxed):
    # a point owned by the other attractor must be flagged, not valued
    ctx = toxin_relaxed
    x = np.array([150.0, 30.0, 0.5, 20.0])
    with pytest.raises((DivergenceError, Exception)):
        eval_s1(ctx.spec, ctx.field, x, max_steps=100_000)


def test_grid_linear_plane_and_interpolation():
    field, spec = _linear_ctx()
    f = eval_field_on_grid(spec, field, [(-1, 1), (-1, 1)], (21, 21))
    pts = f.grid_points()
    oracle = pts @ spec.w1
    assert not f.divergent.any()
    assert np.abs(f.s1 - oracle).max() < 1e-4
    # multilinear interpolation of a plane is exact up to sampling error
    assert f.interpolate([0.123, -0.456]) == pytest.approx(
        spec.w1 @ np.array([0.123, -0.456]), abs=1e-4
    )


def test_grid_deterministic_and_jobs_independent():
    field, spec = _linear_ctx()
    a = eval_field_on_grid(spec, field, [(-1, 1), (-1, 1)], (7, 7), jobs=1)
    b = eval_field_on_grid(spec, field, [(-1, 1), (-1, 1)], (7, 7), jobs=4)
    assert np.array_equal(a.s1, b.s1)
    assert np.array_equal(a.divergent, b.divergent)


def test_grid_all_divergent_outside_basin(toxin_relaxed):
    ctx = toxin_relaxed
    other = np.array([162.8103, 26.2221, 0.0002, 110.4375])
    f = eval_field_on_grid(
        ctx.spec, ctx.field, [(other[0] - 2, other[0] + 2), (other[1] - 2, other[1] + 2)],
        (3, 3), axes=(0, 1), base_point=other, max_steps=50_000,
    )
    assert f.divergent.all()


def test_grid_rejects_degenerate_window():
    field, spec = _linear_ctx()
    with pytest.raises(ValueError):
        eval_field_on_grid(spec, field, [(0.0, 0.0), (-1, 1)], (2, 2))
    with pytest.raises(ValueError):
        eval_field_on_grid(spec, field, [(-1, 1), (-1, 1)], (1, 5))


def test_isostables_linear_contours_are_lines():
    field, spec = _linear_ctx()
    f = eval_field_on_grid(spec, field, [(-1, 1), (-1, 1)], (31, 31))
    level = 0.4 * float(np.abs(f.s1).max())
    isos = extract_isostables(f, [level])
    assert isos, "expected contours at an interior level"
    for iso in isos:
        pts = iso.points
        assert len(pts) >= 2
        # all points satisfy |w1 . x| = level up to grid interpolation error
        vals = pts @ spec.w1
        assert np.abs(np.abs(vals) - level).max() < 5e-3
        # colinear: the level sets of a linear functional are straight lines
        if len(pts) >= 3:
            d = pts[-1] - pts[0]
            d /= np.linalg.norm(d)
            dev = (pts - pts[0]) - np.outer((pts - pts[0]) @ d, d)
            assert np.abs(dev).max() < 1e-6


def test_isostable_level_zero_passes_through_equilibrium():
    field, spec = _linear_ctx()
    f = eval_field_on_grid(spec, field, [(-1, 1), (-1, 1)], (31, 31))
    isos = extract_isostables(f, [0.0])
    assert isos
    dmin = min(np.linalg.norm(iso.points, axis=1).min() for iso in isos)
    assert dmin < 0.08  # passes within one grid cell of x* = 0


def test_isostable_level_outside_range_is_empty():
    field, spec = _linear_ctx()
    f = eval_field_on_grid(spec, field, [(-1, 1), (-1, 1)], (11, 11))
    assert extract_isostables(f, [1e6]) == []


def test_field_dump_and_sidecar(tmp_path):
    field, spec = _linear_ctx()
    f = eval_field_on_grid(spec, field, [(-1, 1), (-1, 1)], (3, 3),
                           with_gradients=True)
    buf = io.StringIO()
    f.dump(buf)
    rows = buf.getvalue().strip().splitlines()
    assert len(rows) == 9
    cols = rows[0].split()
    assert len(cols) == 2 + 1 + 2 + 1  # x, s1, grad, divergent flag
    side = json.loads(json.dumps(f.sidecar()))
    assert side["grid_shape"] == [3, 3]
    assert "lambda1" in side["spec"]
