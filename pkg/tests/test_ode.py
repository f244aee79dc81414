import numpy as np
import pytest

from evmono.dsl import VectorField
from evmono.models import get_model
from evmono.ode import (
    EquilibriumError,
    StiffnessError,
    basin_probe,
    find_equilibrium,
    integrate,
    integrate_prolonged,
    integrate_stops,
)
from evmono.spectral import matrix_exp

LINEAR = VectorField.parse("-3*x1 + 7*x2; 2*x1 - 7*x2", ("x1", "x2"))
A = np.array([[-3.0, 7.0], [2.0, -7.0]])


def test_linear_trajectory_matches_matrix_exponential():
    x0 = np.array([1.0, 0.4])
    traj = integrate(LINEAR, x0, 3.0, rel_tol=1e-9)
    for t in np.linspace(0.2, 3.0, 9):
        exact = matrix_exp(A, t) @ x0
        assert np.abs(traj.sample(np.array([t]))[0] - exact).max() < 1e-7
    assert np.abs(traj.final() - matrix_exp(A, 3.0) @ x0).max() < 1e-7
    assert np.all(np.diff(traj.times) > 0)
    assert traj.accepted_steps == len(traj.times) - 1


def test_equilibrium_start_stays_constant(three_state):
    traj = integrate(three_state.field, three_state.x_star, 10.0,
                     rel_tol=1e-9, abs_tol=1e-12)
    assert np.abs(traj.states - three_state.x_star[None, :]).max() < 1e-9


def test_three_state_converges_from_far_point(three_state):
    traj = integrate(three_state.field, np.array([1.0, 1.0, 1.0]), 50.0)
    assert np.linalg.norm(traj.final() - three_state.x_star) < 1e-4


def test_prolonged_linear_matches_matrix_exponential():
    x0 = np.array([0.3, -0.2])
    out = integrate_prolonged(LINEAR, x0, np.eye(2), 2.5)[0]
    assert np.abs(out.dX - matrix_exp(A, 2.5)).max() < 1e-7


def test_prolonged_zero_directions_stay_zero(three_state):
    out = integrate_prolonged(three_state.field, np.array([3.0, 0.3, 1.5]),
                              np.zeros((3, 2)), 5.0)[0]
    assert np.array_equal(out.dX, np.zeros((3, 2)))


def test_prolonged_identity_at_t_zero(three_state):
    dirs = np.array([[1.0, 0.5], [0.0, 2.0], [1.0, -1.0]])
    out = integrate_prolonged(three_state.field, np.array([3.0, 0.3, 1.5]),
                              dirs, 1.0, t_eval=[0.0, 1.0])
    assert np.array_equal(out[0].dX, dirs)


def test_newton_linear_field_single_step():
    x = find_equilibrium(LINEAR, np.array([17.0, -4.0]))
    assert np.abs(x).max() < 1e-10


def test_newton_toxin_antitoxin_equilibria():
    entry = get_model("toxin_antitoxin")
    targets = [
        np.array([27.1517, 80.5151, 58.4429, 0.0877]),
        np.array([162.8103, 26.2221, 0.0002, 110.4375]),
    ]
    for guess, target in zip(entry.newton_guesses, targets):
        x = find_equilibrium(entry.field, guess)
        assert np.linalg.norm(entry.field.eval(x)) < 1e-8
        # per-component agreement up to the print quantum of the reference
        err = np.abs(x - target)
        tol = np.maximum(1e-2 * np.abs(target), 5e-5)
        assert np.all(err <= tol)


def test_newton_singular_jacobian():
    f = VectorField.parse("x1 - x2 + 1; x1 - x2 + 1", ("x1", "x2"))
    with pytest.raises(EquilibriumError, match="singular"):
        find_equilibrium(f, np.array([0.5, 0.5]))


def test_newton_no_convergence_reports():
    f = VectorField.parse("exp(x1) ; x2", ("x1", "x2"))
    with pytest.raises(EquilibriumError):
        find_equilibrium(f, np.array([1.0, 1.0]), max_iter=5)


def test_basin_probe_at_equilibrium(three_state):
    assert basin_probe(three_state.field, three_state.x_star,
                       three_state.x_star, horizon=10.0)


def test_basin_probe_three_state(three_state):
    assert basin_probe(three_state.field, three_state.x_star,
                       np.array([1.0, 1.0, 1.0]), horizon=80.0)


def test_basin_probe_requires_equilibrium(three_state):
    with pytest.raises(ValueError, match="equilibrium"):
        basin_probe(three_state.field, three_state.x_star + 0.5,
                    three_state.x_star, horizon=5.0)


def test_basin_probe_bistable_rejection():
    # states heading for the other attractor never enter x*'s capture ball;
    # eps = 1 keeps the x_bullet side integrable with an explicit stepper
    entry = get_model("toxin_antitoxin", params={"eps": 1.0})
    x_star = find_equilibrium(entry.field, entry.newton_guesses[0])
    other_side = np.array([150.0, 30.0, 0.5, 20.0])
    assert not basin_probe(entry.field, x_star, other_side, horizon=15.0)
    near = x_star + np.array([1.0, 1.0, 0.5, 0.01])
    assert basin_probe(entry.field, x_star, near, horizon=120.0)


def test_stiffness_error_names_state():
    entry = get_model("toxin_antitoxin", params={"eps": 1e-5})
    with pytest.raises(StiffnessError) as err:
        integrate(entry.field, np.array([27.0, 80.0, 58.0, 0.1]), 50.0,
                  max_steps=20_000)
    assert err.value.state_index in (2, 3)
    assert entry.field.state_names[err.value.state_index] in ("Af", "Tf")


def test_tolerance_bounds_checked():
    with pytest.raises(ValueError):
        integrate(LINEAR, np.zeros(2), 1.0, rel_tol=1e-1)
    with pytest.raises(ValueError):
        integrate(LINEAR, np.zeros(2), -1.0)


def test_semigroup_property(three_state, fhn, rng):
    for ctx in (three_state, fhn):
        lo = np.array([w[0] for w in ctx.entry.default_window])
        hi = np.array([w[1] for w in ctx.entry.default_window])
        for _ in range(5):
            x = lo + rng.uniform(size=ctx.field.dim) * (hi - lo)
            t, s = rng.uniform(0.2, 2.0, size=2)
            a = integrate_stops(ctx.field, x, np.array([s, s + t]))
            b = integrate_stops(ctx.field, a[0], np.array([t]))
            assert np.abs(a[1] - b[0]).max() < 1e-6


def test_variational_consistency(three_state, rng):
    # d(phi)/dx columns vs central differences of the flow
    ctx = three_state
    h = 1e-5
    lo = np.array([w[0] for w in ctx.entry.default_window])
    hi = np.array([w[1] for w in ctx.entry.default_window])
    for _ in range(4):
        x = lo + rng.uniform(size=3) * (hi - lo)
        t_end = 2.0
        out = integrate_prolonged(ctx.field, x, np.eye(3), t_end)[0]
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            plus = integrate_stops(ctx.field, x + e, np.array([t_end]))[0]
            minus = integrate_stops(ctx.field, x - e, np.array([t_end]))[0]
            fd = (plus - minus) / (2 * h)
            denom = max(np.linalg.norm(out.dX[:, k]), 1e-12)
            assert np.linalg.norm(out.dX[:, k] - fd) / denom < 1e-3


def test_order_interval_inside_basin(three_state, rng):
    # order-intervals of basin points stay in the basin (probed)
    ctx = three_state
    sigma = np.array([-1.0, 1.0, 1.0])
    z = ctx.x_star + np.array([0.4, -0.02, -0.1])
    w = z + sigma * np.abs(np.array([0.7, 0.05, 0.3]))
    assert basin_probe(ctx.field, ctx.x_star, z, horizon=80.0)
    assert basin_probe(ctx.field, ctx.x_star, w, horizon=80.0)
    for _ in range(20):
        y = z + rng.uniform(size=3) * (w - z)
        assert basin_probe(ctx.field, ctx.x_star, y, horizon=80.0)


def test_trajectory_dump_format(tmp_path):
    traj = integrate(LINEAR, np.array([1.0, 0.0]), 1.0)
    out = tmp_path / "traj.txt"
    with out.open("w") as fh:
        traj.dump(fh)
    rows = out.read_text().strip().splitlines()
    assert len(rows) == len(traj.times)
    first = [float(v) for v in rows[0].split()]
    assert first == [0.0, 1.0, 0.0]
