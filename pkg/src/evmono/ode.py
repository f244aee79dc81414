"""Adaptive trajectory integration, variational runs, and equilibrium solving.

The stepper is an embedded Dormand-Prince 5(4) pair (in evmono._kernels)
with a standard proportional step controller and cubic-Hermite dense output
on accepted nodes.  Per-state left-hand scaling eps_i * xdot_i = f_i is
honoured by dividing the RHS componentwise.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import rk45_dual_stops, rk45_record


class IntegrationError(RuntimeError):
    pass


class StiffnessError(IntegrationError):
    """Step-size underflow or step budget exhausted; names the worst state."""

    def __init__(self, message, state_index):
        super().__init__(message)
        self.state_index = state_index


class DivergenceError(IntegrationError):
    """Trajectory norm exceeded the divergence cap."""


class EquilibriumError(RuntimeError):
    pass


DEFAULT_MAX_STEPS = 2_000_000
DEFAULT_Y_CAP = 1e12


def _check_tols(rel_tol, abs_tol):
    for tol in (rel_tol, abs_tol):
        if not 1e-13 <= tol <= 1e-2:
            raise ValueError(f"tolerance {tol} outside [1e-13, 1e-2]")


def _raise_for_status(status, info, field, where):
    if status == _kernels.OK:
        return
    if status == _kernels.ERR_DIV_ZERO:
        raise IntegrationError(
            f"{where}: division by zero in component {info[3]}"
        )
    if status == _kernels.ERR_NONFINITE:
        raise IntegrationError(f"{where}: state became non-finite")
    if status == _kernels.ERR_STEP_UNDERFLOW:
        raise StiffnessError(
            f"{where}: step size underflow, stiffest state is "
            f"{field.state_names[info[3]]} (index {info[3]})",
            state_index=int(info[3]),
        )
    if status == _kernels.ERR_MAX_STEPS:
        raise StiffnessError(
            f"{where}: step budget exhausted (stiffness suspected), worst state is "
            f"{field.state_names[info[3]]} (index {info[3]})",
            state_index=int(info[3]),
        )
    if status == _kernels.ERR_DIVERGED:
        raise DivergenceError(f"{where}: trajectory norm exceeded divergence cap")
    raise IntegrationError(f"{where}: integrator status {status}")


@dataclass
class Trajectory:
    """Accepted integration nodes with cubic-Hermite dense output."""

    times: np.ndarray   # strictly increasing, times[0] = 0
    states: np.ndarray  # (m, n)
    derivs: np.ndarray  # scaled dynamics derivative at each node
    accepted_steps: int
    rejected_steps: int
    tol_used: float

    def final(self):
        return self.states[-1]

    def sample(self, t):
        """Interpolate states at time(s) t inside [0, times[-1]]."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < 0) or np.any(t > self.times[-1] * (1 + 1e-12)):
            raise ValueError("sample time outside the integrated range")
        idx = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0,
                      len(self.times) - 2)
        t0 = self.times[idx]
        t1 = self.times[idx + 1]
        h = t1 - t0
        s = np.clip((t - t0) / h, 0.0, 1.0)[:, None]
        y0 = self.states[idx]
        y1 = self.states[idx + 1]
        f0 = self.derivs[idx]
        f1 = self.derivs[idx + 1]
        h = h[:, None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        out = h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
        return out[0] if out.shape[0] == 1 and np.isscalar(t0) else out

    def dump(self, fh):
        """Plain-text columns: t x1 ... xn, one row per accepted node."""
        for t, x in zip(self.times, self.states):
            fh.write(" ".join(repr(float(v)) for v in (t, *x)) + "\n")


@dataclass
class ProlongedState:
    """State and tangent block of the prolonged system at one time."""

    t: float
    x: np.ndarray
    dX: np.ndarray  # (n, k), columns are d(phi)/dx @ direction_k


def integrate(field, x0, t_end, rel_tol=1e-9, abs_tol=1e-12,
              max_steps=DEFAULT_MAX_STEPS, y_cap=DEFAULT_Y_CAP):
    """Integrate xdot = f(x)/eps from x0 over [0, t_end], recording all nodes."""
    _check_tols(rel_tol, abs_tol)
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    x0 = np.asarray(x0, dtype=float)
    info = np.zeros(4, dtype=np.int64)
    nodes = 8192
    while True:
        ts = np.empty(nodes)
        ys = np.empty((nodes, field.dim))
        fs = np.empty((nodes, field.dim))
        status = rk45_record(
            field.code, field.consts, field.param_values, field.inv_scale,
            x0, float(t_end), rel_tol, abs_tol, max_steps, y_cap, ts, ys, fs, info,
        )
        if status != _kernels.ERR_BUFFER_FULL:
            break
        nodes *= 4
        if nodes > 4 * (max_steps + 2):
            raise IntegrationError("node buffer exceeded the step budget")
    _raise_for_status(status, info, field, "integrate")
    m = int(info[0])
    return Trajectory(
        times=ts[:m].copy(),
        states=ys[:m].copy(),
        derivs=fs[:m].copy(),
        accepted_steps=int(info[1]),
        rejected_steps=int(info[2]),
        tol_used=rel_tol,
    )


def integrate_stops(field, x0, stops, rel_tol=1e-9, abs_tol=1e-12,
                    max_steps=DEFAULT_MAX_STEPS, y_cap=DEFAULT_Y_CAP):
    """States at the given (sorted ascending) stop times only."""
    _check_tols(rel_tol, abs_tol)
    x0 = np.asarray(x0, dtype=float)
    stops = np.asarray(stops, dtype=float)
    out_x = np.empty((len(stops), field.dim))
    out_dx = np.empty((len(stops), field.dim, 0))
    info = np.zeros(4, dtype=np.int64)
    status = rk45_dual_stops(
        field.code, field.consts, field.param_values, field.inv_scale,
        x0, np.empty((field.dim, 0)), stops, rel_tol, abs_tol,
        max_steps, y_cap, out_x, out_dx, info,
    )
    _raise_for_status(status, info, field, "integrate")
    return out_x


def integrate_prolonged(field, x0, directions, t_end, rel_tol=1e-9, abs_tol=1e-12,
                        t_eval=None, max_steps=DEFAULT_MAX_STEPS, y_cap=DEFAULT_Y_CAP):
    """Joint state/variational integration along the given tangent directions.

    directions is (n, k); column j seeds d(delta x)/dt = J_dyn(x) delta x.
    Returns ProlongedState entries at t_eval (default: just t_end).
    """
    _check_tols(rel_tol, abs_tol)
    x0 = np.asarray(x0, dtype=float)
    directions = np.asarray(directions, dtype=float)
    if directions.ndim != 2 or directions.shape[0] != field.dim:
        raise ValueError(f"directions must have {field.dim} rows")
    if t_eval is None:
        t_eval = [t_end]
    stops = np.asarray(sorted(float(t) for t in t_eval))
    if len(stops) and stops[-1] > t_end:
        raise ValueError("t_eval beyond t_end")
    out_x = np.empty((len(stops), field.dim))
    out_dx = np.empty((len(stops), field.dim, directions.shape[1]))
    info = np.zeros(4, dtype=np.int64)
    status = rk45_dual_stops(
        field.code, field.consts, field.param_values, field.inv_scale,
        x0, directions, stops, rel_tol, abs_tol, max_steps, y_cap,
        out_x, out_dx, info,
    )
    _raise_for_status(status, info, field, "integrate_prolonged")
    return [
        ProlongedState(t=float(t), x=out_x[i].copy(), dX=out_dx[i].copy())
        for i, t in enumerate(stops)
    ]


def find_equilibrium(field, guess, tol=1e-10, max_iter=60):
    """Damped Newton on f(x) = 0 with a halving line search on ||f||."""
    x = np.asarray(guess, dtype=float).copy()
    fx = field.eval(x)
    norm = np.linalg.norm(fx)
    for _ in range(max_iter):
        if norm <= tol:
            return x
        jac = field.jacobian(x)
        try:
            step = np.linalg.solve(jac, -fx)
        except np.linalg.LinAlgError:
            raise EquilibriumError(
                f"singular Jacobian at iterate {x.tolist()}"
            ) from None
        lam = 1.0
        while lam >= 2.0**-20:
            x_new = x + lam * step
            try:
                f_new = field.eval(x_new)
            except Exception:
                lam *= 0.5
                continue
            n_new = np.linalg.norm(f_new)
            if n_new < norm:
                break
            lam *= 0.5
        else:
            raise EquilibriumError("line search stalled (no descent direction)")
        x, fx, norm = x_new, f_new, n_new
    if norm <= tol:
        return x
    raise EquilibriumError(
        f"no convergence in {max_iter} iterations, ||f|| = {norm:.3e}"
    )


def basin_probe(field, x_star, x0, horizon, capture_radius=None,
                rel_tol=1e-8, abs_tol=1e-10):
    """True iff the trajectory sits inside the capture ball during the
    final 10% of the horizon."""
    x_star = np.asarray(x_star, dtype=float)
    scale = 1.0 + np.linalg.norm(x_star)
    if np.linalg.norm(field.eval(x_star), np.inf) > 1e-8 * scale:
        raise ValueError("x_star is not an equilibrium within 1e-8")
    if capture_radius is None:
        capture_radius = 1e-3 * scale
    stops = np.linspace(0.9 * horizon, horizon, 17)
    window = integrate_stops(field, x0, stops, rel_tol=rel_tol, abs_tol=abs_tol)
    dist = np.linalg.norm(window - x_star[None, :], axis=1)
    return bool(np.all(dist <= capture_radius))
