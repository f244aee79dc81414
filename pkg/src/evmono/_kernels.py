"""Hot numeric kernels: tape-compiled vector fields and the RK5(4) stepper.

A parsed vector field is flattened into a stack-machine *tape* (see
``evmono.dsl.compile_tape``): ``code`` is an (n_instr, 2) int64 array of
(opcode, argument) pairs and ``consts`` holds literal values.  The kernels
below interpret that tape, either for plain values or for values carrying a
block of forward-mode tangent columns, and drive an embedded Dormand-Prince
5(4) integrator on top of it.

Everything here is nopython-compatible; ``evmono._accel.njit`` compiles it
with numba unless EVMONO_DISABLE_NUMBA is set, in which case the identical
source runs as ordinary Python.
"""

import math

import numpy as np

from ._accel import njit

# tape opcodes
OP_CONST = 0
OP_STATE = 1
OP_PARAM = 2
OP_ADD = 3
OP_SUB = 4
OP_MUL = 5
OP_DIV = 6
OP_NEG = 7
OP_POW = 8   # arg = nonnegative integer exponent, expanded by repeated multiplication
OP_TANH = 9
OP_EXP = 10
OP_STORE = 11  # pop result into out[arg]

# integrator status codes
OK = 0
ERR_DIV_ZERO = 1
ERR_NONFINITE = 2
ERR_STEP_UNDERFLOW = 3
ERR_MAX_STEPS = 4
ERR_BUFFER_FULL = 5
ERR_DIVERGED = 6

# Dormand-Prince 5(4) tableau (FSAL)
C2, C3, C4, C5 = 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0
A21 = 1.0 / 5.0
A31, A32 = 3.0 / 40.0, 9.0 / 40.0
A41, A42, A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
A51, A52, A53, A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
A61, A62, A63, A64, A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
B1, B3, B4, B5, B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
# b - bhat, error estimator weights (k7 = FSAL stage)
E1, E3, E4, E5, E6, E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)

MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
SAFETY = 0.9


@njit(cache=True, nogil=True)
def tape_eval_into(code, consts, params, x, out, stack):
    """Interpret the tape at state x, writing f(x) into out.

    Returns 0 on success, or 1 + component_index when a division by zero
    occurred while evaluating that component.
    """
    sp = 0
    comp = 0
    for k in range(code.shape[0]):
        op = code[k, 0]
        arg = code[k, 1]
        if op == OP_CONST:
            stack[sp] = consts[arg]
            sp += 1
        elif op == OP_STATE:
            stack[sp] = x[arg]
            sp += 1
        elif op == OP_PARAM:
            stack[sp] = params[arg]
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
        elif op == OP_MUL:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] * stack[sp]
        elif op == OP_DIV:
            sp -= 1
            if stack[sp] == 0.0:
                return 1 + comp
            stack[sp - 1] = stack[sp - 1] / stack[sp]
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
        elif op == OP_POW:
            a = stack[sp - 1]
            r = 1.0
            for _ in range(arg):
                r *= a
            stack[sp - 1] = r
        elif op == OP_TANH:
            stack[sp - 1] = math.tanh(stack[sp - 1])
        elif op == OP_EXP:
            stack[sp - 1] = math.exp(stack[sp - 1])
        else:  # OP_STORE
            sp -= 1
            out[arg] = stack[sp]
            comp += 1
    return 0


@njit(cache=True, nogil=True)
def tape_eval_dual_into(code, consts, params, x, xtan, out, outtan, stack, tstack):
    """Tape interpretation carrying forward-mode tangents.

    xtan has shape (dim, k): row i is the tangent of state i along each of
    the k directions.  On success out = f(x) and outtan = J(x) @ xtan.
    Same return convention as tape_eval_into.
    """
    ndir = xtan.shape[1]
    sp = 0
    comp = 0
    for k in range(code.shape[0]):
        op = code[k, 0]
        arg = code[k, 1]
        if op == OP_CONST:
            stack[sp] = consts[arg]
            for j in range(ndir):
                tstack[sp, j] = 0.0
            sp += 1
        elif op == OP_STATE:
            stack[sp] = x[arg]
            for j in range(ndir):
                tstack[sp, j] = xtan[arg, j]
            sp += 1
        elif op == OP_PARAM:
            stack[sp] = params[arg]
            for j in range(ndir):
                tstack[sp, j] = 0.0
            sp += 1
        elif op == OP_ADD:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] + stack[sp]
            for j in range(ndir):
                tstack[sp - 1, j] = tstack[sp - 1, j] + tstack[sp, j]
        elif op == OP_SUB:
            sp -= 1
            stack[sp - 1] = stack[sp - 1] - stack[sp]
            for j in range(ndir):
                tstack[sp - 1, j] = tstack[sp - 1, j] - tstack[sp, j]
        elif op == OP_MUL:
            sp -= 1
            a = stack[sp - 1]
            b = stack[sp]
            stack[sp - 1] = a * b
            for j in range(ndir):
                tstack[sp - 1, j] = a * tstack[sp, j] + b * tstack[sp - 1, j]
        elif op == OP_DIV:
            sp -= 1
            b = stack[sp]
            if b == 0.0:
                return 1 + comp
            v = stack[sp - 1] / b
            stack[sp - 1] = v
            for j in range(ndir):
                tstack[sp - 1, j] = (tstack[sp - 1, j] - v * tstack[sp, j]) / b
        elif op == OP_NEG:
            stack[sp - 1] = -stack[sp - 1]
            for j in range(ndir):
                tstack[sp - 1, j] = -tstack[sp - 1, j]
        elif op == OP_POW:
            # a^k with k*a^(k-1) tangent, a^(k-1) built by repeated multiplication
            a = stack[sp - 1]
            if arg == 0:
                stack[sp - 1] = 1.0
                for j in range(ndir):
                    tstack[sp - 1, j] = 0.0
            else:
                p = 1.0
                for _ in range(arg - 1):
                    p *= a
                stack[sp - 1] = p * a
                for j in range(ndir):
                    tstack[sp - 1, j] = arg * p * tstack[sp - 1, j]
        elif op == OP_TANH:
            v = math.tanh(stack[sp - 1])
            stack[sp - 1] = v
            d = 1.0 - v * v
            for j in range(ndir):
                tstack[sp - 1, j] = d * tstack[sp - 1, j]
        elif op == OP_EXP:
            v = math.exp(stack[sp - 1])
            stack[sp - 1] = v
            for j in range(ndir):
                tstack[sp - 1, j] = v * tstack[sp - 1, j]
        else:  # OP_STORE
            sp -= 1
            out[arg] = stack[sp]
            for j in range(ndir):
                outtan[arg, j] = tstack[sp, j]
            comp += 1
    return 0

@njit(cache=True, nogil=True)
def tape_eval(code, consts, params, x, out):
    """Allocating convenience wrapper around tape_eval_into."""
    stack = np.empty(code.shape[0] + 1, dtype=np.float64)
    return tape_eval_into(code, consts, params, x, out, stack)


@njit(cache=True, nogil=True)
def tape_eval_dual(code, consts, params, x, xtan, out, outtan):
    """Allocating convenience wrapper around tape_eval_dual_into."""
    depth = code.shape[0] + 1
    stack = np.empty(depth, dtype=np.float64)
    tstack = np.empty((depth, xtan.shape[1]), dtype=np.float64)
    return tape_eval_dual_into(code, consts, params, x, xtan, out, outtan, stack, tstack)


@njit(cache=True, nogil=True)
def _all_finite(y):
    for i in range(y.shape[0]):
        if not math.isfinite(y[i]):
            return False
    return True


@njit(cache=True, nogil=True)
def _error_norm(err, y0, y1, rtol, atol):
    acc = 0.0
    n = err.shape[0]
    for i in range(n):
        ay = abs(y0[i])
        by = abs(y1[i])
        sc = atol + rtol * (ay if ay > by else by)
        e = err[i] / sc
        acc += e * e
    return math.sqrt(acc / n)


@njit(cache=True, nogil=True)
def _worst_scaled_index(v, y, rtol, atol, n_state):
    """Index (over the first n_state entries) with the largest scaled magnitude."""
    worst = 0
    wval = -1.0
    for i in range(n_state):
        sc = atol + rtol * abs(y[i])
        m = abs(v[i]) / sc
        if m > wval:
            wval = m
            worst = i
    return worst


@njit(cache=True, nogil=True)
def _initial_step(f0, y0, t_end, rtol, atol):
    """Hairer-style starting step guess from y0 and f(y0)."""
    n = y0.shape[0]
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y0[i])
        a = y0[i] / sc
        b = f0[i] / sc
        d0 += a * a
        d1 += b * b
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6
    else:
        h = 0.01 * d0 / d1
    if h > t_end:
        h = t_end
    return h


@njit(cache=True, nogil=True)
def rk45_record(code, consts, params, inv_scale, x0, t_end, rtol, atol,
                max_steps, y_cap, ts, ys, fs, info):
    """Integrate xdot_i = inv_scale_i * f_i(x) on [0, t_end], recording nodes.

    Accepted nodes (t, x, xdot) land in ts/ys/fs; info receives
    [n_nodes, accepted, rejected, worst_state_index].  Returns a status code.
    """
    n = x0.shape[0]
    depth = code.shape[0] + 1
    stack = np.empty(depth, dtype=np.float64)
    y = x0.copy()
    f = np.empty(n, dtype=np.float64)
    k2 = np.empty(n, dtype=np.float64)
    k3 = np.empty(n, dtype=np.float64)
    k4 = np.empty(n, dtype=np.float64)
    k5 = np.empty(n, dtype=np.float64)
    k6 = np.empty(n, dtype=np.float64)
    k7 = np.empty(n, dtype=np.float64)
    ytmp = np.empty(n, dtype=np.float64)
    ynew = np.empty(n, dtype=np.float64)
    err = np.empty(n, dtype=np.float64)

    info[0] = 0
    info[1] = 0
    info[2] = 0
    info[3] = 0

    st = tape_eval_into(code, consts, params, y, f, stack)
    if st != 0:
        info[3] = st - 1
        return ERR_DIV_ZERO
    for i in range(n):
        f[i] *= inv_scale[i]
    if not _all_finite(f):
        return ERR_NONFINITE

    cap = ys.shape[0]
    ts[0] = 0.0
    for i in range(n):
        ys[0, i] = y[i]
        fs[0, i] = f[i]
    nodes = 1

    t = 0.0
    h = _initial_step(f, y, t_end, rtol, atol)
    steps = 0
    while t < t_end:
        if steps >= max_steps:
            info[0] = nodes
            info[3] = _worst_scaled_index(f, y, rtol, atol, n)
            return ERR_MAX_STEPS
        steps += 1
        if h < 1e-14 * (1.0 + abs(t)):
            info[0] = nodes
            info[3] = _worst_scaled_index(f, y, rtol, atol, n)
            return ERR_STEP_UNDERFLOW
        clamped = False
        if t + h >= t_end:
            h = t_end - t
            clamped = True

        # stages
        for i in range(n):
            ytmp[i] = y[i] + h * A21 * f[i]
        st = tape_eval_into(code, consts, params, ytmp, k2, stack)
        if st != 0:
            info[0] = nodes
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            k2[i] *= inv_scale[i]
            ytmp[i] = y[i] + h * (A31 * f[i] + A32 * k2[i])
        st = tape_eval_into(code, consts, params, ytmp, k3, stack)
        if st != 0:
            info[0] = nodes
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            k3[i] *= inv_scale[i]
            ytmp[i] = y[i] + h * (A41 * f[i] + A42 * k2[i] + A43 * k3[i])
        st = tape_eval_into(code, consts, params, ytmp, k4, stack)
        if st != 0:
            info[0] = nodes
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            k4[i] *= inv_scale[i]
            ytmp[i] = y[i] + h * (A51 * f[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        st = tape_eval_into(code, consts, params, ytmp, k5, stack)
        if st != 0:
            info[0] = nodes
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            k5[i] *= inv_scale[i]
            ytmp[i] = y[i] + h * (A61 * f[i] + A62 * k2[i] + A63 * k3[i]
                                  + A64 * k4[i] + A65 * k5[i])
        st = tape_eval_into(code, consts, params, ytmp, k6, stack)
        if st != 0:
            info[0] = nodes
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            k6[i] *= inv_scale[i]
            ynew[i] = y[i] + h * (B1 * f[i] + B3 * k3[i] + B4 * k4[i]
                                  + B5 * k5[i] + B6 * k6[i])
        st = tape_eval_into(code, consts, params, ynew, k7, stack)
        if st != 0:
            info[0] = nodes
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            k7[i] *= inv_scale[i]
            err[i] = h * (E1 * f[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i]
                          + E6 * k6[i] + E7 * k7[i])

        if not (_all_finite(ynew) and _all_finite(k7)):
            info[0] = nodes
            return ERR_NONFINITE

        enorm = _error_norm(err, y, ynew, rtol, atol)
        if enorm <= 1.0:
            t = t_end if clamped else t + h
            for i in range(n):
                y[i] = ynew[i]
                f[i] = k7[i]
            info[1] += 1
            if nodes >= cap:
                info[0] = nodes
                return ERR_BUFFER_FULL
            ts[nodes] = t
            for i in range(n):
                ys[nodes, i] = y[i]
                fs[nodes, i] = f[i]
            nodes += 1
            big = 0.0
            for i in range(n):
                if abs(y[i]) > big:
                    big = abs(y[i])
            if big > y_cap:
                info[0] = nodes
                return ERR_DIVERGED
            if enorm == 0.0:
                fac = MAX_FACTOR
            else:
                fac = SAFETY * enorm ** -0.2
                if fac > MAX_FACTOR:
                    fac = MAX_FACTOR
                elif fac < MIN_FACTOR:
                    fac = MIN_FACTOR
            h *= fac
        else:
            info[2] += 1
            fac = SAFETY * enorm ** -0.2
            if fac < MIN_FACTOR:
                fac = MIN_FACTOR
            elif fac > 1.0:
                fac = 1.0
            h *= fac

    info[0] = nodes
    return OK

@njit(cache=True, nogil=True)
def rk45_dual_stops(code, consts, params, inv_scale, x0, dx0, stops, rtol, atol,
                    max_steps, y_cap, out_x, out_dx, info):
    """Joint state/tangent integration recording only at the given stop times.

    dx0 has shape (n, k); tangent columns obey d(dX)/dt = J_dyn(x) dX with the
    same inv_scale row scaling as the state.  stops must be sorted ascending,
    all >= 0; states land in out_x[m] and tangents in out_dx[m].  The step
    controller weighs state and tangent components jointly.  k = 0 degrades
    to plain state integration.
    """
    n = x0.shape[0]
    k = dx0.shape[1]
    m = stops.shape[0]
    depth = code.shape[0] + 1
    stack = np.empty(depth, dtype=np.float64)
    tstack = np.empty((depth, k), dtype=np.float64)

    y = x0.copy()
    dy = dx0.copy()
    f = np.empty(n, dtype=np.float64)
    df = np.empty((n, k), dtype=np.float64)
    s2 = np.empty(n, dtype=np.float64)
    d2 = np.empty((n, k), dtype=np.float64)
    s3 = np.empty(n, dtype=np.float64)
    d3 = np.empty((n, k), dtype=np.float64)
    s4 = np.empty(n, dtype=np.float64)
    d4 = np.empty((n, k), dtype=np.float64)
    s5 = np.empty(n, dtype=np.float64)
    d5 = np.empty((n, k), dtype=np.float64)
    s6 = np.empty(n, dtype=np.float64)
    d6 = np.empty((n, k), dtype=np.float64)
    s7 = np.empty(n, dtype=np.float64)
    d7 = np.empty((n, k), dtype=np.float64)
    ytmp = np.empty(n, dtype=np.float64)
    dtmp = np.empty((n, k), dtype=np.float64)
    ynew = np.empty(n, dtype=np.float64)
    dnew = np.empty((n, k), dtype=np.float64)

    info[0] = 0
    info[1] = 0
    info[2] = 0
    info[3] = 0

    st = tape_eval_dual_into(code, consts, params, y, dy, f, df, stack, tstack)
    if st != 0:
        info[3] = st - 1
        return ERR_DIV_ZERO
    for i in range(n):
        f[i] *= inv_scale[i]
        for j in range(k):
            df[i, j] *= inv_scale[i]

    next_stop = 0
    t = 0.0
    while next_stop < m and stops[next_stop] <= 0.0:
        for i in range(n):
            out_x[next_stop, i] = y[i]
            for j in range(k):
                out_dx[next_stop, i, j] = dy[i, j]
        next_stop += 1
        info[0] += 1
    if next_stop >= m:
        return OK

    t_last = stops[m - 1]
    h = _initial_step(f, y, t_last, rtol, atol)
    steps = 0
    while next_stop < m:
        if steps >= max_steps:
            info[3] = _worst_scaled_index(f, y, rtol, atol, n)
            return ERR_MAX_STEPS
        steps += 1
        if h < 1e-14 * (1.0 + abs(t)):
            info[3] = _worst_scaled_index(f, y, rtol, atol, n)
            return ERR_STEP_UNDERFLOW
        target = stops[next_stop]
        clamped = False
        if t + h >= target:
            h = target - t
            clamped = True

        ok = True
        # stage 2
        for i in range(n):
            ytmp[i] = y[i] + h * A21 * f[i]
            for j in range(k):
                dtmp[i, j] = dy[i, j] + h * A21 * df[i, j]
        st = tape_eval_dual_into(code, consts, params, ytmp, dtmp, s2, d2, stack, tstack)
        if st != 0:
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            s2[i] *= inv_scale[i]
            for j in range(k):
                d2[i, j] *= inv_scale[i]
        # stage 3
        for i in range(n):
            ytmp[i] = y[i] + h * (A31 * f[i] + A32 * s2[i])
            for j in range(k):
                dtmp[i, j] = dy[i, j] + h * (A31 * df[i, j] + A32 * d2[i, j])
        st = tape_eval_dual_into(code, consts, params, ytmp, dtmp, s3, d3, stack, tstack)
        if st != 0:
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            s3[i] *= inv_scale[i]
            for j in range(k):
                d3[i, j] *= inv_scale[i]
        # stage 4
        for i in range(n):
            ytmp[i] = y[i] + h * (A41 * f[i] + A42 * s2[i] + A43 * s3[i])
            for j in range(k):
                dtmp[i, j] = dy[i, j] + h * (A41 * df[i, j] + A42 * d2[i, j] + A43 * d3[i, j])
        st = tape_eval_dual_into(code, consts, params, ytmp, dtmp, s4, d4, stack, tstack)
        if st != 0:
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            s4[i] *= inv_scale[i]
            for j in range(k):
                d4[i, j] *= inv_scale[i]
        # stage 5
        for i in range(n):
            ytmp[i] = y[i] + h * (A51 * f[i] + A52 * s2[i] + A53 * s3[i] + A54 * s4[i])
            for j in range(k):
                dtmp[i, j] = dy[i, j] + h * (A51 * df[i, j] + A52 * d2[i, j]
                                             + A53 * d3[i, j] + A54 * d4[i, j])
        st = tape_eval_dual_into(code, consts, params, ytmp, dtmp, s5, d5, stack, tstack)
        if st != 0:
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            s5[i] *= inv_scale[i]
            for j in range(k):
                d5[i, j] *= inv_scale[i]
        # stage 6
        for i in range(n):
            ytmp[i] = y[i] + h * (A61 * f[i] + A62 * s2[i] + A63 * s3[i]
                                  + A64 * s4[i] + A65 * s5[i])
            for j in range(k):
                dtmp[i, j] = dy[i, j] + h * (A61 * df[i, j] + A62 * d2[i, j] + A63 * d3[i, j]
                                             + A64 * d4[i, j] + A65 * d5[i, j])
        st = tape_eval_dual_into(code, consts, params, ytmp, dtmp, s6, d6, stack, tstack)
        if st != 0:
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            s6[i] *= inv_scale[i]
            for j in range(k):
                d6[i, j] *= inv_scale[i]
        # 5th order solution + FSAL stage
        for i in range(n):
            ynew[i] = y[i] + h * (B1 * f[i] + B3 * s3[i] + B4 * s4[i]
                                  + B5 * s5[i] + B6 * s6[i])
            for j in range(k):
                dnew[i, j] = dy[i, j] + h * (B1 * df[i, j] + B3 * d3[i, j] + B4 * d4[i, j]
                                             + B5 * d5[i, j] + B6 * d6[i, j])
        st = tape_eval_dual_into(code, consts, params, ynew, dnew, s7, d7, stack, tstack)
        if st != 0:
            info[3] = st - 1
            return ERR_DIV_ZERO
        for i in range(n):
            s7[i] *= inv_scale[i]
            for j in range(k):
                d7[i, j] *= inv_scale[i]
            if not math.isfinite(ynew[i]):
                ok = False
        if not ok:
            return ERR_NONFINITE

        # joint scaled error norm over state and tangent components
        acc = 0.0
        for i in range(n):
            e = h * (E1 * f[i] + E3 * s3[i] + E4 * s4[i] + E5 * s5[i]
                     + E6 * s6[i] + E7 * s7[i])
            ay = abs(y[i])
            by = abs(ynew[i])
            sc = atol + rtol * (ay if ay > by else by)
            e /= sc
            acc += e * e
            for j in range(k):
                e = h * (E1 * df[i, j] + E3 * d3[i, j] + E4 * d4[i, j] + E5 * d5[i, j]
                         + E6 * d6[i, j] + E7 * d7[i, j])
                if not math.isfinite(dnew[i, j]):
                    return ERR_NONFINITE
                ay = abs(dy[i, j])
                by = abs(dnew[i, j])
                sc = atol + rtol * (ay if ay > by else by)
                e /= sc
                acc += e * e
        enorm = math.sqrt(acc / (n * (1 + k)))

        if enorm <= 1.0:
            t = target if clamped else t + h
            big = 0.0
            for i in range(n):
                y[i] = ynew[i]
                f[i] = s7[i]
                if abs(y[i]) > big:
                    big = abs(y[i])
                for j in range(k):
                    dy[i, j] = dnew[i, j]
                    df[i, j] = d7[i, j]
            info[1] += 1
            if big > y_cap:
                return ERR_DIVERGED
            while next_stop < m and t >= stops[next_stop]:
                for i in range(n):
                    out_x[next_stop, i] = y[i]
                    for j in range(k):
                        out_dx[next_stop, i, j] = dy[i, j]
                next_stop += 1
                info[0] += 1
            if enorm == 0.0:
                fac = MAX_FACTOR
            else:
                fac = SAFETY * enorm ** -0.2
                if fac > MAX_FACTOR:
                    fac = MAX_FACTOR
                elif fac < MIN_FACTOR:
                    fac = MIN_FACTOR
            h *= fac
        else:
            info[2] += 1
            fac = SAFETY * enorm ** -0.2
            if fac < MIN_FACTOR:
                fac = MIN_FACTOR
            elif fac > 1.0:
                fac = 1.0
            h *= fac

    return OK
