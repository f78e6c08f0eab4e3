# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Dormand-Prince 5(4) stepping kernel for the built-in planar fields.

Handles only the two hot workloads (heavy-ball and gradient flow on the
(x*y - 1)^2 objective); everything else goes through the pure-Python driver
in :mod:`heavyball_lab.ode`.  Both drivers share the same tableau, the same
PI controller constants, and the same dense-output interpolant, so results
agree to rounding.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, fmax, fmin, isfinite, pow, sqrt

cnp.import_array()

# field kinds (mirrored in heavyball_lab._backend)
cdef int KIND_HEAVY_BALL_XY = 1
cdef int KIND_GRAD_FLOW_XY = 2

# stop codes
cdef int STOP_T_END = 0
cdef int STOP_CONVERGED = 1
cdef int ERR_STEP_UNDERFLOW = -1
cdef int ERR_MAX_STEPS = -2
cdef int ERR_NONFINITE = -3

# Dormand-Prince tableau
cdef double C2 = 1.0 / 5.0, C3 = 3.0 / 10.0, C4 = 4.0 / 5.0, C5 = 8.0 / 9.0

cdef double A21 = 1.0 / 5.0
cdef double A31 = 3.0 / 40.0, A32 = 9.0 / 40.0
cdef double A41 = 44.0 / 45.0, A42 = -56.0 / 15.0, A43 = 32.0 / 9.0
cdef double A51 = 19372.0 / 6561.0, A52 = -25360.0 / 2187.0
cdef double A53 = 64448.0 / 6561.0, A54 = -212.0 / 729.0
cdef double A61 = 9017.0 / 3168.0, A62 = -355.0 / 33.0, A63 = 46732.0 / 5247.0
cdef double A64 = 49.0 / 176.0, A65 = -5103.0 / 18656.0
cdef double B1 = 35.0 / 384.0, B3 = 500.0 / 1113.0, B4 = 125.0 / 192.0
cdef double B5 = -2187.0 / 6784.0, B6 = 11.0 / 84.0

# embedded 4th-order error weights (b - b_hat), including the FSAL stage
cdef double E1 = 71.0 / 57600.0, E3 = -71.0 / 16695.0, E4 = 71.0 / 1920.0
cdef double E5 = -17253.0 / 339200.0, E6 = 22.0 / 525.0, E7 = -1.0 / 40.0

# dense-output interpolant matrix (7 stages x theta^1..theta^4)
cdef double P[7][4]
_P_ROWS = [
    [1.0, -8048581381.0 / 2820520608.0, 8663915743.0 / 2820520608.0,
     -12715105075.0 / 11282082432.0],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200.0 / 32700410799.0, -68118460800.0 / 10900136933.0,
     87487479700.0 / 32700410799.0],
    [0.0, -1754552775.0 / 470086768.0, 14199869525.0 / 1410260304.0,
     -10690763975.0 / 1880347072.0],
    [0.0, 127303824393.0 / 49829197408.0, -318862633887.0 / 49829197408.0,
     701980252875.0 / 199316789632.0],
    [0.0, -282668133.0 / 205662961.0, 2019193451.0 / 616988883.0,
     -1453857185.0 / 822651844.0],
    [0.0, 40617522.0 / 29380423.0, -110615467.0 / 29380423.0,
     69997945.0 / 29380423.0],
]
for _i in range(7):
    for _j in range(4):
        P[_i][_j] = _P_ROWS[_i][_j]

# PI step controller (shared with the pure driver)
cdef double SAFETY = 0.9
cdef double MIN_FACTOR = 0.2
cdef double MAX_FACTOR = 10.0
cdef double PI_ALPHA = 0.17      # 1/5 - 0.75 * PI_BETA
cdef double PI_BETA = 0.04
cdef double ERR_FLOOR = 1e-4
cdef double EPS = 2.220446049250313e-16


cdef inline void _field(int kind, double gamma, double inv_eps,
                        const double* y, double* out) noexcept nogil:
    cdef double s
    if kind == KIND_HEAVY_BALL_XY:
        s = 2.0 * (y[0] * y[1] - 1.0)
        out[0] = y[2]
        out[1] = y[3]
        out[2] = -(gamma * y[2] + y[1] * s) * inv_eps
        out[3] = -(gamma * y[3] + y[0] * s) * inv_eps
    else:
        s = 2.0 * (y[0] * y[1] - 1.0)
        out[0] = -(y[1] * s) / gamma
        out[1] = -(y[0] * s) / gamma


cdef inline void _halt_metrics(int kind, double gamma, const double* y,
                               double* gnorm, double* vnorm) noexcept nogil:
    cdef double s = 2.0 * (y[0] * y[1] - 1.0)
    cdef double gx = y[1] * s
    cdef double gy = y[0] * s
    gnorm[0] = sqrt(gx * gx + gy * gy)
    if kind == KIND_HEAVY_BALL_XY:
        vnorm[0] = sqrt(y[2] * y[2] + y[3] * y[3])
    else:
        vnorm[0] = gnorm[0] / gamma


cdef inline double _error_norm(int dim, const double* err, const double* y0,
                               const double* y1, double rtol,
                               double atol) noexcept nogil:
    cdef double acc = 0.0, sc, r
    cdef int i
    for i in range(dim):
        sc = atol + rtol * fmax(fabs(y0[i]), fabs(y1[i]))
        r = err[i] / sc
        acc += r * r
    return sqrt(acc / dim)


cdef double _initial_step(int kind, double gamma, double inv_eps, int dim,
                          const double* y0, const double* f0, double t_end,
                          double max_step, double rtol, double atol) noexcept nogil:
    cdef double d0 = 0.0, d1 = 0.0, d2 = 0.0, sc, r, h0, h1
    cdef double y1[8]
    cdef double f1[8]
    cdef int i
    for i in range(dim):
        sc = atol + rtol * fabs(y0[i])
        r = y0[i] / sc
        d0 += r * r
        r = f0[i] / sc
        d1 += r * r
    d0 = sqrt(d0 / dim)
    d1 = sqrt(d1 / dim)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = fmin(h0, fmin(max_step, t_end))
    for i in range(dim):
        y1[i] = y0[i] + h0 * f0[i]
    _field(kind, gamma, inv_eps, y1, f1)
    for i in range(dim):
        sc = atol + rtol * fabs(y0[i])
        r = (f1[i] - f0[i]) / sc
        d2 += r * r
    d2 = sqrt(d2 / dim) / h0
    if fmax(d1, d2) <= 1e-15:
        h1 = fmax(1e-6, h0 * 1e-3)
    else:
        h1 = pow(0.01 / fmax(d1, d2), 0.2)
    return fmin(fmin(100.0 * h0, h1), fmin(max_step, t_end))


def integrate_kernel(int kind, double gamma, double epsilon,
                     cnp.ndarray[cnp.float64_t, ndim=1] y_start,
                     double t_end, double rtol, double atol,
                     double max_step, double first_step, long max_steps,
                     cnp.ndarray[cnp.float64_t, ndim=1] forced_times,
                     int use_halt, double grad_tol, double vel_tol,
                     double dwell):
    """Run the adaptive loop; returns (times, states, derivs, qcoef, stop_code).

    ``first_step <= 0`` selects the automatic initial step.  ``forced_times``
    must be sorted, strictly inside (0, t_end).  Negative stop codes are
    turned into exceptions by the caller.
    """
    cdef int dim = 4 if kind == KIND_HEAVY_BALL_XY else 2
    if y_start.shape[0] != dim:
        raise ValueError("state dimension does not match field kind")

    cdef double inv_eps = 1.0 / epsilon if kind == KIND_HEAVY_BALL_XY else 0.0

    cdef Py_ssize_t cap = 4096
    cdef cnp.ndarray t_arr = np.empty(cap, dtype=np.float64)
    cdef cnp.ndarray y_arr = np.empty((cap, dim), dtype=np.float64)
    cdef cnp.ndarray f_arr = np.empty((cap, dim), dtype=np.float64)
    cdef cnp.ndarray q_arr = np.empty((cap, dim, 4), dtype=np.float64)
    cdef double[::1] T = t_arr
    cdef double[:, ::1] Y = y_arr
    cdef double[:, ::1] F = f_arr
    cdef double[:, :, ::1] Q = q_arr

    cdef double[::1] FT = forced_times
    cdef Py_ssize_t n_forced = forced_times.shape[0]
    cdef Py_ssize_t i_forced = 0

    cdef double y[8]
    cdef double ynew[8]
    cdef double k[7][8]
    cdef double work[8]
    cdef double errv[8]
    cdef int i, j, s
    cdef Py_ssize_t n = 0
    cdef long attempts = 0
    cdef double t = 0.0, h, err, err_prev = ERR_FLOOR, factor
    cdef double t_next, t_stop, gn, vn, hold_start = -1.0
    cdef bint rejected = False, landed
    cdef int stop_code = STOP_T_END

    for i in range(dim):
        y[i] = y_start[i]
        if not isfinite(y[i]):
            raise ValueError("initial state must be finite")

    _field(kind, gamma, inv_eps, y, k[0])
    T[0] = 0.0
    for i in range(dim):
        Y[0, i] = y[i]
        F[0, i] = k[0][i]
    n = 1
    for i in range(dim):
        if not isfinite(k[0][i]):
            return t_arr[:1], y_arr[:1], f_arr[:1], q_arr[:0], ERR_NONFINITE

    if use_halt:
        _halt_metrics(kind, gamma, y, &gn, &vn)
        if gn <= grad_tol and vn <= vel_tol:
            hold_start = 0.0

    if first_step > 0.0:
        h = fmin(first_step, fmin(max_step, t_end))
    else:
        h = _initial_step(kind, gamma, inv_eps, dim, y, k[0], t_end,
                          max_step, rtol, atol)

    while t < t_end:
        if attempts >= max_steps:
            stop_code = ERR_MAX_STEPS
            break
        attempts += 1

        if h < 10.0 * EPS * fmax(fabs(t), 1.0):
            stop_code = ERR_STEP_UNDERFLOW
            break
        h = fmin(h, max_step)

        # land exactly on the next forced time or the horizon
        t_stop = FT[i_forced] if i_forced < n_forced else t_end
        landed = False
        if t + h >= t_stop:
            h = t_stop - t
            t_next = t_stop
            landed = True
        else:
            t_next = t + h

        # six fresh stages; k[0] is FSAL from the previous step
        for i in range(dim):
            work[i] = y[i] + h * A21 * k[0][i]
        _field(kind, gamma, inv_eps, work, k[1])
        for i in range(dim):
            work[i] = y[i] + h * (A31 * k[0][i] + A32 * k[1][i])
        _field(kind, gamma, inv_eps, work, k[2])
        for i in range(dim):
            work[i] = y[i] + h * (A41 * k[0][i] + A42 * k[1][i] + A43 * k[2][i])
        _field(kind, gamma, inv_eps, work, k[3])
        for i in range(dim):
            work[i] = y[i] + h * (A51 * k[0][i] + A52 * k[1][i]
                                  + A53 * k[2][i] + A54 * k[3][i])
        _field(kind, gamma, inv_eps, work, k[4])
        for i in range(dim):
            work[i] = y[i] + h * (A61 * k[0][i] + A62 * k[1][i] + A63 * k[2][i]
                                  + A64 * k[3][i] + A65 * k[4][i])
        _field(kind, gamma, inv_eps, work, k[5])
        for i in range(dim):
            ynew[i] = y[i] + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i]
                                  + B5 * k[4][i] + B6 * k[5][i])
        _field(kind, gamma, inv_eps, ynew, k[6])

        for i in range(dim):
            errv[i] = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i]
                           + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i])
            if not isfinite(ynew[i]) or not isfinite(k[6][i]):
                stop_code = ERR_NONFINITE
                break
        else:
            err = _error_norm(dim, errv, y, ynew, rtol, atol)

            if err <= 1.0:
                # accept: store node, derivative, and dense coefficients
                if n == cap:
                    cap *= 2
                    t_arr = np.concatenate([t_arr, np.empty(cap - n)])
                    y_arr = np.concatenate([y_arr, np.empty((cap - n, dim))])
                    f_arr = np.concatenate([f_arr, np.empty((cap - n, dim))])
                    q_arr = np.concatenate([q_arr, np.empty((cap - n, dim, 4))])
                    T = t_arr
                    Y = y_arr
                    F = f_arr
                    Q = q_arr
                for i in range(dim):
                    for j in range(4):
                        Q[n - 1, i, j] = (k[0][i] * P[0][j] + k[2][i] * P[2][j]
                                          + k[3][i] * P[3][j] + k[4][i] * P[4][j]
                                          + k[5][i] * P[5][j] + k[6][i] * P[6][j])
                T[n] = t_next
                for i in range(dim):
                    Y[n, i] = ynew[i]
                    F[n, i] = k[6][i]
                n += 1

                if err == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = SAFETY * pow(err, -PI_ALPHA) * pow(err_prev, PI_BETA)
                    factor = fmin(MAX_FACTOR, fmax(MIN_FACTOR, factor))
                if rejected:
                    factor = fmin(1.0, factor)
                h *= factor
                rejected = False
                err_prev = fmax(err, ERR_FLOOR)

                t = t_next
                for i in range(dim):
                    y[i] = ynew[i]
                    k[0][i] = k[6][i]
                if landed and i_forced < n_forced and t == FT[i_forced]:
                    i_forced += 1

                if use_halt:
                    _halt_metrics(kind, gamma, y, &gn, &vn)
                    if gn <= grad_tol and vn <= vel_tol:
                        if hold_start < 0.0:
                            hold_start = t
                        elif t - hold_start >= dwell:
                            stop_code = STOP_CONVERGED
                            break
                    else:
                        hold_start = -1.0
            else:
                factor = fmax(MIN_FACTOR, SAFETY * pow(err, -PI_ALPHA))
                h *= fmin(1.0, factor)
                rejected = True
            continue
        break  # propagate non-finite detection out of the stage loop

    return (t_arr[:n], y_arr[:n, :], f_arr[:n, :], q_arr[:n - 1, :, :],
            stop_code)
