"""Compiled inner loops for the forward and adjoint sweeps.

Each kernel returns a step index ``>= 0`` on divergence and ``-1`` otherwise.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _f(xl, vl, xr, vr, a, b, hd):
    drive = a * (vr + vl)
    return (
        vl,
        drive - b * (1.0 + xl * xl) * vl - xl - hd * xl,
        vr,
        drive - b * (1.0 + xr * xr) * vr - xr + hd * xr,
    )


@njit(cache=True, nogil=True)
def rk4_forward(a, b, hd, cl, cr, n_steps, h, bound):
    out = np.zeros((n_steps + 1, 4))
    xl, vl, xr, vr = cl, 0.0, cr, 0.0
    out[0, 0] = xl
    out[0, 2] = xr
    h2 = h / 2.0
    h6 = h / 6.0
    for n in range(1, n_steps + 1):
        k10, k11, k12, k13 = _f(xl, vl, xr, vr, a, b, hd)
        k20, k21, k22, k23 = _f(xl + h2 * k10, vl + h2 * k11, xr + h2 * k12, vr + h2 * k13, a, b, hd)
        k30, k31, k32, k33 = _f(xl + h2 * k20, vl + h2 * k21, xr + h2 * k22, vr + h2 * k23, a, b, hd)
        k40, k41, k42, k43 = _f(xl + h * k30, vl + h * k31, xr + h * k32, vr + h * k33, a, b, hd)
        xl = xl + h6 * (k10 + 2.0 * k20 + 2.0 * k30 + k40)
        vl = vl + h6 * (k11 + 2.0 * k21 + 2.0 * k31 + k41)
        xr = xr + h6 * (k12 + 2.0 * k22 + 2.0 * k32 + k42)
        vr = vr + h6 * (k13 + 2.0 * k23 + 2.0 * k33 + k43)
        # negated comparison also catches NaN
        if not (abs(xl) <= bound and abs(vl) <= bound and abs(xr) <= bound and abs(vr) <= bound):
            return out[:n], n
        out[n, 0] = xl
        out[n, 1] = vl
        out[n, 2] = xr
        out[n, 3] = vr
    return out, -1


@njit(cache=True, nogil=True)
def _jt(y, w, a, b, hd, out):
    # out = (df/dy)^T w
    xl, vl, xr, vr = y[0], y[1], y[2], y[3]
    out[0] = w[1] * (-2.0 * b * xl * vl - 1.0 - hd)
    out[1] = w[0] + w[1] * (a - b * (1.0 + xl * xl)) + w[3] * a
    out[2] = w[3] * (-2.0 * b * xr * vr - 1.0 + hd)
    out[3] = w[2] + w[3] * (a - b * (1.0 + xr * xr)) + w[1] * a


@njit(cache=True, nogil=True)
def _stage(y, k, c, out):
    for i in range(4):
        out[i] = y[i] + c * k[i]


@njit(cache=True, nogil=True)
def _feval(y, a, b, hd, out):
    r = _f(y[0], y[1], y[2], y[3], a, b, hd)
    out[0] = r[0]
    out[1] = r[1]
    out[2] = r[2]
    out[3] = r[3]


@njit(cache=True, nogil=True)
def _nodal(y, P, a, b, out):
    xl, xr = y[0], y[2]
    lam_l = -P[1]
    lam_r = -P[3]
    out[0] = lam_l
    out[1] = P[0] - lam_l * (a - b * (1.0 + xl * xl)) - lam_r * a
    out[2] = lam_r
    out[3] = P[2] - lam_r * (a - b * (1.0 + xr * xr)) - lam_l * a


@njit(cache=True, nogil=True)
def discrete_adjoint(S, force, a, b, hd, h, bound):
    """Transpose of the RK4 map, swept backward over the stored states."""
    n_steps = S.shape[0] - 1
    lam = np.zeros((n_steps + 1, 4))
    qs = np.zeros((n_steps, 4, 4))
    ql = np.zeros((n_steps, 4, 2))
    qw = np.zeros((n_steps, 4))
    B = np.array([1.0 / 6.0, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 6.0])
    A = np.array([0.0, 0.5, 0.5, 1.0])  # stage s is y + A[s] h k_{s-1}
    Y = np.zeros((4, 4))
    K = np.zeros((4, 4))
    G = np.zeros((4, 4))
    W = np.zeros((4, 4))
    P = np.zeros(4)
    P[0] = force[n_steps]
    P[2] = force[n_steps]
    _nodal(S[n_steps], P, a, b, lam[n_steps])
    for n in range(n_steps - 1, -1, -1):
        for i in range(4):
            Y[0, i] = S[n, i]
        _feval(Y[0], a, b, hd, K[0])
        for s in range(1, 4):
            _stage(Y[0], K[s - 1], A[s] * h, Y[s])
            _feval(Y[s], a, b, hd, K[s])
        # dE/dk_s = h b_s P + h A[s+1] w_{s+1}
        for s in range(3, -1, -1):
            for i in range(4):
                G[s, i] = h * B[s] * P[i]
                if s < 3:
                    G[s, i] += h * A[s + 1] * W[s + 1, i]
            _jt(Y[s], G[s], a, b, hd, W[s])
        for i in range(4):
            P[i] = P[i] + W[0, i] + W[1, i] + W[2, i] + W[3, i]
        P[0] += force[n]
        P[2] += force[n]
        for i in range(4):
            if not abs(P[i]) <= bound:
                return lam, qs, ql, qw, n
        _nodal(Y[0], P, a, b, lam[n])
        for s in range(4):
            c = h * B[s]
            for i in range(4):
                qs[n, s, i] = Y[s, i]
            ql[n, s, 0] = -G[s, 1] / c
            ql[n, s, 1] = -G[s, 3] / c
            qw[n, s] = c
    return lam, qs, ql, qw, -1


@njit(cache=True, nogil=True)
def _g(z0, z1, z2, z3, xl, xr, q, a, b, hd):
    coup = a * (z1 + z3)
    return (
        z1,
        b * (1.0 + xl * xl) * z1 - coup - (1.0 + hd) * z0 - q,
        z3,
        b * (1.0 + xr * xr) * z3 - coup - (1.0 - hd) * z2 - q,
    )


@njit(cache=True, nogil=True)
def continuous_adjoint(S, q, a, b, hd, h, bound):
    """RK4 on the second-order multiplier equations, backward from zero."""
    n_steps = S.shape[0] - 1
    lam = np.zeros((n_steps + 1, 4))
    z0 = z1 = z2 = z3 = 0.0
    m = -h / 2.0
    for n in range(n_steps, 0, -1):
        xl1, xr1, q1 = S[n, 0], S[n, 2], q[n]
        xl0, xr0, q0 = S[n - 1, 0], S[n - 1, 2], q[n - 1]
        xlm = 0.5 * (xl0 + xl1)
        xrm = 0.5 * (xr0 + xr1)
        qm = 0.5 * (q0 + q1)
        k1 = _g(z0, z1, z2, z3, xl1, xr1, q1, a, b, hd)
        k2 = _g(z0 + m * k1[0], z1 + m * k1[1], z2 + m * k1[2], z3 + m * k1[3], xlm, xrm, qm, a, b, hd)
        k3 = _g(z0 + m * k2[0], z1 + m * k2[1], z2 + m * k2[2], z3 + m * k2[3], xlm, xrm, qm, a, b, hd)
        k4 = _g(z0 - h * k3[0], z1 - h * k3[1], z2 - h * k3[2], z3 - h * k3[3], xl0, xr0, q0, a, b, hd)
        c = h / 6.0
        z0 = z0 - c * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        z1 = z1 - c * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        z2 = z2 - c * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        z3 = z3 - c * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
        if not (abs(z0) <= bound and abs(z1) <= bound and abs(z2) <= bound and abs(z3) <= bound):
            return lam, n - 1
        lam[n - 1, 0] = z0
        lam[n - 1, 1] = z1
        lam[n - 1, 2] = z2
        lam[n - 1, 3] = z3
    return lam, -1
