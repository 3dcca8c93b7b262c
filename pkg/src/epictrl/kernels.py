"""Fused numeric loops behind the public modules.

Everything here takes plain floats and arrays so numba can compile it; with
``EPICTRL_NO_NUMBA=1`` the same source runs interpreted (scalar math for the
compartment loops, numpy slices for the heat march, both acceptable without
the JIT).  Parameter vectors use the packed layout of
``EpidemicParams.as_array()``:

    p = [omega, beta, gamma, delta, lambda1, lambda2, lambda3,
         kappa1, kappa2, kappa3, N]

Stage arithmetic deliberately mirrors :func:`epictrl.ode.rk4_step`
(``x + 0.5*h*k`` stage states, ``x + (h/6)*(k1 + 2*k2 + 2*k3 + k4)`` update)
so the fused and generic integrators agree to rounding.  Control values
between nodes are the mean of the bracketing nodes (linear interpolation at
the half step), and the adjoint integration interpolates the stored state
trajectory the same way.
"""

import math

import numpy as np

from ._accel import njit

_EXP_CLAMP = 700.0


@njit(cache=True)
def recovery_rate(t, l1, l2, l3):
    z = -l2 * (t - l3)
    if z > _EXP_CLAMP:
        z = _EXP_CLAMP
    elif z < -_EXP_CLAMP:
        z = -_EXP_CLAMP
    return l1 / (1.0 + math.exp(z))


@njit(cache=True)
def mortality_rate(t, k1, k2, k3):
    z = k2 * (t - k3)
    if z > _EXP_CLAMP:
        z = _EXP_CLAMP
    elif z < -_EXP_CLAMP:
        z = -_EXP_CLAMP
    return k1 / (math.exp(z) + math.exp(-z))


@njit(cache=True)
def _rhs7(t, s, e, i, q, omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop):
    lam = recovery_rate(t, l1, l2, l3)
    kap = mortality_rate(t, k1, k2, k3)
    infection = beta * s * i / n_pop
    latency = gamma * e
    quarantine = delta * i
    recovery = lam * q
    death = kap * q
    protection = omega * s
    return (
        -infection - protection,
        infection - latency,
        latency - quarantine,
        quarantine - recovery - death,
        recovery,
        death,
        protection,
    )


@njit(cache=True)
def _rhs8(t, s, e, i, q, u, omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop):
    lam = recovery_rate(t, l1, l2, l3)
    kap = mortality_rate(t, k1, k2, k3)
    infection = beta * s * i / n_pop
    latency = gamma * e
    quarantine = delta * i
    recovery = lam * q
    death = kap * q
    protection = omega * s
    vaccination = u * s
    return (
        -infection - protection - vaccination,
        infection - latency,
        latency - quarantine,
        quarantine - recovery - death,
        recovery,
        death,
        protection,
        vaccination,
    )


@njit(cache=True)
def integrate_uncontrolled(p, x0, t0, h, n_steps):
    """RK4 trajectory of the 7-compartment system; returns (n_steps+1, 7)."""
    omega, beta, gamma, delta = p[0], p[1], p[2], p[3]
    l1, l2, l3, k1, k2, k3, n_pop = p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    out = np.empty((n_steps + 1, 7))
    s, e, i, q = x0[0], x0[1], x0[2], x0[3]
    r, d, pr = x0[4], x0[5], x0[6]
    out[0, 0] = s
    out[0, 1] = e
    out[0, 2] = i
    out[0, 3] = q
    out[0, 4] = r
    out[0, 5] = d
    out[0, 6] = pr
    for n in range(n_steps):
        t = t0 + n * h
        a1 = _rhs7(t, s, e, i, q, omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop)
        a2 = _rhs7(
            t + 0.5 * h,
            s + 0.5 * h * a1[0],
            e + 0.5 * h * a1[1],
            i + 0.5 * h * a1[2],
            q + 0.5 * h * a1[3],
            omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop,
        )
        a3 = _rhs7(
            t + 0.5 * h,
            s + 0.5 * h * a2[0],
            e + 0.5 * h * a2[1],
            i + 0.5 * h * a2[2],
            q + 0.5 * h * a2[3],
            omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop,
        )
        a4 = _rhs7(
            t + h,
            s + h * a3[0],
            e + h * a3[1],
            i + h * a3[2],
            q + h * a3[3],
            omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop,
        )
        s = s + (h / 6.0) * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
        e = e + (h / 6.0) * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
        i = i + (h / 6.0) * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])
        q = q + (h / 6.0) * (a1[3] + 2.0 * a2[3] + 2.0 * a3[3] + a4[3])
        r = r + (h / 6.0) * (a1[4] + 2.0 * a2[4] + 2.0 * a3[4] + a4[4])
        d = d + (h / 6.0) * (a1[5] + 2.0 * a2[5] + 2.0 * a3[5] + a4[5])
        pr = pr + (h / 6.0) * (a1[6] + 2.0 * a2[6] + 2.0 * a3[6] + a4[6])
        out[n + 1, 0] = s
        out[n + 1, 1] = e
        out[n + 1, 2] = i
        out[n + 1, 3] = q
        out[n + 1, 4] = r
        out[n + 1, 5] = d
        out[n + 1, 6] = pr
    return out


@njit(cache=True)
def integrate_controlled(p, x0, u, t0, h, n_steps):
    """RK4 trajectory of the vaccinated 8-compartment system.

    u holds one control value per node; half-step stages use the mean of the
    bracketing node values.
    """
    omega, beta, gamma, delta = p[0], p[1], p[2], p[3]
    l1, l2, l3, k1, k2, k3, n_pop = p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    out = np.empty((n_steps + 1, 8))
    s, e, i, q = x0[0], x0[1], x0[2], x0[3]
    r, d, pr, w = x0[4], x0[5], x0[6], x0[7]
    for j in range(8):
        out[0, j] = x0[j]
    for n in range(n_steps):
        t = t0 + n * h
        u0 = u[n]
        u1 = u[n + 1]
        um = 0.5 * (u0 + u1)
        a1 = _rhs8(t, s, e, i, q, u0, omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop)
        a2 = _rhs8(
            t + 0.5 * h,
            s + 0.5 * h * a1[0],
            e + 0.5 * h * a1[1],
            i + 0.5 * h * a1[2],
            q + 0.5 * h * a1[3],
            um, omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop,
        )
        a3 = _rhs8(
            t + 0.5 * h,
            s + 0.5 * h * a2[0],
            e + 0.5 * h * a2[1],
            i + 0.5 * h * a2[2],
            q + 0.5 * h * a2[3],
            um, omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop,
        )
        a4 = _rhs8(
            t + h,
            s + h * a3[0],
            e + h * a3[1],
            i + h * a3[2],
            q + h * a3[3],
            u1, omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop,
        )
        s = s + (h / 6.0) * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
        e = e + (h / 6.0) * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
        i = i + (h / 6.0) * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])
        q = q + (h / 6.0) * (a1[3] + 2.0 * a2[3] + 2.0 * a3[3] + a4[3])
        r = r + (h / 6.0) * (a1[4] + 2.0 * a2[4] + 2.0 * a3[4] + a4[4])
        d = d + (h / 6.0) * (a1[5] + 2.0 * a2[5] + 2.0 * a3[5] + a4[5])
        pr = pr + (h / 6.0) * (a1[6] + 2.0 * a2[6] + 2.0 * a3[6] + a4[6])
        w = w + (h / 6.0) * (a1[7] + 2.0 * a2[7] + 2.0 * a3[7] + a4[7])
        out[n + 1, 0] = s
        out[n + 1, 1] = e
        out[n + 1, 2] = i
        out[n + 1, 3] = q
        out[n + 1, 4] = r
        out[n + 1, 5] = d
        out[n + 1, 6] = pr
        out[n + 1, 7] = w
    return out


@njit(cache=True)
def _adjoint_rhs(t, p1, p2, p3, p4, p5, p6, p7, p8, x1, x3, u,
                 omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop, w1):
    # costate dynamics: the transpose of the state Jacobian with flipped
    # sign, plus the running-cost derivative -2*w1*x3 in the third slot
    lam = recovery_rate(t, l1, l2, l3)
    kap = mortality_rate(t, k1, k2, k3)
    bx3 = beta * x3 / n_pop
    bx1 = beta * x1 / n_pop
    d1 = (bx3 + omega + u) * p1 - bx3 * p2 - omega * p7 - u * p8
    d2 = gamma * p2 - gamma * p3
    d3 = bx1 * p1 - bx1 * p2 + delta * p3 - delta * p4 - 2.0 * w1 * x3
    d4 = (lam + kap) * p4 - lam * p5 - kap * p6
    return (d1, d2, d3, d4, 0.0, 0.0, 0.0, 0.0)


@njit(cache=True)
def integrate_adjoint_backward(p, w1, x, u, t0, h):
    """Backward RK4 sweep of the costate from zero terminal data.

    x is the stored (n_steps+1, >=3) state trajectory on the same grid;
    half-step stages use the node means of state and control.  Returns the
    (n_steps+1, 8) costate indexed in forward time order; components 5..8
    stay exactly zero.
    """
    omega, beta, gamma, delta = p[0], p[1], p[2], p[3]
    l1, l2, l3, k1, k2, k3, n_pop = p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    n_steps = x.shape[0] - 1
    psi = np.zeros((n_steps + 1, 8))
    p1 = p2 = p3 = p4 = p5 = p6 = p7 = p8 = 0.0
    hb = -h
    for n in range(n_steps - 1, -1, -1):
        t1 = t0 + (n + 1) * h
        x1a, x3a, ua = x[n + 1, 0], x[n + 1, 2], u[n + 1]
        x1m = 0.5 * (x[n, 0] + x[n + 1, 0])
        x3m = 0.5 * (x[n, 2] + x[n + 1, 2])
        um = 0.5 * (u[n] + u[n + 1])
        x1b, x3b, ub = x[n, 0], x[n, 2], u[n]
        a1 = _adjoint_rhs(t1, p1, p2, p3, p4, p5, p6, p7, p8, x1a, x3a, ua,
                          omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop, w1)
        a2 = _adjoint_rhs(
            t1 + 0.5 * hb,
            p1 + 0.5 * hb * a1[0], p2 + 0.5 * hb * a1[1],
            p3 + 0.5 * hb * a1[2], p4 + 0.5 * hb * a1[3],
            p5, p6, p7, p8, x1m, x3m, um,
            omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop, w1,
        )
        a3 = _adjoint_rhs(
            t1 + 0.5 * hb,
            p1 + 0.5 * hb * a2[0], p2 + 0.5 * hb * a2[1],
            p3 + 0.5 * hb * a2[2], p4 + 0.5 * hb * a2[3],
            p5, p6, p7, p8, x1m, x3m, um,
            omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop, w1,
        )
        a4 = _adjoint_rhs(
            t1 + hb,
            p1 + hb * a3[0], p2 + hb * a3[1],
            p3 + hb * a3[2], p4 + hb * a3[3],
            p5, p6, p7, p8, x1b, x3b, ub,
            omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop, w1,
        )
        p1 = p1 + (hb / 6.0) * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
        p2 = p2 + (hb / 6.0) * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
        p3 = p3 + (hb / 6.0) * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])
        p4 = p4 + (hb / 6.0) * (a1[3] + 2.0 * a2[3] + 2.0 * a3[3] + a4[3])
        psi[n, 0] = p1
        psi[n, 1] = p2
        psi[n, 2] = p3
        psi[n, 3] = p4
    return psi


@njit(cache=True)
def _rhs4(t, s, e, i, q, u, omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop):
    # closed (S, E, I, Q) subsystem; R, D, P, W never feed back
    lam = recovery_rate(t, l1, l2, l3)
    kap = mortality_rate(t, k1, k2, k3)
    infection = beta * s * i / n_pop
    return (
        -infection - omega * s - u * s,
        infection - gamma * e,
        gamma * e - delta * i,
        delta * i - (lam + kap) * q,
    )


@njit(cache=True)
def _jact4(t, v1, v2, v3, v4, s, i, u,
           omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop):
    # transpose-Jacobian product of the (S, E, I, Q) subsystem at one stage
    lam = recovery_rate(t, l1, l2, l3)
    kap = mortality_rate(t, k1, k2, k3)
    bx3 = beta * i / n_pop
    bx1 = beta * s / n_pop
    return (
        (-bx3 - omega - u) * v1 + bx3 * v2,
        -gamma * v2 + gamma * v3,
        -bx1 * v1 + bx1 * v2 - delta * v3 + delta * v4,
        -(lam + kap) * v4,
    )


@njit(cache=True)
def cost_gradient_backward(p, w1, w2, x, u, t0, h):
    """Exact gradient of the trapezoid cost through the RK4 discretization.

    Reverse-mode differentiation of J(u) = sum_n wq_n (w1*I_n^2 + w2*u_n^2)
    where the trajectory comes from integrate_controlled.  The recursion only
    needs the (S, E, I, Q) block: the remaining compartments never influence
    the infective curve, so their sensitivities vanish identically.
    """
    omega, beta, gamma, delta = p[0], p[1], p[2], p[3]
    l1, l2, l3, k1, k2, k3, n_pop = p[4], p[5], p[6], p[7], p[8], p[9], p[10]
    n_steps = x.shape[0] - 1
    grad = np.empty(n_steps + 1)
    for n in range(n_steps + 1):
        wq = h if 0 < n < n_steps else 0.5 * h
        grad[n] = wq * 2.0 * w2 * u[n]
    # l1_..l4_ = dJ/d(S,E,I,Q) at the node currently being pulled back
    l1_ = 0.0
    l2_ = 0.0
    l3_ = 0.5 * h * 2.0 * w1 * x[n_steps, 2]
    l4_ = 0.0
    for n in range(n_steps - 1, -1, -1):
        t = t0 + n * h
        u0 = u[n]
        u1 = u[n + 1]
        um = 0.5 * (u0 + u1)
        s1, e1, i1, q1 = x[n, 0], x[n, 1], x[n, 2], x[n, 3]
        a1 = _rhs4(t, s1, e1, i1, q1, u0,
                   omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop)
        s2 = s1 + 0.5 * h * a1[0]
        e2 = e1 + 0.5 * h * a1[1]
        i2 = i1 + 0.5 * h * a1[2]
        q2 = q1 + 0.5 * h * a1[3]
        a2 = _rhs4(t + 0.5 * h, s2, e2, i2, q2, um,
                   omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop)
        s3 = s1 + 0.5 * h * a2[0]
        e3 = e1 + 0.5 * h * a2[1]
        i3 = i1 + 0.5 * h * a2[2]
        q3 = q1 + 0.5 * h * a2[3]
        a3 = _rhs4(t + 0.5 * h, s3, e3, i3, q3, um,
                   omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop)
        s4 = s1 + h * a3[0]
        e4 = e1 + h * a3[1]
        i4 = i1 + h * a3[2]
        q4 = q1 + h * a3[3]

        c16 = h / 6.0
        c13 = h / 3.0
        # stage 4 (state s4..q4, control u1)
        kb1_, kb2_, kb3_, kb4_ = c16 * l1_, c16 * l2_, c16 * l3_, c16 * l4_
        y4 = _jact4(t + h, kb1_, kb2_, kb3_, kb4_, s4, i4, u1,
                    omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop)
        gu1 = -s4 * kb1_
        # stage 3 (state s3..q3, control um)
        kb1_ = c13 * l1_ + h * y4[0]
        kb2_ = c13 * l2_ + h * y4[1]
        kb3_ = c13 * l3_ + h * y4[2]
        kb4_ = c13 * l4_ + h * y4[3]
        y3 = _jact4(t + 0.5 * h, kb1_, kb2_, kb3_, kb4_, s3, i3, um,
                    omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop)
        gum = -s3 * kb1_
        # stage 2 (state s2..q2, control um)
        kb1_ = c13 * l1_ + 0.5 * h * y3[0]
        kb2_ = c13 * l2_ + 0.5 * h * y3[1]
        kb3_ = c13 * l3_ + 0.5 * h * y3[2]
        kb4_ = c13 * l4_ + 0.5 * h * y3[3]
        y2 = _jact4(t + 0.5 * h, kb1_, kb2_, kb3_, kb4_, s2, i2, um,
                    omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop)
        gum = gum - s2 * kb1_
        # stage 1 (state s1..q1, control u0)
        kb1_ = c16 * l1_ + 0.5 * h * y2[0]
        kb2_ = c16 * l2_ + 0.5 * h * y2[1]
        kb3_ = c16 * l3_ + 0.5 * h * y2[2]
        kb4_ = c16 * l4_ + 0.5 * h * y2[3]
        y1 = _jact4(t, kb1_, kb2_, kb3_, kb4_, s1, i1, u0,
                    omega, beta, gamma, delta, l1, l2, l3, k1, k2, k3, n_pop)
        gu0 = -s1 * kb1_

        grad[n + 1] += gu1 + 0.5 * gum
        grad[n] += gu0 + 0.5 * gum
        l1_ = l1_ + y1[0] + y2[0] + y3[0] + y4[0]
        l2_ = l2_ + y1[1] + y2[1] + y3[1] + y4[1]
        l3_ = l3_ + y1[2] + y2[2] + y3[2] + y4[2]
        l4_ = l4_ + y1[3] + y2[3] + y3[3] + y4[3]
        wq = h if n > 0 else 0.5 * h
        l3_ += wq * 2.0 * w1 * x[n, 2]
    return grad


@njit(cache=True)
def heat_march(u0, crp, crm, fr, fz, n_steps, dirichlet_caps):
    """Explicit axisymmetric diffusion march on a zero-boundary field.

    u0: (nr, nz) initial field; row 0 is the axis, row nr-1 the lateral wall
    (pinned to 0).  crp/crm are the (nr-2, 1) radial neighbor coefficients
    fr +/- alpha*dt/(2*dr*r_i); fr and fz are alpha*dt/dr^2 and alpha*dt/dz^2.
    dirichlet_caps pins the z-extreme planes to 0, otherwise they reflect
    (insulated).
    """
    u = u0.copy()
    nxt = np.empty_like(u)
    zc = np.empty_like(u)
    for _ in range(n_steps):
        zc[:, 1:-1] = fz * (u[:, 2:] - 2.0 * u[:, 1:-1] + u[:, :-2])
        if dirichlet_caps:
            zc[:, 0] = 0.0
            zc[:, -1] = 0.0
        else:
            zc[:, 0] = 2.0 * fz * (u[:, 1] - u[:, 0])
            zc[:, -1] = 2.0 * fz * (u[:, -2] - u[:, -1])
        nxt[1:-1, :] = (
            u[1:-1, :]
            + crp * u[2:, :]
            + crm * u[:-2, :]
            - 2.0 * fr * u[1:-1, :]
            + zc[1:-1, :]
        )
        # axis: radial Laplacian limit 4*(u1 - u0)/dr^2
        nxt[0, :] = u[0, :] + 4.0 * fr * (u[1, :] - u[0, :]) + zc[0, :]
        nxt[-1, :] = 0.0
        if dirichlet_caps:
            nxt[:, 0] = 0.0
            nxt[:, -1] = 0.0
        tmp = u
        u = nxt
        nxt = tmp
    return u
