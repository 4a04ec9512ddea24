"""Compiled fixed-step RK4 integrator for the mean-field equations.

State: cavity amplitude a (sqrt photons) in the frame rotating at the cavity
frequency, mechanical amplitude b (displacement X = b + b* in units of x_zpf).
Drive: a_in(t) = sum_k amps[k] exp(-i dets[k] t) (sqrt photons per second).
"""

import numpy as np
from numba import njit

OK = 0
BOUND = 1
KAPPA_NEG = 2
NONFINITE = 3


@njit(cache=True)
def _drive(t, amps, dets):
    s = 0j
    for k in range(amps.size):
        s += amps[k] * np.exp(-1j * dets[k] * t)
    return s


@njit(cache=True)
def _rhs(a, b, ain, kin, kc, gd, gs, wm, gm):
    X = 2.0 * b.real
    kex = kc + gs * X
    if kex <= 0.0:
        return 0j, 0j, False
    s = np.sqrt(kex)
    da = -1j * gd * X * a - 0.5 * (kin + kex) * a + s * ain
    cross = ain * np.conj(a)
    db = (-(1j * wm + 0.5 * gm) * b - 1j * gd * (a.real * a.real + a.imag * a.imag)
          + (gs / (2.0 * s)) * (cross - np.conj(cross)))
    return da, db, True


@njit(cache=True, nogil=True)
def rk4(a0, b0, t0, dt, n_steps, start, stride, n_rec,
        kin, kc, gd, gs, wm, gm, amps, dets, bound):
    """Advance ``n_steps`` steps, recording every ``stride``-th state from
    step index ``start`` (index 0 is the initial state) into ``n_rec`` slots.

    Returns (a_final, b_final, a_rec, b_rec, status, step_of_failure).
    """
    a_rec = np.empty(n_rec, dtype=np.complex128)
    b_rec = np.empty(n_rec, dtype=np.complex128)
    a = a0
    b = b0
    j = 0
    b2 = bound * bound
    h2 = 0.5 * dt
    for i in range(n_steps + 1):
        if i >= start and (i - start) % stride == 0 and j < n_rec:
            a_rec[j] = a
            b_rec[j] = b
            j += 1
        if i == n_steps:
            break
        t = t0 + i * dt
        u0 = _drive(t, amps, dets)
        um = _drive(t + h2, amps, dets)
        u1 = _drive(t + dt, amps, dets)
        k1a, k1b, ok1 = _rhs(a, b, u0, kin, kc, gd, gs, wm, gm)
        k2a, k2b, ok2 = _rhs(a + h2 * k1a, b + h2 * k1b, um, kin, kc, gd, gs, wm, gm)
        k3a, k3b, ok3 = _rhs(a + h2 * k2a, b + h2 * k2b, um, kin, kc, gd, gs, wm, gm)
        k4a, k4b, ok4 = _rhs(a + dt * k3a, b + dt * k3b, u1, kin, kc, gd, gs, wm, gm)
        if not (ok1 and ok2 and ok3 and ok4):
            return a, b, a_rec, b_rec, KAPPA_NEG, i
        a = a + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a)
        b = b + dt / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        ma = a.real * a.real + a.imag * a.imag
        mb = b.real * b.real + b.imag * b.imag
        if not (np.isfinite(ma) and np.isfinite(mb)):
            return a, b, a_rec, b_rec, NONFINITE, i
        if ma > b2 or mb > b2:
            return a, b, a_rec, b_rec, BOUND, i
    return a, b, a_rec, b_rec, OK, n_steps
