"""Adaptive Dormand-Prince 5(4) for linear systems under sampled forcing.

``y' = A y + b u(t)`` where ``u`` is the linear interpolant of samples on a
uniform grid. Steps never cross a sample instant, so the forcing is smooth
inside every step; the solution is reported at each sample.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .errors import StiffnessError

# Dormand-Prince tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = np.array([
    [0, 0, 0, 0, 0, 0],
    [1 / 5, 0, 0, 0, 0, 0],
    [3 / 40, 9 / 40, 0, 0, 0, 0],
    [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
], dtype=np.float64)
_B5 = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B4 = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@njit(cache=True, nogil=True)
def _rhs(A, b, y, u, out):
    n = y.size
    for i in range(n):
        acc = b[i] * u
        for j in range(n):
            acc += A[i, j] * y[j]
        out[i] = acc


@njit(cache=True, nogil=True)
def _dopri_run(A, b, y0, u, dt, rtol, atol, h0, rec, out, yend, ctab, atab, b5, err_w):
    """Integrate over all sample intervals.

    Returns ``(status, n_steps, n_rejected, t_fail)``; ``out[s]`` receives
    the components ``rec`` of the state at sample ``s`` and ``yend`` the
    final state. status 0 = ok, 1 = step size collapse.
    """
    n = y0.size
    n_samples = u.size
    k = np.zeros((7, n))
    y = y0.copy()
    ytmp = np.zeros(n)
    ynew = np.zeros(n)
    for r in range(rec.size):
        out[0, r] = y[rec[r]]
    h_want = h0
    err_old = 1e-4
    steps = 0
    rejected = 0
    have_fsal = False
    for s in range(n_samples - 1):
        u0 = u[s]
        slope = (u[s + 1] - u[s]) / dt
        tau = 0.0
        while tau < dt * (1.0 - 1e-12):
            h = min(h_want, dt - tau)
            if h_want < 1e-13 * dt:
                return 1, steps, rejected, s * dt + tau
            if not have_fsal:
                _rhs(A, b, y, u0 + slope * tau, k[0])
                have_fsal = True
            for st in range(1, 7):
                for i in range(n):
                    acc = y[i]
                    for j in range(st):
                        acc += h * atab[st, j] * k[j, i]
                    ytmp[i] = acc
                _rhs(A, b, ytmp, u0 + slope * (tau + ctab[st] * h), k[st])
            err = 0.0
            for i in range(n):
                acc = y[i]
                e = 0.0
                for j in range(7):
                    acc += h * b5[j] * k[j, i]
                    e += h * err_w[j] * k[j, i]
                ynew[i] = acc
                sc = atol + rtol * max(abs(y[i]), abs(acc))
                err += (e / sc) ** 2
            err = np.sqrt(err / n)
            if err <= 1.0:
                tau += h
                for i in range(n):
                    y[i] = ynew[i]
                    k[0, i] = k[6, i]
                have_fsal = True
                steps += 1
                # PI control (Hairer's DOPRI5 constants) damps step oscillation near the stability limit
                e = max(err, 1e-10)
                fac = min(5.0, max(0.2, 0.9 * e ** -0.17 * err_old ** 0.04))
                err_old = max(e, 1e-4)
                if h < h_want:
                    h_want = max(h_want, h * fac)
                else:
                    h_want = h * fac
            else:
                rejected += 1
                h_want = h * max(0.2, 0.9 * err ** -0.17)
        for r in range(rec.size):
            out[s + 1, r] = y[rec[r]]
    for i in range(n):
        yend[i] = y[i]
    return 0, steps, rejected, 0.0


def integrate_sampled(A: np.ndarray, b: np.ndarray, u: np.ndarray, dt: float,
                      y0=None, rtol: float = 1e-6, atol: float = 1e-9, record=None):
    """Trajectory of the ``record`` components (default all) at every sample.

    Returns ``(trajectory, final_state, stats)``; raises
    :class:`StiffnessError` if the step size collapses.
    """
    A = np.ascontiguousarray(A, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    n = A.shape[0]
    y0 = np.zeros(n) if y0 is None else np.asarray(y0, dtype=np.float64).copy()
    rec = np.arange(n) if record is None else np.atleast_1d(np.asarray(record, dtype=np.int64))
    out = np.empty((u.size, rec.size))
    yend = y0.copy()
    if u.size == 0:
        return out, yend, {"steps": 0, "rejected": 0}
    status, steps, rejected, t_fail = _dopri_run(A, b, y0, u, float(dt), rtol, atol, float(dt),
                                                 rec, out, yend, _C, _A, _B5, _E)
    if status != 0:
        raise StiffnessError(t_fail)
    return out, yend, {"steps": int(steps), "rejected": int(rejected)}
