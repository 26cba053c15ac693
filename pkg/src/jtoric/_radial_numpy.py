"""Pure-numpy fallback for the radial time stepper.

Same contract as the compiled extension: explicit midpoint steps with a
parabolic dt, Dirichlet ends, in-place update, (t, steps, status) result.
Noticeably slower; used when the extension failed to build and for the
benchmark comparison.
"""
import numpy as np


def _rhs(f, B, h, a, nm1, out):
    out[0] = 0.0
    out[-1] = 0.0
    lap = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / (h * h) \
        + nm1 * (f[2:] - f[:-2]) / (2.0 * h * B[1:-1]) \
        - nm1 * f[1:-1] / B[1:-1] ** 2
    out[1:-1] = (f[1:-1] - 1.0) * (a - f[1:-1]) / (a - 1.0) * lap
    return out


def advance(f, B, h, a, n, cfl, t_start, t_end, max_steps):
    f = np.asarray(f)
    B = np.asarray(B)
    nm1 = n - 1.0
    k1 = np.empty_like(f)
    k2 = np.empty_like(f)
    t = t_start
    steps = 0
    while t < t_end:
        mob = (f - 1.0) * (a - f) / (a - 1.0)
        mobmax = max(mob.max(), 1e-300)
        dt = min(cfl * h * h / mobmax, t_end - t)
        _rhs(f, B, h, a, nm1, k1)
        mid = f + 0.5 * dt * k1
        _rhs(mid, B, h, a, nm1, k2)
        f[1:-1] += dt * k2[1:-1]
        t += dt
        steps += 1
        if np.min(np.diff(f)) < -1e-12:
            return t, steps, 1
        if steps >= max_steps:
            return t, steps, 2
    return t, steps, 0
