# cython: language_level=3
# cython: boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled time stepper for the radial profile equation.

Thin wrapper over the C core in _radial_core.c, which advances
f_t = (1/theta''(f)) (f_BB + (n-1) f_B / B - (n-1) f / B^2) with explicit
midpoint steps, a parabolic dt and Dirichlet ends.
"""


cdef extern from "_radial_core.h":
    int radial_core_advance(double* f, const double* B, Py_ssize_t m,
                            double h, double a, int n, double cfl,
                            double t_start, double t_end, long max_steps,
                            double* t_out, long* steps_out) nogil


def advance(double[::1] f, double[::1] B, double h, double a, int n,
            double cfl, double t_start, double t_end, long max_steps):
    """Advance f in place from t_start to t_end.

    Returns (t_reached, steps, status) with status 0 on success, 1 when
    monotonicity of the profile is lost, 2 when the step budget runs out.
    """
    cdef Py_ssize_t m = f.shape[0]
    cdef double t_out = t_start
    cdef long steps_out = 0
    cdef int status
    with nogil:
        status = radial_core_advance(&f[0], &B[0], m, h, a, n, cfl,
                                     t_start, t_end, max_steps,
                                     &t_out, &steps_out)
    if status == 3:
        raise MemoryError("radial kernel work buffers")
    return t_out, steps_out, status
