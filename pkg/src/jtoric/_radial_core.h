#ifndef JTORIC_RADIAL_CORE_H
#define JTORIC_RADIAL_CORE_H

#include <stddef.h>
#include <stdint.h>

int radial_core_advance(double *f, const double *B, ptrdiff_t m, double h,
                        double a, int n, double cfl, double t_start,
                        double t_end, long max_steps, double *t_out,
                        long *steps_out);

#endif
