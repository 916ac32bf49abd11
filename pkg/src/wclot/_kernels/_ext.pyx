# cython: boundscheck=False, wraparound=False, language_level=3
"""Compiled backend: thin wrapper over the C hot loops in _impl.c.

Same contracts as ``wclot._kernels._numpy``; selected at import by
``wclot._kernels``. The C core runs without the GIL.
"""

import numpy as np


cdef extern from "_impl.h" nogil:
    int wclot_log_forward(const double *cost, long m, long n,
                          double eps, int max_iters, double tol,
                          double *f, double *g,
                          double *f_hist, double *g_hist, int record,
                          double *colmax, double *colsum, double *rowsum,
                          double *viol_out)
    void wclot_log_backward(const double *cost, long m, long n, double eps,
                            const double *f_hist, const double *g_hist,
                            int iters_run,
                            double *df, double *dg, double *dg_new,
                            double *d_cost)

BACKEND = "ext"


def log_forward(const double[:, ::1] cost, double eps, int max_iters, double tol,
                bint record):
    """Log-domain scaling iteration; see _numpy.log_forward for the contract."""
    cdef long m = cost.shape[0], n = cost.shape[1]
    f_arr = np.zeros(m)
    g_arr = np.zeros(n)
    f_hist_arr = np.empty((max_iters, m)) if record else None
    g_hist_arr = np.zeros((max_iters + 1, n)) if record else None

    cdef double[::1] f = f_arr
    cdef double[::1] g = g_arr
    cdef double[::1] colmax = np.empty(n)
    cdef double[::1] colsum = np.empty(n)
    cdef double[::1] rowsum = np.empty(m)
    cdef double[:, ::1] f_hist = f_hist_arr if record else np.empty((1, 1))
    cdef double[:, ::1] g_hist = g_hist_arr if record else np.empty((1, 1))
    cdef double viol = 0.0
    cdef int iters_run

    with nogil:
        iters_run = wclot_log_forward(&cost[0, 0], m, n, eps, max_iters, tol,
                                      &f[0], &g[0],
                                      &f_hist[0, 0], &g_hist[0, 0], record,
                                      &colmax[0], &colsum[0], &rowsum[0], &viol)
    return f_arr, g_arr, iters_run, viol, f_hist_arr, g_hist_arr


def log_backward(const double[:, ::1] cost, double eps,
                 const double[:, ::1] f_hist, const double[:, ::1] g_hist,
                 int iters_run, df_seed, dg_seed, double[:, ::1] d_cost):
    """Reverse accumulation through the recorded iterations (in-place d_cost)."""
    cdef long m = cost.shape[0], n = cost.shape[1]
    df_arr = np.ascontiguousarray(df_seed, dtype=np.float64).copy()
    dg_arr = np.ascontiguousarray(dg_seed, dtype=np.float64).copy()
    cdef double[::1] df = df_arr
    cdef double[::1] dg = dg_arr
    cdef double[::1] dg_new = np.empty(n)

    with nogil:
        wclot_log_backward(&cost[0, 0], m, n, eps,
                           &f_hist[0, 0], &g_hist[0, 0], iters_run,
                           &df[0], &dg[0], &dg_new[0], &d_cost[0, 0])
