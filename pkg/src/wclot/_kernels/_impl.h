#ifndef WCLOT_KERNELS_IMPL_H
#define WCLOT_KERNELS_IMPL_H

/* Hot loops for the log-domain scaling iteration. All matrices are dense
 * row-major float64. Work arrays are caller-allocated so the wrapper owns
 * every allocation. */

/* Runs up to max_iters full (row + column) updates; when tol > 0, stops as
 * soon as the max marginal violation of the implied plan drops below tol.
 * f/g must be zero-initialised. When record != 0, f_hist (max_iters x m)
 * receives the row potential after each iteration and g_hist
 * ((max_iters+1) x n) the column potential, with g_hist row 0 left as the
 * zero initialiser. Returns the number of iterations run and stores the
 * final violation in *viol_out. */
int wclot_log_forward(const double *cost, long m, long n,
                      double eps, int max_iters, double tol,
                      double *f, double *g,
                      double *f_hist, double *g_hist, int record,
                      double *colmax, double *colsum, double *rowsum,
                      double *viol_out);

/* Reverse accumulation through iters_run recorded iterations. df/dg carry
 * the gradient seeds with respect to the final potentials and are consumed;
 * dg_new is an n-length scratch buffer. The cost-matrix gradient is added
 * into d_cost in place. */
void wclot_log_backward(const double *cost, long m, long n, double eps,
                        const double *f_hist, const double *g_hist,
                        int iters_run,
                        double *df, double *dg, double *dg_new,
                        double *d_cost);

#endif
