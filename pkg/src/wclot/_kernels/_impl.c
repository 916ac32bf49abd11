#include "_impl.h"

#include <math.h>

/* Arguments this far below zero produce terms < 1e-304, invisible next to
 * sums that are always >= 1; clamping keeps every lane of the vectorised
 * exp on its fast path (deep underflow otherwise falls back to scalar
 * special-case handling and costs ~15x). */
#define EXP_FLOOR (-700.0)

static inline double clamped_exp(double t) {
    return exp(t < EXP_FLOOR ? EXP_FLOOR : t);
}

static double marginal_violation(const double *restrict cost, long m, long n,
                                 double inv_eps,
                                 const double *restrict f,
                                 const double *restrict g,
                                 double *restrict rowsum,
                                 double *restrict colsum) {
    double inv_m = 1.0 / (double)m, inv_n = 1.0 / (double)n;
    double viol = 0.0;
    for (long j = 0; j < n; j++)
        colsum[j] = 0.0;
    for (long i = 0; i < m; i++) {
        const double *restrict row = cost + i * n;
        double fi = f[i];
        double rs = 0.0;
        for (long j = 0; j < n; j++) {
            double p = clamped_exp((fi + g[j] - row[j]) * inv_eps);
            rs += p;
            colsum[j] += p;
        }
        rowsum[i] = rs;
    }
    for (long i = 0; i < m; i++) {
        double dev = fabs(rowsum[i] - inv_m);
        if (dev > viol)
            viol = dev;
    }
    for (long j = 0; j < n; j++) {
        double dev = fabs(colsum[j] - inv_n);
        if (dev > viol)
            viol = dev;
    }
    return viol;
}

static void row_update(const double *restrict cost, long m, long n,
                       const double *restrict g, double *restrict f,
                       double eps, double inv_eps, double la) {
    for (long i = 0; i < m; i++) {
        const double *restrict row = cost + i * n;
        double mx = g[0] - row[0];
        for (long j = 1; j < n; j++) {
            double t = g[j] - row[j];
            if (t > mx)
                mx = t;
        }
        double s = 0.0;
        for (long j = 0; j < n; j++)
            s += clamped_exp((g[j] - row[j] - mx) * inv_eps);
        f[i] = eps * la - mx - eps * log(s);
    }
}

static void col_update(const double *restrict cost, long m, long n,
                       const double *restrict f, double *restrict g,
                       double *restrict colmax, double *restrict colsum,
                       double eps, double inv_eps, double lb) {
    for (long j = 0; j < n; j++) {
        colmax[j] = f[0] - cost[j];
        colsum[j] = 0.0;
    }
    for (long i = 1; i < m; i++) {
        const double *restrict row = cost + i * n;
        double fi = f[i];
        for (long j = 0; j < n; j++) {
            double t = fi - row[j];
            if (t > colmax[j])
                colmax[j] = t;
        }
    }
    for (long i = 0; i < m; i++) {
        const double *restrict row = cost + i * n;
        double fi = f[i];
        for (long j = 0; j < n; j++)
            colsum[j] += clamped_exp((fi - row[j] - colmax[j]) * inv_eps);
    }
    for (long j = 0; j < n; j++)
        g[j] = eps * lb - colmax[j] - eps * log(colsum[j]);
}

int wclot_log_forward(const double *cost, long m, long n,
                      double eps, int max_iters, double tol,
                      double *f, double *g,
                      double *f_hist, double *g_hist, int record,
                      double *colmax, double *colsum, double *rowsum,
                      double *viol_out) {
    double la = -log((double)m), lb = -log((double)n);
    double inv_eps = 1.0 / eps;
    double viol = -1.0;
    int iters_run = 0;

    for (int k = 0; k < max_iters; k++) {
        row_update(cost, m, n, g, f, eps, inv_eps, la);
        col_update(cost, m, n, f, g, colmax, colsum, eps, inv_eps, lb);
        if (record) {
            double *fh = f_hist + (long)k * m;
            double *gh = g_hist + ((long)k + 1) * n;
            for (long i = 0; i < m; i++)
                fh[i] = f[i];
            for (long j = 0; j < n; j++)
                gh[j] = g[j];
        }
        iters_run = k + 1;
        if (tol > 0.0) {
            viol = marginal_violation(cost, m, n, inv_eps, f, g, rowsum, colsum);
            if (viol < tol)
                break;
        }
    }
    if (viol < 0.0)
        viol = marginal_violation(cost, m, n, inv_eps, f, g, rowsum, colsum);
    *viol_out = viol;
    return iters_run;
}

void wclot_log_backward(const double *cost, long m, long n, double eps,
                        const double *f_hist, const double *g_hist,
                        int iters_run,
                        double *df, double *dg, double *dg_new,
                        double *d_cost) {
    double inv_eps = 1.0 / eps;
    double m_d = (double)m, n_d = (double)n;

    for (int k = iters_run; k > 0; k--) {
        const double *fk = f_hist + ((long)k - 1) * m;
        const double *gk = g_hist + (long)k * n;
        const double *gkm1 = g_hist + ((long)k - 1) * n;
        /* Undo the column update g_k = colupdate(f_k, C): consumes dg,
         * feeds df and d_cost. n*exp(.) is the column-softmax of the
         * half-updated plan. */
        for (long i = 0; i < m; i++) {
            double *restrict drow = d_cost + i * n;
            const double *restrict row = cost + i * n;
            double fi = fk[i];
            double acc = 0.0;
            for (long j = 0; j < n; j++) {
                double r = n_d * clamped_exp((fi + gk[j] - row[j]) * inv_eps) * dg[j];
                drow[j] += r;
                acc += r;
            }
            df[i] -= acc;
        }
        /* Undo the row update f_k = rowupdate(g_{k-1}, C): consumes df,
         * emits the gradient for g_{k-1}. */
        for (long j = 0; j < n; j++)
            dg_new[j] = 0.0;
        for (long i = 0; i < m; i++) {
            double *restrict drow = d_cost + i * n;
            const double *restrict row = cost + i * n;
            double fi = fk[i];
            double di = df[i];
            for (long j = 0; j < n; j++) {
                double s = m_d * clamped_exp((fi + gkm1[j] - row[j]) * inv_eps) * di;
                drow[j] += s;
                dg_new[j] -= s;
            }
        }
        for (long j = 0; j < n; j++)
            dg[j] = dg_new[j];
        for (long i = 0; i < m; i++)
            df[i] = 0.0;
    }
}
