"""Pure-numpy backend for the log-domain scaling iteration.

Used when the compiled extension is unavailable or disabled via
``WCLOT_PURE_PYTHON=1``. Contracts match ``wclot._kernels._ext`` exactly;
only summation order may differ at roundoff level.
"""

import numpy as np

BACKEND = "numpy"

# Terms below exp(-700) < 1e-304 are invisible next to sums that are always
# >= 1; the clamp keeps np.exp off its slow deep-underflow path.
_EXP_FLOOR = -700.0


def _marginal_violation(cost, inv_eps, f, g):
    p = f[:, None] + g[None, :] - cost
    p *= inv_eps
    np.maximum(p, _EXP_FLOOR, out=p)
    np.exp(p, out=p)
    m, n = cost.shape
    viol_r = np.abs(p.sum(axis=1) - 1.0 / m).max()
    viol_c = np.abs(p.sum(axis=0) - 1.0 / n).max()
    return max(viol_r, viol_c)


def log_forward(cost, eps, max_iters, tol, record):
    """Run the log-domain scaling iteration on a squared-distance matrix.

    Returns ``(f, g, iters_run, violation, f_hist, g_hist)``. The histories
    are None unless ``record``; ``f_hist[k]`` is the row potential after
    iteration k+1 and ``g_hist[0]`` the zero initialiser. Stops early when
    ``tol > 0`` and the max marginal violation of the implied plan drops
    below it.
    """
    m, n = cost.shape
    la = -np.log(m)
    lb = -np.log(n)
    inv_eps = 1.0 / eps
    f = np.zeros(m)
    g = np.zeros(n)
    f_hist = np.empty((max_iters, m)) if record else None
    g_hist = np.zeros((max_iters + 1, n)) if record else None
    scratch = np.empty_like(cost)
    viol = -1.0
    iters_run = 0

    for k in range(max_iters):
        # f_i = eps*log(1/m) - eps*lse_j((g_j - C_ij)/eps)
        np.subtract(g[None, :], cost, out=scratch)
        mx = scratch.max(axis=1)
        scratch -= mx[:, None]
        scratch *= inv_eps
        np.maximum(scratch, _EXP_FLOOR, out=scratch)
        np.exp(scratch, out=scratch)
        f = eps * la - mx - eps * np.log(scratch.sum(axis=1))
        # g_j = eps*log(1/n) - eps*lse_i((f_i - C_ij)/eps)
        np.subtract(f[:, None], cost, out=scratch)
        mx = scratch.max(axis=0)
        scratch -= mx[None, :]
        scratch *= inv_eps
        np.maximum(scratch, _EXP_FLOOR, out=scratch)
        np.exp(scratch, out=scratch)
        g = eps * lb - mx - eps * np.log(scratch.sum(axis=0))
        if record:
            f_hist[k] = f
            g_hist[k + 1] = g
        iters_run = k + 1
        if tol > 0.0:
            viol = _marginal_violation(cost, inv_eps, f, g)
            if viol < tol:
                break
    if viol < 0.0:
        viol = _marginal_violation(cost, inv_eps, f, g)
    return f, g, iters_run, viol, f_hist, g_hist


def log_backward(cost, eps, f_hist, g_hist, iters_run, df_seed, dg_seed, d_cost):
    """Reverse accumulation through ``iters_run`` recorded iterations.

    Adds the cost-matrix gradient into ``d_cost`` in place; the seeds are
    the loss gradients with respect to the final potentials.
    """
    m, n = cost.shape
    inv_eps = 1.0 / eps
    df = np.array(df_seed, dtype=np.float64)
    dg = np.array(dg_seed, dtype=np.float64)

    def softmax_matrix(f, g, scale):
        p = f[:, None] + g[None, :] - cost
        p *= inv_eps
        np.maximum(p, _EXP_FLOOR, out=p)
        np.exp(p, out=p)
        p *= scale
        return p

    for k in range(iters_run, 0, -1):
        fk = f_hist[k - 1]
        # Undo the column update g_k = colupdate(f_k, C).
        r = softmax_matrix(fk, g_hist[k], float(n))
        r *= dg[None, :]
        d_cost += r
        df -= r.sum(axis=1)
        # Undo the row update f_k = rowupdate(g_{k-1}, C).
        s = softmax_matrix(fk, g_hist[k - 1], float(m))
        s *= df[:, None]
        d_cost += s
        dg = -s.sum(axis=0)
        df = np.zeros(m)
