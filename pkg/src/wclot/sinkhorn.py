"""Entropy-regularized optimal transport between uniform point-cloud masses.

The coupling set is the transportation polytope whose rows sum to 1/m and
columns to 1/n. Both solver modes run the same alternating row/column
scaling; ``naive`` works on the kernel exp(-C/eps) directly and fails
loudly on underflow, ``log_domain`` works on dual potentials and is stable
for any eps > 0. The returned distance is always the sharp transport cost
<P, C> of the final plan, without the entropy term.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations, islice, permutations
from typing import NamedTuple

import numpy as np

from wclot import _kernels
from wclot.errors import CapacityError, InputDomainError, NumericalDegeneracyError
from wclot.geometry import PointCloud

# Marginal tolerance a converged plan is expected to satisfy (unit-scale
# inputs); plans that stop at max_iters report their achieved violation.
DEFAULT_MARGINAL_TOL = 1e-6

_PERMUTATION_CAP = 9
_RECT_MIN_CAP = 3
_RECT_MAX_CAP = 6


@dataclass(frozen=True)
class SinkhornConfig:
    """Solver settings: regularization, iteration cap, stopping tolerance."""

    epsilon: float = 1e-3
    max_iters: int = 100
    tol: float = 1e-9
    mode: str = "log_domain"

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise InputDomainError(f"epsilon must be positive, got {self.epsilon}")
        if self.max_iters < 1:
            raise InputDomainError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.tol < 0:
            raise InputDomainError(f"tol must be >= 0, got {self.tol}")
        if self.mode not in ("naive", "log_domain"):
            raise InputDomainError(f"mode must be 'naive' or 'log_domain', got {self.mode!r}")


@dataclass(frozen=True)
class CostMatrix:
    """Pairwise squared Euclidean distances between two clouds."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.size == 0:
            raise InputDomainError(f"cost matrix must be 2-D and non-empty, got {entries.shape}")
        if not np.isfinite(entries).all():
            raise InputDomainError("cost matrix contains non-finite entries")
        if entries.min() < 0:
            raise InputDomainError("cost matrix contains negative entries")
        object.__setattr__(self, "entries", entries)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class TransportPlan:
    """Nonnegative coupling whose rows sum to 1/m and columns to 1/n."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.ascontiguousarray(self.entries, dtype=np.float64)
        if entries.ndim != 2 or entries.size == 0:
            raise InputDomainError(f"plan must be 2-D and non-empty, got {entries.shape}")
        object.__setattr__(self, "entries", entries)

    @property
    def m(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    def marginal_violation(self) -> float:
        """Max deviation of row sums from 1/m and column sums from 1/n."""
        rows = np.abs(self.entries.sum(axis=1) - 1.0 / self.m).max()
        cols = np.abs(self.entries.sum(axis=0) - 1.0 / self.n).max()
        return float(max(rows, cols))

    def validate(self, tol: float = DEFAULT_MARGINAL_TOL) -> None:
        if self.entries.min() < 0:
            raise InputDomainError("plan has negative entries")
        viol = self.marginal_violation()
        if viol > tol:
            raise InputDomainError(f"plan marginal violation {viol:.3e} exceeds {tol:.3e}")


@dataclass
class SinkhornState:
    """Final scaling state: (u, v, kernel) in naive mode, (f, g) in log mode."""

    mode: str
    iters_run: int
    marginal_violation: float
    u: np.ndarray | None = None
    v: np.ndarray | None = None
    kernel: np.ndarray | None = None
    f: np.ndarray | None = None
    g: np.ndarray | None = None


class SinkhornSolution(NamedTuple):
    plan: TransportPlan
    distance: float
    state: SinkhornState


def cost_matrix(x: PointCloud | np.ndarray, y: PointCloud | np.ndarray) -> CostMatrix:
    """Squared-distance matrix C_ij = ||x_i - y_j||^2."""
    xp = x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=np.float64)
    yp = y.points if isinstance(y, PointCloud) else np.asarray(y, dtype=np.float64)
    if xp.size == 0 or yp.size == 0:
        raise InputDomainError("cost matrix requires non-empty clouds")
    diff = xp[:, None, :] - yp[None, :, :]
    entries = np.einsum("ijk,ijk->ij", diff, diff)
    # exact zeros matter for identity-of-indiscernibles checks
    np.maximum(entries, 0.0, out=entries)
    return CostMatrix(entries)


def solve(c: CostMatrix, cfg: SinkhornConfig) -> SinkhornSolution:
    """Run the scaling iteration in the mode selected by the config."""
    if cfg.mode == "naive":
        return _solve_naive(c, cfg)
    return solve_log(c, cfg)


def solve_log(c: CostMatrix, cfg: SinkhornConfig) -> SinkhornSolution:
    """Log-domain solve: mathematically identical to naive, underflow-proof."""
    f, g, iters_run, viol, _, _ = _kernels.log_forward(
        c.entries, cfg.epsilon, cfg.max_iters, cfg.tol, False)
    plan_entries = plan_from_potentials(c.entries, cfg.epsilon, f, g)
    distance = float(np.sum(plan_entries * c.entries))
    state = SinkhornState(mode="log_domain", iters_run=iters_run,
                          marginal_violation=float(viol), f=f, g=g)
    return SinkhornSolution(TransportPlan(plan_entries), distance, state)


def plan_from_potentials(cost: np.ndarray, eps: float, f: np.ndarray,
                         g: np.ndarray) -> np.ndarray:
    """P_ij = exp((f_i + g_j - C_ij)/eps)."""
    p = f[:, None] + g[None, :] - cost
    p /= eps
    underflow = p < -700.0
    np.maximum(p, -700.0, out=p)  # keep np.exp off its slow underflow path
    np.exp(p, out=p)
    p[underflow] = 0.0
    return p


def _solve_naive(c: CostMatrix, cfg: SinkhornConfig) -> SinkhornSolution:
    cost = c.entries
    m, n = cost.shape
    inv_m, inv_n = 1.0 / m, 1.0 / n
    kernel = np.exp(-cost / cfg.epsilon)
    if (kernel.max(axis=1) == 0).any() or (kernel.max(axis=0) == 0).any():
        raise NumericalDegeneracyError(
            "kernel exp(-C/eps) underflowed to an all-zero row or column; "
            "use log_domain mode")
    u = np.full(m, inv_m)
    v = np.ones(n)
    viol = np.inf
    iters_run = 0
    for k in range(cfg.max_iters):
        kv = kernel @ v
        if (kv == 0).any() or not np.isfinite(kv).all():
            raise NumericalDegeneracyError(
                "scaling degenerated in naive mode (zero or non-finite row "
                "normaliser); use log_domain mode")
        u = inv_m / kv
        ku = kernel.T @ u
        if (ku == 0).any() or not np.isfinite(ku).all():
            raise NumericalDegeneracyError(
                "scaling degenerated in naive mode (zero or non-finite column "
                "normaliser); use log_domain mode")
        v = inv_n / ku
        iters_run = k + 1
        if cfg.tol > 0:
            rows = np.abs(u * (kernel @ v) - inv_m).max()
            cols = np.abs(v * ku - inv_n).max()
            viol = max(rows, cols)
            if viol < cfg.tol:
                break
    plan_entries = u[:, None] * kernel * v[None, :]
    plan = TransportPlan(plan_entries)
    distance = float(np.sum(plan_entries * cost))
    state = SinkhornState(mode="naive", iters_run=iters_run,
                          marginal_violation=plan.marginal_violation(),
                          u=u, v=v, kernel=kernel)
    return SinkhornSolution(plan, distance, state)


def entropy(plan: TransportPlan) -> float:
    """H(P) = -sum_ij P_ij (log P_ij - 1), with 0 (log 0 - 1) = 0."""
    p = plan.entries
    if p.min() < 0:
        raise InputDomainError("entropy requires a nonnegative plan")
    pos = p > 0
    terms = np.zeros_like(p)
    terms[pos] = p[pos] * (np.log(p[pos]) - 1.0)
    return float(-terms.sum())


def exact_ot_oracle(c: CostMatrix) -> tuple[TransportPlan, float]:
    """Globally optimal coupling by exhaustive enumeration. Validation only.

    Square instances up to 9x9 enumerate permutations (an optimal vertex of
    the uniform-marginal polytope is a scaled permutation matrix);
    rectangular instances with min side <= 3 and max side <= 6 enumerate the
    basic feasible solutions given by spanning trees of the complete
    bipartite transport graph.
    """
    cost = c.entries
    m, n = cost.shape
    if m == n:
        if m > _PERMUTATION_CAP:
            raise CapacityError(
                f"exact oracle enumerates permutations only up to {_PERMUTATION_CAP} points, got {m}")
        return _oracle_square(cost)
    if min(m, n) > _RECT_MIN_CAP or max(m, n) > _RECT_MAX_CAP:
        raise CapacityError(
            f"exact rectangular oracle limited to min side <= {_RECT_MIN_CAP}, "
            f"max side <= {_RECT_MAX_CAP}, got {m}x{n}")
    return _oracle_rectangular(cost)


def _oracle_square(cost: np.ndarray) -> tuple[TransportPlan, float]:
    n = cost.shape[0]
    idx = np.arange(n)
    best_value = np.inf
    best_perm = idx
    perm_iter = permutations(range(n))
    while True:
        chunk = np.array(list(islice(perm_iter, 40320)), dtype=np.int64)
        if chunk.size == 0:
            break
        values = cost[idx, chunk].sum(axis=1)
        k = int(values.argmin())
        if values[k] < best_value:
            best_value = float(values[k])
            best_perm = chunk[k]
    plan = np.zeros((n, n))
    plan[idx, best_perm] = 1.0 / n
    return TransportPlan(plan), float(best_value / n)


def _oracle_rectangular(cost: np.ndarray) -> tuple[TransportPlan, float]:
    m, n = cost.shape
    # every edge flow counts positively toward both endpoints' requirements
    requirement = [1.0 / m] * m + [1.0 / n] * n
    edges = [(i, m + j) for i in range(m) for j in range(n)]
    best_value = np.inf
    best_flows = None
    for tree in combinations(range(len(edges)), m + n - 1):
        flows = _tree_flow(edges, tree, requirement, m + n)
        if flows is None or any(flow < -1e-12 for flow in flows.values()):
            continue
        value = sum(flow * cost[edges[e][0], edges[e][1] - m] for e, flow in flows.items())
        if value < best_value:
            best_value = value
            best_flows = flows
    plan = np.zeros((m, n))
    for e, flow in best_flows.items():
        plan[edges[e][0], edges[e][1] - m] = max(flow, 0.0)
    return TransportPlan(plan), float(best_value)


def _tree_flow(edges, tree, requirement, n_nodes):
    """Unique flow of a candidate spanning tree, or None if it has a cycle.

    Leaf peeling: a leaf's single remaining edge must carry its whole
    remaining requirement. Flows may come out negative; the caller discards
    those trees (they are not basic feasible solutions).
    """
    adjacency = {u: [] for u in range(n_nodes)}
    parent = list(range(n_nodes))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for e in tree:
        u, v = edges[e]
        ru, rv = find(u), find(v)
        if ru == rv:
            return None
        parent[ru] = rv
        adjacency[u].append((v, e))
        adjacency[v].append((u, e))

    remaining = list(requirement)
    degree = [len(adjacency[u]) for u in range(n_nodes)]
    flows: dict[int, float] = {}
    leaves = [u for u in range(n_nodes) if degree[u] == 1]
    while leaves:
        u = leaves.pop()
        if degree[u] != 1:
            continue
        v, e = next((v, e) for v, e in adjacency[u] if e not in flows)
        flows[e] = remaining[u]
        remaining[v] -= remaining[u]
        remaining[u] = 0.0
        degree[u] -= 1
        degree[v] -= 1
        if degree[v] == 1:
            leaves.append(v)
    return flows
