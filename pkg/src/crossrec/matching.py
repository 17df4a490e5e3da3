"""Guided optimal user matching between two embedding sets.

Solves  min_{pi >= 0} <pi, Q>  s.t. unit row and column sums, where
Q = C * M is the squared-distance cost with declared overlapped pairs
masked to zero cost so the plan anchors on them. The smoothed dual in a
single potential per source user is driven to a fixed point by a Jacobi
sweep (all coordinates updated from the previous iterate), and the soft
plan is recovered as a column softmax of the final potential.
"""

from dataclasses import dataclass, field
from itertools import islice, permutations

import numpy as np

from .errors import ConvergenceError, DataError, InvalidParameterError

DEFAULT_EPSILON = 0.01
DEFAULT_WAFI_TOL = 1e-10
DEFAULT_WAFI_MAX_ITERS = 5000
ORACLE_SIZE_LIMIT = 10


@dataclass
class DualPotential:
    """Dual potential of the matching problem, pinned so the last entry is 0."""

    omega_hat: np.ndarray
    epsilon: float
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))
    objectives: np.ndarray = field(default_factory=lambda: np.empty(0))
    iterations: int = 0
    converged: bool = True


@dataclass
class MatchingPlan:
    """Soft user-user matching; every column sums to exactly 1."""

    pi: np.ndarray


def build_cost(U_s, U_t):
    """Squared euclidean distances between source and target embedding rows."""
    U_s = np.asarray(U_s, dtype=np.float64)
    U_t = np.asarray(U_t, dtype=np.float64)
    if U_s.shape != U_t.shape:
        raise DataError(f"embedding blocks differ in shape: {U_s.shape} vs {U_t.shape}")
    diff = U_s[:, None, :] - U_t[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def apply_mask(C, pairs):
    """Zero the cost at each declared overlapped (source, target) index pair.

    Pairs must not repeat a source row or a target column.
    """
    Q = np.asarray(C, dtype=np.float64).copy()
    rows_seen, cols_seen = set(), set()
    for i, j in pairs:
        if i in rows_seen or j in cols_seen:
            raise DataError(f"duplicate masked pair for row {i} or column {j}")
        rows_seen.add(i)
        cols_seen.add(j)
        Q[i, j] = 0.0
    return Q


def _column_log_normalizers(w_over_eps, negQ_over_eps):
    T = w_over_eps[:, None] + negQ_over_eps
    m = T.max(axis=0)
    return m + np.log(np.exp(T - m).sum(axis=0))


def smoothed_dual_objective(Q, omega_hat, epsilon):
    """Value of the smoothed dual being minimised by the fixed-point sweep."""
    L = _column_log_normalizers(omega_hat / epsilon, -np.asarray(Q) / epsilon)
    return epsilon * L.sum() - omega_hat.sum()


def wafi_solve(Q, epsilon=DEFAULT_EPSILON, max_iters=DEFAULT_WAFI_MAX_ITERS,
               tol=DEFAULT_WAFI_TOL, recenter=True, raise_on_budget=True):
    """Drive the smoothed dual potential to its fixed point.

    Starts from zero and repeats, Jacobi style (every term reads the
    previous iterate),

        omega_i <- -eps * log(sum_j exp(-Q_ij/eps) / sum_k exp((omega_k - Q_kj)/eps))

    with the last coordinate held at zero, until the sup-norm change drops
    below tol. The potential is only defined up to an additive constant;
    with recenter=True (default) each sweep updates every coordinate and
    subtracts the last one, which keeps the pin exact while letting the
    shared-offset mode settle in one step instead of leaking through the
    pinned coordinate. recenter=False reproduces the plain pinned sweep.

    All exponentials are evaluated in max-shifted form. Raises
    ConvergenceError when the iteration budget is exhausted unless
    raise_on_budget=False, in which case the best-effort potential is
    returned with converged=False.
    """
    Q = np.asarray(Q, dtype=np.float64)
    if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
        raise DataError(f"cost matrix must be square, got {Q.shape}")
    if not np.all(np.isfinite(Q)):
        raise DataError("cost matrix contains non-finite entries")
    if epsilon <= 0:
        raise InvalidParameterError(f"epsilon must be > 0, got {epsilon}")

    N = Q.shape[0]
    w = np.zeros(N)
    negQ = -Q / epsilon
    residuals = np.empty(max_iters)
    objectives = np.empty(max_iters)
    it = 0
    converged = False
    while it < max_iters:
        L = _column_log_normalizers(w / epsilon, negQ)
        objectives[it] = epsilon * L.sum() - w.sum()
        R = negQ - L[None, :]
        m = R.max(axis=1)
        new = -epsilon * (m + np.log(np.exp(R - m[:, None]).sum(axis=1)))
        if recenter:
            new -= new[N - 1]
        else:
            new[N - 1] = 0.0
        res = np.abs(new - w).max()
        residuals[it] = res
        w = new
        it += 1
        if res < tol:
            converged = True
            break
    if not converged and raise_on_budget:
        raise ConvergenceError(
            f"dual iteration exhausted {max_iters} iterations (last residual {residuals[it - 1]:.3e})",
            residual=float(residuals[it - 1]),
        )
    return DualPotential(omega_hat=w, epsilon=epsilon, residuals=residuals[:it].copy(),
                         objectives=objectives[:it].copy(), iterations=it, converged=converged)


def wafi_solve_many(Qs, epsilon=DEFAULT_EPSILON, max_iters=DEFAULT_WAFI_MAX_ITERS,
                    tol=DEFAULT_WAFI_TOL, recenter=True, raise_on_budget=True):
    """Solve a stack of independent equally-sized problems in lockstep.

    Performs exactly the per-instance sweep of wafi_solve on a (B, N, N)
    stack; converged instances are frozen. Returns a list of DualPotential.
    """
    Qs = np.asarray(Qs, dtype=np.float64)
    B, N, N2 = Qs.shape
    if N != N2:
        raise DataError(f"cost matrices must be square, got {Qs.shape}")
    if not np.all(np.isfinite(Qs)):
        raise DataError("cost matrix contains non-finite entries")
    W = np.zeros((B, N))
    negQ = -Qs / epsilon
    residuals = np.full((B, max_iters), np.nan)
    objectives = np.full((B, max_iters), np.nan)
    iters = np.zeros(B, dtype=int)
    active = np.ones(B, dtype=bool)
    for it in range(max_iters):
        T = W[:, :, None] / epsilon + negQ
        m0 = T.max(axis=1)
        L = m0 + np.log(np.exp(T - m0[:, None, :]).sum(axis=1))
        objectives[active, it] = (epsilon * L.sum(axis=1) - W.sum(axis=1))[active]
        R = negQ - L[:, None, :]
        m1 = R.max(axis=2)
        new = -epsilon * (m1 + np.log(np.exp(R - m1[:, :, None]).sum(axis=2)))
        if recenter:
            new -= new[:, N - 1][:, None]
        else:
            new[:, N - 1] = 0.0
        res = np.abs(new - W).max(axis=1)
        residuals[active, it] = res[active]
        W[active] = new[active]
        iters[active] = it + 1
        active &= res >= tol
        if not active.any():
            break
    if active.any() and raise_on_budget:
        b = int(np.flatnonzero(active)[0])
        raise ConvergenceError(
            f"instance {b} exhausted {max_iters} iterations",
            residual=float(residuals[b, iters[b] - 1]),
        )
    return [
        DualPotential(
            omega_hat=W[b].copy(), epsilon=epsilon,
            residuals=residuals[b, : iters[b]].copy(),
            objectives=objectives[b, : iters[b]].copy(),
            iterations=int(iters[b]), converged=not active[b],
        )
        for b in range(B)
    ]


def recover_plan(Q, potential):
    """Column-softmax plan pi_ij = exp((omega_i - Q_ij)/eps) / column normaliser."""
    Q = np.asarray(Q, dtype=np.float64)
    w = potential.omega_hat
    if not np.all(np.isfinite(w)):
        raise DataError("dual potential contains non-finite entries")
    eps = potential.epsilon
    T = (w[:, None] - Q) / eps
    m = T.max(axis=0)
    logpi = T - (m + np.log(np.exp(T - m).sum(axis=0)))[None, :]
    return MatchingPlan(pi=np.exp(logpi))


def exact_assignment(Q, size_limit=ORACLE_SIZE_LIMIT):
    """Minimum-cost perfect matching by exhaustive permutation scan.

    Intended as a test oracle for small instances; refuses N beyond
    size_limit. Returns (perm, cost) where perm[i] is the column assigned
    to row i; ties resolve to the lexicographically first permutation.
    """
    Q = np.asarray(Q, dtype=np.float64)
    N = Q.shape[0]
    if N > size_limit:
        raise InvalidParameterError(f"exact assignment limited to N <= {size_limit}, got {N}")
    best_cost = np.inf
    best_perm = None
    rows = np.arange(N)
    gen = permutations(range(N))
    while True:
        chunk = np.array(list(islice(gen, 100_000)), dtype=np.intp)
        if chunk.size == 0:
            break
        costs = Q[rows[None, :], chunk].sum(axis=1)
        k = int(np.argmin(costs))
        if costs[k] < best_cost:
            best_cost = float(costs[k])
            best_perm = chunk[k].copy()
    return best_perm, best_cost


def match_users(U_s, U_t, overlap_pairs=(), epsilon=DEFAULT_EPSILON,
                max_iters=DEFAULT_WAFI_MAX_ITERS, tol=DEFAULT_WAFI_TOL,
                recenter=True, raise_on_budget=True):
    """Full pipeline: cost, mask, dual solve, plan recovery.

    overlap_pairs are (source_index, target_index) pairs within the batch;
    their costs are zeroed before solving.
    """
    C = build_cost(U_s, U_t)
    Q = apply_mask(C, overlap_pairs)
    pot = wafi_solve(Q, epsilon=epsilon, max_iters=max_iters, tol=tol,
                     recenter=recenter, raise_on_budget=raise_on_budget)
    return recover_plan(Q, pot)


def save_plan_tsv(path, plan, epsilon, threshold=1e-9):
    pi = plan.pi
    n = pi.shape[0]
    rows, cols = np.nonzero(pi > threshold)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={n} eps={epsilon!r}\n")
        for r, c in zip(rows, cols):
            fh.write(f"{r}\t{c}\t{float(pi[r, c])!r}\n")


def load_plan_tsv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# n="):
            raise DataError(f"{path}: missing '# n=' header")
        parts = dict(p.split("=") for p in header[2:].split())
        n = int(parts["n"])
        pi = np.zeros((n, n))
        for line in fh:
            line = line.strip()
            if not line:
                continue
            r, c, w = line.split("\t")
            pi[int(r), int(c)] = float(w)
    return MatchingPlan(pi=pi), float(parts["eps"])
