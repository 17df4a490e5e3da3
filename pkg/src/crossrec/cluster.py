"""Balanced soft clustering of items into hyperedges.

Minimises  -<A @ gamma, gamma> + (eta/2)*||gamma||^2  over assignment
matrices gamma (N x K) with unit row sums and column sums N/K. The outer
loop linearises the quadratic term around the current gamma; the inner loop
solves the resulting projection exactly through its Lagrange multipliers,
each of which has a closed form via sorted prefix sums.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ConvergenceError, DataError, InvalidParameterError

DEFAULT_NUM_CLUSTERS = 15
DEFAULT_ETA = 0.1
DEFAULT_OUTER_ITERS = 50
DEFAULT_INNER_ITERS = 200
DEFAULT_CLUSTER_TOL = 1e-8
DEFAULT_TIE_BREAK = 1e-8
MARGINAL_TOL = 1e-6


@dataclass
class ClusterAssignment:
    """Row-stochastic, column-balanced soft item-to-cluster matrix."""

    gamma: np.ndarray
    num_clusters: int

    @property
    def num_items(self):
        return self.gamma.shape[0]

    def validate(self, tol=MARGINAL_TOL):
        g = self.gamma
        if g.ndim != 2 or g.shape[1] != self.num_clusters:
            raise ContractError(f"gamma shape {g.shape} does not match K={self.num_clusters}")
        if np.any(g < 0):
            raise ContractError("gamma has negative entries")
        n, k = g.shape
        row_res = np.abs(g.sum(axis=1) - 1.0).max()
        col_res = np.abs(g.sum(axis=0) - n / k).max()
        if max(row_res, col_res) > tol:
            raise ContractError(
                f"gamma marginals violated: row residual {row_res:.3e}, column residual {col_res:.3e}"
            )
        return self


def solve_hinge_multipliers(thresholds, mass):
    """Per row of `thresholds` (R x C), the unique m with sum_c [m - t_c]+ = mass.

    The solution is found from the ascending-sorted thresholds: with the
    first kappa terms active, m = (mass + prefix_sum_kappa) / kappa, valid
    when it falls in [t_(kappa), t_(kappa+1)). Exactly one kappa is valid
    because the hinge sum is continuous and nondecreasing in m.
    """
    t = np.asarray(thresholds, dtype=np.float64)
    R, C = t.shape
    g = np.sort(t, axis=1)
    prefix = np.cumsum(g, axis=1)
    cand = (mass + prefix) / np.arange(1, C + 1)
    ge = cand >= g
    lt = np.ones_like(ge)
    lt[:, :-1] = cand[:, :-1] < g[:, 1:]
    first = np.argmax(ge & lt, axis=1)
    return cand[np.arange(R), first]


def update_f(Y, g, eta):
    """Row multipliers: f_i solves sum_j [f_i - (Y_ij - g_j)]+ = eta."""
    return solve_hinge_multipliers(Y - g[None, :], eta)


def update_g(Y, f, eta, N, K):
    """Column multipliers: g_j solves sum_i [g_j - (Y_ij - f_i)]+ = eta*N/K."""
    return solve_hinge_multipliers((Y - f[:, None]).T, eta * N / K)


def assemble_gamma(Y, f, g, eta):
    """Entrywise gamma_ij = [(f_i + g_j - Y_ij)/eta]+ (marginals unchecked)."""
    return np.maximum((f[:, None] + g[None, :] - Y) / eta, 0.0)


def sishe_objective(A, gamma, eta):
    A = np.asarray(A, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    if A.shape[0] != A.shape[1] or A.shape[0] != gamma.shape[0]:
        raise DataError(f"incompatible shapes A={A.shape}, gamma={gamma.shape}")
    return -np.sum((A @ gamma) * gamma) + 0.5 * eta * np.sum(gamma**2)


def spectral_tie_break_pattern(A, K):
    """Deterministic per-column asymmetry from the leading nontrivial eigenvectors.

    The alternation preserves any column symmetry of its input exactly, and
    the uniform start is column-symmetric, so an infinitesimal asymmetric
    term is required for the iteration to move at all. Seeding it with the
    graph's own eigenvectors points the escape toward the dominant cluster
    structure instead of an arbitrary direction.
    """
    S = (A + A.T) / 2.0
    vals, vecs = np.linalg.eigh(S)
    order = np.argsort(vals)[::-1]
    vecs = vecs[:, order]
    N = A.shape[0]
    T = np.zeros((N, K))
    for c in range(min(K - 1, N - 1)):
        u = vecs[:, c + 1]
        lead = np.argmax(np.abs(u))
        if u[lead] < 0:
            u = -u  # fix the eigenvector sign for determinism
        T[:, c] = u
    return T


def sishe_cluster(A, K=DEFAULT_NUM_CLUSTERS, eta=DEFAULT_ETA,
                  outer_iters=DEFAULT_OUTER_ITERS, inner_iters=DEFAULT_INNER_ITERS,
                  tol=DEFAULT_CLUSTER_TOL, tie_break=DEFAULT_TIE_BREAK):
    """Cluster items into K balanced soft groups from a similarity graph.

    Starts from the uniform assignment gamma = 1/K. Each outer iteration
    freezes the linearised coefficient Y = -A @ gamma (plus the spectral
    tie-break term scaled by `tie_break`; pass 0 to disable) and the inner
    loop alternates the row/column multiplier updates until the assembled
    gamma meets both marginal constraints within tol. Multipliers warm-start
    across outer iterations. Raises ConvergenceError if the final gamma
    misses the marginals.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DataError(f"similarity graph must be square, got {A.shape}")
    N = A.shape[0]
    if K < 2:
        raise InvalidParameterError(f"K must be >= 2, got {K}")
    if K > N:
        raise InvalidParameterError(f"K must be <= number of items ({N}), got {K}")
    if eta <= 0:
        raise InvalidParameterError(f"eta must be > 0, got {eta}")

    gamma = np.full((N, K), 1.0 / K)
    f = np.zeros(N)
    g = np.zeros(K)
    col_target = N / K
    T = spectral_tie_break_pattern(A, K) if tie_break else None

    for _ in range(outer_iters):
        Y = -(A @ gamma)
        if T is not None:
            Y = Y + tie_break * max(1.0, np.abs(Y).max()) * T
        new_gamma = gamma
        for _ in range(inner_iters):
            f = update_f(Y, g, eta)
            g = update_g(Y, f, eta, N, K)
            new_gamma = assemble_gamma(Y, f, g, eta)
            row_res = np.abs(new_gamma.sum(axis=1) - 1.0).max()
            col_res = np.abs(new_gamma.sum(axis=0) - col_target).max()
            if max(row_res, col_res) < tol:
                break
        change = np.abs(new_gamma - gamma).max()
        gamma = new_gamma
        if change < tol:
            break

    row_res = np.abs(gamma.sum(axis=1) - 1.0).max()
    col_res = np.abs(gamma.sum(axis=0) - col_target).max()
    residual = max(row_res, col_res)
    if residual > MARGINAL_TOL:
        raise ConvergenceError(
            f"clustering failed to meet marginals within budget (residual {residual:.3e})",
            residual=residual,
        )
    return ClusterAssignment(gamma=gamma, num_clusters=K)


def save_gamma_tsv(path, assignment):
    g = assignment.gamma
    n, k = g.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={n} k={k}\n")
        for row in g:
            fh.write("\t".join(repr(float(x)) for x in row) + "\n")


def load_gamma_tsv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# n="):
            raise DataError(f"{path}: missing '# n=' header")
        parts = dict(p.split("=") for p in header[2:].split())
        n, k = int(parts["n"]), int(parts["k"])
        rows = [[float(x) for x in line.split("\t")] for line in fh if line.strip()]
    g = np.array(rows)
    if g.shape != (n, k):
        raise DataError(f"{path}: body shape {g.shape} does not match header ({n}, {k})")
    return ClusterAssignment(gamma=g, num_clusters=k)
