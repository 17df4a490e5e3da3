"""Item-item similarity graphs from per-modality features.

Pipeline: dense exponential-cosine similarity per modality, top-z row
sparsification to a binary neighbour graph, then robust fusion of the
per-modality graphs into one consensus graph with entries in [0, 1].
"""

import numpy as np

from .errors import DataError, DegenerateFeatureError, InvalidParameterError

DEFAULT_TOP_Z = 5
DEFAULT_FUSE_MU = 0.1
DEFAULT_FUSE_TOL = 1e-8
DEFAULT_FUSE_MAX_ITERS = 500


def modal_similarity(features):
    """Dense pairwise similarity S_ij = exp(cosine(x_i, x_j)).

    Entries lie in [1/e, e]; the diagonal is exactly e. Raises
    DegenerateFeatureError naming the first item whose row has zero norm.
    """
    X = np.asarray(features, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    bad = np.flatnonzero(norms == 0.0)
    if bad.size:
        raise DegenerateFeatureError(int(bad[0]))
    Xn = X / norms[:, None]
    cos = np.clip(Xn @ Xn.T, -1.0, 1.0)
    np.fill_diagonal(cos, 1.0)
    return np.exp(cos)


def topz_sparsify(S, z):
    """Binary graph keeping, per row, the z largest off-diagonal entries.

    Ties break toward the lower column index (stable selection). The result
    is generally asymmetric because selection is row-wise.
    """
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    if z < 1:
        raise InvalidParameterError(f"z must be >= 1, got {z}")
    if z >= n:
        raise InvalidParameterError(f"z must be < number of items ({n}), got {z}")
    work = S.copy()
    np.fill_diagonal(work, -np.inf)  # self-pairs never compete for a slot
    # stable argsort on -row keeps the lower index first among ties
    order = np.argsort(-work, axis=1, kind="stable")[:, :z]
    out = np.zeros_like(S)
    np.put_along_axis(out, order, 1.0, axis=1)
    return out


def soft_threshold(x, mu):
    """Entrywise shrinkage: 0 where |x| <= mu, else x - mu*sign(x)."""
    return np.sign(x) * np.maximum(np.abs(x) - mu, 0.0)


def fusion_objective(graphs, A, deltas, mu):
    """Mean over modalities of 0.5*||A + delta - S||_F^2 + mu*||delta||_1."""
    total = 0.0
    for S, d in zip(graphs, deltas):
        total += 0.5 * np.sum((A + d - S) ** 2) + mu * np.sum(np.abs(d))
    return total / len(graphs)


def risgf_fuse(graphs, mu=DEFAULT_FUSE_MU, max_iters=DEFAULT_FUSE_MAX_ITERS,
               tol=DEFAULT_FUSE_TOL):
    """Fuse per-modality item graphs into one consensus graph in [0, 1].

    Models each modality graph as consensus + sparse modality-specific
    residual and alternates two exact coordinate minimisers:

      delta_m <- soft_threshold(S_m - A, mu)        (residual update)
      A       <- clip_[0,1](mean_m(S_m - delta_m))  (consensus update)

    until the objective decreases by less than tol or max_iters is hit.
    Returns (A, deltas, objective_trace); the trace is non-increasing
    because each half-step is an exact minimiser of its block.
    """
    if not graphs:
        raise InvalidParameterError("need at least one modality graph")
    if mu < 0:
        raise InvalidParameterError(f"mu must be >= 0, got {mu}")
    mats = [np.asarray(g, dtype=np.float64) for g in graphs]
    shape = mats[0].shape
    for g in mats:
        if g.shape != shape:
            raise DataError(f"modality graph shapes differ: {g.shape} vs {shape}")
        if not np.all(np.isfinite(g)):
            raise DataError("modality graph contains non-finite entries")

    stack = np.stack(mats)
    A = np.clip(stack.mean(axis=0), 0.0, 1.0)
    deltas = np.zeros_like(stack)
    trace = [fusion_objective(mats, A, deltas, mu)]
    for _ in range(max_iters):
        deltas = soft_threshold(stack - A, mu)
        A = np.clip((stack - deltas).mean(axis=0), 0.0, 1.0)
        trace.append(fusion_objective(mats, A, deltas, mu))
        if trace[-2] - trace[-1] < tol:
            break
    return A, list(deltas), np.array(trace)


def fusion_stationarity(graphs, A, deltas, mu):
    """Max violation of the first-order conditions at (A, deltas).

    Returns the largest of: |mean residual| on interior entries of A (with
    sign checks at the clipped boundaries), and the shrinkage conditions per
    modality (residual + mu*sign(delta) = 0 where delta != 0, |residual| <= mu
    where delta == 0). A small value certifies a fixed point.
    """
    mats = [np.asarray(g, dtype=np.float64) for g in graphs]
    resids = [A + d - S for S, d in zip(mats, deltas)]
    mean_resid = np.mean(resids, axis=0)
    interior = (A > 0.0) & (A < 1.0)
    worst = np.abs(np.where(interior, mean_resid, 0.0)).max(initial=0.0)
    # at clipped entries the gradient must push outward
    worst = max(worst, np.maximum(np.where(A == 0.0, -mean_resid, 0.0), 0.0).max(initial=0.0))
    worst = max(worst, np.maximum(np.where(A == 1.0, mean_resid, 0.0), 0.0).max(initial=0.0))
    for d, r in zip(deltas, resids):
        active = d != 0.0
        worst = max(worst, np.abs(np.where(active, r + mu * np.sign(d), 0.0)).max(initial=0.0))
        worst = max(worst, np.maximum(np.where(~active, np.abs(r) - mu, 0.0), 0.0).max(initial=0.0))
    return worst


def save_graph_tsv(path, A):
    """Write nonzero entries as (row, col, weight) triples with an n= header."""
    A = np.asarray(A)
    n = A.shape[0]
    rows, cols = np.nonzero(A)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={n}\n")
        for r, c in zip(rows, cols):
            fh.write(f"{r}\t{c}\t{float(A[r, c])!r}\n")


def load_graph_tsv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# n="):
            raise DataError(f"{path}: missing '# n=' header")
        n = int(header.split("=", 1)[1])
        A = np.zeros((n, n))
        for line in fh:
            line = line.strip()
            if not line:
                continue
            r, c, w = line.split("\t")
            A[int(r), int(c)] = float(w)
    return A
