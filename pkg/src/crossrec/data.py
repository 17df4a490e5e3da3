"""Two-domain rating data: ingestion, synthesis, splitting, graph assembly.

File formats (UTF-8, tab separated, no header):
  ratings:  user_id <TAB> item_id <TAB> rating
  features: item_id <TAB> v1 <TAB> ... <TAB> vD
  overlap:  source_user_id <TAB> target_user_id
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, EmptyDatasetError, InvalidParameterError, ParseError

SOURCE = "source"
TARGET = "target"


@dataclass
class DomainDataset:
    domain_id: str
    num_users: int
    num_items: int
    interactions: np.ndarray  # (n, 2) int array of (user, item), lexicographically sorted
    features: dict = field(default_factory=dict)  # modality name -> (num_items, dim) array

    def validate(self):
        inter = self.interactions
        if inter.size and (inter[:, 0].max() >= self.num_users or inter[:, 1].max() >= self.num_items
                           or inter.min() < 0):
            raise DataError("interaction index out of range")
        if np.unique(inter[:, 0]).size != self.num_users:
            raise DataError("some user has no interaction")
        if np.unique(inter[:, 1]).size != self.num_items:
            raise DataError("some item has no interaction")
        for name, mat in self.features.items():
            if mat.shape[0] != self.num_items:
                raise DataError(f"feature matrix '{name}' has {mat.shape[0]} rows, expected {self.num_items}")
        return self

    def items_of_user(self, u):
        inter = self.interactions
        return inter[inter[:, 0] == u, 1]


@dataclass
class OverlapMap:
    pairs: np.ndarray  # (n, 2) int array of (source_user, target_user)
    ratio: float

    def validate(self):
        p = self.pairs
        if p.size:
            if np.unique(p[:, 0]).size != len(p) or np.unique(p[:, 1]).size != len(p):
                raise DataError("overlap pairs must be one-to-one")
        return self


@dataclass
class Split:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


@dataclass
class BipartiteGraph:
    adjacency: np.ndarray  # (U+V) x (U+V), [[0, R], [R^T, 0]]
    num_users: int
    num_items: int


def _sorted_pairs(pairs):
    arr = np.asarray(sorted(set(map(tuple, pairs))), dtype=np.int64)
    return arr.reshape(-1, 2)


def load_ratings(path, threshold, min_interactions=10, domain_id=SOURCE):
    """Read a ratings file, binarize at `threshold`, filter sparse users/items.

    Users and items with fewer than min_interactions kept interactions are
    dropped, repeatedly until stable. Ids are mapped to contiguous zero-based
    indices in sorted id order. Returns (dataset, user_index, item_index)
    where the index maps are id -> index dicts.
    """
    raw = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, line_no, f"expected 3 tab-separated fields, got {len(parts)}")
            try:
                rating = float(parts[2])
            except ValueError:
                raise ParseError(path, line_no, f"rating is not numeric: {parts[2]!r}") from None
            if rating >= threshold:
                raw.append((parts[0], parts[1]))
    raw = sorted(set(raw))

    while True:
        users = {}
        items = {}
        for u, i in raw:
            users[u] = users.get(u, 0) + 1
            items[i] = items.get(i, 0) + 1
        keep_u = {u for u, c in users.items() if c >= min_interactions}
        keep_i = {i for i, c in items.items() if c >= min_interactions}
        filtered = [(u, i) for u, i in raw if u in keep_u and i in keep_i]
        if len(filtered) == len(raw):
            break
        raw = filtered
    if not raw:
        raise EmptyDatasetError(f"{path}: no interactions left after thresholding/filtering")

    user_ids = sorted({u for u, _ in raw})
    item_ids = sorted({i for _, i in raw})
    user_index = {u: k for k, u in enumerate(user_ids)}
    item_index = {i: k for k, i in enumerate(item_ids)}
    inter = _sorted_pairs((user_index[u], item_index[i]) for u, i in raw)
    ds = DomainDataset(domain_id=domain_id, num_users=len(user_ids), num_items=len(item_ids),
                       interactions=inter).validate()
    return ds, user_index, item_index


def load_features(path, modality, item_index):
    """Read a feature file and order rows by the dataset's item index map."""
    vectors = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            item_id = parts[0]
            try:
                vec = [float(x) for x in parts[1:]]
            except ValueError:
                raise ParseError(path, line_no, "non-numeric feature value") from None
            if dim is None:
                dim = len(vec)
            elif len(vec) != dim:
                raise DataError(f"{path}:{line_no}: feature dimension {len(vec)} != {dim} ({modality})")
            vectors[item_id] = vec
    missing = [i for i in item_index if i not in vectors]
    if missing:
        raise DataError(f"{path}: no {modality} features for item id {missing[0]!r}")
    mat = np.zeros((len(item_index), dim))
    for item_id, idx in item_index.items():
        mat[idx] = vectors[item_id]
    return mat


def load_overlap(path, user_index_s, user_index_t):
    """Read overlapped user id pairs and map them to per-domain indices.

    Pairs whose source or target id was filtered out of its dataset are
    dropped. The ratio is computed against the smaller user population.
    """
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError(path, line_no, f"expected 2 tab-separated fields, got {len(parts)}")
            s, t = parts
            if s in user_index_s and t in user_index_t:
                pairs.append((user_index_s[s], user_index_t[t]))
    arr = _sorted_pairs(pairs)
    ratio = len(arr) / max(1, min(len(user_index_s), len(user_index_t)))
    return OverlapMap(pairs=arr, ratio=ratio).validate()


@dataclass
class SyntheticConfig:
    num_users: int = 500
    num_items: int = 300
    latent_dim: int = 8
    overlap_ratio: float = 0.1
    modality_dims: dict = field(default_factory=lambda: {"visual": 12, "text": 8})
    noise: float = 0.1
    interactions_per_user: int = 16
    interactions_per_user_target: int | None = None
    preference_sharpness: float = 3.0


def _sample_interactions(rng, W, H, per_user, sharpness):
    """One multinomial draw of `per_user` distinct items per user, then cover
    zero-degree items by assigning each to a preference-weighted user."""
    n_users, n_items = W.shape[0], H.shape[0]
    k = min(per_user, n_items)
    pairs = []
    logits = sharpness * (W @ H.T)
    logits -= logits.max(axis=1, keepdims=True)
    probs = np.exp(logits)
    probs /= probs.sum(axis=1, keepdims=True)
    for u in range(n_users):
        chosen = rng.choice(n_items, size=k, replace=False, p=probs[u])
        pairs.extend((u, int(i)) for i in chosen)
    covered = {i for _, i in pairs}
    for i in range(n_items):
        if i not in covered:
            col = probs[:, i] / probs[:, i].sum()
            u = int(rng.choice(n_users, p=col))
            pairs.append((u, i))
    return _sorted_pairs(pairs)


def generate_synthetic(config, seed):
    """Two synthetic rating domains with controlled user overlap.

    Overlapped users share one latent preference vector across domains;
    item modality features are per-modality linear projections of the item
    latent factor plus gaussian noise; interactions are drawn with
    probability increasing in the user-item latent inner product. Pure
    function of (config, seed).
    """
    if not 0.0 < config.overlap_ratio < 1.0:
        raise InvalidParameterError(f"overlap ratio must lie in (0, 1), got {config.overlap_ratio}")
    rng = np.random.default_rng(seed)
    n_u, n_v, r = config.num_users, config.num_items, config.latent_dim

    W_s = rng.normal(size=(n_u, r))
    W_t = rng.normal(size=(n_u, r))
    n_ov = int(round(config.overlap_ratio * n_u))
    src_ov = rng.choice(n_u, size=n_ov, replace=False)
    tgt_ov = rng.choice(n_u, size=n_ov, replace=False)
    W_t[tgt_ov] = W_s[src_ov]
    overlap = OverlapMap(pairs=_sorted_pairs(zip(src_ov, tgt_ov)),
                         ratio=config.overlap_ratio).validate()

    domains = []
    per_user = (config.interactions_per_user,
                config.interactions_per_user_target or config.interactions_per_user)
    for domain_id, W, k in zip((SOURCE, TARGET), (W_s, W_t), per_user):
        H = rng.normal(size=(n_v, r))
        feats = {}
        for modality, dim in sorted(config.modality_dims.items()):
            proj = rng.normal(size=(r, dim)) / np.sqrt(r)
            feats[modality] = H @ proj + config.noise * rng.normal(size=(n_v, dim))
        inter = _sample_interactions(rng, W, H, k, config.preference_sharpness)
        ds = DomainDataset(domain_id=domain_id, num_users=n_u, num_items=n_v,
                           interactions=inter, features=feats).validate()
        domains.append(ds)
    return domains[0], domains[1], overlap


def split_dataset(ds, seed):
    """Per-user random 8:1:1 partition; every user keeps >= 1 train interaction."""
    if len(ds.interactions) < 3:
        raise DataError("need at least 3 interactions to split")
    rng = np.random.default_rng(seed)
    train, val, test = [], [], []
    inter = ds.interactions
    for u in range(ds.num_users):
        rows = inter[inter[:, 0] == u]
        n = len(rows)
        if n == 0:
            continue
        perm = rng.permutation(n)
        n_test = int(np.floor(n * 0.1 + 0.5))
        n_val = int(np.floor(n * 0.1 + 0.5))
        while n - n_test - n_val < 1:
            if n_test >= n_val and n_test > 0:
                n_test -= 1
            elif n_val > 0:
                n_val -= 1
        test.extend(map(tuple, rows[perm[:n_test]]))
        val.extend(map(tuple, rows[perm[n_test:n_test + n_val]]))
        train.extend(map(tuple, rows[perm[n_test + n_val:]]))
    return Split(train=_sorted_pairs(train), validation=_sorted_pairs(val),
                 test=_sorted_pairs(test))


def build_bipartite(ds, split):
    """Symmetric [[0, R], [R^T, 0]] adjacency from the training interactions."""
    U, V = ds.num_users, ds.num_items
    adj = np.zeros((U + V, U + V))
    for u, i in split.train:
        adj[u, U + i] = 1.0
        adj[U + i, u] = 1.0
    return BipartiteGraph(adjacency=adj, num_users=U, num_items=V)


def save_ratings_tsv(path, ds):
    with open(path, "w", encoding="utf-8") as fh:
        for u, i in ds.interactions:
            fh.write(f"u{u}\ti{i}\t1\n")


def save_features_tsv(path, features):
    with open(path, "w", encoding="utf-8") as fh:
        for idx, row in enumerate(features):
            fh.write(f"i{idx}\t" + "\t".join(repr(float(x)) for x in row) + "\n")


def save_overlap_tsv(path, overlap):
    with open(path, "w", encoding="utf-8") as fh:
        for s, t in overlap.pairs:
            fh.write(f"u{s}\tu{t}\n")
