"""Synthetic task generators, datasets and evaluation metrics.

Three tasks: a scenario-robust portfolio over the simplex, a multi-species
shortest path on terrain grids, and fair ranking with group exposure.
"""

from dataclasses import dataclass, field, asdict
import io
import json

import numpy as np

from . import solvers
from .learn import RandomFeatureMap, _atomic_write
from .owa import fair_gini_weights, owa_value
from .solvers import GridGraph, GroupStructure, PositionBias, RankingPolicy

TERRAINS = ("land", "water", "rock")
# per-species traversal cost of each terrain (lower = faster)
DEFAULT_SPEEDS = {
    "human": (1.0, 5.0, 3.0),
    "naga": (3.0, 1.0, 5.0),
    "dwarf": (3.0, 5.0, 1.0),
}


def _split_counts(N, fractions):
    n_train = int(round(fractions[0] * N))
    n_val = int(round(fractions[1] * N))
    return n_train, n_val, N - n_train - n_val


def _splits(N, fractions, rng):
    perm = rng.permutation(N)
    a, b, _ = _split_counts(N, fractions)
    return {"train": np.sort(perm[:a]), "val": np.sort(perm[a:a + b]), "test": np.sort(perm[a + b:])}


@dataclass
class TaskDataset:
    """Samples ``(Z[i], Y[i])`` plus the structure the task's solver needs.

    ``Y`` holds the true parameters: ``(N, m, n)`` criteria matrices for the
    portfolio and grid tasks, ``(N, n)`` relevance vectors for ranking.
    """

    kind: str
    Z: np.ndarray
    Y: np.ndarray
    w: np.ndarray
    splits: dict
    meta: dict
    graph: GridGraph = None
    groups: list = None
    bias: PositionBias = None
    lam: float = None
    _ref: dict = field(default_factory=dict, repr=False)

    @property
    def N(self):
        return self.Y.shape[0]

    def reference(self, i):
        """Best objective (maximized) for sample ``i`` under the true parameters."""
        i = int(i)
        if i not in self._ref:
            self._ref[i] = self._solve_reference(i)[0]
        return self._ref[i]

    def reference_decision(self, i):
        return self._solve_reference(int(i))[1]

    def _solve_reference(self, i):
        if self.kind == "portfolio":
            rep = solvers.solve_owa_reference(self.w, self.Y[i])
            return rep.objective, rep.solution
        if self.kind == "grid":
            x, val = solvers.solve_owa_path(self.graph, self.Y[i], self.w)
            return val, x
        Pi = solvers.solve_fair_ranking_fw(self.Y[i], self.groups[i], self.bias, self.lam, self.w,
                                           T=solvers.RANK_TEST_ITERS).Pi
        val = solvers.fair_ranking_objective(Pi, self.Y[i], self.groups[i], self.bias, self.lam, self.w)
        return val, Pi

    def with_lambda(self, lam):
        """Same ranking samples under a different fairness tradeoff."""
        if self.kind != "rank":
            raise ValueError("lambda only applies to the ranking task")
        meta = dict(self.meta, lam=float(lam))
        return TaskDataset(self.kind, self.Z, self.Y, self.w, self.splits, meta,
                           groups=self.groups, bias=self.bias, lam=float(lam))


# ---------------------------------------------------------------------------
# portfolio


@dataclass
class PortfolioTaskConfig:
    n: int = 10
    m: int = 3
    N: int = 1000
    noise: float = 0.05
    low: float = 0.5
    high: float = 1.5
    seed: int = 0
    feature_dim: int = 16
    feature_noise: float = 0.1
    history_days: int = 250
    fractions: tuple = (0.7, 0.1, 0.2)

    def __post_init__(self):
        if not self.low <= self.high:
            raise ValueError("scenario factor range needs low <= high")
        if self.n < 1 or self.m < 1 or self.N < 1:
            raise ValueError("n, m and N must be positive")


def price_history(n, days, rng):
    """Geometric random walk of ``n`` prices over ``days`` days, starting at 1."""
    drift = rng.normal(0.0005, 0.0005, n)
    vol = rng.uniform(0.01, 0.03, n)
    steps = rng.normal(drift, vol, (days, n))
    return np.exp(np.cumsum(steps, axis=0))


def gen_portfolio(cfg):
    rng = np.random.default_rng(cfg.seed)
    hist = price_history(cfg.n, cfg.history_days, rng)
    days = rng.integers(0, cfg.history_days, cfg.N)
    base = hist[days] + rng.normal(0.0, cfg.noise, (cfg.N, cfg.n))
    factors = rng.uniform(cfg.low, cfg.high, (cfg.N, cfg.m, cfg.n))
    Y = base[:, None, :] * factors
    fmap = RandomFeatureMap.create(cfg.m * cfg.n, cfg.feature_dim, noise=cfg.feature_noise,
                                   seed=cfg.seed + 7919)
    Z = fmap(Y.reshape(cfg.N, -1), rng)
    w = fair_gini_weights(cfg.m).w
    meta = {"kind": "portfolio", "config": _echo(cfg)}
    return TaskDataset("portfolio", Z, Y, w, _splits(cfg.N, cfg.fractions, rng), meta)


# ---------------------------------------------------------------------------
# multi-species grid shortest path


@dataclass
class GridTaskConfig:
    rows: int = 6
    cols: int = 6
    speeds: dict = field(default_factory=lambda: dict(DEFAULT_SPEEDS))
    n_train: int = 50
    n_val: int = 50
    n_test: int = 200
    feature_noise: float = 0.5
    smoothing: bool = True
    patch_radius: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.patch_radius < 0:
            raise ValueError("patch_radius must be >= 0")
        for name, row in self.speeds.items():
            if len(row) != len(TERRAINS) or min(row) <= 0:
                raise ValueError(f"speed table for {name!r} must have 3 positive entries")

    @property
    def species(self):
        return list(self.speeds)


def majority_filter(T, n_types=3):
    """3x3 majority vote per tile (ties keep the tile's own label)."""
    rows, cols = T.shape
    P = np.pad(T, 1, mode="edge")
    counts = np.zeros((n_types, rows, cols), dtype=np.int64)
    for dr in range(3):
        for dc in range(3):
            win = P[dr:dr + rows, dc:dc + cols]
            for t in range(n_types):
                counts[t] += win == t
    best = counts.max(axis=0)
    out = T.copy()
    unique = (counts == best).sum(axis=0) == 1
    out[unique] = counts.argmax(axis=0)[unique]
    return out


def random_terrain(rows, cols, rng, smoothing=True):
    T = rng.integers(0, len(TERRAINS), (rows, cols))
    return majority_filter(T) if smoothing else T


def tile_patches(F, radius):
    """Per-tile features from the ``(2r+1)^2`` neighbourhood, edge-padded.

    ``F`` is ``(N, rows, cols, d)``; returns ``(N, rows*cols, d*(2r+1)^2)``.
    """
    N, rows, cols, d = F.shape
    P = np.pad(F, ((0, 0), (radius, radius), (radius, radius), (0, 0)), mode="edge")
    k = 2 * radius + 1
    parts = [P[:, dr:dr + rows, dc:dc + cols, :] for dr in range(k) for dc in range(k)]
    return np.concatenate(parts, axis=-1).reshape(N, rows * cols, d * k * k)


def gen_grid_task(cfg):
    rng = np.random.default_rng(cfg.seed)
    N = cfg.n_train + cfg.n_val + cfg.n_test
    table = np.array([cfg.speeds[s] for s in cfg.species])
    n_nodes = cfg.rows * cfg.cols
    terrains = np.array([random_terrain(cfg.rows, cfg.cols, rng, cfg.smoothing).ravel()
                         for _ in range(N)])
    Y = table[:, terrains].transpose(1, 0, 2)  # (N, species, nodes)
    onehot = np.eye(len(TERRAINS))[terrains]
    noisy = onehot + rng.normal(0.0, cfg.feature_noise, onehot.shape)
    Z = tile_patches(noisy.reshape(N, cfg.rows, cfg.cols, -1), cfg.patch_radius)
    w = fair_gini_weights(len(cfg.species)).w
    a, b = cfg.n_train, cfg.n_train + cfg.n_val
    splits = {"train": np.arange(a), "val": np.arange(a, b), "test": np.arange(b, N)}
    meta = {"kind": "grid", "config": _echo(cfg), "terrain": terrains.tolist()}
    return TaskDataset("grid", Z, Y, w, splits, meta, graph=GridGraph(cfg.rows, cfg.cols))


# ---------------------------------------------------------------------------
# fair ranking


@dataclass
class RankTaskConfig:
    n_items: int = 20
    feature_dim: int = 8
    n_groups: int = 2
    n_train: int = 100
    n_val: int = 25
    n_test: int = 50
    lam: float = 0.5
    lambdas: tuple = (0.0, 0.25, 0.5, 0.75, 0.95)
    noise: float = 0.05
    group_feature: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0 or any(not 0.0 <= v <= 1.0 for v in self.lambdas):
            raise ValueError("lambda values must lie in [0, 1]")
        if self.n_groups < 1:
            raise ValueError("need at least one group")


def relevance_fn(X, rng, noise, coef):
    """Nonlinear relevance: a tanh ridge plus a pairwise term, min-max scaled."""
    s = np.tanh(X @ coef) + 0.5 * X[..., 0] + 0.3 * X[..., 1] * X[..., 2]
    s = s + rng.normal(0, noise, s.shape)
    lo = s.min(axis=-1, keepdims=True)
    hi = s.max(axis=-1, keepdims=True)
    return (s - lo) / np.maximum(hi - lo, 1e-12)


def gen_rank_task(cfg):
    rng = np.random.default_rng(cfg.seed)
    N = cfg.n_train + cfg.n_val + cfg.n_test
    X = rng.normal(size=(N, cfg.n_items, cfg.feature_dim))
    coef = rng.normal(0, 1 / np.sqrt(cfg.feature_dim), cfg.feature_dim)
    Y = relevance_fn(X, rng, cfg.noise, coef)
    groups = [GroupStructure.from_quantiles(X[i, :, cfg.group_feature], cfg.n_groups)
              for i in range(N)]
    w = fair_gini_weights(cfg.n_groups).w
    a, b = cfg.n_train, cfg.n_train + cfg.n_val
    splits = {"train": np.arange(a), "val": np.arange(a, b), "test": np.arange(b, N)}
    meta = {"kind": "rank", "config": _echo(cfg), "lam": cfg.lam}
    return TaskDataset("rank", X, Y, w, splits, meta, groups=groups,
                       bias=PositionBias.dcg(cfg.n_items), lam=float(cfg.lam))


# ---------------------------------------------------------------------------
# evaluation


def eval_ranking(Pi, c, groups, b, mean="groups"):
    """``(utility, violation)`` of a ranking policy.

    ``mean="groups"`` compares each group exposure with the average over
    groups; ``mean="items"`` divides the summed group exposure by n instead.
    """
    Pi = Pi.Pi if isinstance(Pi, RankingPolicy) else np.asarray(Pi, dtype=np.float64)
    if not RankingPolicy.is_doubly_stochastic(Pi):
        raise ValueError("ranking policy must be doubly stochastic")
    bias = b.b if isinstance(b, PositionBias) else np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    E = groups.A @ Pi @ bias
    if mean == "groups":
        centre = E.mean()
    elif mean == "items":
        centre = E.sum() / c.shape[0]
    else:
        raise ValueError("mean must be 'groups' or 'items'")
    return float(c @ Pi @ bias), float(np.mean(np.abs(centre - E)))


@dataclass
class RegretTable:
    regret: np.ndarray
    regret_pct: np.ndarray
    species_regret_pct: np.ndarray = None

    def summary(self):
        out = {"regret": float(self.regret.mean()), "regret_pct": float(self.regret_pct.mean())}
        if self.species_regret_pct is not None:
            per = self.species_regret_pct.mean(axis=0)
            for k, v in enumerate(per):
                out[f"species{k}_regret_pct"] = float(v)
            out["worst_species_regret_pct"] = float(per.max())
        return out


def eval_regret_suite(decisions, ds, idx):
    """Regret of ``decisions[k]`` on sample ``idx[k]`` against the reference optima.

    Percentages are relative to ``|reference|``.  The grid task adds each
    species' path-cost regret relative to that species' own shortest path.
    """
    idx = np.asarray(idx)
    reg, pct, species = [], [], []
    from .learn import objective

    for i, dec in zip(idx, decisions):
        ref = ds.reference(i)
        r = ref - objective(ds, i, dec)
        reg.append(r)
        pct.append(100.0 * r / max(abs(ref), 1e-12))
        if ds.kind == "grid":
            costs = ds.Y[i] @ dec
            best = np.array([solvers.solve_shortest_path(ds.graph, c, return_cost=True)[1]
                             for c in ds.Y[i]])
            species.append(100.0 * (costs - best) / best)
    return RegretTable(np.array(reg), np.array(pct), np.array(species) if species else None)


# ---------------------------------------------------------------------------
# columnar text serialization


def _echo(cfg):
    d = asdict(cfg)
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def write_dataset(ds, path):
    """CSV with ``#``-prefixed JSON header lines, one row per sample.

    Columns: sample, split, z0.., y0.. (row-major), and g0.. group ids for
    ranking.  Enough to rebuild the dataset with ``read_dataset``.
    """
    split_of = np.empty(ds.N, dtype=object)
    for name, idx in ds.splits.items():
        split_of[np.asarray(idx)] = name
    Zf = ds.Z.reshape(ds.N, -1)
    Yf = ds.Y.reshape(ds.N, -1)
    header = {"kind": ds.kind, "w": ds.w.tolist(), "z_shape": list(ds.Z.shape[1:]),
              "y_shape": list(ds.Y.shape[1:]), "lam": ds.lam,
              "config": ds.meta.get("config", {})}
    if ds.graph is not None:
        header["graph"] = [ds.graph.rows, ds.graph.cols, ds.graph.source, ds.graph.sink]
    if ds.groups is not None:
        header["n_groups"] = ds.groups[0].n_groups
    buf = io.StringIO()
    buf.write("# " + json.dumps(header) + "\n")
    cols = ["sample", "split"] + [f"z{j}" for j in range(Zf.shape[1])] + [f"y{j}" for j in range(Yf.shape[1])]
    if ds.groups is not None:
        cols += [f"g{j}" for j in range(ds.groups[0].n)]
    buf.write(",".join(cols) + "\n")
    for i in range(ds.N):
        row = [str(i), split_of[i]] + ["%.17g" % v for v in Zf[i]] + ["%.17g" % v for v in Yf[i]]
        if ds.groups is not None:
            row += [str(int(g)) for g in ds.groups[i].group_of]
        buf.write(",".join(row) + "\n")
    _atomic_write(path, buf.getvalue())


def read_dataset(path):
    with open(path) as fh:
        header = json.loads(fh.readline()[1:].strip())
        fh.readline()
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    N = len(rows)
    dz = int(np.prod(header["z_shape"]))
    dy = int(np.prod(header["y_shape"]))
    Z = np.array([[float(v) for v in r[2:2 + dz]] for r in rows]).reshape([N] + header["z_shape"])
    Y = np.array([[float(v) for v in r[2 + dz:2 + dz + dy]] for r in rows]).reshape([N] + header["y_shape"])
    splits = {name: np.array([int(r[0]) for r in rows if r[1] == name], dtype=np.int64)
              for name in ("train", "val", "test")}
    kind = header["kind"]
    kw = {}
    if kind == "grid":
        kw["graph"] = GridGraph(*header["graph"])
    if kind == "rank":
        kw["groups"] = [GroupStructure(np.array([int(v) for v in r[2 + dz + dy:]]), header["n_groups"])
                        for r in rows]
        kw["bias"] = PositionBias.dcg(Y.shape[1])
        kw["lam"] = header["lam"]
    meta = {"kind": kind, "config": header["config"]}
    return TaskDataset(kind, Z, Y, np.array(header["w"]), splits, meta, **kw)
