"""Path spaces, reference models and transport costs.

A discrete path is stored as an array of shape ``(N + 1, d)`` whose first row
is zero. Collections of paths are stacked into ``(P, N + 1, d)`` arrays and
carried by :class:`WeightedPaths`, which is the common currency of every
estimator in the package: exact lattice enumerations carry node identifiers
(so conditional expectations are exact group averages) while Monte Carlo
ensembles carry only uniform weights.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAX_LEAVES = 2**20
PROB_TOL = 1e-12
MART_TOL = 1e-10
_CHUNK = 4096


class ModelError(ValueError):
    """Raised for malformed reference models or incompatible path shapes."""


# ---------------------------------------------------------------------------
# increments and costs


def increment(paths):
    """Map ``(0, x_1, ..., x_N)`` to ``(0, x_1, x_2 - x_1, ..., x_N - x_{N-1})``.

    Works on a single path ``(N + 1, d)`` or a stack ``(..., N + 1, d)``.
    """
    paths = np.asarray(paths, dtype=float)
    out = np.zeros_like(paths)
    out[..., 1:, :] = np.diff(paths, axis=-2)
    return out


def cumulate(increments):
    """Inverse of :func:`increment` (cumulative sum along time)."""
    increments = np.asarray(increments, dtype=float)
    return np.cumsum(increments, axis=-2)


def as_path(points):
    """Validate and return a single path as a float array ``(N + 1, d)``."""
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[0] < 2:
        raise ModelError(f"a path needs shape (N+1, d) with N >= 1, got {x.shape}")
    if np.any(x[0] != 0.0):
        raise ModelError("paths must start at the origin")
    return x


@dataclass(frozen=True)
class CostSpec:
    """Exponent and time scaling of the adapted transport cost.

    ``q`` is always derived from ``p``. ``scaling`` is one of ``"discrete"``,
    ``"hyperbolic"`` (cost multiplied by ``(N/T)^(p-1)``) or ``"parabolic"``
    (requires ``p == 2``; no multiplier).
    """

    p: float = 2.0
    scaling: str = "discrete"
    T: float = 1.0

    def __post_init__(self):
        if not self.p > 1.0:
            raise ModelError(f"cost exponent must exceed 1, got {self.p}")
        if self.scaling not in ("discrete", "hyperbolic", "parabolic"):
            raise ModelError(f"unknown scaling {self.scaling!r}")
        if self.scaling == "parabolic" and self.p != 2.0:
            raise ModelError("parabolic scaling is only defined for p = 2")
        if not self.T > 0:
            raise ModelError("T must be positive")

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    def factor(self, N: int) -> float:
        if self.scaling == "hyperbolic":
            return (N / self.T) ** (self.p - 1.0)
        return 1.0

    def time_weights(self, time_grid) -> np.ndarray:
        """Per-increment weights ``w_n`` entering ``r^q = sum_n w_n E|.|_*^q``.

        Unit weights in discrete time, ``dt_n`` under hyperbolic scaling.
        """
        grid = np.asarray(time_grid, dtype=float)
        if self.scaling == "hyperbolic":
            return np.diff(grid)
        return np.ones(len(grid) - 1)


def lp_norm(v, p, axis=-1):
    return np.sum(np.abs(v) ** p, axis=axis) ** (1.0 / p)


def cost_cn(x, y, spec: CostSpec = CostSpec()):
    """Adapted cost ``sum_n |dx_n - dy_n|_p^p`` (times the scaling factor).

    Accepts single paths or stacks of paths; returns one value per path.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape != y.shape:
        raise ModelError(f"path shapes differ: {x.shape} vs {y.shape}")
    N = x.shape[-2] - 1
    diff = increment(x) - increment(y)
    return spec.factor(N) * np.sum(np.abs(diff) ** spec.p, axis=(-2, -1))


# ---------------------------------------------------------------------------
# weighted path collections


@dataclass
class WeightedPaths:
    """Stack of paths with probability weights.

    ``node_ids[i, n]`` identifies the depth-``n`` lattice node that path ``i``
    passes through; it is ``None`` for Monte Carlo ensembles.
    """

    paths: np.ndarray
    weights: np.ndarray
    time_grid: np.ndarray
    node_ids: np.ndarray | None = None
    seed: int | None = None
    is_martingale: bool = False

    def __post_init__(self):
        self.paths = np.asarray(self.paths, dtype=float)
        if self.paths.ndim == 2:
            self.paths = self.paths[:, :, None]
        self.weights = np.asarray(self.weights, dtype=float)
        self.time_grid = np.asarray(self.time_grid, dtype=float)
        if self.paths.shape[1] != len(self.time_grid):
            raise ModelError("time grid length does not match paths")
        if np.any(np.diff(self.time_grid) <= 0):
            raise ModelError("time grid must be strictly increasing")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def N(self) -> int:
        return self.paths.shape[1] - 1

    @property
    def d(self) -> int:
        return self.paths.shape[2]

    @property
    def T(self) -> float:
        return float(self.time_grid[-1] - self.time_grid[0])

    @property
    def exact(self) -> bool:
        return self.node_ids is not None

    def expect(self, values, axis=0):
        return np.tensordot(self.weights, values, axes=([0], [axis]))

    def with_paths(self, paths) -> "WeightedPaths":
        return WeightedPaths(paths, self.weights, self.time_grid, self.node_ids,
                             self.seed, False)


# ---------------------------------------------------------------------------
# lattices


@dataclass
class LatticeModel:
    """Finite non-recombining tree. Node 0 is the root (time 0, state 0)."""

    time: np.ndarray
    state: np.ndarray
    parent: np.ndarray
    prob: np.ndarray
    is_martingale: bool = False
    time_grid: np.ndarray | None = None
    children: list = field(init=False, repr=False)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=int)
        self.state = np.asarray(self.state, dtype=float)
        if self.state.ndim == 1:
            self.state = self.state[:, None]
        self.parent = np.asarray(self.parent, dtype=int)
        self.prob = np.asarray(self.prob, dtype=float)
        self.children = [[] for _ in range(len(self.time))]
        for k in range(1, len(self.time)):
            self.children[self.parent[k]].append(k)
        self._validate()
        if self.time_grid is None:
            self.time_grid = np.arange(self.N + 1, dtype=float)

    @property
    def N(self) -> int:
        return int(self.time.max())

    @property
    def d(self) -> int:
        return self.state.shape[1]

    @property
    def n_nodes(self) -> int:
        return len(self.time)

    def _validate(self):
        if self.time[0] != 0 or self.parent[0] != -1 or np.any(self.state[0] != 0):
            raise ModelError("node 0 must be the root at time 0 with zero state")
        N = self.N
        for k, kids in enumerate(self.children):
            if not kids:
                if self.time[k] != N:
                    raise ModelError(f"leaf {k} at time {self.time[k]} but horizon is {N}")
                continue
            p = self.prob[kids]
            if np.any(p <= 0):
                raise ModelError(f"node {k} has non-positive child probabilities")
            if abs(p.sum() - 1.0) > PROB_TOL:
                raise ModelError(f"child probabilities at node {k} sum to {p.sum()!r}")
            if np.any(self.time[kids] != self.time[k] + 1):
                raise ModelError(f"children of node {k} are not one step later")

    @classmethod
    def from_children(cls, nodes, is_martingale=False, time_grid=None):
        """Build from dicts ``{"id", "time", "state", "children": [[id, prob], ...]}``."""
        order = sorted(range(len(nodes)), key=lambda j: nodes[j]["time"])
        index = {nodes[j]["id"]: k for k, j in enumerate(order)}
        n = len(nodes)
        time = np.zeros(n, dtype=int)
        state = [None] * n
        parent = np.full(n, -1)
        prob = np.ones(n)
        for nd in nodes:
            k = index[nd["id"]]
            time[k] = nd["time"]
            state[k] = np.atleast_1d(np.asarray(nd["state"], dtype=float))
            for cid, cp in nd.get("children", []):
                c = index[cid]
                if parent[c] != -1:
                    raise ModelError(f"node {cid} has two parents (trees only)")
                parent[c] = k
                prob[c] = cp
        roots = [k for k in range(n) if parent[k] == -1]
        if roots != [0]:
            raise ModelError("expected exactly one root at time 0")
        return cls(time, np.vstack(state), parent, prob, is_martingale, time_grid)

    def to_dict(self) -> dict:
        return {
            "is_martingale": bool(self.is_martingale),
            "time_grid": [float(t) for t in self.time_grid],
            "nodes": [
                {
                    "id": k,
                    "time": int(self.time[k]),
                    "state": [float(s) for s in self.state[k]],
                    "children": [[c, float(self.prob[c])] for c in self.children[k]],
                }
                for k in range(self.n_nodes)
            ],
        }

    def n_leaves(self) -> int:
        return sum(1 for kids in self.children if not kids)


def load_lattice(path) -> LatticeModel:
    with open(path) as fh:
        cfg = json.load(fh)
    model = LatticeModel.from_children(cfg["nodes"], cfg.get("is_martingale", False),
                                       cfg.get("time_grid"))
    if model.is_martingale:
        ok, worst = check_martingale(model)
        if not ok:
            raise ModelError(f"lattice claims to be a martingale but violates it by {worst:.3g}")
    return model


def save_lattice(model: LatticeModel, path):
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=1)


def random_walk(N: int, jump: float = 1.0, p_up: float = 0.5, T: float | None = None,
                d: int = 1) -> LatticeModel:
    """Binary walk ``x_{n+1} = x_n +/- jump`` (componentwise identical in ``d``)."""
    if N < 1:
        raise ModelError("N must be at least 1")
    if 2**N > MAX_LEAVES:
        raise ModelError(f"2^{N} leaves exceeds the enumeration guard")
    n_nodes = 2 ** (N + 1) - 1
    time = np.zeros(n_nodes, dtype=int)
    state = np.zeros((n_nodes, d))
    parent = np.full(n_nodes, -1)
    prob = np.ones(n_nodes)
    # heap layout: children of k are 2k+1 (up) and 2k+2 (down)
    for k in range(1, n_nodes):
        par = (k - 1) // 2
        up = k % 2 == 1
        parent[k] = par
        time[k] = time[par] + 1
        state[k] = state[par] + (jump if up else -jump)
        prob[k] = p_up if up else 1.0 - p_up
    grid = None if T is None else np.linspace(0.0, T, N + 1)
    return LatticeModel(time, state, parent, prob, is_martingale=(p_up == 0.5), time_grid=grid)


def brownian_lattice(T: float, N: int, d: int = 1) -> LatticeModel:
    """Symmetric walk with steps ``+/- sqrt(T/N)``: matches Brownian increment moments."""
    return random_walk(N, jump=float(np.sqrt(T / N)), T=T, d=d)


def random_martingale_lattice(N: int, rng, branching=(2, 3), d: int = 1,
                              scale: float = 1.0) -> LatticeModel:
    """Random martingale tree; each node gets 2 or 3 children with centred moves."""
    time, state, parent, prob = [0], [np.zeros(d)], [-1], [1.0]
    frontier = [0]
    for n in range(N):
        nxt = []
        for k in frontier:
            b = int(rng.choice(branching))
            w = rng.uniform(0.2, 1.0, size=b)
            w /= w.sum()
            moves = rng.normal(scale=scale, size=(b, d))
            moves -= w @ moves
            for j in range(b):
                time.append(n + 1)
                state.append(state[k] + moves[j])
                parent.append(k)
                prob.append(w[j])
                nxt.append(len(time) - 1)
        frontier = nxt
    return LatticeModel(np.array(time), np.vstack(state), np.array(parent), np.array(prob),
                        is_martingale=True)


def enumerate_paths(model: LatticeModel) -> WeightedPaths:
    """All root-to-leaf paths with their probabilities and node identifiers."""
    n_leaves = model.n_leaves()
    if n_leaves > MAX_LEAVES:
        raise ModelError(f"{n_leaves} leaves exceeds the guard of {MAX_LEAVES}")
    N, d = model.N, model.d
    leaves = np.array([k for k, kids in enumerate(model.children) if not kids])
    node_ids = np.zeros((len(leaves), N + 1), dtype=int)
    node_ids[:, N] = leaves
    for n in range(N, 0, -1):
        node_ids[:, n - 1] = model.parent[node_ids[:, n]]
    paths = model.state[node_ids]
    weights = np.prod(model.prob[node_ids[:, 1:]], axis=1)
    total = weights.sum()
    if abs(total - 1.0) > 1e-10:
        raise ModelError(f"path probabilities sum to {total!r}")
    return WeightedPaths(paths.reshape(len(leaves), N + 1, d), weights, model.time_grid,
                         node_ids, None, model.is_martingale)


def check_martingale(model, tol: float = MART_TOL):
    """Return ``(ok, worst)`` where ``worst`` is the largest ``|sum_i p_i (child_i - node)|``.

    Accepts a :class:`LatticeModel` or an exact :class:`WeightedPaths`
    (e.g. a perturbed pushforward of a lattice).
    """
    if isinstance(model, LatticeModel):
        worst = 0.0
        for k, kids in enumerate(model.children):
            if kids:
                drift = model.prob[kids] @ (model.state[kids] - model.state[k])
                worst = max(worst, float(np.max(np.abs(drift))))
        return worst <= tol, worst
    wp = model
    if wp.node_ids is None:
        raise ModelError("martingale check needs node identifiers")
    worst = 0.0
    dx = increment(wp.paths)
    for n in range(1, wp.N + 1):
        groups = wp.node_ids[:, n - 1]
        _, inv = np.unique(groups, return_inverse=True)
        mass = np.bincount(inv, weights=wp.weights)
        for i in range(wp.d):
            drift = np.bincount(inv, weights=wp.weights * dx[:, n, i]) / mass
            worst = max(worst, float(np.max(np.abs(drift))))
    return worst <= tol, worst


# ---------------------------------------------------------------------------
# Monte Carlo ensembles


def _normals(seed: int, M: int, shape) -> np.ndarray:
    # one independent stream per block of paths, keyed by (seed, block index)
    out = np.empty((M,) + tuple(shape))
    for start in range(0, M, _CHUNK):
        stop = min(M, start + _CHUNK)
        ss = np.random.SeedSequence(seed, spawn_key=(start // _CHUNK,))
        gen = np.random.Generator(np.random.Philox(ss))
        out[start:stop] = gen.standard_normal((stop - start,) + tuple(shape))
    return out


def sample_brownian(T: float, N: int, d: int, M: int, seed: int = 0) -> WeightedPaths:
    """``M`` Brownian paths on the uniform grid ``t_n = nT/N``; reproducible from ``seed``."""
    if T <= 0 or N < 1 or d < 1 or M < 1:
        raise ModelError("T, N, d, M must be positive")
    dt = T / N
    dx = _normals(int(seed), M, (N, d)) * np.sqrt(dt)
    paths = np.zeros((M, N + 1, d))
    np.cumsum(dx, axis=1, out=paths[:, 1:, :])
    return WeightedPaths(paths, np.full(M, 1.0 / M), np.linspace(0.0, T, N + 1),
                         None, int(seed), True)


def sample_lattice(model: LatticeModel, M: int, seed: int = 0) -> WeightedPaths:
    """Monte Carlo ensemble drawn from a lattice (node identifiers dropped)."""
    wp = enumerate_paths(model)
    u = np.concatenate([
        np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(b,))))
        .random(min(_CHUNK, M - s))
        for b, s in enumerate(range(0, M, _CHUNK))
    ])
    idx = np.searchsorted(np.cumsum(wp.weights), u * wp.weights.sum(), side="right")
    idx = np.minimum(idx, wp.n_paths - 1)
    out = WeightedPaths(wp.paths[idx], np.full(M, 1.0 / M), wp.time_grid, None, seed,
                        model.is_martingale)
    out.source_index = idx
    return out


def write_ensemble_csv(wp: WeightedPaths, path):
    """Rows ``path_id,t,x_1..x_d``, one per (path, time)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "t"] + [f"x_{i + 1}" for i in range(wp.d)])
        for i in range(wp.n_paths):
            for n, t in enumerate(wp.time_grid):
                w.writerow([i, f"{t:.12g}"] + [f"{v:.12g}" for v in wp.paths[i, n]])


def read_ensemble_csv(path, seed=None) -> WeightedPaths:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    ids = rows[:, 0].astype(int)
    M = ids.max() + 1
    n_t = len(rows) // M
    grid = rows[:n_t, 1]
    paths = rows[:, 2:].reshape(M, n_t, -1)
    return WeightedPaths(paths, np.full(M, 1.0 / M), grid, None, seed)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
