"""Optional and predictable projections of per-time fields.

A field is an array ``(P, N, d)`` whose slot ``n - 1`` is the time-``n``
value. The optional projection conditions slot ``n - 1`` on ``F_n``, the
predictable projection on ``F_{n-1}``. Exact lattices use weighted group
averages over node identifiers; Monte Carlo ensembles use least-squares
regression on features of the path history.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.preprocessing import PolynomialFeatures
from sklearn.utils.validation import check_is_fitted

from .core import WeightedPaths

KINDS = ("optional", "predictable")


class ProjectionError(RuntimeError):
    pass


def _check(wp: WeightedPaths, field):
    field = np.asarray(field, dtype=float)
    if field.ndim == 2:
        field = field[:, :, None]
    if field.shape[:2] != (wp.n_paths, wp.N):
        raise ProjectionError(f"field shape {field.shape} does not match {wp.n_paths} paths x N={wp.N}")
    return field


def _offset(kind):
    if kind not in KINDS:
        raise ProjectionError(f"unknown projection kind {kind!r}")
    return 0 if kind == "optional" else 1


def group_mean(values, groups, weights):
    """Weighted mean of ``values`` (``(P, d)``) within ``groups``, broadcast back to paths."""
    _, inv = np.unique(groups, return_inverse=True)
    mass = np.bincount(inv, weights=weights)
    out = np.empty_like(values)
    for i in range(values.shape[1]):
        out[:, i] = (np.bincount(inv, weights=weights * values[:, i]) / mass)[inv]
    return out


def exact_projection(wp: WeightedPaths, field, kind="optional"):
    if not wp.exact:
        raise ProjectionError("exact projection needs a lattice enumeration")
    field = _check(wp, field)
    off = _offset(kind)
    out = np.empty_like(field)
    for n in range(1, wp.N + 1):
        out[:, n - 1] = group_mean(field[:, n - 1], wp.node_ids[:, n - off], wp.weights)
    return out


def optional_projection(wp: WeightedPaths, field, basis=None):
    """``E[Z_n | F_n]``; exact on lattices, regression on ensembles."""
    if wp.exact:
        return exact_projection(wp, field, "optional")
    return regression_projection(wp, field, "optional", basis)


def predictable_projection(wp: WeightedPaths, field, basis=None):
    """``E[Z_n | F_{n-1}]``; exact on lattices, regression on ensembles."""
    if wp.exact:
        return exact_projection(wp, field, "predictable")
    return regression_projection(wp, field, "predictable", basis)


# ---------------------------------------------------------------------------
# regression backend


def parse_basis(spec):
    """``"poly:<deg>:<feat>,<feat>"`` with features from ``state``, ``runmean``, ``time``."""
    if spec is None:
        spec = "poly:3:state,runmean"
    parts = spec.split(":")
    if len(parts) != 3 or parts[0] != "poly":
        raise ProjectionError(f"bad basis spec {spec!r}")
    deg = int(parts[1])
    feats = [f for f in parts[2].split(",") if f]
    for f in feats:
        if f not in ("state", "runmean", "time"):
            raise ProjectionError(f"unknown basis feature {f!r}")
    return deg, feats


def history_features(paths, m, feats, time_grid=None, extra=None, cums=None):
    """Raw (pre-polynomial) features of the history ``x_0..x_m``.

    ``cums`` may hold ``np.cumsum(paths, axis=1)`` to avoid recomputing running means.
    """
    cols = []
    if "state" in feats:
        cols.append(paths[:, m, :])
    if "runmean" in feats:
        cols.append((cums[:, m, :] if cums is not None else paths[:, : m + 1, :].sum(axis=1))
                    / (m + 1))
    if "time" in feats and time_grid is not None:
        cols.append(np.full((paths.shape[0], 1), time_grid[m]))
    if extra is not None:
        cols.append(np.asarray(extra(paths, m)).reshape(paths.shape[0], -1))
    if not cols:
        return np.zeros((paths.shape[0], 0))
    return np.hstack(cols)


class RegressionProjector(BaseEstimator, TransformerMixin):
    """Least-squares Monte Carlo estimate of ``E[Z_n | F_n]`` or ``E[Z_n | F_{n-1}]``.

    ``fit(X, y)`` takes paths ``(M, N + 1, d)`` and a field ``(M, N, d)``;
    ``transform(X)`` returns the fitted conditional expectations on ``X``.
    Features are polynomials of the history summaries named in ``basis``
    (plus the optional ``extra(paths, m)`` columns), standardized per time.
    The small ridge keeps the normal equations solvable; ``refine`` rounds of
    iterative refinement then remove most of its shrinkage bias.
    """

    def __init__(self, basis="poly:3:state,runmean", kind="optional", ridge=1e-8,
                 extra=None, sample_weight=None, refine=2):
        self.basis = basis
        self.kind = kind
        self.ridge = ridge
        self.refine = refine
        self.extra = extra
        self.sample_weight = sample_weight

    def _design(self, X, m, t, stats=None, cums=None):
        raw = history_features(X, m, self.feats_, t, self.extra, cums)
        if stats is None:
            mu = raw.mean(axis=0)
            sd = raw.std(axis=0)
            keep = sd > 1e-12 * np.maximum(1.0, np.abs(mu))
            stats = (mu, sd, keep)
        mu, sd, keep = stats
        z = (raw[:, keep] - mu[keep]) / sd[keep]
        if z.shape[1] == 0:
            return np.ones((X.shape[0], 1)), stats
        poly = PolynomialFeatures(self.degree_, include_bias=True)
        return poly.fit_transform(z), stats

    def fit(self, X, y, time_grid=None):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if y.ndim == 2:
            y = y[:, :, None]
        M, n_t, _ = X.shape
        self.degree_, self.feats_ = parse_basis(self.basis)
        off = _offset(self.kind)
        w = np.full(M, 1.0 / M) if self.sample_weight is None else np.asarray(self.sample_weight)
        self.stats_, self.coef_ = [], []
        cums = np.cumsum(X, axis=1)
        fitted = np.empty(y.shape)
        for n in range(1, n_t):
            A, stats = self._design(X, n - off, time_grid, cums=cums)
            if M < 10 * A.shape[1]:
                raise ProjectionError(f"{M} samples is fewer than 10x the {A.shape[1]} basis functions")
            Aw = A * w[:, None]
            G = A.T @ Aw
            pen = self.ridge * np.trace(G) / G.shape[0] * np.eye(G.shape[0])
            pen[0, 0] = 0.0
            G += pen
            if np.linalg.cond(G) > 1e14:
                raise ProjectionError(f"rank-deficient regression design at n={n}")
            b = Aw.T @ y[:, n - 1, :]
            coef = np.linalg.solve(G, b)
            for _ in range(self.refine):
                # undo the ridge bias where the design is well conditioned
                coef += np.linalg.solve(G, b - (G - pen) @ coef)
            self.coef_.append(coef)
            self.stats_.append(stats)
            fitted[:, n - 1] = A @ self.coef_[-1]
        self.time_grid_ = time_grid
        self.fitted_ = fitted
        return self

    def transform(self, X):
        check_is_fitted(self, "coef_")
        X = np.asarray(X, dtype=float)
        off = _offset(self.kind)
        out = np.empty((X.shape[0], len(self.coef_), self.coef_[0].shape[1]))
        cums = np.cumsum(X, axis=1)
        for n in range(1, len(self.coef_) + 1):
            A, _ = self._design(X, n - off, self.time_grid_, self.stats_[n - 1], cums)
            out[:, n - 1] = A @ self.coef_[n - 1]
        return out

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X, y, **fit_params).fitted_


def regression_projection(wp: WeightedPaths, field, kind="optional", basis=None,
                          extra=None, holdout: float = 0.0, seed: int = 0):
    """Regression estimate of the projection, evaluated in-sample.

    With ``holdout > 0`` the coefficients are fitted on a random fraction
    ``1 - holdout`` of the paths and evaluated on all of them.
    """
    field = _check(wp, field)
    mask = np.ones(wp.n_paths, dtype=bool)
    if holdout > 0:
        mask = np.random.default_rng(seed).random(wp.n_paths) >= holdout
    w = wp.weights[mask] / wp.weights[mask].sum()
    proj = RegressionProjector(basis or "poly:3:state,runmean", kind, extra=extra,
                               sample_weight=w)
    if mask.all():
        return proj.fit_transform(wp.paths, field, time_grid=wp.time_grid)
    proj.fit(wp.paths[mask], field[mask], time_grid=wp.time_grid)
    return proj.transform(wp.paths)


def regression_bootstrap_se(wp: WeightedPaths, field, kind="optional", basis=None,
                            n_boot: int = 50, seed: int = 0, extra=None):
    """Bootstrap standard error of the fitted projection, as an L2(paths x time) norm.

    Each resample refits the regression and evaluates it on the original
    paths; the reported value is ``sqrt(mean over paths and n of Var_boot)``.
    """
    field = _check(wp, field)
    rng = np.random.default_rng(seed)
    fits = []
    for _ in range(n_boot):
        idx = rng.integers(0, wp.n_paths, wp.n_paths)
        w = wp.weights[idx] / wp.weights[idx].sum()
        proj = RegressionProjector(basis or "poly:3:state,runmean", kind, extra=extra,
                                   sample_weight=w)
        proj.fit(wp.paths[idx], field[idx], time_grid=wp.time_grid)
        fits.append(proj.transform(wp.paths))
    fits = np.stack(fits)
    return float(np.sqrt(np.mean(fits.var(axis=0, ddof=1).sum(axis=-1))))


# ---------------------------------------------------------------------------
# L^q predictable projection


def lq_predictable_projection(wp: WeightedPaths, field, q: float, tol: float = 1e-14,
                              max_iter: int = 400):
    """Predictable ``h*`` minimizing ``E sum_n |Z_n - h_n|_q^q`` on an exact lattice.

    The objective separates over predecessor nodes and components; each
    one-dimensional problem ``min_h sum_c p_c |z_c - h|^q`` has a monotone
    first-order condition which is solved by bisection on ``[min z, max z]``.

    Returns ``(h_star, residual_norm)`` with the residual norm
    ``(E sum_n |Z_n - h*_n|_q^q)^(1/q)``.
    """
    if not wp.exact:
        raise ProjectionError("the L^q predictable projection is only defined on exact lattices")
    if not q >= 1.0 or not np.isfinite(q):
        raise ProjectionError(f"q must be finite and >= 1, got {q}")
    Z = _check(wp, field)
    h = np.empty_like(Z)
    w = wp.weights
    for n in range(1, wp.N + 1):
        _, inv = np.unique(wp.node_ids[:, n - 1], return_inverse=True)
        G = inv.max() + 1
        for i in range(wp.d):
            z = Z[:, n - 1, i]
            lo = np.full(G, np.inf)
            hi = np.full(G, -np.inf)
            np.minimum.at(lo, inv, z)
            np.maximum.at(hi, inv, z)
            width0 = np.maximum(hi - lo, 0.0)
            for _ in range(max_iter):
                mid = 0.5 * (lo + hi)
                r = z - mid[inv]
                g = np.bincount(inv, weights=w * np.sign(r) * np.abs(r) ** (q - 1.0), minlength=G)
                up = g > 0
                lo = np.where(up, mid, lo)
                hi = np.where(up, hi, mid)
                if np.all(hi - lo <= tol * np.maximum(1.0, width0)):
                    break
            else:
                bad = np.flatnonzero(hi - lo > tol * np.maximum(1.0, width0))
                raise ProjectionError(f"bisection did not converge at n={n}, nodes {bad[:5]}")
            h[:, n - 1, i] = (0.5 * (lo + hi))[inv]
    resid = np.sum(w * np.sum(np.abs(Z - h) ** q, axis=(1, 2))) ** (1.0 / q)
    return h, float(resid)
