"""Continuous-time sensitivities on discretized path ensembles.

Hyperbolic scaling reuses the discrete machinery with time-weighted norms
``r^q = sum_k dt_k E|o D_{t_k} f|^q``. Parabolic scaling handles payoffs
``U(int sigma(t, X_t) dX_t)`` through the per-time integrand ``phi``.
"""

from __future__ import annotations

import numpy as np

from .core import CostSpec, ModelError, WeightedPaths, sample_brownian
from .discrete import SensitivityReport, _bootstrap_r, as_paths, upsilon
from .malliavin import Payoff
from .payoffs import SigmaSpec, UtilitySpec
from .penalty import Penalty
from .projection import exact_projection, regression_projection

__all__ = ["upsilon_hyperbolic", "phi_parabolic", "upsilon_mart_parabolic",
           "closed_form_reference", "nested_phi", "SigmaSpec", "UtilitySpec"]


def _coarsen(wp: WeightedPaths) -> WeightedPaths:
    keep = np.arange(0, wp.N + 1, 2)
    return WeightedPaths(wp.paths[:, keep], wp.weights, wp.time_grid[keep], None, wp.seed,
                         wp.is_martingale)


def upsilon_hyperbolic(model, f: Payoff, p: float = 2.0, L: Penalty = Penalty.indicator(),
                       backend: str = "auto", basis=None, n_boot: int = 200, seed: int = 0,
                       refine_check: bool = True) -> SensitivityReport:
    """``L*(||o D f||)`` with the time-integrated norm of the hyperbolic limit.

    With ``refine_check`` and an even number of steps, the estimate is
    repeated on every other grid point and the difference is reported.
    """
    wp = as_paths(model)
    spec = CostSpec(p, "hyperbolic", wp.T)
    rep = upsilon(wp, f, spec, L, backend=backend, basis=basis, n_boot=n_boot, seed=seed)
    rep.kind = "upsilon_hyperbolic"
    if refine_check and wp.N % 2 == 0 and wp.N >= 4 and not wp.exact:
        coarse = upsilon(_coarsen(wp), f, spec, L, backend=backend, basis=basis, n_boot=0)
        rep.diagnostics["coarse_upsilon"] = coarse.upsilon
        rep.diagnostics["grid_difference"] = rep.upsilon - coarse.upsilon
    return rep


def _tail(values):
    """``out[:, k] = sum_{j > k} values[:, j]``."""
    rev = np.cumsum(values[:, ::-1], axis=1)[:, ::-1]
    out = np.zeros_like(values)
    out[:, :-1] = rev[:, 1:]
    return out


def _ito_parts(x, t, sigma: SigmaSpec):
    s = sigma.value(t[None, :-1], x[:, :-1])
    ds = sigma.dx(t[None, :-1], x[:, :-1])
    dss = sigma.dxx(t[None, :-1], x[:, :-1])
    dx = np.diff(x, axis=1)
    if not (np.isfinite(s).all() and np.isfinite(ds).all() and np.isfinite(dss).all()):
        raise ModelError("sigma or its partials produced non-finite values")
    return s, ds, dss, dx


def parabolic_integrand(x, t, sigma: SigmaSpec, U: UtilitySpec):
    """Unprojected integrand ``U''(H) A_k^2 + U'(H) B_k`` for each path and ``k < N``.

    ``H`` is the left-point Ito sum, ``A_k = sigma_k + sum_{j>k} sigma_x(j) dX_{j+1}``
    and ``B_k = sum_{j>k} sigma_xx(j) dX_{j+1}``.
    """
    s, ds, dss, dx = _ito_parts(x, t, sigma)
    H = np.sum(s * dx, axis=1)
    A = s + _tail(ds * dx)
    B = _tail(dss * dx)
    return U.d2U(H)[:, None] * A**2 + U.dU(H)[:, None] * B


def _running_ito(sigma, t):
    def extra(paths, m):
        x = paths[:, : m + 1, 0]
        if m == 0:
            return np.zeros((paths.shape[0], 1))
        s = sigma.value(t[None, :m], x[:, :m])
        return np.sum(s * np.diff(x, axis=1), axis=1)[:, None]

    return extra


def phi_parabolic(model, sigma: SigmaSpec, U: UtilitySpec, basis=None):
    """``(phi, raw)``, both ``(P, N)``; ``phi[:, k]`` is the projection of
    ``raw[:, k]`` on the information at ``t_k`` (state and running Ito integral).
    """
    wp = as_paths(model)
    if wp.d != 1:
        raise ModelError("parabolic sensitivities are implemented for d = 1")
    raw = parabolic_integrand(wp.paths[:, :, 0], wp.time_grid, sigma, U)
    if not np.isfinite(raw).all():
        raise ModelError("non-finite parabolic integrand")
    if wp.exact:
        phi = exact_projection(wp, raw, "predictable")[:, :, 0]
    else:
        phi = regression_projection(wp, raw, "predictable", basis or "poly:3:state",
                                    extra=_running_ito(sigma, wp.time_grid))[:, :, 0]
    return phi, raw


def upsilon_mart_parabolic(model, sigma: SigmaSpec, U: UtilitySpec,
                           L: Penalty = Penalty.indicator(), basis=None, n_boot: int = 200,
                           seed: int = 0) -> SensitivityReport:
    """``L*(E[sum_k dt_k phi_k^2]^(1/2))``."""
    wp = as_paths(model)
    phi, raw = phi_parabolic(wp, sigma, U, basis)
    dt = np.diff(wp.time_grid)
    per_time = dt * wp.expect(phi**2)
    r = float(np.sqrt(per_time.sum()))
    diag = {"backend": "exact" if wp.exact else "regression", "n_paths": wp.n_paths, "N": wp.N,
            "sigma": sigma.name, "utility": U.name, "growth": L.validate_growth(2.0)[0],
            "phi_mean": wp.expect(phi).tolist()}
    if not wp.exact and n_boot:
        diag["r_norm_se"] = _bootstrap_r((phi**2) @ dt, 2.0, n_boot, seed)
    return SensitivityReport(upsilon=float(L.conjugate(r)), r_norm=r, u_star=L.optimal_u(r),
                             q=2.0, per_time_contribution=per_time,
                             kind="upsilon_mart_parabolic", diagnostics=diag)


def nested_phi(path, t, k: int, sigma: SigmaSpec, U: UtilitySpec, M: int = 20000,
               seed: int = 0) -> float:
    """Inner Monte Carlo estimate of ``E[raw_k | X_0..X_k = path[:k+1]]`` under Brownian motion."""
    path = np.asarray(path, dtype=float).reshape(-1)
    t = np.asarray(t, dtype=float)
    N = len(t) - 1
    inner = sample_brownian(t[-1] - t[k], N - k, 1, M, seed)
    scale = np.sqrt(np.diff(t[k:]) / np.diff(inner.time_grid))
    future = path[k] + np.cumsum(np.diff(inner.paths[:, :, 0], axis=1) * scale, axis=1)
    x = np.hstack([np.broadcast_to(path[: k + 1], (M, k + 1)), future])
    return float(parabolic_integrand(x, t, sigma, U)[:, k].mean())


def closed_form_reference(case: str, **params) -> float:
    """Closed-form sensitivities under the unit indicator penalty.

    ``merton`` (``lam``, ``T``): ``lam sqrt(T)``; ``logcontract`` (``sigma``, ``T``):
    ``sigma^2 sqrt(T)``; ``quadvar`` (``T``): ``sqrt(T)``.
    """
    T = float(params.get("T", 1.0))
    if case == "merton":
        return float(params.get("lam", 0.5)) * np.sqrt(T)
    if case == "logcontract":
        return float(params.get("sigma", 0.2)) ** 2 * np.sqrt(T)
    if case == "quadvar":
        return float(np.sqrt(T))
    raise ValueError(f"unknown closed-form case {case!r}")
