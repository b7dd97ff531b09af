"""First-order sensitivities of adapted Wasserstein DRO in discrete time.

``upsilon`` is ``L*(||o D f||_q)`` and ``upsilon_mart`` replaces the optional
projection by its distance to the best predictable field, which for ``p = 2``
is the predictable projection. ``adversarial_map`` builds the first-order
optimal Monge perturbation ``x -> x + u delta cumsum(Phi) / r^(q/p)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CostSpec, LatticeModel, ModelError, WeightedPaths, check_martingale, \
    cost_cn, enumerate_paths
from .malliavin import Payoff, atom_mass, discrete_malliavin
from .penalty import Penalty
from .projection import lq_predictable_projection, optional_projection, predictable_projection


@dataclass
class SensitivityReport:
    """Sensitivity value with its ingredients.

    ``per_time_contribution[n - 1]`` is ``w_n E|Z_n|_*^q`` so that
    ``r_norm ** q == per_time_contribution.sum()``.
    """

    upsilon: float
    r_norm: float
    u_star: float
    q: float
    per_time_contribution: np.ndarray
    kind: str = "upsilon"
    adversarial_field: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "upsilon": float(self.upsilon),
            "r_norm": float(self.r_norm),
            "u_star": float(self.u_star),
            "q": float(self.q),
            "per_time_contribution": [float(c) for c in self.per_time_contribution],
            "diagnostics": _jsonable(self.diagnostics),
        }


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def as_paths(model) -> WeightedPaths:
    if isinstance(model, LatticeModel):
        return enumerate_paths(model)
    if isinstance(model, WeightedPaths):
        return model
    raise ModelError(f"expected a LatticeModel or WeightedPaths, got {type(model).__name__}")


def v_map(e, q: float):
    """Componentwise ``e_i |e_i|^(q-2)``, continuous at 0."""
    if not q > 1:
        raise ValueError("q must exceed 1")
    e = np.asarray(e, dtype=float)
    return np.sign(e) * np.abs(e) ** (q - 1.0)


def _bootstrap_r(contrib, q, n_boot, seed):
    rng = np.random.default_rng(seed)
    M = len(contrib)
    means = np.array([contrib[rng.integers(0, M, M)].mean() for _ in range(n_boot)])
    return float(np.std(means**(1.0 / q), ddof=1))


def _report(wp, Z, spec, L, kind, n_boot, seed, diagnostics):
    q = spec.q
    w = spec.time_weights(wp.time_grid)
    norms = np.sum(np.abs(Z) ** q, axis=2)                   # (P, N)
    per_time = w * wp.expect(norms)
    r = float(per_time.sum() ** (1.0 / q))
    diagnostics = dict(diagnostics)
    diagnostics["growth"] = L.validate_growth(spec.p)[0]
    if not wp.exact and n_boot:
        diagnostics["r_norm_se"] = _bootstrap_r(norms @ w, q, n_boot, seed)
    return SensitivityReport(
        upsilon=float(L.conjugate(r)),
        r_norm=r,
        u_star=L.optimal_u(r),
        q=q,
        per_time_contribution=per_time,
        kind=kind,
        diagnostics=diagnostics,
    )


def upsilon(model, f: Payoff, spec: CostSpec = CostSpec(), L: Penalty = Penalty.indicator(),
            backend: str = "auto", basis=None, n_boot: int = 200, seed: int = 0,
            keep_field: bool = False) -> SensitivityReport:
    """Unconstrained sensitivity ``L*(||o D f||_{L^q})``.

    Exact on lattices; on ensembles the optional projection is a regression
    and the report carries a bootstrap standard error of ``r_norm``.
    """
    wp = as_paths(model)
    D = discrete_malliavin(f, wp.paths, wp.time_grid, backend=backend)
    Z = optional_projection(wp, D, basis)
    diag = {"backend": "exact" if wp.exact else "regression", "malliavin": backend,
            "atom_mass": atom_mass(f, wp), "n_paths": wp.n_paths, "N": wp.N}
    rep = _report(wp, Z, spec, L, "upsilon", n_boot, seed, diag)
    if keep_field:
        rep.adversarial_field = v_map(Z, spec.q)
    return rep


def _require_martingale(wp, model):
    if isinstance(model, LatticeModel):
        ok, worst = check_martingale(model)
    elif wp.exact:
        ok, worst = check_martingale(wp)
    else:
        ok, worst = bool(wp.is_martingale), float("nan")
    if not ok:
        raise ModelError(f"reference model is not a martingale (worst drift {worst:.3g})")


def martingale_residual(wp: WeightedPaths, Z, q: float, basis=None):
    """``(Z - h*, h*)`` with ``h*`` the L^q predictable projection of ``Z``."""
    if q == 2.0:
        h = predictable_projection(wp, Z, basis)
    else:
        if not wp.exact:
            raise ModelError("p != 2 martingale sensitivities need an exact lattice")
        h, _ = lq_predictable_projection(wp, Z, q)
    return Z - h, h


def upsilon_mart(model, f: Payoff, spec: CostSpec = CostSpec(), L: Penalty = Penalty.indicator(),
                 backend: str = "auto", basis=None, n_boot: int = 200, seed: int = 0,
                 keep_field: bool = False) -> SensitivityReport:
    """Martingale-constrained sensitivity ``L*(inf_h ||o D f - h||_{L^q})``."""
    wp = as_paths(model)
    _require_martingale(wp, model)
    D = discrete_malliavin(f, wp.paths, wp.time_grid, backend=backend)
    Z = optional_projection(wp, D, basis)
    R, _ = martingale_residual(wp, Z, spec.q, basis)
    diag = {"backend": "exact" if wp.exact else "regression", "malliavin": backend,
            "atom_mass": atom_mass(f, wp), "n_paths": wp.n_paths, "N": wp.N,
            "projection": "predictable" if spec.q == 2.0 else f"L^{spec.q:g} predictable"}
    rep = _report(wp, R, spec, L, "upsilon_mart", n_boot, seed, diag)
    if keep_field:
        rep.adversarial_field = v_map(R, spec.q)
    return rep


@dataclass
class AdversarialResult:
    perturbed: WeightedPaths
    increments: np.ndarray
    cost: float
    gain: float
    r_norm: float
    u: float
    delta: float


def adversarial_map(model, f: Payoff, spec: CostSpec = CostSpec(), L: Penalty = Penalty.indicator(),
                    delta: float = 0.1, constrained: bool = False, backend: str = "auto",
                    basis=None) -> AdversarialResult:
    """Push the reference paths along the first-order optimal perturbation.

    Every path ``x`` is mapped to ``x + u delta cumsum(w Phi(x)) / r^(q/p)``
    with ``Phi = v(o D f - h*)`` (``h* = 0`` when unconstrained), so the
    expected cost equals ``(u delta)^p``. The weights keep node identifiers,
    so on lattices the result is again an exact tree.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    wp = as_paths(model)
    D = discrete_malliavin(f, wp.paths, wp.time_grid, backend=backend)
    Z = optional_projection(wp, D, basis)
    if constrained:
        _require_martingale(wp, model)
        Z, _ = martingale_residual(wp, Z, spec.q, basis)
    q, p = spec.q, spec.p
    w = spec.time_weights(wp.time_grid)
    r = float(np.sum(w * wp.expect(np.sum(np.abs(Z) ** q, axis=2))) ** (1.0 / q))
    if r <= 1e-13 * (1.0 + float(np.max(np.abs(D)))):
        zeros = np.zeros_like(wp.paths)
        return AdversarialResult(wp.with_paths(wp.paths.copy()), zeros, 0.0, 0.0, 0.0, 0.0, delta)
    u = L.optimal_u(r)
    dy = np.zeros_like(wp.paths)
    dy[:, 1:, :] = u * delta * w[None, :, None] * v_map(Z, q) / r ** (q / p)
    Y = wp.paths + np.cumsum(dy, axis=1)
    spec_full = CostSpec(p, spec.scaling, wp.T) if spec.scaling == "hyperbolic" else spec
    cost = float(wp.expect(cost_cn(wp.paths, Y, spec_full)))
    gain = float(wp.expect(f(Y, wp.time_grid) - f(wp.paths, wp.time_grid)))
    pert = wp.with_paths(Y)
    pert.is_martingale = constrained and wp.is_martingale
    return AdversarialResult(pert, dy, cost, gain, r, u, delta)


def coupling_cost_audit(result: AdversarialResult, spec: CostSpec, L: Penalty,
                        budget_u: float | None = None, rtol: float = 1e-9) -> bool:
    """Check ``E[c(X, Y)] <= (u delta)^p (1 + rtol)`` for a constructed coupling."""
    if budget_u is not None:
        u = budget_u
    else:
        u = L.optimal_u(result.r_norm) if result.r_norm > 0 else 0.0
    bound = (u * result.delta) ** spec.p
    return bool(result.cost <= bound * (1.0 + rtol) + 1e-300)
