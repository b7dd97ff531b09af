"""Brute-force DRO values over adapted Monge perturbations of small lattices.

The decision variable is an adapted increment field ``Phi`` (``Phi_n`` a
function of the depth-``n`` node) and the perturbed model is the law of
``X + cumsum(Phi)``. Maximizing ``E f(X + cumsum Phi) - L_delta(E[c]^(1/p))``
by projected gradient ascent gives a lower bound on ``V(delta)``; its slope in
``delta`` is compared with the first-order sensitivity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CostSpec, LatticeModel, ModelError, WeightedPaths, check_martingale, \
    enumerate_paths
from .discrete import AdversarialResult, adversarial_map, coupling_cost_audit, upsilon, \
    upsilon_mart
from .malliavin import Payoff, discrete_malliavin
from .penalty import Penalty
from .projection import exact_projection

__all__ = ["OracleResult", "brute_force_value", "slope_check", "perturbed_model",
           "coupling_cost_audit"]

ARMIJO_C = 1e-4
MAX_NODES = 1000


class OracleError(RuntimeError):
    pass


@dataclass
class OracleResult:
    value: float
    base_value: float
    field: np.ndarray
    cost: float
    starts: list = field(default_factory=list)


class _Problem:
    def __init__(self, wp: WeightedPaths, f: Payoff, spec: CostSpec, L: Penalty, delta: float,
                 constrained: bool):
        self.wp, self.f, self.spec, self.L = wp, f, spec, L
        self.delta, self.constrained = delta, constrained
        self.factor = spec.factor(wp.N) if spec.scaling == "hyperbolic" else 1.0
        self.budget = (L.rho * delta) ** spec.p if L.family == "indicator" else None
        self.base = float(wp.expect(f(wp.paths, wp.time_grid)))

    def feasible(self, phi):
        phi = exact_projection(self.wp, phi, "optional")
        if self.constrained:
            phi = phi - exact_projection(self.wp, phi, "predictable")
        if self.budget is not None:
            c = self.cost(phi)
            if c > self.budget:
                phi = phi * (self.budget / c) ** (1.0 / self.spec.p)
        return phi

    def cost(self, phi):
        return float(self.factor * self.wp.expect(np.sum(np.abs(phi) ** self.spec.p, axis=(1, 2))))

    def perturbed(self, phi):
        Y = self.wp.paths.copy()
        Y[:, 1:] += np.cumsum(phi, axis=1)
        return Y

    def objective(self, phi):
        gain = float(self.wp.expect(self.f(self.perturbed(phi), self.wp.time_grid)))
        if self.budget is not None:
            return gain
        if self.delta == 0:
            return gain if not np.any(phi) else -np.inf
        s = self.cost(phi) ** (1.0 / self.spec.p)
        return gain - self.delta * float(self.L(s / self.delta))

    def gradient(self, phi):
        """Ascent direction in the probability-weighted L2 geometry of node fields."""
        D = discrete_malliavin(self.f, self.perturbed(phi), self.wp.time_grid)
        g = exact_projection(self.wp, D, "optional")
        if self.budget is None:
            p = self.spec.p
            c = self.cost(phi)
            if c > 0:
                s = c ** (1.0 / p)
                dL = float(self.L.derivative(s / self.delta))
                g = g - dL * self.factor * c ** (1.0 / p - 1.0) * np.sign(phi) * np.abs(phi) ** (p - 1)
        if self.constrained:
            g = g - exact_projection(self.wp, g, "predictable")
        return g

    def inner(self, a, b):
        return float(self.wp.expect(np.sum(a * b, axis=(1, 2))))


def _ascent(prob: _Problem, phi, max_iter, tol):
    phi = prob.feasible(phi)
    val = prob.objective(phi)
    step = 1.0
    for _ in range(max_iter):
        g = prob.gradient(phi)
        gn = np.sqrt(max(prob.inner(g, g), 0.0))
        if gn <= tol:
            break
        scale = prob.delta if prob.delta > 0 else 1.0
        step = min(step * 4.0, 1.0)
        improved = False
        for _ in range(50):
            cand = prob.feasible(phi + step * scale * g / gn)
            cval = prob.objective(cand)
            if cval >= val + ARMIJO_C * prob.inner(g, cand - phi) and cval > val:
                improved = True
                break
            step *= 0.5
        if not improved:
            break
        gain = cval - val
        phi, val = cand, cval
        if gain <= tol * max(1.0, abs(val)):
            break
    return phi, val


def _random_field(prob: _Problem, rng):
    wp = prob.wp
    phi = rng.standard_normal((wp.n_paths, wp.N, wp.d))
    phi = prob.feasible(phi)
    target = prob.budget if prob.budget is not None else (0.5 * prob.delta) ** prob.spec.p
    c = prob.cost(phi)
    return phi * (target / c) ** (1.0 / prob.spec.p) if c > 0 else phi


def brute_force_value(model, f: Payoff, spec: CostSpec = CostSpec(),
                      L: Penalty = Penalty.indicator(), delta: float = 0.1,
                      constrained: bool = False, n_starts: int = 8, seed: int = 0,
                      max_iter: int = 300, tol: float = 1e-13) -> OracleResult:
    """Best value of ``E f(X + cumsum Phi) - L_delta(E[c]^(1/p))`` over adapted ``Phi``.

    Starts are the first-order adversarial field, zero and random adapted
    fields; the best local maximum is returned. The result is a lower bound
    on the DRO value restricted to Monge perturbations.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    if isinstance(model, LatticeModel):
        if model.n_nodes > MAX_NODES:
            raise OracleError(f"lattice has {model.n_nodes} nodes, above the {MAX_NODES} limit")
        if constrained and not check_martingale(model)[0]:
            raise ModelError("constrained oracle needs a martingale lattice")
    wp = enumerate_paths(model) if isinstance(model, LatticeModel) else model
    if not wp.exact:
        raise OracleError("the oracle works on exact lattices only")
    prob = _Problem(wp, f, spec, L, delta, constrained)
    zero = np.zeros((wp.n_paths, wp.N, wp.d))
    if delta == 0:
        return OracleResult(prob.base, prob.base, zero, 0.0, [prob.base])
    rng = np.random.default_rng(seed)
    starts = []
    warm = adversarial_map(model, f, spec, L, delta=delta, constrained=constrained)
    starts.append(warm.increments[:, 1:, :])
    starts.append(zero)
    while len(starts) < n_starts:
        starts.append(_random_field(prob, rng))
    best_phi, best_val, vals = zero, prob.objective(zero), []
    for phi0 in starts:
        phi, val = _ascent(prob, phi0, max_iter, tol)
        vals.append(val)
        if val > best_val:
            best_phi, best_val = phi, val
    return OracleResult(best_val, prob.base, best_phi, prob.cost(best_phi), vals)


def perturbed_model(model, result: OracleResult) -> WeightedPaths:
    """The perturbed paths of an oracle optimum, keeping lattice node identifiers."""
    wp = enumerate_paths(model) if isinstance(model, LatticeModel) else model
    Y = wp.paths.copy()
    Y[:, 1:] += np.cumsum(result.field, axis=1)
    return wp.with_paths(Y)


def slope_check(model, f: Payoff, spec: CostSpec = CostSpec(), L: Penalty = Penalty.indicator(),
                deltas=(0.1, 0.05, 0.025, 0.0125), constrained: bool = False,
                n_starts: int = 8, seed: int = 0, rtol: float = 0.05, atol: float = 1e-6):
    """Fit ``V(delta) - V(0) ~ s delta + c delta^2`` and compare ``s`` with the sensitivity.

    Returns ``(slope, report)``; ``report["passed"]`` is the verdict and
    ``report["rows"]`` the per-delta table.
    """
    deltas = np.asarray(sorted(deltas), dtype=float)
    sens = (upsilon_mart if constrained else upsilon)(model, f, spec, L)
    rows, gains = [], []
    for d in deltas:
        res = brute_force_value(model, f, spec, L, float(d), constrained, n_starts, seed)
        warm = adversarial_map(model, f, spec, L, delta=float(d), constrained=constrained)
        gains.append(res.value - res.base_value)
        first = warm.gain - (float(d) * float(L(warm.u)) if L.family != "indicator" else 0.0)
        rows.append({"delta": float(d), "v_hat": res.value, "gain": res.value - res.base_value,
                     "first_order_gain": first, "cost": res.cost})
    gains = np.asarray(gains)
    A = np.column_stack([deltas, deltas**2])
    (s, c), *_ = np.linalg.lstsq(A, gains, rcond=None)
    target = sens.upsilon
    err = abs(s - target)
    monotone = bool(np.all(np.diff(gains) >= -1e-12)) if L.family == "indicator" else True
    report = {
        "slope": float(s),
        "curvature": float(c),
        "upsilon": float(target),
        "kind": sens.kind,
        "abs_error": float(err),
        "rel_error": float(err / target) if target > 0 else float("nan"),
        "passed": bool(err <= max(rtol * target, atol)),
        "monotone": monotone,
        "rows": rows,
    }
    return float(s), report
