"""Estimator-style wrappers: configure once, ``fit`` on a reference model."""

from __future__ import annotations

from sklearn.base import BaseEstimator

from .continuous import upsilon_hyperbolic, upsilon_mart_parabolic
from .core import CostSpec
from .discrete import upsilon, upsilon_mart
from .payoffs import SigmaSpec, UtilitySpec
from .penalty import Penalty


class _SensitivityEstimator(BaseEstimator):
    def _store(self, rep):
        self.report_ = rep
        self.upsilon_ = rep.upsilon
        self.r_norm_ = rep.r_norm
        return self

    def score(self, X=None, y=None):
        return self.upsilon_


class UpsilonEstimator(_SensitivityEstimator):
    """Unconstrained discrete-time sensitivity; ``fit(model)`` sets ``upsilon_``."""

    def __init__(self, payoff=None, p=2.0, penalty=None, martingale=False, backend="auto",
                 basis=None, n_boot=200, seed=0):
        self.payoff = payoff
        self.p = p
        self.penalty = penalty
        self.martingale = martingale
        self.backend = backend
        self.basis = basis
        self.n_boot = n_boot
        self.seed = seed

    def fit(self, X, y=None):
        fn = upsilon_mart if self.martingale else upsilon
        rep = fn(X, self.payoff, CostSpec(self.p), self.penalty or Penalty.indicator(),
                 backend=self.backend, basis=self.basis, n_boot=self.n_boot, seed=self.seed)
        return self._store(rep)


class MartingaleUpsilonEstimator(UpsilonEstimator):
    def __init__(self, payoff=None, p=2.0, penalty=None, martingale=True, backend="auto",
                 basis=None, n_boot=200, seed=0):
        super().__init__(payoff, p, penalty, martingale, backend, basis, n_boot, seed)


class HyperbolicUpsilonEstimator(_SensitivityEstimator):
    def __init__(self, payoff=None, p=2.0, penalty=None, backend="auto", basis=None,
                 n_boot=200, seed=0):
        self.payoff = payoff
        self.p = p
        self.penalty = penalty
        self.backend = backend
        self.basis = basis
        self.n_boot = n_boot
        self.seed = seed

    def fit(self, X, y=None):
        rep = upsilon_hyperbolic(X, self.payoff, self.p, self.penalty or Penalty.indicator(),
                                 backend=self.backend, basis=self.basis, n_boot=self.n_boot,
                                 seed=self.seed)
        return self._store(rep)


class ParabolicUpsilonEstimator(_SensitivityEstimator):
    def __init__(self, sigma=None, utility=None, penalty=None, basis=None, n_boot=200, seed=0):
        self.sigma = sigma
        self.utility = utility
        self.penalty = penalty
        self.basis = basis
        self.n_boot = n_boot
        self.seed = seed

    def fit(self, X, y=None):
        rep = upsilon_mart_parabolic(X, self.sigma or SigmaSpec.constant(0.2),
                                     self.utility or UtilitySpec.quad(),
                                     self.penalty or Penalty.indicator(), basis=self.basis,
                                     n_boot=self.n_boot, seed=self.seed)
        return self._store(rep)
