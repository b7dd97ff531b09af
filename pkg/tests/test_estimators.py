import numpy as np
import pytest
from sklearn.base import clone

from dro_sens.core import random_walk, sample_brownian
from dro_sens.estimators import (HyperbolicUpsilonEstimator, MartingaleUpsilonEstimator,
                                 ParabolicUpsilonEstimator, UpsilonEstimator)
from dro_sens.discrete import upsilon, upsilon_mart
from dro_sens.payoffs import SigmaSpec, asian, merton
from dro_sens.penalty import Penalty


def test_discrete_estimators_match_functions():
    model = random_walk(5)
    est = UpsilonEstimator(payoff=asian(0.3)).fit(model)
    assert est.upsilon_ == upsilon(model, asian(0.3)).upsilon
    mart = MartingaleUpsilonEstimator(payoff=asian(0.3)).fit(model)
    assert mart.upsilon_ == upsilon_mart(model, asian(0.3)).upsilon
    assert mart.score() == mart.upsilon_


def test_params_and_clone():
    est = UpsilonEstimator(payoff=asian(0.0), p=3.0, penalty=Penalty.power(4.0))
    params = est.get_params()
    assert params["p"] == 3.0 and params["penalty"] == Penalty.power(4.0)
    c = clone(est).set_params(p=1.5)
    assert c.p == 1.5 and est.p == 3.0


def test_continuous_estimators():
    wp = sample_brownian(1.0, 16, 1, 3000, seed=0)
    assert HyperbolicUpsilonEstimator(payoff=merton(0.5)).fit(wp).upsilon_ == pytest.approx(0.5)
    par = ParabolicUpsilonEstimator(sigma=SigmaSpec.constant(0.2), n_boot=0).fit(wp)
    assert par.upsilon_ == pytest.approx(0.04)
    assert par.report_.kind == "upsilon_mart_parabolic"
