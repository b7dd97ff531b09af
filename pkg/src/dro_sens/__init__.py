"""First-order sensitivities of (bi)causal Wasserstein DRO values."""

__version__ = "0.1.0"

from .core import (CostSpec, LatticeModel, ModelError, WeightedPaths, brownian_lattice,
                   check_martingale, cost_cn, cumulate, enumerate_paths, increment,
                   load_lattice, random_martingale_lattice, random_walk, sample_brownian,
                   sample_lattice, save_lattice)
from .malliavin import Payoff, PayoffError, bump_derivative, discrete_malliavin, \
    grid_malliavin_ct
from .projection import (RegressionProjector, lq_predictable_projection, optional_projection,
                         predictable_projection, regression_projection)
from .penalty import Penalty, parse_penalty
from .discrete import (SensitivityReport, adversarial_map, coupling_cost_audit, upsilon,
                       upsilon_mart, v_map)
from .continuous import (SigmaSpec, UtilitySpec, closed_form_reference, phi_parabolic,
                         upsilon_hyperbolic, upsilon_mart_parabolic)
from .oracle import brute_force_value, slope_check
from .estimators import (HyperbolicUpsilonEstimator, MartingaleUpsilonEstimator,
                         ParabolicUpsilonEstimator, UpsilonEstimator)
