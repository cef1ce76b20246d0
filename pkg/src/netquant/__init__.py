"""netquant: policy-specific quantiles and network quantile causal effects
under partial interference, with nonparametrically efficient estimation."""

from .errors import (ArgumentError, CapacityError, ConfigError,
                     DatasetValidationError, DegenerateOutcomeError, FitError,
                     NetquantError, OverlapError, PositivityError, SolverError,
                     VarianceError)
from .estimators import (EffectEstimate, EstimatorOptions, QuantileEstimate,
                         SmoothingSpec, bandwidth, build_nuisance, c_hat,
                         effects, eif_terms, ipw_quantile, ipw_quantile_crossfit,
                         np_quantile, np_quantile_from_nuisance)
from .inference import (BandResult, band_over_delta, band_over_q,
                        difference_band, pointwise_ci, uniform_band)
from .learners import GradientBoostingLearner, LogisticRegressionLearner, get_learner
from .nuisance import (CopulaFit, PropensityModel, cluster_ps, cluster_ps_table,
                       fit_cluster_propensity, fit_copula_rho, fit_individual_ps,
                       fit_threshold_regression)
from .policies import (ClusterPropensityView, PolicySpec, cond_eif_omega,
                       cond_eif_omega_t, policy_mass, policy_mass_table,
                       weight_w, weight_w_table)
from .records import (ClusterRecord, Dataset, EstimandKind, FoldPlan,
                      build_dataset, enumerate_treatment_vectors,
                      partition_folds, validate_clusters)
from .simulation import (DgpSpec, ReplicateConfig, TruthEntry, TruthOracle,
                         generate_study, replicate, truth_oracle)

__version__ = "0.1.0"
