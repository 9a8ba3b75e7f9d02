"""plcopula: scalable rank-based Bayesian nonparametric regression.

A regression model is assembled from three independently fitted pieces: a
nonparametric posterior for the response marginal (Polya tree, Dirichlet
process mixture, empirical CDF, or Bayesian bootstrap), a Plackett-Luce
ranking factor for the covariate effect (Newton MAP with a Laplace
posterior), and the empirical covariate distribution. The composition yields
conditional CDFs/densities, posterior predictive draws, HPD regions, and
calibration diagnostics, and the ranking factor alone scales to millions of
rows.
"""

from .conditional import (ConditionalModel, DPMFitSpec, LatentMixtureCDF,
                          copula_eval, copula_sample, fit_composite,
                          load_model, pairwise_prob, save_model)
from .dataset import (ColumnSpec, OrderIndex, RegressionDataset, TableSchema,
                      build_order, encode_design, encode_rows,
                      read_csv_columns, read_schema, write_csv_columns,
                      write_schema)
from .dpm import (DPMMarginal, DPMSpec, DPMState, dpm_draw_marginal_sample,
                  dpm_gibbs_fit, dpm_predictive_cdf, dpm_predictive_density,
                  dpm_predictive_inverse_cdf, dpm_prior_predictive_density)
from .empirical import (EmpiricalMarginal, draw_bootstrap_weights,
                        ecdf_inverse)
from .errors import (ConfigError, ConvergenceError, DataError,
                     DegeneratePosteriorError, NumericError, PLCopulaError,
                     UnknownLevelError, UnsupportedDensityError)
from .plackett_luce import (GaussianPrior, PLPosterior, RateFunction,
                            fit_map, mh_refine, pl_grad_hess,
                            pl_log_likelihood, rank_coefficients,
                            sign_probability)
from .polya_tree import (GaussianBase, LaplaceBase, PolyaTreePosterior,
                         PolyaTreeSpec, pt_mean_cdf, pt_mean_density,
                         pt_mean_inverse_cdf, pt_merge, pt_sample_inverse_cdf,
                         pt_sample_marginal, pt_update, read_polya_tree,
                         write_polya_tree)
from .predictive import (HPDRegion, PosteriorConditional, PredictiveDraws,
                         forward_simulate, hpd_region, ks_uniform, pit_values,
                         predict_draws)
from .simulate import (GaussianMixture, MIXTURE3, SpikedLognormal,
                       gen_census_like, gen_linear_gaussian, gen_mixture3)

__version__ = "0.1.0"
