"""Epsilon-skew Huber M-estimation of location, scale, skewness and regression coefficients."""

__version__ = "0.1.0"

from .asymptotics import (AsymptoticReport, asymptotic_cov, asymptotic_report, expected_rho,
                          expected_scores, ges, influence_function, matrix_a, matrix_b,
                          uniqueness_minors, variance_table)
from .distributions import (MixtureSpec, SkewFamilyParams, aic_bic, contaminated_esn, fit_ml,
                            log_density, loglik_esh, sample, sample_mixture)
from .exceptions import (DegenerateResidualError, DegenerateSampleError, ESHError,
                         InvalidParamsError, NumericalError, RankDeficiencyError,
                         SingularMatrixError)
from .loss import HuberParams, LossParams, psi_esh, psi_huber, rho_esh, rho_huber, weight_esh
from .montecarlo import SimulationConfig, SimulationReport, emit_table, run_simulation
from .regression import (RegressionData, RegressionFit, fit_regression, fit_regression_ml,
                         generate_regression_sample)
from .univariate import (FitConfig, UnivariateFit, fit_huber_location_scale, fit_univariate,
                         objective_q)
