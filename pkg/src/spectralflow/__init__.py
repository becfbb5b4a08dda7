"""Heat traces, spectral zeta functions and renormalization-group flows on model manifolds."""
from __future__ import annotations

from .errors import (AccuracyError, DomainError, ExtinctionError, FitError, InvalidInputError,
                     SpectralFlowError, StabilityError, UnsupportedManifoldError)
from .flow import (FlowState, RGStepReport, beta_a2, polyakov_identity_check, polyakov_potential,
                   rg_eigenvalue_step, ricci_flow_conformal_torus, ricci_flow_sphere)
from .heat import (HeatCoefficients, fit_heat_coefficients, heat_trace, mass_shift, seeley_dewitt,
                   anomaly_2d, anomaly_4d)
from .manifolds import (ConformalTorus, CurvatureData, FlatTorus, Product, RoundSphere, Spectrum,
                        conformal_torus_spectrum, curvature_invariants, parse_manifold, product_spectrum,
                        sphere_spectrum, torus_spectrum)
from .thermo import (HoloTrajectory, ThermoProfile, entropy_variation, holographic_flow,
                     rg_entropy_consistency, thermo_profile)
from .zeta import ZetaData, effective_action, log_det, zeta_analytic, zeta_continued, zeta_value

__version__ = "0.1.0"
