"""Inequality audits from deterioration indices and allocation-deterioration curves."""

__version__ = "0.1.0"

from .cohort import (Cohort, Direction, MeasurementSpec, PatientRecord, derive_normalised_mm, load_cohort,
                     load_specs, split_by_group)
from .curve import ADCurve, AUCResult, CurveParams, auc, build_curve
from .density import (DensityModel, TailProbability, adjust_left_boundary, adjust_right_boundary, fit_density,
                      select_bandwidth, tail_probability)
from .deterioration import (DeteriorationConfig, DeteriorationValue, Variant, empirical_index, k_step_index,
                            one_cutoff_index)
from .errors import DAIndexError, DegeneracyError, InsufficientDataError, ParseError, ValidationError
from .inequality import InequalityReport, dataset_inequality, inequality_from_curves, model_inequality
from .stats import MultiRunSummary, spearman, summarize_runs
