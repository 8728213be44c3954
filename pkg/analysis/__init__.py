# Analysis package
from .alignment import AlignmentReport, align_latents
from .psth import PsthReport, psth_and_rmse
from .tuning import (TuningBaseline, baseline_decode, baseline_log_lik, decoding_accuracy, fit_tuning_baseline,
                     median_abs_error)
from .spectral import PsdReport, residual_psd, trial_residual_psd
from .geometry import BranchDistances, branch_distance_matrix
from .summary_generator import SummaryGenerator, format_summary

__all__ = [
    'AlignmentReport', 'align_latents',
    'PsthReport', 'psth_and_rmse',
    'TuningBaseline', 'baseline_decode', 'baseline_log_lik', 'decoding_accuracy', 'fit_tuning_baseline',
    'median_abs_error',
    'PsdReport', 'residual_psd', 'trial_residual_psd',
    'BranchDistances', 'branch_distance_matrix',
    'SummaryGenerator', 'format_summary',
]
