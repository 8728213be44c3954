# Models package
from .dataset import Dataset, LabelColumn, LabelKind, LabelSpec, LabelSupport, TrialStructure
from .flows import DecoderParams, GinBlockParams, decoder_forward, decoder_left_inverse
from .priors import GaussParams, LabelPrior, check_conditions, prior_log_prob
from .recognition import EncoderParams, encode, posterior_product
from .pivae import ModelArch, PiVaeParams, elbo, init_pivae, kl_diag_gaussians, poisson_log_lik
from .checkpoint import Checkpoint, TrainingHistory

__all__ = [
    'Dataset', 'LabelColumn', 'LabelKind', 'LabelSpec', 'LabelSupport', 'TrialStructure',
    'DecoderParams', 'GinBlockParams', 'decoder_forward', 'decoder_left_inverse',
    'GaussParams', 'LabelPrior', 'check_conditions', 'prior_log_prob',
    'EncoderParams', 'encode', 'posterior_product',
    'ModelArch', 'PiVaeParams', 'elbo', 'init_pivae', 'kl_diag_gaussians', 'poisson_log_lik',
    'Checkpoint', 'TrainingHistory',
]
