# Engine package
# Orchestration modules (trainer, simulator, inference, checks) import models
# and are imported by full path; the package itself exposes ndmath.
from .ndmath import (Activation, AdamState, MlpParams, Tensor, adam_step, backward, concat, init_adam,
                     init_mlp, mlp_forward, tensor, training)

__all__ = ['Activation', 'AdamState', 'MlpParams', 'Tensor', 'adam_step', 'backward', 'concat', 'init_adam',
           'init_mlp', 'mlp_forward', 'tensor', 'training']
