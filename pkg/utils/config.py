"""
Configuration - YAML package defaults overlaid with a user JSON document

Each section is a pydantic model; validation failures surface as ConfigError.
"""
import os
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, List, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from utils.errors import ConfigError

CONSTANTS_PATH = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'config', 'constants.yaml')
SEED_ENV_VAR = 'PIVAE_SEED'


@lru_cache(maxsize=1)
def load_constants() -> Dict[str, Any]:
    """Package defaults from config/constants.yaml"""
    with open(CONSTANTS_PATH, 'r', encoding='utf-8') as f:
        return yaml.safe_load(f)


def _defaults(section: str) -> Dict[str, Any]:
    return dict(load_constants().get(section, {}))


class TrainMode(str, Enum):
    """Which objective the model is trained with"""
    PI_VAE = "pi-vae"
    VANILLA = "vae"


class SynthMode(str, Enum):
    """Synthetic benchmark flavour"""
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)


class ArchitectureConfig(_Section):
    encoder_hidden: int = Field(ge=1)
    prior_hidden: int = Field(ge=1)
    coupling_depth: int = Field(ge=1)
    rate_floor: float = Field(gt=0)
    gin_blocks: int = Field(ge=1)


class AdamConfig(_Section):
    beta1: float = Field(ge=0, lt=1)
    beta2: float = Field(ge=0, lt=1)
    eps: float = Field(gt=0)


class TrainConfig(_Section):
    """Training run settings"""
    epochs: int = Field(ge=1)
    batch_size: int = Field(ge=1)
    learning_rate: float = Field(gt=0)
    seed: int = Field(ge=0)
    mode: TrainMode
    latent_dim: int = Field(ge=1)
    val_fraction: float = Field(ge=0, lt=1)
    test_fraction: float = Field(ge=0, lt=1)
    patience: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode='after')
    def _fractions(self):
        if self.val_fraction + self.test_fraction >= 1:
            raise ValueError("val_fraction + test_fraction must be < 1")
        return self


class SynthConfig(_Section):
    """Synthetic benchmark settings"""
    mode: SynthMode
    n_samples: int = Field(ge=1)
    obs_dim: int = Field(ge=2)
    latent_dim: int = Field(ge=1)
    n_clusters: int = Field(ge=1)
    seed: int = Field(ge=0)

    @model_validator(mode='after')
    def _consistent(self):
        if self.latent_dim >= self.obs_dim:
            raise ValueError("latent_dim must be smaller than obs_dim")
        if self.mode == SynthMode.DISCRETE and self.n_clusters < 2:
            raise ValueError("discrete simulation needs at least 2 clusters")
        if self.mode == SynthMode.CONTINUOUS and self.latent_dim != 2:
            raise ValueError("continuous simulation is defined for latent_dim = 2")
        return self


class InferConfig(_Section):
    """Posterior inference and decoding settings"""
    samples: int = Field(ge=1)
    use_label_prior: bool
    grid_points: int = Field(ge=2)
    grid_low: Optional[float] = None
    grid_high: Optional[float] = None
    common_random_numbers: bool
    seed: int = Field(ge=0)


class EvalConfig(_Section):
    """Evaluation settings"""
    sampling_rate: float = Field(gt=0)
    psd_segment: int = Field(ge=2)
    tuning_bins: int = Field(ge=1)
    position_bin: float = Field(gt=0)
    samples: int = Field(ge=1)


class LabelColumnConfig(_Section):
    name: str
    kind: str = Field(pattern='^(discrete|continuous)$')
    n_classes: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode='after')
    def _classes(self):
        if self.kind == 'discrete' and self.n_classes is None:
            raise ValueError(f"discrete label {self.name!r} needs n_classes")
        return self


class PipelineConfig(_Section):
    """The whole user configuration document"""
    seed: Optional[int] = Field(default=None, ge=0)
    labels: List[LabelColumnConfig] = Field(default_factory=list)
    architecture: ArchitectureConfig
    adam: AdamConfig
    simulate: SynthConfig
    train: TrainConfig
    infer: InferConfig
    eval: EvalConfig


SECTIONS = ('architecture', 'adam', 'simulate', 'train', 'infer', 'eval')


def _wrap(exc: ValidationError, what: str) -> ConfigError:
    problems = '; '.join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())
    return ConfigError(f"invalid {what}: {problems}")


def build_config(user: Optional[Dict[str, Any]] = None, overrides: Optional[Dict[str, Dict[str, Any]]] = None,
                 env: Optional[Dict[str, str]] = None) -> PipelineConfig:
    """Merge defaults < user document < overrides < environment seed"""
    user = dict(user or {})
    overrides = overrides or {}
    env = os.environ if env is None else env
    unknown = set(user) - set(SECTIONS) - {'seed', 'labels'}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")

    merged: Dict[str, Any] = {'labels': user.get('labels', []), 'seed': user.get('seed')}
    for section in SECTIONS:
        values = _defaults(section)
        section_user = user.get(section) or {}
        if not isinstance(section_user, dict):
            raise ConfigError(f"config section {section!r} must be an object")
        values.update(section_user)
        values.update({k: v for k, v in overrides.get(section, {}).items() if v is not None})
        merged[section] = values

    seed = merged['seed']
    if env.get(SEED_ENV_VAR):
        try:
            seed = int(env[SEED_ENV_VAR])
        except ValueError:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from None
    if seed is not None:
        merged['seed'] = seed
        for section in ('simulate', 'train', 'infer'):
            merged[section]['seed'] = seed

    try:
        return PipelineConfig.model_validate(merged)
    except ValidationError as exc:
        raise _wrap(exc, 'configuration') from None


def train_config(**fields) -> TrainConfig:
    """TrainConfig from defaults plus keyword overrides"""
    values = _defaults('train')
    values.update(fields)
    try:
        return TrainConfig.model_validate(values)
    except ValidationError as exc:
        raise _wrap(exc, 'train config') from None


def synth_config(**fields) -> SynthConfig:
    """SynthConfig from defaults plus keyword overrides"""
    values = _defaults('simulate')
    values.update(fields)
    try:
        return SynthConfig.model_validate(values)
    except ValidationError as exc:
        raise _wrap(exc, 'simulate config') from None


def infer_config(**fields) -> InferConfig:
    """InferConfig from defaults plus keyword overrides"""
    values = _defaults('infer')
    values.update(fields)
    try:
        return InferConfig.model_validate(values)
    except ValidationError as exc:
        raise _wrap(exc, 'infer config') from None


def architecture_config(**fields) -> ArchitectureConfig:
    values = _defaults('architecture')
    values.update(fields)
    try:
        return ArchitectureConfig.model_validate(values)
    except ValidationError as exc:
        raise _wrap(exc, 'architecture config') from None


def adam_config() -> AdamConfig:
    return AdamConfig.model_validate(_defaults('adam'))
