"""
Invariant checks - Self-tests run against a trained model by the `check` command

Each check yields a CheckResult; the report passes when every check that ran passed.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from engine.ndmath import backward, finite_diff_grad_smooth, numeric_jacobian, relative_error, training
from models.checkpoint import Checkpoint
from models.dataset import LabelKind, LabelSupport
from models.flows import coupling_scale_shift, decoder_forward, decoder_left_inverse, gin_block_forward, SCALE_CLAMP
from models.pivae import PiVaeParams, elbo
from models.priors import SUFFICIENT_STATS, check_conditions
from utils.config import TrainMode
from utils.errors import PiVaeError
from utils.rng import make_rng

logger = logging.getLogger(__name__)

VOLUME_TOLERANCE = 1e-6
ROUNDTRIP_TOLERANCE = 1e-6
GRADIENT_TOLERANCE = 1e-4
SCALE_SUM_TOLERANCE = 1e-12
GRADIENT_FLOOR = 1e-4  # gradients smaller than this are compared in absolute terms


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    detail: str = ''
    skipped: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return {
            'name': self.name,
            'passed': self.passed,
            'skipped': self.skipped,
            'value': None if self.value is None or not np.isfinite(self.value) else float(self.value),
            'threshold': self.threshold,
            'detail': self.detail,
        }


@dataclass
class CheckReport:
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> Dict[str, Any]:
        return {'passed': self.passed, 'checks': [r.to_dict() for r in self.results]}


def check_gin_volume(params: PiVaeParams, seed: int, points: int = 3) -> CheckResult:
    """max |log |det J|| of each decoder GIN block at random points"""
    rng = make_rng(seed, 'check', 'volume')
    n = params.arch.obs_dim
    worst = 0.0
    for block in params.decoder.blocks:
        for _ in range(points):
            point = rng.standard_normal(n)
            jac = numeric_jacobian(lambda v: gin_block_forward(v, block).data, point)
            _, logdet = np.linalg.slogdet(jac)
            worst = max(worst, abs(float(logdet)))
    return CheckResult('gin_volume', worst <= VOLUME_TOLERANCE, worst, VOLUME_TOLERANCE,
                       f"{len(params.decoder.blocks)} blocks x {points} points")


def check_scale_invariants(params: PiVaeParams, seed: int, points: int = 16) -> CheckResult:
    """Coupling scales sum to zero and stay inside the clamp"""
    rng = make_rng(seed, 'check', 'scales')
    worst_sum, worst_abs = 0.0, 0.0
    for block in params.decoder.blocks:
        for coupling in block.couplings:
            scale, _ = coupling_scale_shift(rng.standard_normal((points, coupling.split)) * 3.0, coupling)
            worst_sum = max(worst_sum, float(np.max(np.abs(scale.data.sum(axis=-1)))))
            worst_abs = max(worst_abs, float(np.max(np.abs(scale.data))))
    passed = worst_sum <= SCALE_SUM_TOLERANCE and worst_abs < SCALE_CLAMP
    return CheckResult('scale_invariants', passed, worst_sum, SCALE_SUM_TOLERANCE,
                       f"max |s| = {worst_abs:.4g} (clamp {SCALE_CLAMP})")


def check_injectivity(params: PiVaeParams, seed: int, points: int = 20) -> CheckResult:
    """Decoder left-inverse recovers z from f(z)"""
    rng = make_rng(seed, 'check', 'injectivity')
    z = rng.standard_normal((points, params.arch.latent_dim))
    rates = decoder_forward(z, params.decoder).data
    usable = np.all(rates > params.decoder.rate_floor, axis=1)
    if not usable.any():
        return CheckResult('injectivity_roundtrip', False, None, ROUNDTRIP_TOLERANCE,
                           'every point hit the rate floor')
    try:
        recovered = decoder_left_inverse(rates[usable], params.decoder, tolerance=np.inf)
    except PiVaeError as exc:
        return CheckResult('injectivity_roundtrip', False, None, ROUNDTRIP_TOLERANCE, str(exc))
    error = float(np.max(np.abs(recovered - z[usable])))
    return CheckResult('injectivity_roundtrip', error <= ROUNDTRIP_TOLERANCE, error, ROUNDTRIP_TOLERANCE,
                       f"{int(usable.sum())} of {points} points above the floor")


def _sample_batch(params: PiVaeParams, support: LabelSupport, rng: np.random.Generator, batch: int):
    m = params.arch.latent_dim
    counts = rng.poisson(decoder_forward(rng.standard_normal((batch, m)), params.decoder).data).astype(np.float64)
    labels = None
    if params.mode == TrainMode.PI_VAE:
        labels = support.sample(rng, batch)
    return counts, labels


def check_gradients(params: PiVaeParams, support: LabelSupport, seed: int, batch: int = 4,
                    entries: int = 3, max_draws: int = 12) -> CheckResult:
    """Analytic ELBO gradients against central differences on sampled entries of every parameter

    Entries whose difference stencil crosses a relu, clip or clamp kink are re-drawn;
    a parameter without any smooth entry among `max_draws` fails the check.
    """
    rng = make_rng(seed, 'check', 'gradient')
    counts, labels = _sample_batch(params, support, rng, batch)
    eps = rng.standard_normal((batch, params.arch.latent_dim))
    named = params.named_parameters()
    with training():
        grads = backward(elbo(counts, labels, params, eps), named)

    worst, worst_name, redrawn, uncovered = 0.0, '', 0, []
    for name, tensor in named.items():
        order = rng.permutation(tensor.data.size)[:max_draws]
        flat = tensor.data.reshape(-1)
        analytic, numeric = [], []
        for idx in order:
            if len(numeric) == entries:
                break
            saved = flat[idx]

            def objective(v):
                flat[idx] = v[0]
                return elbo(counts, labels, params, eps).item()

            grad, smooth = finite_diff_grad_smooth(objective, np.array([saved]))
            flat[idx] = saved
            if not smooth[0]:
                redrawn += 1
                continue
            numeric.append(grad[0])
            analytic.append(grads[name].reshape(-1)[idx])
        if not numeric:
            uncovered.append(name)
            continue
        err = relative_error(np.array(analytic), np.array(numeric), floor=GRADIENT_FLOOR)
        if err > worst:
            worst, worst_name = err, name
    if uncovered:
        return CheckResult('elbo_gradient', False, None, GRADIENT_TOLERANCE,
                           f"no smooth entry for {', '.join(uncovered)}")
    detail = f"worst parameter {worst_name!r}" if worst_name else f"{len(named)} parameters"
    if redrawn:
        detail += f", {redrawn} entries on a kink re-drawn"
    return CheckResult('elbo_gradient', worst <= GRADIENT_TOLERANCE, worst, GRADIENT_TOLERANCE, detail)


def check_prior_conditions(params: PiVaeParams, support: LabelSupport, seed: int) -> CheckResult:
    """Natural-parameter differences of the label prior have full rank"""
    if params.prior is None:
        return CheckResult('prior_conditions', True, detail='vanilla VAE has no label prior', skipped=True)
    needed = params.arch.latent_dim * SUFFICIENT_STATS + 1
    spec = params.arch.label_spec
    rng = make_rng(seed, 'check', 'conditions')
    if spec.is_discrete_only:
        candidates = spec.combination_labels()
        if candidates.shape[0] < needed:
            return CheckResult('prior_conditions', True, skipped=True,
                               detail=f"{candidates.shape[0]} label values, {needed} needed")
        points = candidates[np.sort(rng.choice(candidates.shape[0], size=needed, replace=False))]
    else:
        points = support.sample(rng, needed)
    report = check_conditions(params.prior, points)
    return CheckResult('prior_conditions', report.invertible, report.condition_number, None,
                       f"rank {report.rank} of {needed - 1}")


def _fallback_support(params: PiVaeParams, support: LabelSupport) -> LabelSupport:
    """Declared label ranges when the checkpoint carries no observed support"""
    spec = params.arch.label_spec
    if support.columns or not spec.columns:
        return support
    low = [0.0 for _ in spec.columns]
    high = [float(c.n_classes - 1) if c.kind == LabelKind.DISCRETE else 1.0 for c in spec.columns]
    return LabelSupport.from_labels(spec, np.array([low, high]))


def run_checks(ckpt: Checkpoint, seed: Optional[int] = None) -> CheckReport:
    """Run the full battery against a checkpoint"""
    params = ckpt.params
    seed = ckpt.seed if seed is None else seed
    support = _fallback_support(params, ckpt.label_support)
    report = CheckReport([
        check_gin_volume(params, seed),
        check_scale_invariants(params, seed),
        check_injectivity(params, seed),
        check_gradients(params, support, seed),
        check_prior_conditions(params, support, seed),
    ])
    for r in report.results:
        if not r.passed:
            logger.warning("check %s failed: value %s, threshold %s (%s)", r.name, r.value, r.threshold, r.detail)
    return report
