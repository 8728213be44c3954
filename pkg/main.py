"""
Main entry point for the pi-VAE toolkit

Subcommands: simulate, train, infer, decode, eval, check.
Exit codes: 0 success, 1 runtime or data error, 2 usage or configuration error.
"""
import argparse
import logging
import os
import sys
from typing import Dict, List, Optional

import numpy as np

from analysis.summary_generator import SummaryGenerator, format_summary
from engine.checks import run_checks
from engine.inference import decode_continuous, decode_discrete, decode_grid, infer_latents
from engine.simulator import simulate
from engine.trainer import train
from models.checkpoint import Checkpoint
from models.dataset import LabelColumn, LabelKind, LabelSpec
from utils.config import PipelineConfig, build_config
from utils.errors import ConfigError, PiVaeError
from utils.helpers import parse_grid, save_json
from utils.io import (load_checkpoint, load_config_document, load_dataset, save_checkpoint, save_dataset,
                      write_latents, write_matrix_csv)

logger = logging.getLogger('pivae')

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


def print_summary(title: str, lines: List[str]):
    """Print a formatted summary to console"""
    print("\n" + "=" * 60)
    print(title)
    print("=" * 60)
    for line in lines:
        print(f"   {line}")
    print("=" * 60)


def label_spec_from_config(config: PipelineConfig) -> LabelSpec:
    return LabelSpec(tuple(LabelColumn(c.name, LabelKind(c.kind), c.n_classes) for c in config.labels))


def label_config_from_spec(spec: LabelSpec) -> List[dict]:
    return spec.to_list()


def _load_config(args, overrides: Optional[Dict[str, dict]] = None) -> PipelineConfig:
    return build_config(load_config_document(getattr(args, 'config', None)), overrides)


def _echo(config: PipelineConfig) -> dict:
    return config.model_dump(mode='json')


# ----------------------------------------------------------------------
# Subcommands
# ----------------------------------------------------------------------

def cmd_simulate(args) -> int:
    config = _load_config(args, {'simulate': {'mode': args.mode, 'n_samples': args.n_samples,
                                               'obs_dim': args.obs_dim, 'seed': args.seed}})
    synth = simulate(config.simulate)
    dataset = synth.to_dataset()
    paths = save_dataset(args.out, dataset, rates=synth.rates)

    echo = _echo(config)
    echo['labels'] = label_config_from_spec(synth.label_spec)
    document = {'config': echo, 'files': {k: os.path.basename(v) for k, v in paths.items()}}
    if synth.cluster_means is not None:
        document['cluster_means'] = synth.cluster_means.tolist()
        document['cluster_vars'] = synth.cluster_vars.tolist()
    save_json(document, os.path.join(args.out, 'simulation.json'))
    save_json(echo, os.path.join(args.out, 'config.json'))

    print_summary("SIMULATION", [
        f"Mode: {config.simulate.mode.value}",
        f"Rows: {dataset.n_rows}, neurons: {dataset.obs_dim}, latent dim: {config.simulate.latent_dim}",
        f"Mean count: {dataset.counts.mean():.3f}",
        f"Written to: {args.out}",
    ])
    return EXIT_OK


def cmd_train(args) -> int:
    config = _load_config(args, {'train': {'epochs': args.epochs, 'batch_size': args.batch_size,
                                            'learning_rate': args.learning_rate, 'mode': args.mode,
                                            'latent_dim': args.latent_dim, 'seed': args.seed,
                                            'patience': args.patience}})
    spec = label_spec_from_config(config)
    if args.labels is not None and not spec.columns:
        raise ConfigError("a labels file needs label declarations in the config 'labels' section")
    dataset = load_dataset(args.counts, args.labels, spec, args.trials)
    ckpt = train(dataset, config.train, config.architecture, config.adam)
    save_checkpoint(args.out, ckpt, provenance=_echo(config))

    history = ckpt.history
    print_summary("TRAINING", [
        f"Mode: {ckpt.arch.mode.value} (n={ckpt.arch.obs_dim}, m={ckpt.arch.latent_dim})",
        f"Epochs run: {history.epochs_run} (best epoch {history.best_epoch})",
        f"Final train ELBO: {history.train_elbo[-1]:.4f}",
        f"Checkpoint: {args.out}",
    ])
    return EXIT_OK


def _dataset_for(ckpt: Checkpoint, config: PipelineConfig, counts: str, labels: Optional[str],
                 trials: Optional[str] = None, latents: Optional[str] = None):
    spec = ckpt.arch.label_spec if ckpt.arch.label_spec.columns else label_spec_from_config(config)
    if labels is not None and not spec.columns:
        raise ConfigError("a labels file needs label declarations in the checkpoint or config")
    return load_dataset(counts, labels, spec, trials, latents)


def cmd_infer(args) -> int:
    config = _load_config(args)
    ckpt = load_checkpoint(args.ckpt)
    dataset = _dataset_for(ckpt, config, args.counts, args.labels)
    use_prior = config.infer.use_label_prior and not args.no_label_prior and ckpt.params.prior is not None
    if use_prior and dataset.labels is None:
        logger.info("no labels given, reporting encoder means without the label prior")
        use_prior = False
    latents = infer_latents(ckpt.params, dataset.counts, dataset.labels, use_label_prior=use_prior)
    write_latents(args.out, latents)
    print_summary("INFERENCE", [
        f"Rows: {latents.shape[0]}, latent dim: {latents.shape[1]}",
        f"Label prior used: {'yes' if use_prior else 'no'}",
        f"Latents: {args.out}",
    ])
    return EXIT_OK


def cmd_decode(args) -> int:
    config = _load_config(args)
    ckpt = load_checkpoint(args.ckpt)
    dataset = _dataset_for(ckpt, config, args.counts, None)
    samples = args.samples if args.samples is not None else config.infer.samples
    seed, crn = config.infer.seed, config.infer.common_random_numbers
    spec = ckpt.arch.label_spec

    if spec.is_discrete_only:
        result = decode_discrete(ckpt.params, dataset.counts, samples, seed, crn)
        names = ['p_' + '_'.join(str(int(v)) for v in row) for row in result.labels]
        table = np.column_stack([result.estimate, result.posterior])
        write_matrix_csv(args.out, ['estimate'] + names, table, index_name='row')
        lines = [f"Classes: {len(names)}", f"Most frequent estimate: {int(np.bincount(result.estimate).argmax())}"]
    else:
        if args.grid is not None:
            grid = np.linspace(*parse_grid(args.grid))
        elif config.infer.grid_low is not None and config.infer.grid_high is not None:
            grid = np.linspace(config.infer.grid_low, config.infer.grid_high, config.infer.grid_points)
        else:
            grid = decode_grid(ckpt.label_support, config.infer.grid_points)
        result = decode_continuous(ckpt.params, dataset.counts, grid, samples, seed, crn)
        names = [f"p@{g:.10g}" for g in result.grid]
        table = np.column_stack([result.posterior_mean, result.map_estimate, result.posterior])
        write_matrix_csv(args.out, ['posterior_mean', 'map'] + names, table, index_name='row')
        lines = [f"Grid: {grid.size} points on [{grid[0]:.4g}, {grid[-1]:.4g}]"]

    print_summary("DECODING", [f"Rows: {dataset.n_rows}, samples per label: {samples}"] + lines +
                  [f"Posteriors: {args.out}"])
    return EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args)
    ckpt = load_checkpoint(args.ckpt)
    dataset = _dataset_for(ckpt, config, args.counts, args.labels, args.trials, args.true_latents)
    summary = SummaryGenerator(config.eval, config.infer).generate_summary(ckpt, dataset)
    save_json({'config': _echo(config), 'metrics': summary}, args.out)
    print_summary("EVALUATION", format_summary(summary).split("\n") + [f"Metrics: {args.out}"])
    return EXIT_OK


def cmd_check(args) -> int:
    ckpt = load_checkpoint(args.ckpt)
    report = run_checks(ckpt)
    if args.report:
        save_json(report.to_dict(), args.report)
    print_summary("INVARIANT CHECKS", [
        f"{'PASS' if r.passed else 'FAIL'}{' (skipped)' if r.skipped else ''}  {r.name}: {r.detail}"
        for r in report.results
    ] + [f"Overall: {'PASS' if report.passed else 'FAIL'}"])
    return EXIT_OK if report.passed else EXIT_RUNTIME


# ----------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='pivae', description="Identifiable VAE for Poisson spike counts")
    parser.add_argument('--log-level', default='INFO', choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('simulate', help="generate a synthetic benchmark")
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.add_argument('--mode', choices=['discrete', 'continuous'])
    p.add_argument('--n-samples', type=int)
    p.add_argument('--obs-dim', type=int)
    p.add_argument('--seed', type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('train', help="fit a model")
    p.add_argument('--counts', required=True)
    p.add_argument('--labels')
    p.add_argument('--trials')
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.add_argument('--epochs', type=int)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--learning-rate', type=float)
    p.add_argument('--mode', choices=['pi-vae', 'vae'])
    p.add_argument('--latent-dim', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--patience', type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('infer', help="posterior latent means")
    p.add_argument('--ckpt', required=True)
    p.add_argument('--counts', required=True)
    p.add_argument('--labels')
    p.add_argument('--no-label-prior', action='store_true')
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser('decode', help="label posteriors from counts")
    p.add_argument('--ckpt', required=True)
    p.add_argument('--counts', required=True)
    p.add_argument('--samples', type=int)
    p.add_argument('--grid', help="LO:HI:N for a continuous label")
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser('eval', help="metrics for a trained model")
    p.add_argument('--ckpt', required=True)
    p.add_argument('--counts', required=True)
    p.add_argument('--labels', required=True)
    p.add_argument('--true-latents')
    p.add_argument('--trials')
    p.add_argument('--config')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('check', help="run the invariant battery on a checkpoint")
    p.add_argument('--ckpt', required=True)
    p.add_argument('--report')
    p.set_defaults(func=cmd_check)
    return parser


def run(argv: Optional[List[str]] = None) -> int:
    """Parse arguments, dispatch, and map failures to exit codes"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(levelname)s %(name)s: %(message)s')
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PiVaeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main():
    """Main CLI interface"""
    sys.exit(run())


if __name__ == "__main__":
    main()
