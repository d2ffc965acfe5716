"""
Command-line entry point for the qubit filtering and control laboratory.
Subcommands generate datasets, train models, evaluate checkpoints, run
closed-loop control experiments and initial-state perturbation studies.
"""

import argparse
import os
import sys
from typing import List, Optional

import numpy as np

from .Evaluation import (CONTROL_COLUMNS, MSE_COLUMNS, control_metric_rows, dump_latents, emit_error_profile,
                         emit_report, format_table, mse_row)
from .FileRead import resolve_output_path, setup_output_folder
from .LogManager import LogManager, set_log_manager
from .TrajectoryFrame import TrajectoryFrame
from .Trainer import TrainConfig, Trainer, error_profile, load_dataset, perturbation_study
from .config.config_manager import SPLIT_ALIASES, ConfigManager
from .domain.control.closed_loop import build_gain_schedule, closed_loop_run, tilt_off_pole
from .domain.control.lqr_controller import LqrConfig
from .domain.qubit.datagen import build_dataset, generate_dataset, sample_params
from .domain.qubit.dynamics import augmented_at
from .domain.qubit.entities import Dataset
from .factory.controller_factory import ControllerFactory
from .factory.regime_factory import RegimeFactory
from .model.augmented_node import CONTROL
from .processors.checkpoint_processor import Checkpoint
from .processors.processor_factory import ProcessorFactory


class UsageError(Exception):
    pass


class LabArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _eps_list(text: str) -> List[float]:
    try:
        values = [float(v) for v in text.split(',') if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"eps must be a comma-separated list of numbers, got {text!r}")
    if not values or any(v < 0 for v in values):
        raise argparse.ArgumentTypeError(f"eps values must be >= 0, got {text!r}")
    return values


def build_parser() -> LabArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="YAML or JSON config merged over the defaults")
    common.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help="Override a config value, e.g. training.epochs=50 (repeatable)")
    common.add_argument('--threads', type=int, help="Worker threads (1 = bitwise reproducible)")
    common.add_argument('--seed', type=int, help="Random seed recorded in every artifact")

    parser = LabArgumentParser(prog='qubit-lab', description=__doc__)
    sub = parser.add_subparsers(dest='command')

    gen = sub.add_parser('generate', parents=[common], help="Simulate a dataset")
    gen.add_argument('--phase', type=int, choices=[1, 2, 3], required=True)
    gen.add_argument('--split', choices=['train', 'wd', 'ood'], required=True)
    gen.add_argument('--n', type=int, help="Number of trajectories")
    gen.add_argument('--out', help="Dataset path (.ndjson)")
    gen.set_defaults(handler=cmd_generate)

    tr = sub.add_parser('train', parents=[common], help="Train a model")
    tr.add_argument('--out', help="Output directory for checkpoints and the report")
    tr.set_defaults(handler=cmd_train)

    ev = sub.add_parser('evaluate', parents=[common], help="Per-component MSE of a checkpoint on a dataset")
    ev.add_argument('--model', required=True)
    ev.add_argument('--data', required=True)
    ev.add_argument('--out', help="Report path stem")
    ev.add_argument('--latents', help="Also dump raw latent trajectories to this CSV")
    ev.set_defaults(handler=cmd_evaluate)

    ctl = sub.add_parser('control', parents=[common], help="Closed-loop control experiment")
    ctl.add_argument('--model', required=True)
    ctl.add_argument('--controller', choices=['pd', 'lqr'], required=True)
    ctl.add_argument('--split', choices=['wd', 'ood'], default='wd')
    ctl.add_argument('--out', help="Output directory")
    ctl.add_argument('--runs', type=int, help="Number of sampled plants")
    ctl.add_argument('--design-rates', choices=['predicted', 'analytic'])
    ctl.add_argument('--feedback-source', choices=['model', 'plant'])
    ctl.set_defaults(handler=cmd_control)

    pert = sub.add_parser('perturb', parents=[common], help="Initial-state perturbation study")
    pert.add_argument('--model', required=True)
    pert.add_argument('--eps', type=_eps_list, help="Comma-separated perturbation sizes")
    pert.add_argument('--out', help="Report path stem")
    pert.add_argument('--data', help="Dataset to perturb (default: WD trajectories generated in memory)")
    pert.add_argument('--trials', type=int)
    pert.set_defaults(handler=cmd_perturb)
    return parser


def _settings(args) -> ConfigManager:
    try:
        settings = ConfigManager(args.config, args.overrides)
    except ValueError as e:
        raise UsageError(str(e)) from e
    if args.threads is not None:
        if args.threads < 1:
            raise UsageError(f"--threads must be >= 1, got {args.threads}")
        settings.set('training.threads', args.threads)
    if args.seed is not None:
        settings.set('training.seed', args.seed)
    return settings


def _load_checkpoint(path: str, log_manager) -> Checkpoint:
    checkpoint = ProcessorFactory.load(path, log_manager=log_manager)
    if not isinstance(checkpoint, Checkpoint):
        raise ValueError(f"{path} is not a checkpoint file")
    return checkpoint


def cmd_generate(args, settings: ConfigManager, log_manager: LogManager) -> int:
    physics = settings.section('physics')
    split = SPLIT_ALIASES[args.split]
    n_traj = args.n if args.n is not None else int(
        settings.get('datagen.n_train' if split == 'train' else 'datagen.n_test'))
    seed = int(settings.get('training.seed', 0))
    out = resolve_output_path(args.out, f"phase{args.phase}_{args.split}.ndjson")
    path = generate_dataset(RegimeFactory.create_regime(args.phase, args.split, settings), n_traj,
                            RegimeFactory.create_grid(args.phase, settings), seed, out,
                            zeta=float(physics.get('zeta', 0.9)), kbt=float(physics.get('kbt', 1.0)),
                            noise_std=float(physics.get('noise_std', 0.0)),
                            excitation=settings.get('datagen.excitation'),
                            control_cfg=settings.section('control'),
                            threads=int(settings.get('training.threads', 1)), log_manager=log_manager)
    print(f"Wrote {n_traj} trajectories to {path}")
    return 0


def cmd_train(args, settings: ConfigManager, log_manager: LogManager) -> int:
    if not args.config:
        raise UsageError("train requires --config PATH")
    out_dir = resolve_output_path(args.out, "train")
    trainer = Trainer(TrainConfig.from_config(settings, out_dir=out_dir), settings)
    trainer.set_log_manager(log_manager)
    _, report = trainer.train()
    rows = [mse_row(split, mse) for split, mse in report.split_mse.items()]
    print(format_table(rows, MSE_COLUMNS))
    print(f"Final training loss {report.final_loss:.6e}; artifacts in {out_dir}")
    return 0


def cmd_evaluate(args, settings: ConfigManager, log_manager: LogManager) -> int:
    model = _load_checkpoint(args.model, log_manager).model
    dataset = load_dataset(args.data, log_manager)
    split = dataset.header.get('regime', {}).get('split', 'data')
    profile = error_profile(model, dataset, split, int(settings.get('training.threads', 1)))
    rows = [mse_row(split, profile.mse)]
    out = resolve_output_path(args.out, f"evaluate_{split}")
    meta = {'model': args.model, 'data': args.data, 'seed': dataset.header.get('seed'), 'config': settings.to_dict()}
    excel = bool(settings.get('evaluation.excel', False))
    emit_report(rows, out, MSE_COLUMNS, meta=meta, excel=excel)
    emit_error_profile(profile, out, meta, excel, int(settings.get('evaluation.histogram_bins', 20)),
                       settings.get('evaluation.log_mse_range', [-6.0, 1.0]))
    if args.latents:
        dump_latents(model, dataset, args.latents, label=split)
    print(format_table(rows, MSE_COLUMNS))
    return 0


def cmd_control(args, settings: ConfigManager, log_manager: LogManager) -> int:
    checkpoint = _load_checkpoint(args.model, log_manager)
    model = checkpoint.model
    if model.signal_spec != CONTROL:
        raise ValueError(f"{args.model} is a {model.signal_spec} model; control needs a control-mode model")
    control_cfg = settings.section('control')
    physics = settings.section('physics')
    seed = int(settings.get('training.seed', 0))
    runs = args.runs if args.runs is not None else int(control_cfg.get('runs', 1))
    if runs < 1:
        raise UsageError(f"--runs must be >= 1, got {runs}")
    design_rates = args.design_rates or control_cfg.get('lqr', {}).get('design_rates', 'predicted')
    feedback_source = args.feedback_source or control_cfg.get('feedback_source', 'model')
    target = np.asarray(control_cfg.get('target', [0.0, 0.0, 1.0]), dtype=float)
    regime = RegimeFactory.create_regime(3, args.split, settings)
    grid = RegimeFactory.create_grid(3, settings)
    out_dir = setup_output_folder(resolve_output_path(args.out, f"control_{args.controller}_{args.split}"))

    rows = []
    trajectories = []
    sampled = []
    for run in range(runs):
        rng = np.random.default_rng([seed, run])
        p = sample_params(regime, rng, float(physics.get('zeta', 0.9)), float(physics.get('kbt', 1.0)))
        start = tilt_off_pole(control_cfg.get('initial_state', [0.0, 0.0, -1.0]),
                              control_cfg.get('pole_tilt', [0.0, 0.0]))
        y0 = augmented_at(start, grid.t0, p)
        kwargs = {}
        if args.controller == 'lqr':
            kwargs['schedule'] = build_gain_schedule(p, model, grid, LqrConfig.from_config(control_cfg), y0,
                                                     design_rates)
        controller = ControllerFactory.create_controller(args.controller, control_cfg, **kwargs)
        controller.set_log_manager(log_manager)
        result = closed_loop_run(p, model, controller, y0, grid, target=target,
                                 noise_std=float(physics.get('noise_std', 0.0)), rng=rng,
                                 feedback_source=feedback_source)
        rows.extend(control_metric_rows(result, target, args.split.upper()))
        TrajectoryFrame.from_trajectory(result.to_trajectory(run)).export(
            os.path.join(out_dir, f"run_{run:03d}_plant.csv"))
        TrajectoryFrame.from_trajectory(result.predicted_trajectory(run)).export(
            os.path.join(out_dir, f"run_{run:03d}_predicted.csv"))
        trajectories.append(result.to_trajectory(run))
        sampled.append(p.to_record())

    meta = {'model': args.model, 'controller': args.controller, 'split': args.split, 'seed': seed,
            'design_rates': design_rates if args.controller == 'lqr' else None,
            'feedback_source': feedback_source, 'params': sampled, 'config': settings.to_dict()}
    emit_report(rows, os.path.join(out_dir, "metrics"), CONTROL_COLUMNS, meta,
                excel=bool(settings.get('evaluation.excel', False)))
    dump_latents(model, Dataset({'grid': grid.to_dict(), 'seed': seed}, trajectories),
                 os.path.join(out_dir, "latents.csv"), label=f"{args.controller}/{args.split}")
    print(format_table(rows, CONTROL_COLUMNS))
    return 0


def cmd_perturb(args, settings: ConfigManager, log_manager: LogManager) -> int:
    checkpoint = _load_checkpoint(args.model, log_manager)
    model = checkpoint.model
    perturbation = settings.section('perturbation')
    eps_list = args.eps if args.eps is not None else [float(e) for e in perturbation.get('eps', [0.05, 0.1, 0.3])]
    trials = args.trials if args.trials is not None else int(perturbation.get('trials', 5))
    n_eval = int(perturbation.get('n_eval', 20))
    seed = int(settings.get('training.seed', 0))
    if args.data:
        dataset = load_dataset(args.data, log_manager)
    else:
        phase = int(checkpoint.training.get('phase', settings.get('training.phase', 1)))
        physics = settings.section('physics')
        dataset = build_dataset(RegimeFactory.create_regime(phase, 'wd', settings), n_eval,
                                RegimeFactory.create_grid(phase, settings), seed,
                                zeta=float(physics.get('zeta', 0.9)), kbt=float(physics.get('kbt', 1.0)),
                                noise_std=float(physics.get('noise_std', 0.0)),
                                excitation=settings.get('datagen.excitation'),
                                control_cfg=settings.section('control'), log_manager=log_manager)
    frame = perturbation_study(model, dataset, eps_list, np.random.default_rng(seed), trials, n_eval)
    out = resolve_output_path(args.out, "perturbation")
    emit_report(frame.to_dict('records'), out, list(frame.columns),
                meta={'model': args.model, 'seed': seed, 'eps': eps_list, 'trials': trials,
                      'trajectories': min(n_eval, len(dataset)), 'config': settings.to_dict()})
    print(frame.iloc[[0, len(frame) // 2, -1]].to_string(index=False, float_format=lambda v: f"{v:.4g}"))
    return 0


def dispatch(argv: Optional[List[str]] = None) -> int:
    """
    Parse ``argv`` and run the subcommand.

    Returns:
        0 on success, 1 on usage errors, 2 on runtime errors
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1

    log_manager = None
    try:
        settings = _settings(args)
        log_manager = LogManager()
        set_log_manager(log_manager)
        return args.handler(args, settings, log_manager)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(str(e), file=sys.stderr)
        return 1
    except Exception as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        if log_manager is not None:
            log_manager.error(str(e))
        return 2


if __name__ == '__main__':
    sys.exit(dispatch())
