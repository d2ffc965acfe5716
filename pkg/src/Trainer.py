"""
Training orchestration for the augmented latent neural-ODE model.
Runs mini-batched adjoint gradient descent with Adam over generated datasets,
writes checkpoints and evaluates the train / WD / OOD splits.
"""

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .FileRead import SCHEMA_VERSION, setup_output_folder, write_json
from .LogManager import LogManager, get_log_manager
from .config.config_manager import ConfigManager
from .domain.qubit.datagen import build_dataset, perturb_initial
from .domain.qubit.entities import AUGMENTED_COLUMNS, Dataset
from .factory.regime_factory import RegimeFactory
from .model.augmented_node import (DEFAULT_SIGNAL_SCALE, AugmentedNodeModel, LossWeights, SignalTrack, loss,
                                   predict, value_and_gradient)
from .numerics.integrate import IntegrationError
from .numerics.nn import AdamState, adam_step
from .processors.checkpoint_processor import Checkpoint, CheckpointProcessor
from .processors.processor_factory import ProcessorFactory

SPLITS = ('train', 'wd', 'ood')


class TrainingError(RuntimeError):
    """Non-finite loss or gradient during training."""

    def __init__(self, message: str, epoch: int, batch: int):
        super().__init__(f"{message} (epoch {epoch}, batch {batch})")
        self.epoch = epoch
        self.batch = batch


@dataclass
class TrainConfig:
    phase: int = 1
    train_path: Optional[str] = None
    wd_path: Optional[str] = None
    ood_path: Optional[str] = None
    epochs: int = 200
    batch_size: int = 32
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    kappa: float = 1.0
    beta: float = 1.0
    prefix_k: int = 10
    latent_dim: int = 16
    hidden: Tuple[int, ...] = (64,)
    signal_scale: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_SIGNAL_SCALE))
    seed: int = 0
    checkpoint_every: int = 25
    threads: int = 1
    out_dir: Optional[str] = None
    resume_from: Optional[str] = None

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        self.validate()

    def validate(self) -> bool:
        if self.phase not in (1, 2, 3):
            raise ValueError(f"Unsupported phase: {self.phase}")
        min_epochs = 0 if self.resume_from else 1
        if self.epochs < min_epochs:
            raise ValueError(f"epochs must be >= {min_epochs}, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.checkpoint_every < 0:
            raise ValueError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        LossWeights(self.kappa, self.beta)
        return True

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.kappa, self.beta)

    @classmethod
    def from_config(cls, config: ConfigManager, out_dir: Optional[str] = None) -> 'TrainConfig':
        training = config.section('training')
        model = config.section('model')
        return cls(
            phase=int(training.get('phase', 1)),
            train_path=training.get('train_path'),
            wd_path=training.get('wd_path'),
            ood_path=training.get('ood_path'),
            epochs=int(training.get('epochs', 200)),
            batch_size=int(training.get('batch_size', 32)),
            learning_rate=float(training.get('learning_rate', 1e-3)),
            beta1=float(training.get('beta1', 0.9)),
            beta2=float(training.get('beta2', 0.999)),
            adam_eps=float(training.get('adam_eps', 1e-8)),
            kappa=float(training.get('kappa', 1.0)),
            beta=float(training.get('beta', 1.0)),
            prefix_k=int(model.get('prefix_k', 10)),
            latent_dim=int(model.get('latent_dim', 16)),
            hidden=tuple(model.get('hidden', [64])),
            signal_scale={**DEFAULT_SIGNAL_SCALE, **model.get('signal_scale', {})},
            seed=int(training.get('seed', 0)),
            checkpoint_every=int(training.get('checkpoint_every', 25)),
            threads=int(training.get('threads', 1)),
            out_dir=out_dir,
            resume_from=training.get('resume_from'),
        )

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['hidden'] = list(self.hidden)
        return data


@dataclass
class TrainReport:
    epoch_losses: List[float]
    final_loss: float
    split_mse: Dict[str, Dict[str, float]]
    seed: int
    config: Dict[str, Any]
    start_epoch: int = 0
    wall_clock: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        """Serializable report; wall-clock is left out so fixed-seed runs match byte for byte."""
        return {
            'schema_version': SCHEMA_VERSION,
            'kind': 'train_report',
            'seed': self.seed,
            'start_epoch': self.start_epoch,
            'epoch_losses': list(self.epoch_losses),
            'final_loss': self.final_loss,
            'split_mse': self.split_mse,
            'config': self.config,
        }


def load_dataset(path: str, log_manager: Optional[LogManager] = None) -> Dataset:
    dataset = ProcessorFactory.load(path, log_manager=log_manager)
    if not isinstance(dataset, Dataset):
        raise ValueError(f"{path} is not a dataset file")
    return dataset


def component_mse(pred: np.ndarray, truth: np.ndarray) -> Dict[str, float]:
    """Mean squared error per augmented component over trajectories and grid points."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.shape[-1] != len(AUGMENTED_COLUMNS):
        raise ValueError(f"Prediction shape {pred.shape} does not match truth shape {truth.shape}")
    mse = np.mean((pred - truth).reshape(-1, len(AUGMENTED_COLUMNS)) ** 2, axis=0)
    return {col: float(v) for col, v in zip(AUGMENTED_COLUMNS, mse)}


def predict_dataset(m: AugmentedNodeModel, dataset: Dataset, chunk_size: int = 64, threads: int = 1) -> np.ndarray:
    """Predicted augmented tracks ``(N, n_points, 5)`` for every record."""
    y0 = dataset.stacked_y0()
    signals = SignalTrack.from_dataset(dataset, m.signal_spec)
    chunks = [np.arange(s, min(s + chunk_size, len(dataset))) for s in range(0, len(dataset), chunk_size)]

    def one(idx):
        return predict(m, y0[idx], dataset.grid, SignalTrack(dataset.grid, signals.values[idx], m.signal_spec))

    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, chunks))
    else:
        parts = [one(idx) for idx in chunks]
    return np.concatenate(parts, axis=0)


def evaluate_split(m: AugmentedNodeModel, dataset: Dataset, threads: int = 1) -> Dict[str, float]:
    return component_mse(predict_dataset(m, dataset, threads=threads), dataset.stacked_states())


def trajectory_mse(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """MSE of each trajectory over its grid points and all five components."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 3:
        raise ValueError(f"Prediction shape {pred.shape} does not match truth shape {truth.shape}")
    return np.mean((pred - truth) ** 2, axis=(1, 2))


def mse_over_time(pred: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """Per-component MSE across trajectories at each grid point, shape ``(n_points, 5)``."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 3:
        raise ValueError(f"Prediction shape {pred.shape} does not match truth shape {truth.shape}")
    return np.mean((pred - truth) ** 2, axis=0)


@dataclass
class ErrorProfile:
    """Split MSE with its per-trajectory spread and its course over time."""

    split: str
    mse: Dict[str, float]
    trajectories: pd.DataFrame
    over_time: pd.DataFrame


def error_profile(m: AugmentedNodeModel, dataset: Dataset, split: str = 'data', threads: int = 1) -> ErrorProfile:
    """
    One prediction pass over ``dataset`` scored three ways.

    ``trajectories`` has one row per record (traj_id, label, MSE);
    ``over_time`` has a ``t`` column, one column per component and their mean.
    """
    pred = predict_dataset(m, dataset, threads=threads)
    truth = dataset.stacked_states()
    trajectories = pd.DataFrame({
        'traj_id': [traj.traj_id for traj in dataset.trajectories],
        'label': [traj.label for traj in dataset.trajectories],
        'MSE': trajectory_mse(pred, truth),
    })
    per_time = mse_over_time(pred, truth)
    over_time = pd.DataFrame(per_time, columns=list(AUGMENTED_COLUMNS))
    over_time.insert(0, 't', dataset.grid.times)
    over_time['mean'] = per_time.mean(axis=1)
    return ErrorProfile(split, component_mse(pred, truth), trajectories, over_time)


def perturbation_study(m: AugmentedNodeModel, dataset: Dataset, eps_list: Sequence[float],
                       rng: np.random.Generator, trials: int = 5, n_eval: Optional[int] = None) -> pd.DataFrame:
    """
    Mean deviation ``|prediction - truth|`` per grid point under perturbed initial states.

    Returns:
        DataFrame with a ``t`` column and one ``eps_<value>`` column per entry of eps_list
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if n_eval is not None:
        dataset = dataset.subset(range(min(n_eval, len(dataset))))
    grid = dataset.grid
    truth = dataset.stacked_states()
    y0 = dataset.stacked_y0()
    signals = SignalTrack.from_dataset(dataset, m.signal_spec)
    table = {'t': grid.times}
    for eps in eps_list:
        total = np.zeros(grid.n_points)
        for _ in range(trials):
            perturbed = np.stack([perturb_initial(row, eps, rng) for row in y0])
            pred = predict(m, perturbed, grid, signals)
            total += np.mean(np.linalg.norm(pred - truth, axis=-1), axis=0)
        table[f"eps_{eps:g}"] = total / trials
    return pd.DataFrame(table)


class Trainer:
    def __init__(self, config: TrainConfig, settings: Optional[ConfigManager] = None):
        self.config = config
        self.settings = settings
        self.log_manager = None

    def set_log_manager(self, log_manager):
        self.log_manager = log_manager

    def log(self, message, level="INFO"):
        (self.log_manager or get_log_manager()).log(message, level)

    def _generated_split(self, split: str, n_traj: int, seed: int) -> Dataset:
        settings = self.settings or ConfigManager()
        physics = settings.section('physics')
        datagen = settings.section('datagen')
        regime = RegimeFactory.create_regime(self.config.phase, split, settings)
        grid = RegimeFactory.create_grid(self.config.phase, settings)
        self.log(f"No {split} dataset path configured; generating {n_traj} trajectories in memory")
        return build_dataset(regime, n_traj, grid, seed,
                             zeta=float(physics.get('zeta', 0.9)), kbt=float(physics.get('kbt', 1.0)),
                             noise_std=float(physics.get('noise_std', 0.0)),
                             excitation=datagen.get('excitation'), control_cfg=settings.section('control'),
                             threads=self.config.threads, log_manager=self.log_manager)

    def load_datasets(self) -> Dict[str, Dataset]:
        """Training set (generated when no path is configured) plus whichever test splits have paths."""
        cfg = self.config
        datasets = {}
        if cfg.train_path:
            datasets['train'] = load_dataset(cfg.train_path, self.log_manager)
        else:
            n_train = int((self.settings or ConfigManager()).get('datagen.n_train', 2000))
            datasets['train'] = self._generated_split('train', n_train, cfg.seed)
        for split, path in (('wd', cfg.wd_path), ('ood', cfg.ood_path)):
            if path:
                datasets[split] = load_dataset(path, self.log_manager)
        return datasets

    def _initial_state(self, signal_spec: str) -> Tuple[AugmentedNodeModel, AdamState, int]:
        cfg = self.config
        if cfg.resume_from:
            checkpoint = ProcessorFactory.load(cfg.resume_from, log_manager=self.log_manager)
            if not isinstance(checkpoint, Checkpoint):
                raise ValueError(f"{cfg.resume_from} is not a checkpoint file")
            model = checkpoint.model
            optimizer = checkpoint.optimizer or self._fresh_optimizer(model)
            start_epoch = int(checkpoint.training.get('epoch', 0))
            self.log(f"Resuming from {cfg.resume_from} at epoch {start_epoch}")
            return model, optimizer, start_epoch
        model = AugmentedNodeModel.create(latent_dim=cfg.latent_dim, hidden=cfg.hidden, prefix_k=cfg.prefix_k,
                                          signal_spec=signal_spec, seed=cfg.seed,
                                          signal_scale=cfg.signal_scale)
        return model, self._fresh_optimizer(model), 0

    def _fresh_optimizer(self, model: AugmentedNodeModel) -> AdamState:
        cfg = self.config
        return AdamState.zeros(model.param_count, lr=cfg.learning_rate, beta1=cfg.beta1, beta2=cfg.beta2,
                               eps=cfg.adam_eps)

    def _chunk_gradient(self, model, arrays, idx):
        y0, values, truth, grid = arrays
        signals = SignalTrack(grid, values[idx], model.signal_spec)
        return value_and_gradient(model, y0[idx], grid, signals, truth[idx], self.config.weights)

    def _batch_gradient(self, model, arrays, idx, pool) -> Tuple[float, np.ndarray]:
        """Batch loss and gradient; chunks are reduced in sorted-index order."""
        if pool is None:
            result = self._chunk_gradient(model, arrays, idx)
            return result.total, result.grad
        chunks = [c for c in np.array_split(idx, min(self.config.threads, len(idx))) if len(c)]
        results = list(pool.map(lambda c: self._chunk_gradient(model, arrays, c), chunks))
        shares = [len(c) / len(idx) for c in chunks]
        total = float(np.sum([w * r.total for w, r in zip(shares, results)]))
        grad = np.sum(np.stack([w * r.grad for w, r in zip(shares, results)]), axis=0)
        return total, grad

    def dataset_loss(self, model: AugmentedNodeModel, dataset: Dataset) -> float:
        pred = predict_dataset(model, dataset, threads=self.config.threads)
        return loss(pred, dataset.stacked_states(), self.config.weights)[0]

    def save_checkpoint(self, path: str, model, optimizer, training: Dict[str, Any]) -> str:
        processor = CheckpointProcessor(log_manager=self.log_manager)
        return processor.write(path, Checkpoint(model=model, optimizer=optimizer, training=training))

    def train(self, datasets: Optional[Dict[str, Dataset]] = None) -> Tuple[AugmentedNodeModel, TrainReport]:
        """
        Train on ``datasets['train']`` and score every split present.

        Args:
            datasets: Mapping split -> Dataset; loaded from the configured paths when omitted

        Returns:
            Tuple of (trained model, TrainReport)
        """
        cfg = self.config
        start_time = time.time()
        datasets = datasets if datasets is not None else self.load_datasets()
        if 'train' not in datasets:
            raise ValueError("Training needs a 'train' dataset")
        train_set = datasets['train']
        signal_spec = RegimeFactory.signal_spec(cfg.phase, self.settings)
        model, optimizer, start_epoch = self._initial_state(signal_spec)
        if model.signal_spec != signal_spec:
            raise ValueError(f"Model signal spec {model.signal_spec} does not match phase {cfg.phase} ({signal_spec})")
        if cfg.out_dir:
            setup_output_folder(cfg.out_dir)

        grid = train_set.grid
        arrays = (train_set.stacked_y0(), SignalTrack.from_dataset(train_set, signal_spec).values,
                  train_set.stacked_states(), grid)
        n_traj = len(train_set)
        theta = model.flatten()
        epoch_losses: List[float] = []
        self.log(f"Training phase {cfg.phase} model ({model.param_count} parameters) on {n_traj} trajectories "
                 f"for {cfg.epochs} epochs")

        pool = ThreadPoolExecutor(max_workers=cfg.threads) if cfg.threads > 1 else None
        try:
            for epoch in range(start_epoch + 1, start_epoch + cfg.epochs + 1):
                rng = np.random.default_rng([cfg.seed, epoch])
                order = rng.permutation(n_traj)
                weighted = 0.0
                for b, start in enumerate(range(0, n_traj, cfg.batch_size)):
                    idx = np.sort(order[start:start + cfg.batch_size])
                    try:
                        batch_loss, grad = self._batch_gradient(model, arrays, idx, pool)
                    except IntegrationError as e:
                        raise TrainingError(f"Rollout failed: {str(e)}", epoch, b) from e
                    if not np.isfinite(batch_loss) or not np.all(np.isfinite(grad)):
                        raise TrainingError("Non-finite loss or gradient", epoch, b)
                    theta, optimizer = adam_step(optimizer, theta, grad)
                    model = model.with_params(theta)
                    weighted += batch_loss * len(idx)
                epoch_losses.append(weighted / n_traj)
                if epoch == start_epoch + 1 or epoch % 10 == 0:
                    self.log(f"Epoch {epoch}: mean loss {epoch_losses[-1]:.6e}")
                if cfg.out_dir and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
                    self.save_checkpoint(os.path.join(cfg.out_dir, f"checkpoint_epoch_{epoch:04d}.json"), model,
                                         optimizer, {'epoch': epoch, 'seed': cfg.seed, 'phase': cfg.phase,
                                                     'losses': list(epoch_losses)})
        except TrainingError as e:
            self.log(f"Error: {str(e)}", "ERROR")
            raise
        finally:
            if pool is not None:
                pool.shutdown()

        final_loss = self.dataset_loss(model, train_set)
        split_mse = {split: evaluate_split(model, datasets[split], cfg.threads)
                     for split in SPLITS if split in datasets}
        end_epoch = start_epoch + cfg.epochs
        report = TrainReport(epoch_losses=epoch_losses, final_loss=final_loss, split_mse=split_mse,
                             seed=cfg.seed, config=cfg.to_dict(), start_epoch=start_epoch,
                             wall_clock=time.time() - start_time)
        if cfg.out_dir:
            self.save_checkpoint(os.path.join(cfg.out_dir, "model.json"), model, optimizer,
                                 {'epoch': end_epoch, 'seed': cfg.seed, 'phase': cfg.phase,
                                  'losses': list(epoch_losses), 'final_loss': final_loss})
            write_json(os.path.join(cfg.out_dir, "train_report.json"), report.to_dict())
        for split, mse in split_mse.items():
            self.log(f"{split} MSE: " + ", ".join(f"{k}={v:.3e}" for k, v in mse.items()))
        self.log(f"Training completed in {report.wall_clock:.2f} seconds, final loss {final_loss:.6e}")
        return model, report


def train(cfg: TrainConfig, settings: Optional[ConfigManager] = None,
          datasets: Optional[Dict[str, Dataset]] = None) -> Tuple[AugmentedNodeModel, TrainReport]:
    return Trainer(cfg, settings).train(datasets)
