"""
Optimizer for the retrieval adapter toolkit
AdamW with decoupled weight decay, linear warmup, and epoch-level early stopping
"""
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Protocol, Tuple, Union

import numpy as np

from config.settings import (
    ADAM_BETA1, ADAM_BETA2, ADAM_EPS, ADAPTATION_DEFAULTS, ALIGNMENT_DEFAULTS, DEFAULT_LOSS,
    DEFAULT_SEED, EMBEDDING_ADAPTER_DEFAULTS, INFONCE_TEMPERATURE, TRIPLET_MARGIN
)
from utils.adapter_core import Adapter
from utils.exceptions import ConfigError, DimensionMismatchError, NonFiniteGradientError, StoreWriteError, TrainingError
from utils.logging_manager import logging_manager
from utils.losses import LOSSES, LossValue
from utils.monitoring import performance_tracker
from utils.rng import keyed_rng

logger = logging.getLogger('radapt.training')


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training stage"""
    learning_rate: float
    weight_decay: float
    batch_size: int
    max_epochs: int
    patience: Optional[int]
    warmup_fraction: float
    temperature: float = INFONCE_TEMPERATURE
    seed: int = DEFAULT_SEED
    loss: str = DEFAULT_LOSS
    margin: float = TRIPLET_MARGIN

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if int(self.batch_size) != self.batch_size or self.batch_size <= 0:
            raise ConfigError(f"batch_size must be a positive integer, got {self.batch_size}")
        if int(self.max_epochs) != self.max_epochs or self.max_epochs <= 0:
            raise ConfigError(f"max_epochs must be a positive integer, got {self.max_epochs}")
        if self.patience is not None and (int(self.patience) != self.patience or self.patience < 0):
            raise ConfigError(f"patience must be a non-negative integer or disabled, got {self.patience}")
        if self.patience == 0:
            # 0 disables early stopping, as on the command line
            object.__setattr__(self, 'patience', None)
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigError(f"warmup_fraction must lie in [0, 1], got {self.warmup_fraction}")
        if not self.temperature > 0:
            raise ConfigError(f"temperature must be positive, got {self.temperature}")
        if self.loss not in LOSSES:
            raise ConfigError(f"unknown loss {self.loss!r}; expected one of {LOSSES}")
        if self.margin < 0:
            raise ConfigError(f"margin must be non-negative, got {self.margin}")

    @classmethod
    def alignment(cls, **overrides) -> 'TrainConfig':
        return cls(**{**ALIGNMENT_DEFAULTS, **overrides})

    @classmethod
    def adaptation(cls, **overrides) -> 'TrainConfig':
        return cls(**{**ADAPTATION_DEFAULTS, **overrides})

    @classmethod
    def embedding_adapter(cls, **overrides) -> 'TrainConfig':
        return cls(**{**EMBEDDING_ADAPTER_DEFAULTS, **overrides})

    def updated(self, **overrides) -> 'TrainConfig':
        return replace(self, **overrides)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class AdamWState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def fresh(cls, shape: Tuple[int, int], **hyper) -> 'AdamWState':
        return cls(np.zeros(shape), np.zeros(shape), 0, **hyper)


def lr_at(step: int, total_steps: int, base_lr: float, warmup_fraction: float) -> float:
    """Linear warmup over ceil(fraction * total) steps, then constant"""
    if total_steps <= 0:
        raise ConfigError(f"total_steps must be positive, got {total_steps}")
    if not 0 <= step < total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps})")
    warmup_steps = math.ceil(warmup_fraction * total_steps)
    if step < warmup_steps:
        return base_lr * (step + 1) / warmup_steps
    return base_lr


def adamw_step(w: Adapter, state: AdamWState, grad: np.ndarray, lr: float,
               weight_decay: float) -> Tuple[Adapter, AdamWState]:
    """One decoupled-weight-decay Adam update; returns new adapter and state"""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != w.weights.shape or state.m.shape != w.weights.shape or state.v.shape != w.weights.shape:
        raise DimensionMismatchError(
            f"shape mismatch: weights {w.weights.shape}, grad {grad.shape}, state {state.m.shape}")
    if not np.isfinite(grad).all():
        raise NonFiniteGradientError(f"non-finite gradient at step {state.step + 1}; step aborted")

    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)

    weights = w.weights
    updated = weights - lr * (m_hat / (np.sqrt(v_hat) + state.eps) + weight_decay * weights)
    return w.with_weights(updated), replace(state, m=m, v=v, step=t)


class Batch(Protocol):
    def __len__(self) -> int: ...

    def take(self, indices): ...


class ShuffledBatches:
    """Deterministic batch stream, reshuffled per epoch from (seed, epoch)"""

    def __init__(self, data: Batch, seed: int):
        self.data = data
        self.seed = seed

    def __len__(self) -> int:
        return len(self.data)

    def n_batches(self, batch_size: int) -> int:
        # the last partial batch is kept
        return math.ceil(len(self.data) / batch_size)

    def epoch(self, epoch: int, batch_size: int) -> Iterator[Batch]:
        order = keyed_rng(self.seed, 'epoch', epoch).permutation(len(self.data))
        for start in range(0, len(order), batch_size):
            yield self.data.take(order[start:start + batch_size])


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: Optional[float]
    lr: float
    timestamp: float


@dataclass
class TrainReport:
    """Per-epoch losses plus the stopping decision of one training run"""
    stage: str
    config: Dict[str, Any]
    epochs: List[EpochRecord] = field(default_factory=list)
    stop_epoch: int = 0
    best_epoch: Optional[int] = None
    best_val_loss: Optional[float] = None
    stopped_early: bool = False
    steps: int = 0
    degenerate_rows: int = 0
    wall_clock_seconds: float = 0.0
    peak_rss_mb: float = 0.0

    @property
    def train_losses(self) -> List[float]:
        return [record.train_loss for record in self.epochs]

    @property
    def val_losses(self) -> List[Optional[float]]:
        return [record.val_loss for record in self.epochs]

    def summary(self) -> Dict[str, Any]:
        """Deterministic provenance (no timings) for adapter sidecars"""
        return {
            'stage': self.stage,
            'config': self.config,
            'epochs_run': self.stop_epoch,
            'best_epoch': self.best_epoch,
            'best_val_loss': self.best_val_loss,
            'final_train_loss': self.epochs[-1].train_loss if self.epochs else None,
            'stopped_early': self.stopped_early,
            'steps': self.steps,
        }

    def write_jsonl(self, path: Union[str, Path]) -> None:
        """One JSON record per epoch"""
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, 'w', encoding='utf-8') as handle:
                for record in self.epochs:
                    handle.write(json.dumps({'stage': self.stage, **asdict(record)}, sort_keys=True) + '\n')
        except OSError as e:
            raise StoreWriteError(f"cannot write training log {path}: {e}") from e


LossFn = Callable[[Adapter, Any], LossValue]
Validator = Callable[[Adapter], float]


def train_loop(init: Adapter, batches: ShuffledBatches, loss: LossFn, cfg: TrainConfig,
               validation: Optional[Validator] = None, stage: str = 'train') -> Tuple[Adapter, TrainReport]:
    """Run up to cfg.max_epochs epochs of AdamW with optional early stopping"""
    if len(batches) == 0:
        raise TrainingError(f"{stage}: empty batch stream")
    if cfg.patience is not None and validation is None:
        raise TrainingError(f"{stage}: patience is enabled but no validation evaluator was given")

    batches_per_epoch = batches.n_batches(cfg.batch_size)
    total_steps = cfg.max_epochs * batches_per_epoch
    report = TrainReport(stage=stage, config=cfg.to_dict())
    started = time.perf_counter()

    adapter = init
    state = AdamWState.fresh(init.weights.shape)
    best_adapter, best_val = init, math.inf
    since_improvement = 0
    lr = cfg.learning_rate

    logger.info(f"{stage}: {len(batches)} examples, {batches_per_epoch} batches/epoch, "
                f"up to {cfg.max_epochs} epochs")

    for epoch in range(1, cfg.max_epochs + 1):
        loss_sum, seen = 0.0, 0
        for batch in batches.epoch(epoch, cfg.batch_size):
            result = loss(adapter, batch)
            if not math.isfinite(result.value):
                raise NonFiniteGradientError(f"{stage}: non-finite loss at epoch {epoch}")
            lr = lr_at(state.step, total_steps, cfg.learning_rate, cfg.warmup_fraction)
            adapter, state = adamw_step(adapter, state, result.grad, lr, cfg.weight_decay)
            loss_sum += result.value * len(batch)
            seen += len(batch)
            report.degenerate_rows += result.degenerate

        val_loss = float(validation(adapter)) if validation is not None else None
        record = EpochRecord(epoch, loss_sum / seen, val_loss, lr, time.time())
        report.epochs.append(record)
        logging_manager.log_epoch(stage, asdict(record))

        if val_loss is not None and val_loss < best_val:
            best_adapter, best_val = adapter, val_loss
            report.best_epoch, report.best_val_loss = epoch, val_loss
            since_improvement = 0
        else:
            since_improvement += 1

        report.stop_epoch = epoch
        if cfg.patience is not None and since_improvement >= cfg.patience:
            report.stopped_early = True
            logger.info(f"{stage}: early stop after epoch {epoch}, restoring epoch {report.best_epoch}")
            break

    report.steps = state.step
    report.wall_clock_seconds = time.perf_counter() - started
    performance_tracker.track_stage(stage, report.wall_clock_seconds, {'epochs': report.stop_epoch})
    report.peak_rss_mb = performance_tracker.peak_rss_mb

    final = best_adapter if cfg.patience is not None else adapter
    return final, report
