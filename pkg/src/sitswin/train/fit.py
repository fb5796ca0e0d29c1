"""
The training loop.

Each epoch e draws its own SplitMix64(seed + e): first the tile order
(Fisher-Yates), then one vertical and one horizontal flip decision per tile
in that order. The learning rate follows cosine_lr on the global step axis
over epochs * ceil(n / batch_size) steps, so a run stopped at an epoch
boundary and resumed from its checkpoint replays the uninterrupted run.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

from sitswin.config import RunConfig, TrainConfig
from sitswin.data.rng import SplitMix64
from sitswin.data.tile import SitsTile, augment_flip, batch_tiles
from sitswin.decoder.model import SegmentationModel
from sitswin.errors import ConfigError
from sitswin.metrics.evaluate import evaluate
from sitswin.tensor import Tensor, backward, cross_entropy
from sitswin.train.checkpoint import Checkpoint
from sitswin.train.optim import SGD, cosine_lr

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    step: int
    lr: float
    loss: float
    val_oa: Optional[float] = None

    def line(self) -> str:
        text = f"epoch={self.epoch} step={self.step} lr={self.lr:.8g} loss={self.loss:.6f}"
        if self.val_oa is not None:
            text += f" val_oa={self.val_oa:.4f}"
        return text


@dataclass
class FitResult:
    records: List[EpochRecord]
    step_losses: List[float]
    final: Checkpoint
    best: Optional[Checkpoint] = None
    best_val_oa: Optional[float] = None
    train_oa: float = 0.0

    def log_lines(self) -> List[str]:
        lines = [record.line() for record in self.records]
        if self.best_val_oa is not None:
            lines.append(f"best val_oa={self.best_val_oa:.4f} epoch={self.best.epoch}")
        lines.append(f"final train_oa={self.train_oa:.4f}")
        return lines


def steps_per_epoch(num_tiles: int, batch_size: int) -> int:
    return math.ceil(num_tiles / batch_size)


def fit(
    model: SegmentationModel,
    train_tiles: Sequence[SitsTile],
    tcfg: TrainConfig,
    val_tiles: Optional[Sequence[SitsTile]] = None,
    run_config: Optional[RunConfig] = None,
    resume: Optional[Checkpoint] = None,
    stop_epoch: Optional[int] = None,
    max_steps: Optional[int] = None,
    threads: int = 1,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> FitResult:
    """
    Train `model` in place with momentum SGD and return the log and checkpoints.

    `stop_epoch` ends the run after that many epochs (counted from the start
    of the schedule, not from `resume`); `max_steps` ends it after that many
    global steps, possibly mid-epoch. Neither changes the schedule length.
    With `val_tiles` the checkpoint of the epoch with the best validation
    overall accuracy is kept as well.
    """
    if not train_tiles:
        raise ConfigError("fit: the train split has no tiles", key="train")
    run_config = run_config or RunConfig(model.cfg, tcfg)
    if run_config.model != model.cfg:
        raise ConfigError("fit: run configuration does not describe the model being trained", key="model")

    n = len(train_tiles)
    per_epoch = steps_per_epoch(n, tcfg.batch_size)
    total_steps = tcfg.epochs * per_epoch
    last_epoch = tcfg.epochs if stop_epoch is None else min(stop_epoch, tcfg.epochs)

    optimizer = SGD(model, tcfg.momentum)
    epoch, step = 0, 0
    if resume is not None:
        model.load_state_dict(resume.model_state())
        optimizer.load_state_dict(resume.velocities())
        epoch, step = resume.epoch, resume.step
        if step != epoch * per_epoch:
            raise ConfigError(f"fit: checkpoint at step {step} is not on an epoch boundary of this run", key="resume")
        logger.info("fit: resuming at epoch %d, step %d", epoch, step)
    logger.info("fit: %d train tiles, %d steps per epoch, %d steps scheduled", n, per_epoch, total_steps)

    records: List[EpochRecord] = []
    step_losses: List[float] = []
    best: Optional[Checkpoint] = None
    best_val_oa: Optional[float] = None
    finished = epoch
    model.train()

    while epoch < last_epoch and (max_steps is None or step < max_steps):
        rng = SplitMix64(tcfg.seed + epoch)
        order = rng.permutation(n)
        epoch_losses: List[float] = []
        for start in range(0, n, tcfg.batch_size):
            if max_steps is not None and step >= max_steps:
                break
            batch = [augment_flip(train_tiles[i], rng) for i in order[start:start + tcfg.batch_size]]
            values, labels = batch_tiles(batch)
            lr = cosine_lr(step, total_steps, tcfg.lr_max, tcfg.lr_min)
            model.zero_grad()
            loss = cross_entropy(model(Tensor(values)), labels, tcfg.ignore_id)
            value = loss.item()
            backward(loss)
            optimizer.step(lr)
            step += 1
            epoch_losses.append(value)
            logger.debug("fit: epoch %d step %d lr %.8g loss %.6f", epoch + 1, step, lr, value)
        step_losses.extend(epoch_losses)
        if len(epoch_losses) == per_epoch:
            finished = epoch + 1

        val_oa = None
        if val_tiles:
            val_oa = evaluate(model, val_tiles, threads, tcfg.ignore_id).overall_accuracy()
        record = EpochRecord(epoch + 1, step, lr, sum(epoch_losses) / len(epoch_losses), val_oa)
        records.append(record)
        logger.info("fit: %s", record.line())
        if on_epoch is not None:
            on_epoch(record)
        if val_oa is not None and (best_val_oa is None or val_oa > best_val_oa):
            best_val_oa = val_oa
            best = Checkpoint.capture(run_config, model, optimizer.state_dict(), step, finished)
        epoch += 1

    train_oa = evaluate(model, train_tiles, threads, tcfg.ignore_id).overall_accuracy()
    logger.info("fit: final train_oa=%.4f after %d steps", train_oa, step)
    final = Checkpoint.capture(run_config, model, optimizer.state_dict(), step, finished)
    return FitResult(records, step_losses, final, best, best_val_oa, train_oa)
