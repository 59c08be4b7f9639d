"""Minibatch training of the residual network on a PairDataset."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng
from .dataset import PairDataset
from .resnet import ResNet

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    def __init__(self, epoch: int, batch: int, checkpoint: Path | None):
        where = f" (last checkpoint: {checkpoint})" if checkpoint else ""
        super().__init__(f"non-finite loss at epoch {epoch}, batch {batch}{where}")
        self.epoch = epoch
        self.batch = batch
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 10
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    shuffle_seed: int = 0
    validation_fraction: float = 0.0
    checkpoint_every: int = 0  # epochs; 0 disables checkpoints

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning rate must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0 <= self.validation_fraction <= 0.5:
            raise ValueError("validation fraction must lie in [0, 0.5]")


@dataclass
class LossHistory:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] | None = None
    seconds: list[float] = field(default_factory=list)

    @property
    def epochs(self) -> int:
        return len(self.train_loss)

    def to_csv(self, path, seconds: bool = True) -> None:
        """``seconds=False`` drops wall-clock times so the file is reproducible byte for byte."""
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "train_loss"] + (["val_loss"] if self.val_loss is not None else [])
                       + (["seconds"] if seconds else []))
            for i, loss in enumerate(self.train_loss):
                row = [i + 1, repr(loss)]
                if self.val_loss is not None:
                    row.append(repr(self.val_loss[i]))
                if seconds:
                    row.append(f"{self.seconds[i]:.6f}")
                w.writerow(row)

    @classmethod
    def from_csv(cls, path) -> "LossHistory":
        with open(path, newline="") as f:
            rows = list(csv.reader(f))
        header = rows[0]
        has_val = "val_loss" in header
        hist = cls(val_loss=[] if has_val else None)
        for r in rows[1:]:
            hist.train_loss.append(float(r[1]))
            if has_val:
                hist.val_loss.append(float(r[2]))
            hist.seconds.append(float(r[-1]) if header[-1] == "seconds" else 0.0)
        return hist


class Adam:
    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * grad
        self.v *= self.beta2
        self.v += (1 - self.beta2) * (grad * grad)
        lr_t = self.lr * math.sqrt(1 - self.beta2 ** self.t) / (1 - self.beta1 ** self.t)
        # standard form lr * m_hat / (sqrt(v_hat) + eps), rearranged
        params -= lr_t * self.m / (np.sqrt(self.v) + self.eps * math.sqrt(1 - self.beta2 ** self.t))

    def state(self) -> dict:
        return {"m": self.m, "v": self.v, "t": np.array(self.t)}

    def load_state(self, state) -> None:
        self.m = np.array(state["m"], dtype=float)
        self.v = np.array(state["v"], dtype=float)
        self.t = int(state["t"])


class SGD:
    def __init__(self, size: int, lr: float):
        self.lr = lr

    def state(self) -> dict:
        return {}

    def load_state(self, state) -> None:
        pass

    def step(self, params: np.ndarray, grad: np.ndarray) -> None:
        params -= self.lr * grad


def split_validation(ds: PairDataset, fraction: float, seed: int):
    if fraction == 0:
        return ds, None
    count = len(ds)
    n_val = int(round(fraction * count))
    if n_val == 0 or n_val == count:
        raise ValueError(f"validation fraction {fraction} leaves an empty split for J = {count}")
    order = rng.generator(seed, rng.STREAM_SPLIT).permutation(count)
    return ds.subset(np.sort(order[n_val:])), ds.subset(np.sort(order[:n_val]))


def evaluate(model: ResNet, ds: PairDataset) -> float:
    """Loss over the whole set, no parameter updates."""
    return model.loss(ds.inputs, ds.targets)


def checkpoint_paths(checkpoint_dir, epoch: int) -> tuple[Path, Path]:
    base = Path(checkpoint_dir)
    return base / f"model_epoch{epoch:05d}.mevm", base / f"optimizer_epoch{epoch:05d}.npz"


def latest_checkpoint(checkpoint_dir) -> int | None:
    epochs = sorted(int(p.stem[len("model_epoch"):]) for p in Path(checkpoint_dir).glob("model_epoch*.mevm"))
    return epochs[-1] if epochs else None


def train(model: ResNet, ds: PairDataset, cfg: TrainConfig, checkpoint_dir=None,
          callback=None, resume_epoch: int | None = None,
          history: LossHistory | None = None) -> tuple[ResNet, LossHistory]:
    """Shuffled minibatch training; mutates and returns ``model``.

    The epoch loss is the sample-weighted mean of the minibatch losses seen
    during the epoch (each measured before its update). With ``resume_epoch``
    the model parameters and optimizer state are restored from that checkpoint
    and training continues with the next epoch; since shuffles are keyed by
    epoch, the continuation reproduces an uninterrupted run.
    """
    if ds.n != model.n:
        raise ValueError(f"dataset width {ds.n} does not match model width {model.n}")
    train_ds, val_ds = split_validation(ds, cfg.validation_fraction, cfg.shuffle_seed)
    count = len(train_ds)
    if cfg.batch_size > count:
        raise ValueError(f"batch size {cfg.batch_size} exceeds the {count} training pairs")
    if cfg.optimizer == "adam":
        opt = Adam(model.num_params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    else:
        opt = SGD(model.num_params, cfg.learning_rate)
    if history is None:
        history = LossHistory(val_loss=[] if val_ds is not None else None)
    grad = np.empty_like(model.params)
    x_all, y_all = train_ds.inputs, train_ds.targets
    last_checkpoint = None
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
    first_epoch = 1
    if resume_epoch is not None:
        model_path, opt_path = checkpoint_paths(checkpoint_dir, resume_epoch)
        model.params[...] = ResNet.load(model_path).params
        with np.load(opt_path) as state:
            opt.load_state(state)
        last_checkpoint = model_path
        first_epoch = resume_epoch + 1
        del history.train_loss[resume_epoch:], history.seconds[resume_epoch:]
        if history.val_loss is not None:
            del history.val_loss[resume_epoch:]

    for epoch in range(first_epoch, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.generator(cfg.shuffle_seed, rng.STREAM_SHUFFLE, counter=epoch << 32).permutation(count)
        x_ep, y_ep = x_all[order], y_all[order]
        total = 0.0
        for bi, lo in enumerate(range(0, count, cfg.batch_size)):
            xb = x_ep[lo: lo + cfg.batch_size]
            yb = y_ep[lo: lo + cfg.batch_size]
            loss, _ = model.backward(xb, yb, grad)
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDiverged(epoch, bi, last_checkpoint)
            total += loss * xb.shape[0]
            opt.step(model.params, grad)
        history.train_loss.append(total / count)
        if val_ds is not None:
            history.val_loss.append(evaluate(model, val_ds))
        history.seconds.append(time.perf_counter() - start)
        if checkpoint_dir is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            last_checkpoint, opt_path = checkpoint_paths(checkpoint_dir, epoch)
            model.save(last_checkpoint)
            np.savez(opt_path, **opt.state())
        if callback is not None:
            callback(epoch, history)
        log.debug("epoch %d loss %.3e", epoch, history.train_loss[-1])
    return model, history
