"""Mini-batch Adam training with separate encoder and head learning rates."""
from __future__ import annotations

import copy
import csv
import logging
import math
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import torch

from .corpus import EncodedDocument
from .errors import ConfigurationError, InputError, TrainingError
from .labeling import Label
from .metrics import classification_metrics
from .model import ModelConfig, RiskClassifier, batch_loss, predict

log = logging.getLogger(__name__)


@dataclass
class TrainingConfig:
    lr_encoder: float = 1e-6
    lr_head: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 16
    max_epochs: int = 20
    patience: int = 5
    seed: int = 0
    pos_weight: float = 1.0

    def validate(self) -> "TrainingConfig":
        for key in ("lr_encoder", "lr_head"):
            if getattr(self, key) < 0:
                raise ConfigurationError(f"{key} must be >= 0", key=key)
        for key in ("batch_size", "max_epochs", "patience"):
            if getattr(self, key) < 1:
                raise ConfigurationError(f"{key} must be >= 1", key=key)
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps <= 0:
            raise ConfigurationError("invalid Adam hyperparameters", key="beta1")
        if self.pos_weight <= 0:
            raise ConfigurationError("pos_weight must be > 0", key="pos_weight")
        return self

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_f1: float
    val_precision: float
    val_recall: float
    seconds: float


HISTORY_FIELDS = ("epoch", "train_loss", "val_f1", "val_precision", "val_recall", "seconds")


def targets_of(labels: Sequence[Label]) -> np.ndarray:
    return np.array([1.0 if lab == Label.RISKY else 0.0 for lab in labels])


def evaluate_f1(model, docs, targets) -> tuple[float, float, float]:
    traces = predict(model, docs)
    pred = [t.label == Label.RISKY for t in traces]
    precision, recall, f1, _ = classification_metrics(pred, np.asarray(targets) == 1)
    return f1, precision, recall


def make_optimizer(model: RiskClassifier, cfg: TrainingConfig) -> torch.optim.Adam:
    return torch.optim.Adam(
        [{"params": model.encoder_parameters(), "lr": cfg.lr_encoder},
         {"params": model.head_parameters(), "lr": cfg.lr_head}],
        betas=(cfg.beta1, cfg.beta2), eps=cfg.eps)


def train(train_docs: Sequence[EncodedDocument], train_targets,
          val_docs: Sequence[EncodedDocument], val_targets,
          model_config: ModelConfig, training_config: TrainingConfig,
          model: RiskClassifier | None = None) -> tuple[RiskClassifier, list[EpochRecord]]:
    """Train and return the parameters with the best validation F1."""
    cfg = training_config.validate()
    if not train_docs or not val_docs:
        raise InputError("training and validation sets must be nonempty")
    train_targets = np.asarray(train_targets, dtype=np.float64)
    val_targets = np.asarray(val_targets, dtype=np.float64)
    model = model if model is not None else RiskClassifier(model_config)
    optimizer = make_optimizer(model, cfg)
    rng = np.random.default_rng(cfg.seed)
    dropout_gen = torch.random.fork_rng(devices=[])
    history: list[EpochRecord] = []
    best_f1, best_state, stale = -1.0, None, 0

    with dropout_gen:
        torch.manual_seed(cfg.seed)
        for epoch in range(1, cfg.max_epochs + 1):
            started = time.perf_counter()
            model.train()
            order = rng.permutation(len(train_docs))
            total, count = 0.0, 0
            for start in range(0, len(order), cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                loss = batch_loss(model, [train_docs[i] for i in idx], train_targets[idx],
                                  cfg.pos_weight)
                if not torch.isfinite(loss):
                    raise TrainingError("non-finite training loss", epoch)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                total += loss.item() * len(idx)
                count += len(idx)
            f1, precision, recall = evaluate_f1(model, val_docs, val_targets)
            record = EpochRecord(epoch, total / count, f1, precision, recall,
                                 time.perf_counter() - started)
            history.append(record)
            log.info("epoch %d loss %.4f val_f1 %.4f", epoch, record.train_loss, f1)
            if not math.isfinite(record.train_loss):
                raise TrainingError("non-finite training loss", epoch)
            if f1 > best_f1:
                best_f1, best_state, stale = f1, copy.deepcopy(model.state_dict()), 0
            else:
                stale += 1
                if stale >= cfg.patience:
                    break
    model.load_state_dict(best_state)
    model.eval()
    return model, history


def write_history(path, history: Sequence[EpochRecord]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_FIELDS)
        for rec in history:
            w.writerow([rec.epoch, repr(rec.train_loss), repr(rec.val_f1),
                        repr(rec.val_precision), repr(rec.val_recall), f"{rec.seconds:.3f}"])
