"""Training loop: Adam, learning-rate policies, early stopping.

Gradients are accumulated per sentence and normalized once per update,
so splitting a batch into micro-batches leaves the summed gradient (and
hence the trajectory) unchanged. Training aborts with diagnostics if the
loss goes non-finite; plateau and divergence events also land in the log.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autograd as ag
from .autograd import ParameterStore
from .data import Example
from .rng import RandomSource

PRETRAIN_SEQUENTIAL = "pretrain_sequential"
FINETUNE_LATTICE = "finetune_lattice"


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class AdamConfig:
    beta1: float = 0.9
    beta2: float = 0.98
    eps: float = 1e-9
    lr_scale: float = 1.0


@dataclass(frozen=True)
class TrainSchedule:
    phase: str = PRETRAIN_SEQUENTIAL
    adam: AdamConfig = field(default_factory=AdamConfig)
    lr_policy: str = "warmup_decay"     # warmup_decay | fixed
    fixed_lr: float = 1e-4
    warmup_steps: int = 400
    label_smoothing: float = 0.1
    batch_sentences: int = 16
    micro_batch: int | None = None      # accumulation chunk; None = whole batch
    patience_epochs: int = 15
    max_epochs: int = 30
    lr_step_offset: int = 0             # continue a decay schedule mid-flight

    def lr(self, step: int, d_model: int) -> float:
        if self.lr_policy == "fixed":
            return self.fixed_lr
        if self.lr_policy == "warmup_decay":
            s = max(step + self.lr_step_offset, 1)
            return (self.adam.lr_scale * d_model ** -0.5
                    * min(s ** -0.5, s * self.warmup_steps ** -1.5))
        raise ValueError(f"unknown lr policy {self.lr_policy!r}")


class Adam:
    def __init__(self, store: ParameterStore, config: AdamConfig):
        self.store = store
        self.config = config
        self.t = 0
        self._m = {p.name: np.zeros_like(p.tensor.data) for p in store}
        self._v = {p.name: np.zeros_like(p.tensor.data) for p in store}

    def step(self, lr: float) -> None:
        c = self.config
        self.t += 1
        b1t = 1.0 - c.beta1 ** self.t
        b2t = 1.0 - c.beta2 ** self.t
        for p in self.store:
            g = p.tensor.grad
            if g is None:
                continue
            m = self._m[p.name]
            v = self._v[p.name]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p.tensor.data -= lr * (m / b1t) / (np.sqrt(v / b2t) + c.eps)


@dataclass
class TrainLog:
    records: list[dict] = field(default_factory=list)
    best_metric: float = -math.inf
    best_epoch: int = -1
    steps: int = 0

    def write_jsonl(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")


def train(model, corpus: list[Example], schedule: TrainSchedule,
          dev: list[Example] | None = None, rng: RandomSource | None = None,
          log_path: str | None = None) -> TrainLog:
    """Single-phase training; returns the log and leaves the model holding
    the best-validation parameters (final parameters if no dev set)."""
    if not corpus:
        raise ValueError("empty training corpus")
    rng = rng or RandomSource(0)
    adam = Adam(model.store, schedule.adam)
    d_model = model.config.encoder.d_model
    log = TrainLog()
    best_state = None
    epochs_since_best = 0
    step = 0
    micro = schedule.micro_batch or schedule.batch_sentences

    for epoch in range(schedule.max_epochs):
        order = list(range(len(corpus)))
        rng.split(f"epoch{epoch}").shuffle(order)
        epoch_loss = 0.0
        epoch_tokens = 0
        epoch_correct = 0
        drop_rng = rng.split(f"dropout{epoch}")
        for b0 in range(0, len(order), schedule.batch_sentences):
            batch = order[b0:b0 + schedule.batch_sentences]
            model.store.zero_grads()
            batch_loss = 0.0
            for m0 in range(0, len(batch), micro):
                for idx in batch[m0:m0 + micro]:
                    ex = corpus[idx]
                    loss, n_tok, n_corr = model.loss_example(
                        ex, schedule.label_smoothing, ag.TRAIN, drop_rng)
                    ag.backward(loss)
                    val = float(loss.data)
                    if not math.isfinite(val):
                        diag = {"epoch": epoch, "step": step, "sentence": idx, "loss": val}
                        log.records.append({"event": "nan_loss", **diag})
                        if log_path:
                            log.write_jsonl(log_path)
                        raise TrainingDiverged("non-finite training loss", diag)
                    batch_loss += val
                    epoch_tokens += n_tok
                    epoch_correct += n_corr
            for p in model.store:
                if p.tensor.grad is not None:
                    p.tensor.grad /= len(batch)
            step += 1
            adam.step(schedule.lr(step, d_model))
            epoch_loss += batch_loss
        record = {
            "epoch": epoch,
            "phase": schedule.phase,
            "loss": epoch_loss / len(corpus),
            "teacher_forced_accuracy": epoch_correct / max(epoch_tokens, 1),
            "lr": schedule.lr(step, d_model),
            "step": step,
        }
        if dev is not None:
            metrics = model.evaluate(dev, compute_bleu=False)
            record["val_token_accuracy"] = metrics["token_accuracy"]
            metric = metrics["token_accuracy"]
            if metric > log.best_metric:
                log.best_metric = metric
                log.best_epoch = epoch
                best_state = model.store.state()
                epochs_since_best = 0
            else:
                epochs_since_best += 1
        log.records.append(record)
        if log_path:
            log.write_jsonl(log_path)
        if dev is not None and epochs_since_best >= schedule.patience_epochs:
            log.records.append({"event": "early_stop_plateau", "epoch": epoch,
                                "best_epoch": log.best_epoch})
            break
    if best_state is not None:
        model.store.load_state(best_state)
    log.steps = step
    if log_path:
        log.write_jsonl(log_path)
    return log


def pretrain_finetune(model, seq_corpus: list[Example], lat_corpus: list[Example],
                      dev: list[Example] | None, pre: TrainSchedule, fine: TrainSchedule,
                      rng: RandomSource, log_path: str | None = None) -> tuple[TrainLog, TrainLog]:
    """Two-phase schedule: sequential pretraining then lattice finetuning."""
    pre_log = train(model, seq_corpus, dataclasses.replace(pre, phase=PRETRAIN_SEQUENTIAL),
                    dev=dev, rng=rng.split("pretrain"))
    fine_log = train(model, lat_corpus, dataclasses.replace(fine, phase=FINETUNE_LATTICE),
                     dev=dev, rng=rng.split("finetune"))
    if log_path:
        merged = TrainLog(records=pre_log.records + fine_log.records)
        merged.write_jsonl(log_path)
    return pre_log, fine_log
