"""Two-stage (or joint) training, evaluation and checkpoint round-trips."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ..autograd.engine import backward, no_grad
from ..model import QOT, build_model
from ..ortho import build_quaternion
from ..qnn.losses import LossWeights, combined_loss, cross_entropy, orthogonal_loss
from .config import RunConfig, format_config, parse_config
from .metrics import accuracy, confusion_matrix
from .optim import make_optimizer
from .tensorio import load_checkpoint, save_checkpoint

__all__ = [
    "TrainingError",
    "MetricRow",
    "TrainResult",
    "STAGES",
    "train",
    "predict",
    "evaluate",
    "save_model",
    "load_model",
]

log = logging.getLogger(__name__)

STAGES = ("two-stage", "ortho", "qvit", "joint")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class MetricRow:
    epoch: int
    split: str
    loss: float
    accuracy: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.split}\t{self.loss:.6f}\t{self.accuracy:.4f}"


@dataclass
class TrainResult:
    model: QOT
    metrics: list[MetricRow] = field(default_factory=list)
    steps: int = 0
    seed: int = 0
    stage: str = "two-stage"


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


def _first_nonfinite(model: QOT) -> str:
    for name, p in model.named_parameters():
        if not np.all(np.isfinite(p.value)):
            return f"parameter {name}"
    for name, p in model.named_parameters():
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            return f"gradient of {name}"
    return "loss (all parameters and gradients finite)"


def _check_loss(loss: float, model: QOT, stage: str, epoch: int, step: int):
    if not np.isfinite(loss):
        raise TrainingError(
            f"non-finite loss {loss} in stage {stage}, epoch {epoch}, step {step}; "
            f"first non-finite tensor: {_first_nonfinite(model)}"
        )


def _features(model: QOT, x: np.ndarray, batch_size: int) -> np.ndarray:
    with no_grad():
        return np.concatenate(
            [model.quaternion_features(x[i : i + batch_size]).value for i in range(0, len(x), batch_size)]
        )


def train(
    cfg: RunConfig,
    x: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    stage: str = "two-stage",
    model: QOT | None = None,
    on_metric: Callable[[MetricRow], None] | None = None,
    val: tuple[np.ndarray, np.ndarray] | None = None,
) -> TrainResult:
    """Train on in-memory data ``x`` (images or precomputed maps) with labels ``y``.

    Deterministic for a fixed ``seed``: initialization and batch order both
    derive from it.
    """
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
    if len(x) == 0:
        raise ValueError("training set is empty")
    if len(x) != len(y):
        raise ValueError(f"{len(x)} samples but {len(y)} labels")
    model = model if model is not None else build_model(cfg, seed)
    x = model.cast_input(x)
    y = np.asarray(y, dtype=np.int64)
    result = TrainResult(model, seed=seed, stage=stage)
    rng = np.random.default_rng(seed + 1)
    weights = LossWeights(cfg.lam)

    def emit(row: MetricRow):
        result.metrics.append(row)
        log.info(row.line())
        if on_metric:
            on_metric(row)

    if stage in ("two-stage", "ortho"):
        _stage_ortho(cfg, model, x, y, rng, weights, result, emit)
    if stage in ("two-stage", "qvit"):
        _stage_qvit(cfg, model, x, y, rng, weights, result, emit, val)
    if stage == "joint":
        _stage_joint(cfg, model, x, y, rng, weights, result, emit, val)
    return result


def _stage_ortho(cfg, model, x, y, rng, weights, result, emit):
    model.qvit.freeze()
    model.backbone.unfreeze()
    model.head.unfreeze()
    params = {**{f"backbone.{k}": v for k, v in model.backbone.trainable_parameters().items()},
              **{f"head.{k}": v for k, v in model.head.trainable_parameters().items()}}
    opt = make_optimizer(cfg.optimizer, params, cfg.lr, cfg.momentum)
    for epoch in range(1, cfg.epochs_ortho + 1):
        tot_loss = correct = 0.0
        for idx in _batches(len(x), cfg.batch_size, rng):
            opt.zero_grad()
            dec = model.decompose(x[idx])
            logits = model.aux_logits(dec)
            loss = combined_loss(cross_entropy(logits, y[idx]), orthogonal_loss(*dec.vectors), weights)
            backward(loss)
            result.steps += 1
            _check_loss(loss.item(), model, "ortho", epoch, result.steps)
            opt.step()
            tot_loss += loss.item() * len(idx)
            correct += float((logits.value.argmax(axis=1) == y[idx]).sum())
        emit(MetricRow(epoch, "ortho", tot_loss / len(x), correct / len(x)))


def _stage_qvit(cfg, model, x, y, rng, weights, result, emit, val):
    model.backbone.freeze()
    if cfg.ortho_in_stage2:
        model.head.unfreeze()
    else:
        model.head.freeze()
    model.qvit.unfreeze()
    params = {f"qvit.{k}": v for k, v in model.qvit.trainable_parameters().items()}
    if cfg.ortho_in_stage2:
        params.update({f"head.{k}": v for k, v in model.head.trainable_parameters().items()})
    opt = make_optimizer(cfg.optimizer, params, cfg.lr, cfg.momentum)
    feats = None if cfg.ortho_in_stage2 else _features(model, x, cfg.batch_size)
    for epoch in range(1, cfg.epochs_qvit + 1):
        tot_loss = correct = 0.0
        for idx in _batches(len(x), cfg.batch_size, rng):
            opt.zero_grad()
            if feats is not None:
                logits = model.qvit(feats[idx])
                loss = cross_entropy(logits, y[idx])
            else:
                dec = model.decompose(x[idx])
                logits = model.qvit(build_quaternion(*dec.maps))
                loss = combined_loss(cross_entropy(logits, y[idx]), orthogonal_loss(*dec.vectors), weights)
            backward(loss)
            result.steps += 1
            _check_loss(loss.item(), model, "qvit", epoch, result.steps)
            opt.step()
            tot_loss += loss.item() * len(idx)
            correct += float((logits.value.argmax(axis=1) == y[idx]).sum())
        emit(MetricRow(epoch, "train", tot_loss / len(x), correct / len(x)))
        if val is not None:
            emit(_val_row(model, val, epoch, cfg.batch_size))


def _stage_joint(cfg, model, x, y, rng, weights, result, emit, val):
    model.unfreeze()
    opt = make_optimizer(cfg.optimizer, model.trainable_parameters(), cfg.lr, cfg.momentum)
    for epoch in range(1, max(cfg.epochs_qvit, 1) + 1):
        tot_loss = correct = 0.0
        for idx in _batches(len(x), cfg.batch_size, rng):
            opt.zero_grad()
            dec = model.decompose(x[idx])
            logits = model.qvit(build_quaternion(*dec.maps))
            loss = combined_loss(cross_entropy(logits, y[idx]), orthogonal_loss(*dec.vectors), weights)
            backward(loss)
            result.steps += 1
            _check_loss(loss.item(), model, "joint", epoch, result.steps)
            opt.step()
            tot_loss += loss.item() * len(idx)
            correct += float((logits.value.argmax(axis=1) == y[idx]).sum())
        emit(MetricRow(epoch, "joint", tot_loss / len(x), correct / len(x)))
        if val is not None:
            emit(_val_row(model, val, epoch, cfg.batch_size))


def _val_row(model, val, epoch, batch_size) -> MetricRow:
    vx, vy = val
    logits = predict_logits(model, vx, batch_size)
    with no_grad():
        loss = cross_entropy(logits, np.asarray(vy, dtype=np.int64)).item()
    return MetricRow(epoch, "val", loss, float((logits.argmax(axis=1) == vy).mean()))


def predict_logits(model: QOT, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    x = model.cast_input(x)
    with no_grad():
        return np.concatenate([model(x[i : i + batch_size]).value for i in range(0, len(x), batch_size)])


def predict(model: QOT, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    return predict_logits(model, x, batch_size).argmax(axis=1)


def evaluate(model: QOT, x: np.ndarray, y: np.ndarray, batch_size: int = 64) -> tuple[float, np.ndarray]:
    """(accuracy, K x K confusion matrix with rows = true label)."""
    cm = confusion_matrix(y, predict(model, x, batch_size), model.cfg.num_classes)
    return accuracy(cm), cm


def save_model(path, model: QOT, seed: int = 0, steps: int = 0, stage: str = ""):
    header = {f"config.{line.split(' = ')[0]}": line.split(" = ", 1)[1]
              for line in format_config(model.cfg).splitlines()}
    header.update({"seed": seed, "steps": steps, "stage": stage})
    save_checkpoint(path, header, model.state_dict())


def load_model(path) -> tuple[QOT, dict[str, str]]:
    ckpt = load_checkpoint(path)
    text = "\n".join(f"{k[len('config.'):]} = {v}" for k, v in ckpt.header.items() if k.startswith("config."))
    cfg = parse_config(text, source=str(path))
    model = build_model(cfg, int(ckpt.header.get("seed", 0)))
    model.load_state_dict(ckpt.tensors)
    return model, ckpt.header
