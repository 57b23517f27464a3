"""Evaluation and plain mini-batch SGD training of layer-list models."""

from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceDetected, ShapeInconsistency
from .model import check_shapes, forward, loss_and_grads


@dataclass(frozen=True)
class EvalResult:
    top1: float
    top5: float
    n_samples: int


def predict(model, images, batch=256):
    check_shapes(model)
    outs = [forward(model, images[i:i + batch]) for i in range(0, len(images), batch)]
    return np.concatenate(outs) if outs else np.zeros((0, 0))


def topk_hits(scores, labels, k):
    """Hits per sample; ties are ranked toward the lower class index."""
    ranked = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    return (ranked == labels[:, None]).any(axis=1)


def evaluate(model, data, batch=256):
    if len(data) == 0:
        return EvalResult(0.0, 0.0, 0)
    scores = predict(model, data.images, batch)
    if scores.shape[1] < data.classes:
        raise ShapeInconsistency(f"model has {scores.shape[1]} outputs for {data.classes} classes")
    n = len(data)
    top1 = float(np.count_nonzero(topk_hits(scores, data.labels, 1))) / n
    top5 = float(np.count_nonzero(topk_hits(scores, data.labels, 5))) / n
    return EvalResult(top1, top5, n)


@dataclass
class TrainResult:
    model: object
    loss_trace: list  # mean training loss per epoch


def train_toy(model, data, epochs=10, lr=0.1, batch=32, seed=0, on_epoch=None):
    """SGD on mean cross entropy. Deterministic given ``seed``.

    ``on_epoch(epoch, model)`` is called after every epoch (1-based).
    """
    check_shapes(model)
    rng = np.random.default_rng(seed)
    params = {k: v.array.copy() for k, v in model.params.items()}
    trace = []
    n = len(data)
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            current = model.with_params(params)
            loss, grads = loss_and_grads(current, data.images[idx], data.labels[idx])
            if not np.isfinite(loss):
                raise DivergenceDetected(f"non-finite loss at epoch {epoch}, batch starting {start}")
            total += loss * len(idx)
            if lr:
                for name, g in grads.items():
                    params[name] = params[name] - lr * g
                    if not np.all(np.isfinite(params[name])):
                        raise DivergenceDetected(f"parameter {name!r} became non-finite at epoch {epoch}")
        trace.append(total / max(n, 1))
        if on_epoch is not None:
            on_epoch(epoch, model.with_params(params))
    return TrainResult(model.with_params(params), trace)
