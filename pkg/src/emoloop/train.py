"""Training loops: stage-1 understanding, stage-2 joint, probe and eval models.

Everything is deterministic from (config, seed): batch order comes from a
seeded generator, and log rows contain no wall-clock values so that reports
are byte-reproducible.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .data import Corpus, attribute_table
from .encoder import Encoder
from .losses import LossWeights, cross_entropy, info_nce, pool_query, stage1_loss
from .optim import make_optimizer
from .tensor import DiffTensor, no_grad


class NumericalError(RuntimeError):
    """Raised when a loss goes non-finite; message carries the diagnostics."""


def batch_indices(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    return [order[i : i + batch_size] for i in range(0, n, batch_size)]


def evaluate_accuracy(encoder: Encoder, images: np.ndarray, labels: np.ndarray,
                      batch_size: int = 256) -> float:
    hits = 0
    with no_grad():
        for i in range(0, len(images), batch_size):
            out = encoder.encode(images[i : i + batch_size])
            hits += int((out.logits.data.argmax(axis=1) == labels[i : i + batch_size]).sum())
    return hits / len(images)


def attribute_targets(scene_ids: np.ndarray, object_ids: np.ndarray, dim: int):
    """Frozen contrastive targets for a batch: scene rows 0-7, object rows 8-15."""
    table = attribute_table(dim)
    return DiffTensor(table[scene_ids]), DiffTensor(table[8 + object_ids])


def stage1_batch_loss(encoder: Encoder, images, emotions, scene_ids, object_ids,
                      weights: LossWeights):
    """Weighted understanding loss on one batch; also returns the components."""
    out = encoder.encode(images)
    l_cls = cross_entropy(out.logits, emotions)
    if out.q_scene is not None:
        z_s, z_o = attribute_targets(scene_ids, object_ids, encoder.config.dim)
        l_s = info_nce(pool_query(out.q_scene), z_s, weights.tau)
        l_o = info_nce(pool_query(out.q_object), z_o, weights.tau)
    else:
        l_s = DiffTensor(np.array(0.0))
        l_o = DiffTensor(np.array(0.0))
    loss = stage1_loss(l_s, l_o, l_cls, weights)
    parts = {"l_s": l_s.item(), "l_o": l_o.item(), "l_cls": l_cls.item()}
    return loss, parts, out


def _check_finite(loss_value: float, parts: dict, epoch: int, batch: int):
    if not np.isfinite(loss_value):
        detail = ", ".join(f"{k}={v:.6g}" for k, v in parts.items())
        raise NumericalError(
            f"non-finite loss at epoch {epoch}, batch {batch}: total={loss_value} ({detail})"
        )


def train_stage1(encoder: Encoder, corpus: Corpus, epochs: int, lr: float,
                 optimizer_kind: str = "momentum", batch_size: int = 32,
                 weights: LossWeights | None = None, seed: int = 0,
                 verbose: bool = False) -> list[dict]:
    """Minimize the stage-1 objective; returns one log row per epoch."""
    weights = weights or LossWeights()
    images, emotions, scene_ids, object_ids = corpus.stacked("train")
    test_images, test_labels, _, _ = corpus.stacked("test")
    opt = make_optimizer(optimizer_kind, list(encoder.named_parameters()), lr)
    rng = np.random.default_rng([seed, 101])
    logs = []
    for epoch in range(epochs):
        sums = {"loss": 0.0, "l_s": 0.0, "l_o": 0.0, "l_cls": 0.0}
        batches = batch_indices(len(images), batch_size, rng)
        for bi, idx in enumerate(batches):
            loss, parts, _ = stage1_batch_loss(
                encoder, images[idx], emotions[idx], scene_ids[idx], object_ids[idx], weights
            )
            value = loss.item()
            _check_finite(value, parts, epoch, bi)
            opt.zero_grad()
            T.backward(loss)
            opt.step()
            sums["loss"] += value
            for k in parts:
                sums[k] += parts[k]
        row = {k: v / len(batches) for k, v in sums.items()}
        row["epoch"] = epoch
        row["test_acc"] = evaluate_accuracy(encoder, test_images, test_labels)
        logs.append(row)
        if verbose:
            print(
                f"stage1 epoch {epoch}: loss={row['loss']:.4f} "
                f"l_cls={row['l_cls']:.4f} test_acc={row['test_acc']:.4f}"
            )
    return logs
