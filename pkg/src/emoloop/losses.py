"""Training objectives: contrastive attribute supervision, classification,
the triplet condition loss with its negative-selection rule, and the two
stage-level weighted combinations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import DiffTensor


@dataclass
class LossWeights:
    lambda1: float = 0.25
    lambda2: float = 0.25
    lambda3: float = 0.5
    gamma1: float = 0.3
    gamma2: float = 0.3
    gamma3: float = 0.4
    tau: float = 0.07
    xi: float = 0.1

    def __post_init__(self):
        for name, v in self.__dict__.items():
            if v <= 0:
                raise ValueError(f"loss weight {name} must be positive, got {v}")


def pool_query(bank: DiffTensor) -> DiffTensor:
    """Mean over the token axis, then L2-normalize. [q,d] -> [d], [B,q,d] -> [B,d]."""
    pooled = bank.mean(axis=-2)
    norm = T.sqrt(T.tsum(pooled * pooled, axis=-1, keepdims=True))
    return pooled / norm


def info_nce(pooled: DiffTensor, targets: DiffTensor, tau: float) -> DiffTensor:
    """In-batch contrastive loss with dot-product similarity.

    Row i of ``targets`` is the positive for row i of ``pooled``; every other
    row serves as a negative. Duplicated targets inside a batch are kept as-is.
    """
    k = pooled.shape[0]
    if targets.shape != pooled.shape:
        raise ValueError(f"pooled {pooled.shape} and targets {targets.shape} disagree")
    sims = T.matmul(pooled, T.swap_last(targets)) * (1.0 / tau)
    log_p = T.log_softmax(sims, axis=-1)
    diag = T.tsum(log_p * np.eye(k))
    return diag * (-1.0 / k)


def cross_entropy(logits: DiffTensor, labels) -> DiffTensor:
    """Mean -log softmax(logits)[label] over a [B,8] batch."""
    labels = np.asarray(labels, dtype=np.int64)
    b, c = logits.shape
    onehot = np.zeros((b, c))
    onehot[np.arange(b), labels] = 1.0
    return T.tsum(T.log_softmax(logits, axis=-1) * onehot) * (-1.0 / b)


def classification_loss(logits: DiffTensor, label: int) -> DiffTensor:
    """-log softmax(logits)[label] for a single [8] logit vector."""
    if logits.ndim != 1:
        raise ValueError(f"classification_loss expects a 1-D logit vector, got {logits.shape}")
    return cross_entropy(T.reshape(logits, (1, logits.shape[0])), [label])


def select_negative(probs: np.ndarray, true_label: int) -> int:
    """Negative class for the condition triplet.

    If the top-scoring class is the true label, use the runner-up; otherwise
    use the misclassified top class. Ties break toward the lowest index.
    """
    probs = np.asarray(probs, dtype=np.float64)
    order = np.argsort(-probs, kind="stable")
    top = int(order[0])
    return int(order[1]) if top == true_label else top


def condition_loss(e_p: DiffTensor, e_plus: np.ndarray, e_minus: np.ndarray,
                   xi: float) -> DiffTensor:
    """Hinge on cosine distances: max(0, d(e_p,e+) - d(e_p,e-) + xi)."""
    e_plus = np.asarray(e_plus, dtype=np.float64)
    e_minus = np.asarray(e_minus, dtype=np.float64)
    if np.array_equal(e_plus, e_minus):
        raise ValueError("positive and negative one-hots must differ")
    if not np.linalg.norm(e_p.data):
        raise ValueError("condition distribution has zero norm")
    norm = T.sqrt(T.tsum(e_p * e_p))
    cos_p = T.tsum(e_p * e_plus) / norm
    cos_m = T.tsum(e_p * e_minus) / norm
    # d+ - d- + xi == cos- - cos+ + xi
    return T.relu(cos_m - cos_p + xi)


def condition_loss_batch(e_p: DiffTensor, plus_idx, minus_idx, xi: float) -> DiffTensor:
    """Mean triplet hinge over a [B,8] batch of condition distributions."""
    plus_idx = np.asarray(plus_idx, dtype=np.int64)
    minus_idx = np.asarray(minus_idx, dtype=np.int64)
    b, c = e_p.shape
    plus = np.zeros((b, c))
    plus[np.arange(b), plus_idx] = 1.0
    minus = np.zeros((b, c))
    minus[np.arange(b), minus_idx] = 1.0
    norm = T.sqrt(T.tsum(e_p * e_p, axis=-1, keepdims=True))
    cos_p = T.tsum(e_p * plus, axis=-1, keepdims=True) / norm
    cos_m = T.tsum(e_p * minus, axis=-1, keepdims=True) / norm
    return T.tmean(T.relu(cos_m - cos_p + xi))


def stage1_loss(l_s: DiffTensor, l_o: DiffTensor, l_cls: DiffTensor,
                weights: LossWeights) -> DiffTensor:
    return l_s * weights.lambda1 + l_o * weights.lambda2 + l_cls * weights.lambda3


def joint_loss(l_u: DiffTensor, l_cond: DiffTensor, l_diff: DiffTensor,
               weights: LossWeights) -> DiffTensor:
    return l_u * weights.gamma1 + l_cond * weights.gamma2 + l_diff * weights.gamma3
