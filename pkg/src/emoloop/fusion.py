"""Condition fusion: weighted combination of the two query streams and the
class token into the generator condition c, the classification head on c,
and the placeholder-prompt pathway that turns c into the denoiser's
cross-attention context."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .nn import Linear, Mlp, Module, ModuleList, TransformerBlock
from .tensor import DiffTensor


@dataclass
class ConditionVector:
    c: DiffTensor  # [d_cond] or [B, d_cond]
    emotion: int | str  # intended emotion index, or "encoded" during training
    w_scene: float | np.ndarray
    w_object: float | np.ndarray


@dataclass
class PromptTemplate:
    """Fixed 8-token prompt with exactly one placeholder slot.

    Non-placeholder slots index rows of a learned vocabulary table; the
    placeholder slot receives the condition vector verbatim at lookup time.
    """

    words: tuple = ("<start>", "a", "photo", "that", "evokes", "<emo>", "feeling", "today")
    placeholder: str = "<emo>"
    vocab: tuple = field(init=False)
    slot: int = field(init=False)

    def __post_init__(self):
        if list(self.words).count(self.placeholder) != 1:
            raise ValueError("template must contain exactly one placeholder slot")
        self.vocab = tuple(w for w in self.words if w != self.placeholder)
        self.slot = self.words.index(self.placeholder)

    def word_rows(self) -> list[tuple[int, int]]:
        """(sequence position, vocabulary row) for every non-placeholder slot."""
        lookup = {w: i for i, w in enumerate(self.vocab)}
        return [(pos, lookup[w]) for pos, w in enumerate(self.words) if w != self.placeholder]

    def __len__(self):
        return len(self.words)


class ConditionFuser(Module):
    """c = w_scene*phi1(q_scene) + w_object*phi2(q_object) + phi3(t_cls)."""

    def __init__(self, dim: int, d_cond: int, rng: np.random.Generator):
        self.dim, self.d_cond = dim, d_cond
        self.phi1 = Mlp(dim, dim, d_cond, rng, act="relu")
        self.phi2 = Mlp(dim, dim, d_cond, rng, act="relu")
        self.phi3 = Mlp(dim, dim, d_cond, rng, act="relu")
        self.cond_head = Linear(d_cond, 8, rng)

    @staticmethod
    def _as_weight(w, batch: int) -> np.ndarray:
        arr = np.asarray(w, dtype=np.float64).reshape(-1)
        if arr.size == 1:
            arr = np.full(batch, arr[0])
        return arr[:, None]

    def fuse(self, q_scene_pooled: DiffTensor, q_object_pooled: DiffTensor,
             t_cls: DiffTensor, w_scene, w_object) -> DiffTensor:
        """Coefficient-weighted element-wise sum over [B, d] streams."""
        b = t_cls.shape[0]
        ws = self._as_weight(w_scene, b)
        wo = self._as_weight(w_object, b)
        if np.any(ws <= 0) or np.any(wo <= 0):
            raise ValueError("fusion weights must be positive")
        return (
            self.phi1(q_scene_pooled) * ws
            + self.phi2(q_object_pooled) * wo
            + self.phi3(t_cls)
        )

    def condition_logits(self, c: DiffTensor) -> DiffTensor:
        """Emotion distribution e_p of the condition: softmax of an affine head."""
        return T.softmax(self.cond_head(c), axis=-1)


class PromptEncoder(Module):
    """Placeholder-token injection followed by a small bidirectional
    transformer; its output is the denoiser's cross-attention context."""

    def __init__(self, d_cond: int, heads: int, rng: np.random.Generator,
                 template: PromptTemplate | None = None, n_layers: int = 2):
        self.template = template or PromptTemplate()
        self.vocab_embed = T.Parameter(
            "vocab_embed", rng.normal(0.0, 0.02, size=(len(self.template.vocab), d_cond))
        )
        self.pos_embed = T.Parameter(
            "pos_embed", rng.normal(0.0, 0.02, size=(len(self.template), d_cond))
        )
        self.blocks = ModuleList([TransformerBlock(d_cond, heads, rng, ffn_mult=2)
                                  for _ in range(n_layers)])
        self.d_cond = d_cond

    def inject_placeholder(self, c: DiffTensor) -> DiffTensor:
        """[B, d_cond] condition -> [B, 8, d_cond] embeddings, positions added."""
        if c.ndim == 1:
            c = T.reshape(c, (1, c.shape[0]))
        b = c.shape[0]
        parts = []
        for pos in range(len(self.template)):
            if pos == self.template.slot:
                parts.append(T.reshape(c, (b, 1, self.d_cond)))
            else:
                row = dict(self.template.word_rows())[pos]
                emb = T.gather_rows(self.vocab_embed.tensor, [row])
                parts.append(T.broadcast_to(T.reshape(emb, (1, 1, self.d_cond)),
                                            (b, 1, self.d_cond)))
        return T.concat(parts, axis=1) + self.pos_embed.tensor

    def text_transform(self, embeddings: DiffTensor) -> DiffTensor:
        x = embeddings
        for block in self.blocks:
            x = block(x)
        return x

    def __call__(self, c: DiffTensor) -> DiffTensor:
        return self.text_transform(self.inject_placeholder(c))
