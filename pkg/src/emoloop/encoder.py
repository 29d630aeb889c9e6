"""Hierarchical understanding chain.

A small vision transformer whose forward pass injects a scene-query bank at
the input and an object-query bank after stage L1, refines each bank against
the patch tokens through a two-layer interactive block, blends the refinement
back with a learnable scalar, and lets everything attend together through the
remaining layers. Output: class token, the evolved query banks, emotion
logits, and per-bank attention maps over the patch grid.

Injection modes: "multi" (staged, the default), "single" (both banks at the
input), "none" (plain ViT baseline for ablations).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .nn import (
    LayerNorm,
    Linear,
    Mlp,
    Module,
    ModuleList,
    MultiHeadAttention,
    TransformerBlock,
    expand_rows,
)
from .tensor import DiffTensor, Parameter


@dataclass
class EncoderConfig:
    n_layers: int = 6
    l1: int = 2
    l2: int = 4
    dim: int = 64
    heads: int = 4
    patch: int = 4
    s_len: int = 4
    o_len: int = 4
    image_size: int = 32
    injection: str = "multi"  # multi | single | none

    def __post_init__(self):
        if self.injection not in ("multi", "single", "none"):
            raise ValueError(f"unknown injection mode {self.injection!r}")
        if self.injection == "none":
            self.s_len = 0
            self.o_len = 0
        if not 0 < self.l1 < self.l2 < self.n_layers:
            raise ValueError(
                f"stage splits must satisfy 0 < L1 < L2 < N, got {self.l1},{self.l2},{self.n_layers}"
            )
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.image_size % self.patch:
            raise ValueError(f"image size {self.image_size} not divisible by patch {self.patch}")

    @property
    def n_patches(self) -> int:
        return (self.image_size // self.patch) ** 2


@dataclass
class TokenSequence:
    """Token blocks in fixed order [cls | patch | scene | object]."""

    cls: DiffTensor  # [B, 1, d]
    patch: DiffTensor  # [B, P, d]
    scene: DiffTensor | None = None  # [B, S, d]
    object: DiffTensor | None = None  # [B, O, d]
    layer_index: int = 0

    def blocks(self) -> list[DiffTensor]:
        out = [self.cls, self.patch]
        if self.scene is not None:
            out.append(self.scene)
        if self.object is not None:
            out.append(self.object)
        return out

    def to_tensor(self) -> DiffTensor:
        return T.concat(self.blocks(), axis=1)

    def split_like(self, seq: DiffTensor, layer_index: int) -> "TokenSequence":
        """Re-slice a stage output into the same block structure."""
        sizes = [b.shape[1] for b in self.blocks()]
        parts, start = [], 0
        for s in sizes:
            parts.append(T.narrow(seq, 1, start, s))
            start += s
        out = TokenSequence(parts[0], parts[1], layer_index=layer_index)
        i = 2
        if self.scene is not None:
            out.scene = parts[i]
            i += 1
        if self.object is not None:
            out.object = parts[i]
        return out

    def check_schedule(self, config: EncoderConfig):
        """Injection-schedule invariant, asserted at stage boundaries."""
        if config.injection == "none":
            assert self.scene is None and self.object is None
            return
        if config.injection == "single":
            if self.layer_index >= 1:
                assert self.scene is not None and self.object is not None
            return
        if self.layer_index >= 1:
            assert self.scene is not None, "scene block must exist for layers >= 1"
        if self.layer_index > config.l1:
            assert self.object is not None, "object block must exist for layers > L1"
        else:
            assert self.object is None, "object block must not exist at layers <= L1"


@dataclass
class EncoderOutput:
    t_cls: DiffTensor  # [B, d]
    logits: DiffTensor  # [B, 8]
    q_scene: DiffTensor | None  # [B, S, d]
    q_object: DiffTensor | None  # [B, O, d]
    scene_attn: np.ndarray | None = None  # [B, P], rows sum to 1
    object_attn: np.ndarray | None = None


class InteractiveBlock(Module):
    """Two rounds of query refinement against read-only patch tokens:
    Q <- Q + A(Q, patch); Q <- Q + F(Q)."""

    def __init__(self, dim: int, heads: int, rng):
        self.attn = ModuleList([MultiHeadAttention(dim, heads, rng=rng) for _ in range(2)])
        self.ffn = ModuleList([Mlp(dim, 2 * dim, dim, rng, act="gelu") for _ in range(2)])

    def __call__(self, query: DiffTensor, patch: DiffTensor) -> DiffTensor:
        for attn, ffn in zip(self.attn, self.ffn):
            query = query + attn(query, patch, patch)
            query = query + ffn(query)
        return query


def modulate(q: DiffTensor, q_tilde: DiffTensor, beta: DiffTensor) -> DiffTensor:
    """Blend the refined bank back into the original: Q + beta * Q_tilde."""
    if q.shape != q_tilde.shape:
        raise ValueError(f"modulate shapes differ: {q.shape} vs {q_tilde.shape}")
    return q + beta * q_tilde


class Encoder(Module):
    def __init__(self, config: EncoderConfig, rng: np.random.Generator):
        self.config = config
        d, p = config.dim, config.patch
        self.patch_proj = Linear(3 * p * p, d, rng)
        self.cls_token = Parameter("cls_token", rng.normal(0.0, 0.02, size=(1, d)))
        self.pos_embed = Parameter(
            "pos_embed", rng.normal(0.0, 0.02, size=(1 + config.n_patches, d))
        )
        if config.s_len:
            self.scene_queries = Parameter(
                "scene_queries", rng.normal(0.0, 0.02, size=(config.s_len, d))
            )
            self.scene_ib = InteractiveBlock(d, config.heads, rng)
            self.beta_scene = Parameter("beta_scene", np.array(0.0))
        if config.o_len:
            self.object_queries = Parameter(
                "object_queries", rng.normal(0.0, 0.02, size=(config.o_len, d))
            )
            self.object_ib = InteractiveBlock(d, config.heads, rng)
            self.beta_object = Parameter("beta_object", np.array(0.0))
        self.blocks = ModuleList(
            [TransformerBlock(d, config.heads, rng) for _ in range(config.n_layers)]
        )
        self.final_norm = LayerNorm(d)
        self.head = Linear(d, 8, rng)

    # -- pipeline pieces ---------------------------------------------------

    def patch_embed(self, images) -> TokenSequence:
        """Project non-overlapping patches, add positions, prepend class token."""
        images = np.asarray(images, dtype=np.float64)
        if images.ndim == 3:
            images = images[None]
        cfg = self.config
        b, c, h, w = images.shape
        if (c, h, w) != (3, cfg.image_size, cfg.image_size):
            raise ValueError(
                f"image shape {(c, h, w)} does not match config "
                f"(3, {cfg.image_size}, {cfg.image_size})"
            )
        p = cfg.patch
        hp = h // p
        patches = images.reshape(b, 3, hp, p, hp, p).transpose(0, 2, 4, 1, 3, 5)
        patches = np.ascontiguousarray(patches).reshape(b, hp * hp, 3 * p * p)
        tokens = self.patch_proj(DiffTensor(patches))
        cls = expand_rows(self.cls_token.tensor, b)
        seq = T.concat([cls, tokens], axis=1) + self.pos_embed.tensor
        return TokenSequence(
            cls=T.narrow(seq, 1, 0, 1),
            patch=T.narrow(seq, 1, 1, cfg.n_patches),
            layer_index=0,
        )

    def run_stage(self, ts: TokenSequence, from_layer: int, to_layer: int,
                  keep_weights_last: bool = False) -> TokenSequence:
        if ts.layer_index != from_layer:
            raise ValueError(f"token sequence is at layer {ts.layer_index}, not {from_layer}")
        if not 0 <= from_layer <= to_layer <= self.config.n_layers:
            raise ValueError(f"stage bounds [{from_layer},{to_layer}] outside [0,{self.config.n_layers}]")
        if from_layer == to_layer:
            return TokenSequence(ts.cls, ts.patch, ts.scene, ts.object, to_layer)
        x = ts.to_tensor()
        for i in range(from_layer, to_layer):
            keep = keep_weights_last and i == to_layer - 1
            x = self.blocks[i](x, keep_weights=keep)
        return ts.split_like(x, to_layer)

    def _attn_map(self, row_start: int, row_len: int) -> np.ndarray:
        """Mean final-layer attention from a query bank onto patch tokens,
        renormalized over the patch block."""
        attn = self.blocks[self.config.n_layers - 1].attn.last_attn
        cols = attn[:, :, row_start : row_start + row_len, 1 : 1 + self.config.n_patches]
        m = cols.mean(axis=(1, 2))
        return m / m.sum(axis=-1, keepdims=True)

    def encode(self, images, keep_attn: bool = False) -> EncoderOutput:
        cfg = self.config
        ts = self.patch_embed(images)
        b = ts.cls.shape[0]
        if cfg.injection in ("multi", "single") and cfg.s_len:
            ts.scene = expand_rows(self.scene_queries.tensor, b)
        if cfg.injection == "single" and cfg.o_len:
            ts.object = expand_rows(self.object_queries.tensor, b)

        ts = self.run_stage(ts, 0, cfg.l1)
        ts.check_schedule(cfg)
        if ts.scene is not None:
            refined = self.scene_ib(ts.scene, ts.patch)
            ts.scene = modulate(ts.scene, refined, self.beta_scene.tensor)

        if cfg.injection == "multi" and cfg.o_len:
            ts.object = expand_rows(self.object_queries.tensor, b)
        ts = self.run_stage(ts, cfg.l1, cfg.l2)
        ts.check_schedule(cfg)
        if ts.object is not None:
            refined = self.object_ib(ts.object, ts.patch)
            ts.object = modulate(ts.object, refined, self.beta_object.tensor)

        ts = self.run_stage(ts, cfg.l2, cfg.n_layers, keep_weights_last=keep_attn)
        ts.check_schedule(cfg)

        seq = self.final_norm(ts.to_tensor())
        ts = ts.split_like(seq, ts.layer_index)
        t_cls = T.reshape(ts.cls, (b, cfg.dim))
        logits = self.head(t_cls)

        scene_attn = object_attn = None
        if keep_attn and ts.scene is not None:
            scene_attn = self._attn_map(1 + cfg.n_patches, cfg.s_len)
        if keep_attn and ts.object is not None:
            object_attn = self._attn_map(1 + cfg.n_patches + cfg.s_len, cfg.o_len)
        return EncoderOutput(t_cls, logits, ts.scene, ts.object, scene_attn, object_attn)

    def __call__(self, images, keep_attn: bool = False) -> EncoderOutput:
        return self.encode(images, keep_attn=keep_attn)
