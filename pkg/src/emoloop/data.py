"""Procedural emotion corpus.

Each sample is a 32x32 RGB image made of a background texture (scene
attribute, 8 hue/stripe patterns) and a centered glyph (object attribute,
8 shapes), plus uniform pixel noise. The emotion label is a fixed function
of the two attributes — (scene + object) mod 8 by default — so the class
balance is exact under balanced attribute sampling and neither cue alone
determines the label.

Persistence: raw little-endian float64 planes under images/, one JSON
object per sample in manifest.jsonl, and meta.json carrying the seed and
label table so a directory round-trips to an identical corpus.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

EMOTIONS = (
    "amusement",
    "awe",
    "contentment",
    "excitement",
    "anger",
    "disgust",
    "fear",
    "sadness",
)
N_EMOTIONS = 8
N_SCENE = 8
N_OBJECT = 8
GLYPHS = ("disk", "cross", "triangle", "ring", "bar", "wedge", "dotgrid", "chevron")

ATTR_EMBED_SEED = 7771  # dedicated seed for the frozen attribute embeddings

_EMOTION_INDEX = {name: i for i, name in enumerate(EMOTIONS)}


class IngestionError(RuntimeError):
    """Raised when a manifest or image file is missing or malformed."""


def emotion_index(name: str) -> int:
    try:
        return _EMOTION_INDEX[name]
    except KeyError:
        raise ValueError(f"unknown emotion name {name!r}") from None


def emotion_name(index: int) -> str:
    if not 0 <= index < N_EMOTIONS:
        raise ValueError(f"emotion index {index} out of range [0,{N_EMOTIONS})")
    return EMOTIONS[index]


def default_label_table() -> np.ndarray:
    """The published rule: emotion = (scene_attr + object_attr) mod 8."""
    s = np.arange(N_SCENE)[:, None]
    o = np.arange(N_OBJECT)[None, :]
    return (s + o) % N_EMOTIONS


@dataclass
class Sample:
    image: np.ndarray  # [3, H, W] float64 in [0, 1]
    emotion: int
    scene_attr: int
    object_attr: int
    split: str  # "train" | "test"

    def __eq__(self, other):
        return (
            isinstance(other, Sample)
            and self.emotion == other.emotion
            and self.scene_attr == other.scene_attr
            and self.object_attr == other.object_attr
            and self.split == other.split
            and np.array_equal(self.image, other.image)
        )


@dataclass
class Corpus:
    samples: list[Sample]
    seed: int
    label_table: np.ndarray = field(default_factory=default_label_table)
    noise_level: float = 0.05
    image_size: int = 32

    def label_rule(self, scene_attr: int, object_attr: int) -> int:
        return int(self.label_table[scene_attr, object_attr])

    def split(self, which: str) -> list[Sample]:
        return [s for s in self.samples if s.split == which]

    def stacked(self, which: str):
        """(images [N,3,H,W], emotions [N], scene [N], object [N]) for a split."""
        part = self.split(which)
        images = np.stack([s.image for s in part])
        emo = np.array([s.emotion for s in part], dtype=np.int64)
        sc = np.array([s.scene_attr for s in part], dtype=np.int64)
        ob = np.array([s.object_attr for s in part], dtype=np.int64)
        return images, emo, sc, ob

    def __eq__(self, other):
        return (
            isinstance(other, Corpus)
            and self.seed == other.seed
            and np.array_equal(self.label_table, other.label_table)
            and len(self.samples) == len(other.samples)
            and all(a == b for a, b in zip(self.samples, other.samples))
        )


# -- rendering ---------------------------------------------------------------

# background palette: (light, dark) RGB pairs, one hue per scene attribute
_PALETTE = (
    ((0.85, 0.15, 0.15), (0.25, 0.05, 0.05)),
    ((0.15, 0.80, 0.20), (0.03, 0.25, 0.08)),
    ((0.20, 0.35, 0.90), (0.05, 0.08, 0.30)),
    ((0.90, 0.85, 0.15), (0.35, 0.30, 0.05)),
    ((0.85, 0.20, 0.80), (0.30, 0.05, 0.28)),
    ((0.15, 0.80, 0.85), (0.04, 0.25, 0.28)),
    ((0.95, 0.55, 0.10), (0.33, 0.18, 0.03)),
    ((0.55, 0.25, 0.85), (0.18, 0.07, 0.28)),
)

_GLYPH_COLOR = (0.95, 0.95, 0.95)


def _stripe_mask(scene: int, n: int, phase: int) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    c = (n - 1) / 2.0
    if scene == 0:
        band = (ii + phase) // 4
    elif scene == 1:
        band = (jj + phase) // 4
    elif scene == 2:
        band = (ii + jj + phase) // 4
    elif scene == 3:
        band = (ii - jj + phase) // 4
    elif scene == 4:
        band = (ii + phase) // 2
    elif scene == 5:
        band = (jj + phase) // 2
    elif scene == 6:
        band = (ii + phase) // 4 + (jj + phase) // 4
    else:
        band = (np.sqrt((ii - c) ** 2 + (jj - c) ** 2) + phase).astype(np.int64) // 3
    return band % 2 == 0


def _glyph_mask(obj: int, n: int, dy: int, dx: int) -> np.ndarray:
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    di = ii - (n // 2 + dy)
    dj = jj - (n // 2 + dx)
    r = np.sqrt(di**2 + dj**2)
    name = GLYPHS[obj]
    if name == "disk":
        return r <= 7
    if name == "cross":
        return (np.abs(di) <= 2) & (np.abs(dj) <= 8) | (np.abs(dj) <= 2) & (np.abs(di) <= 8)
    if name == "triangle":
        return (di >= -7) & (di <= 6) & (np.abs(dj) <= 0.62 * (di + 7))
    if name == "ring":
        return (r <= 8) & (r >= 4.5)
    if name == "bar":
        return (np.abs(di) <= 2) & (np.abs(dj) <= 9)
    if name == "wedge":
        return (r <= 9) & (di >= 0) & (dj >= di - 1)
    if name == "dotgrid":
        best = np.full((n, n), np.inf)
        for oy in (-6, 0, 6):
            for ox in (-6, 0, 6):
                best = np.minimum(best, np.sqrt((di - oy) ** 2 + (dj - ox) ** 2))
        return best <= 1.8
    # chevron: V-shaped band
    return (np.abs(np.abs(dj) - di - 4) <= 1.6) & (np.abs(dj) <= 8) & (di >= -7)


def render_sample(scene_attr: int, object_attr: int, noise_level: float,
                  rng: np.random.Generator, size: int = 32) -> np.ndarray:
    """One [3, size, size] image: textured background, glyph overlay, noise."""
    phase = int(rng.integers(0, 8))
    dy, dx = int(rng.integers(-2, 3)), int(rng.integers(-2, 3))
    light, dark = _PALETTE[scene_attr]
    mask = _stripe_mask(scene_attr, size, phase)
    img = np.where(mask[None, :, :], np.array(light)[:, None, None], np.array(dark)[:, None, None])
    glyph = _glyph_mask(object_attr, size, dy, dx)
    img = np.where(glyph[None, :, :], np.array(_GLYPH_COLOR)[:, None, None], img)
    if noise_level > 0:
        img = img + rng.uniform(-noise_level, noise_level, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def _sample_rng(seed: int, split_id: int, index: int) -> np.random.Generator:
    # per-sample stream: parallel-safe and independent of generation order
    return np.random.default_rng([seed, split_id, index])


def generate_corpus(n_train: int, n_test: int, noise_level: float = 0.05,
                    seed: int = 0, image_size: int = 32) -> Corpus:
    """Balanced procedural corpus; bit-identical for identical arguments."""
    if n_train <= 0 or n_test <= 0:
        raise ValueError("n_train and n_test must be positive")
    if not 0.0 <= noise_level < 1.0:
        raise ValueError("noise_level must lie in [0, 1)")
    table = default_label_table()
    combos = [(s, o) for s in range(N_SCENE) for o in range(N_OBJECT)]
    samples: list[Sample] = []
    for split_id, (split, n) in enumerate((("train", n_train), ("test", n_test))):
        reps = -(-n // len(combos))
        order = np.tile(np.arange(len(combos)), reps)
        np.random.default_rng([seed, split_id]).shuffle(order)
        for index in range(n):
            s, o = combos[order[index]]
            rng = _sample_rng(seed, split_id, index)
            img = render_sample(s, o, noise_level, rng, image_size)
            samples.append(Sample(img, int(table[s, o]), s, o, split))
    return Corpus(samples, seed, table, noise_level, image_size)


# -- persistence ---------------------------------------------------------------


def save_manifest(corpus: Corpus, root) -> None:
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s in enumerate(corpus.samples):
        rel = f"images/{i:06d}.f64"
        (root / rel).write_bytes(s.image.astype("<f8").tobytes())
        lines.append(
            json.dumps(
                {
                    "path": rel,
                    "emotion": emotion_name(s.emotion),
                    "scene_attr": s.scene_attr,
                    "object_attr": s.object_attr,
                    "split": s.split,
                },
                sort_keys=True,
            )
        )
    (root / "manifest.jsonl").write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")
    meta = {
        "seed": corpus.seed,
        "noise_level": corpus.noise_level,
        "image_size": corpus.image_size,
        "label_table": corpus.label_table.tolist(),
    }
    (root / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1), encoding="utf-8")


def load_manifest(root) -> Corpus:
    root = Path(root)
    manifest = root / "manifest.jsonl"
    if not manifest.is_file():
        raise IngestionError(f"missing manifest file: {manifest}")
    meta_path = root / "meta.json"
    if not meta_path.is_file():
        raise IngestionError(f"missing corpus metadata: {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    size = int(meta["image_size"])
    expected_bytes = 3 * size * size * 8
    samples: list[Sample] = []
    for lineno, line in enumerate(manifest.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise IngestionError(f"{manifest}:{lineno}: invalid JSON ({exc.msg})") from None
        try:
            emo = emotion_index(rec["emotion"])
        except (KeyError, ValueError):
            raise IngestionError(
                f"{manifest}:{lineno}: unknown emotion name {rec.get('emotion')!r}"
            ) from None
        scene, obj = int(rec["scene_attr"]), int(rec["object_attr"])
        if not (0 <= scene < N_SCENE and 0 <= obj < N_OBJECT):
            raise IngestionError(f"{manifest}:{lineno}: attribute id out of range")
        img_path = root / rec["path"]
        if not img_path.is_file():
            raise IngestionError(f"{manifest}:{lineno}: missing image file {img_path}")
        raw = img_path.read_bytes()
        if len(raw) != expected_bytes:
            raise IngestionError(
                f"{manifest}:{lineno}: corrupt image file {img_path} "
                f"({len(raw)} bytes, expected {expected_bytes})"
            )
        img = np.frombuffer(raw, dtype="<f8").reshape(3, size, size).copy()
        samples.append(Sample(img, emo, scene, obj, rec["split"]))
    return Corpus(
        samples,
        int(meta["seed"]),
        np.asarray(meta["label_table"], dtype=np.int64),
        float(meta["noise_level"]),
        size,
    )


# -- attribute embeddings -------------------------------------------------------


@lru_cache(maxsize=8)
def attribute_table(dim: int = 64, seed: int = ATTR_EMBED_SEED) -> np.ndarray:
    """Frozen orthonormal [16, dim] table via QR of Gaussian draws.

    Rows 0-7 are scene attributes, rows 8-15 object attributes; the table
    stands in for a frozen text encoder's attribute embeddings.
    """
    total = N_SCENE + N_OBJECT
    if dim < total:
        raise ValueError(f"embedding dim {dim} cannot host {total} orthonormal rows")
    g = np.random.default_rng(seed).normal(size=(dim, total))
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))  # fix QR sign convention for determinism
    table = q.T.copy()
    table.setflags(write=False)
    return table


def attribute_embedding(attr_id: int, kind: str, dim: int = 64,
                        seed: int = ATTR_EMBED_SEED) -> np.ndarray:
    if kind not in ("scene", "object"):
        raise ValueError(f"kind must be 'scene' or 'object', got {kind!r}")
    bound = N_SCENE if kind == "scene" else N_OBJECT
    if not 0 <= attr_id < bound:
        raise ValueError(f"{kind} attribute id {attr_id} out of range [0,{bound})")
    row = attr_id if kind == "scene" else N_SCENE + attr_id
    return attribute_table(dim, seed)[row]
