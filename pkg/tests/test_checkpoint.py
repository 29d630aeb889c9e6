"""Checkpoint container: byte-exact round trips and corruption handling."""

import numpy as np
import pytest

from emoloop.checkpoint import (
    MAGIC,
    CheckpointError,
    checkpoint_hash,
    load_checkpoint,
    save_checkpoint,
)


def sample_entries():
    rng = np.random.default_rng(7)
    return {
        "encoder.cls_token": rng.normal(size=(1, 8)),
        "encoder.blocks.0.attn.wq.weight": rng.normal(size=(8, 8)),
        "denoiser.out.bias": np.zeros(3),
        "beta": np.array(0.25),
    }


def test_round_trip_exact(tmp_path):
    entries = sample_entries()
    path = tmp_path / "model.uemo"
    save_checkpoint(path, entries)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(entries)
    for name in entries:
        assert np.array_equal(loaded[name], entries[name])
        assert loaded[name].dtype == np.float64


def test_save_load_save_byte_identical(tmp_path):
    p1, p2 = tmp_path / "a.uemo", tmp_path / "b.uemo"
    save_checkpoint(p1, sample_entries())
    save_checkpoint(p2, load_checkpoint(p1))
    assert p1.read_bytes() == p2.read_bytes()
    assert checkpoint_hash(p1) == checkpoint_hash(p2)


def test_header_layout(tmp_path):
    path = tmp_path / "m.uemo"
    save_checkpoint(path, {"w": np.array([1.0, 2.0])})
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert int.from_bytes(raw[4:8], "little") == 1
    assert int.from_bytes(raw[8:12], "little") == 1  # name length
    assert raw[12:13] == b"w"


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.uemo"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="bad magic"):
        load_checkpoint(path)


def test_duplicate_names_rejected_on_load(tmp_path):
    path = tmp_path / "dup.uemo"
    import struct

    rec = struct.pack("<I", 1) + b"w" + struct.pack("<I", 1) + struct.pack("<I", 1) + np.array([1.0]).tobytes()
    path.write_bytes(MAGIC + struct.pack("<I", 1) + rec + rec)
    with pytest.raises(CheckpointError, match="duplicate"):
        load_checkpoint(path)
