"""Binary checkpoint format: bit-exact round trips and corruption handling."""

import numpy as np
import pytest

from ssnt.checkpoint import load_checkpoint, restore_parameters, save_checkpoint
from ssnt.errors import CheckpointError
from ssnt.model import SsntConfig, SsntModel
from ssnt.nn import Parameter, make_rng
from ssnt.serialize import load_ssnt, save_ssnt
from ssnt.vocab import Vocabulary


def small_params(seed=0):
    rng = make_rng(seed)
    return [Parameter("alpha", rng.normal(size=(3, 2))),
            Parameter("beta.b_g", rng.normal(size=4)),
            Parameter("scalar", rng.normal(size=1))]


def test_round_trip_bitwise(tmp_path):
    params = small_params()
    path = tmp_path / "m.bin"
    save_checkpoint(path, "ssnt", params, {"note": 1})
    kind, arrays, meta = load_checkpoint(path)
    assert kind == "ssnt"
    assert meta == {"note": 1}
    for p in params:
        assert arrays[p.name].tobytes() == p.value.tobytes()


def test_save_load_save_byte_identical(tmp_path):
    params = small_params(1)
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    save_checkpoint(p1, "ssnt", params, {})
    _, arrays, _ = load_checkpoint(p1)
    restored = [Parameter(p.name, arrays[p.name]) for p in params]
    save_checkpoint(p2, "ssnt", restored, {})
    assert p1.read_bytes() == p2.read_bytes()


def test_flipped_byte_fails_crc(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, "ssnt", small_params(), {})
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="CRC"):
        load_checkpoint(path)


def test_truncated_file(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, "ssnt", small_params(), {})
    path.write_bytes(path.read_bytes()[:15])
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.bin"
    path.write_bytes(b"NOPE" + bytes(40))
    with pytest.raises(CheckpointError):
        load_checkpoint(path)


def test_kind_tag_mismatch(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, "lm", small_params(), {})
    with pytest.raises(CheckpointError, match="kind"):
        load_checkpoint(path, expect_kind="ssnt")


def test_version_mismatch(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, "ssnt", small_params(), {})
    raw = bytearray(path.read_bytes())
    import struct
    import zlib
    raw[4:8] = struct.pack("<I", 99)
    body = bytes(raw[:-4])
    raw[-4:] = struct.pack("<I", zlib.crc32(body))
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(path)


def test_restore_shape_mismatch(tmp_path):
    path = tmp_path / "m.bin"
    save_checkpoint(path, "ssnt", small_params(), {})
    _, arrays, _ = load_checkpoint(path)
    wrong = [Parameter("alpha", np.zeros((2, 2)))]
    with pytest.raises(CheckpointError, match="shape"):
        restore_parameters(wrong, arrays, path)


def test_ssnt_model_round_trip_bitwise(tmp_path):
    cfg = SsntConfig(src_vocab_size=5, tgt_vocab_size=6, hidden_dim=3, embed_dim=2)
    model = SsntModel(cfg, make_rng(5))
    src_vocab = Vocabulary(["aa", "bb"])
    tgt_vocab = Vocabulary(["cc", "dd", "ee"])
    path = tmp_path / "model.bin"
    save_ssnt(path, model, src_vocab, tgt_vocab, {"lowercase": True})
    loaded, sv, tv, meta = load_ssnt(path)
    assert sv == src_vocab and tv == tgt_vocab
    assert meta["preprocess"]["lowercase"] is True
    for a, b in zip(model.parameters(), loaded.parameters()):
        assert a.name == b.name
        assert a.value.tobytes() == b.value.tobytes()
