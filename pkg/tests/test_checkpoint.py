import numpy as np
import pytest

from stylecast.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from stylecast.model import ModelConfig, init_params


def desk(head_type="lm"):
    return ModelConfig.desk_scale(vocab_size=20, head_type=head_type)


class TestRoundTrip:
    def test_bitwise_equal_tensors(self, tmp_path):
        cfg = desk()
        params = init_params(cfg, seed=1, zero_head=False)
        p = tmp_path / "m.ckpt"
        save_checkpoint(params, cfg, p, meta={"config_hash": "abc123"})
        assert p.read_bytes()[:4] == b"WYN1"
        ck = load_checkpoint(p)
        assert ck.config == cfg
        assert ck.meta == {"config_hash": "abc123"}
        assert list(ck.params) == list(params)
        for name in params:
            assert ck.params[name].data.tobytes() == params[name].data.tobytes()

    def test_save_load_save_byte_identical(self, tmp_path):
        cfg = desk()
        params = init_params(cfg, seed=2, zero_head=False)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(params, cfg, p1, meta={"t_min": 5, "t_max": 9})
        ck = load_checkpoint(p1)
        save_checkpoint(ck.params, ck.config, p2, meta=ck.meta)
        assert p1.read_bytes() == p2.read_bytes()

    def test_float64_params_stored_as_float32(self, tmp_path):
        cfg = desk()
        params = init_params(cfg, seed=3, dtype=np.float64)
        p = tmp_path / "m.ckpt"
        save_checkpoint(params, cfg, p)
        ck = load_checkpoint(p)
        assert ck.params["tok_emb"].data.dtype == np.float32


class TestCorruption:
    def test_wrong_magic(self, tmp_path):
        p = tmp_path / "m.ckpt"
        p.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(p)

    def test_truncated_file(self, tmp_path):
        cfg = desk()
        params = init_params(cfg, seed=4)
        p = tmp_path / "m.ckpt"
        save_checkpoint(params, cfg, p)
        blob = p.read_bytes()
        p.write_bytes(blob[:len(blob) // 2])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(p)

    def test_unsupported_version(self, tmp_path):
        cfg = desk()
        params = init_params(cfg, seed=5)
        p = tmp_path / "m.ckpt"
        save_checkpoint(params, cfg, p)
        blob = bytearray(p.read_bytes())
        blob[4:8] = (99).to_bytes(4, "little")
        p.write_bytes(bytes(blob))
        with pytest.raises(CheckpointError, match="version"):
            load_checkpoint(p)


class TestHeadMismatch:
    def test_lm_loaded_as_classifier_names_both_shapes(self, tmp_path):
        cfg = desk("lm")
        params = init_params(cfg, seed=6)
        p = tmp_path / "lm.ckpt"
        save_checkpoint(params, cfg, p)
        with pytest.raises(CheckpointError) as err:
            load_checkpoint(p, expect_head="classifier")
        msg = str(err.value)
        assert "(64, 20)" in msg       # the lm head shape on disk
        assert "(64, 4)" in msg        # the expected classifier head shape
        assert "lm" in msg and "classifier" in msg

    def test_matching_head_accepted(self, tmp_path):
        cfg = desk("lm")
        params = init_params(cfg, seed=7)
        p = tmp_path / "lm.ckpt"
        save_checkpoint(params, cfg, p)
        assert load_checkpoint(p, expect_head="lm").config.head_type == "lm"

    def test_no_partial_file_on_failure(self, tmp_path):
        # atomic write: a failing save leaves no destination file behind
        cfg = desk()
        params = init_params(cfg, seed=8)
        target = tmp_path / "nodir" / "m.ckpt"
        with pytest.raises(OSError):
            save_checkpoint(params, cfg, target)
        assert not target.exists()
