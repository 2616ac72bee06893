import numpy as np
import pytest

from c2f import FingerprintMismatch, InvalidInput, InvalidParameter, make_schedule
from c2f.checkpoint import load_checkpoint, model_fingerprint, save_checkpoint, verify_fingerprint
from c2f.config import ExperimentConfig


class TestConfig:
    def test_text_round_trip(self, tmp_path):
        cfg = ExperimentConfig().with_overrides(["f_type=log", "f_end=0.6", "fine_to_coarse=true"])
        cfg.save(tmp_path / "c.txt")
        again = ExperimentConfig.load(tmp_path / "c.txt")
        assert again == cfg
        assert again.to_text() == cfg.to_text()

    def test_comments_and_blank_lines(self):
        cfg = ExperimentConfig.from_text("# note\n\nseed = 9\n")
        assert cfg.seed == 9

    def test_unknown_key(self):
        with pytest.raises(InvalidParameter):
            ExperimentConfig().with_overrides({"sigmaa": "1"})

    @pytest.mark.parametrize("item", ["f_type=cubic", "n_steps=0", "seed=abc", "fine_to_coarse=maybe", "noequals"])
    def test_bad_values(self, item):
        with pytest.raises(InvalidParameter):
            ExperimentConfig().with_overrides([item])

    def test_schedule_kwargs_build(self):
        cfg = ExperimentConfig().with_overrides(["image_size=4", "field_ndim=1", "n_steps=10"])
        s = make_schedule(cfg.image_size, **cfg.schedule_kwargs())
        assert s.n_steps == 10 and s.operator.field_shape == (4,)


class TestCheckpoint:
    def arrays(self):
        return {"w": np.arange(6.0).reshape(2, 3), "b": np.array([0.5])}

    def test_round_trip(self, tmp_path):
        fp = model_fingerprint(make_schedule(4, ndim=1), "linear")
        save_checkpoint(tmp_path / "m.c2f", "linear", fp, self.arrays())
        header, arrays = load_checkpoint(tmp_path / "m.c2f")
        verify_fingerprint(header, fp)
        np.testing.assert_array_equal(arrays["w"], self.arrays()["w"])

    def test_byte_identical(self, tmp_path):
        fp = model_fingerprint(make_schedule(4, ndim=1), "linear")
        save_checkpoint(tmp_path / "a", "linear", fp, self.arrays())
        save_checkpoint(tmp_path / "b", "linear", fp, self.arrays())
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_corruption_detected(self, tmp_path):
        fp = model_fingerprint(make_schedule(4, ndim=1), "linear")
        save_checkpoint(tmp_path / "m", "linear", fp, self.arrays())
        data = bytearray((tmp_path / "m").read_bytes())
        data[-1] ^= 0xFF
        (tmp_path / "m").write_bytes(bytes(data))
        with pytest.raises(InvalidInput, match="checksum"):
            load_checkpoint(tmp_path / "m")

    def test_not_a_checkpoint(self, tmp_path):
        (tmp_path / "x").write_bytes(b"hello\n")
        with pytest.raises(InvalidInput):
            load_checkpoint(tmp_path / "x")

    def test_fingerprint_mismatch_lists_keys(self, tmp_path):
        fp = model_fingerprint(make_schedule(4, ndim=1), "linear")
        other = model_fingerprint(make_schedule(4, ndim=1, f_end=0.6), "linear")
        save_checkpoint(tmp_path / "m", "linear", fp, self.arrays())
        header, _ = load_checkpoint(tmp_path / "m")
        with pytest.raises(FingerprintMismatch, match="f_end"):
            verify_fingerprint(header, other)
