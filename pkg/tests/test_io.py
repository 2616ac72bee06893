import numpy as np
import pytest

from c2f import InvalidInput
from c2f.imageio import (
    decode_pgm,
    encode_pgm,
    image_grid,
    load_fields,
    load_image_folder,
    read_csv,
    read_image,
    resize,
    to_uint8,
    write_csv,
    write_fields_csv,
    write_png,
)


class TestPGM:
    def test_ascii_and_binary_agree(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(5, 7))
        (tmp_path / "a.pgm").write_bytes(encode_pgm(img, binary=False))
        (tmp_path / "b.pgm").write_bytes(encode_pgm(img, binary=True))
        np.testing.assert_array_equal(read_image(tmp_path / "a.pgm"), read_image(tmp_path / "b.pgm"))
        np.testing.assert_array_equal(decode_pgm(encode_pgm(img))[0], img)

    def test_sixteen_bit(self):
        img = np.array([[0, 1000], [65535, 300]])
        out, maxval = decode_pgm(encode_pgm(img))
        assert maxval == 65535
        np.testing.assert_array_equal(out, img)

    def test_comments_in_header(self):
        data = b"P2\n# a comment\n2 1\n# another\n255\n0 255\n"
        np.testing.assert_array_equal(decode_pgm(data)[0], [[0, 255]])

    def test_value_mapping(self, tmp_path):
        (tmp_path / "m.pgm").write_bytes(encode_pgm(np.array([[0, 255]])))
        np.testing.assert_allclose(read_image(tmp_path / "m.pgm"), [[-1.0, 1.0]])

    @pytest.mark.parametrize("data", [b"P3\n1 1\n255\n0\n", b"P5\n2 2\n255\n\x00", b"P2\n1 1\n10\n11\n"])
    def test_corrupt(self, data):
        with pytest.raises(InvalidInput):
            decode_pgm(data)


class TestImages:
    def test_png_round_trip(self, tmp_path, rng):
        img = rng.integers(0, 256, size=(6, 6)).astype(np.uint8)
        write_png(tmp_path / "x.png", img)
        np.testing.assert_allclose(read_image(tmp_path / "x.png"), img / 127.5 - 1.0)

    def test_resize_halves(self):
        img = np.tile(np.linspace(-1, 1, 128), (128, 1))
        out = resize(img, 64)
        assert out.shape == (64, 64)
        np.testing.assert_allclose(out.mean(), 0.0, atol=1e-3)

    def test_to_uint8_clamps(self):
        np.testing.assert_array_equal(to_uint8([-2.0, -1.0, 1.0, 3.0]), [0, 0, 255, 255])

    def test_folder_skips_unreadable(self, tmp_path, caplog):
        (tmp_path / "good.pgm").write_bytes(encode_pgm(np.full((16, 16), 255)))
        (tmp_path / "bad.pgm").write_bytes(b"garbage")
        ds = load_image_folder(tmp_path, 8)
        assert ds.items.shape == (1, 8, 8)
        np.testing.assert_allclose(ds.items, 1.0)
        assert "bad.pgm" in caplog.text

    def test_empty_folder(self, tmp_path):
        with pytest.raises(InvalidInput):
            load_image_folder(tmp_path, 8)

    def test_grid(self):
        g = image_grid([np.zeros((2, 2))] * 3, ncols=2, pad=1)
        assert g.shape == (7, 7)


class TestCSV:
    def test_round_trip(self, tmp_path):
        write_csv(tmp_path / "t.csv", ["a", "b"], [[1, 0.1], [2, True]])
        header, rows = read_csv(tmp_path / "t.csv")
        assert header == ["a", "b"]
        assert rows == [["1", "0.1"], ["2", "true"]]

    def test_fields(self, tmp_path, rng):
        x = rng.standard_normal((3, 4, 4))
        write_fields_csv(tmp_path / "samples.csv", x, 2)
        np.testing.assert_array_equal(load_fields(tmp_path), x)
        y = rng.standard_normal((2, 5))
        write_fields_csv(tmp_path / "v.csv", y, 1)
        np.testing.assert_array_equal(load_fields(tmp_path / "v.csv"), y)
