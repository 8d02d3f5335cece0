"""Image/mask PNG and PPM IO, quantization, and the FSTK feature container."""

import struct

import numpy as np
import pytest
from PIL import Image as PILImage

from patchmask.imagery import (
    FSTK_MAGIC,
    FSTK_VERSION,
    FeatureStack,
    load_feature_stack,
    load_image,
    load_mask,
    quantize_u8,
    save_feature_stack,
    save_image,
    save_mask,
)


class TestQuantize:
    def test_round_half_up_and_clamping(self):
        vals = np.array([[[0.0, 0.5 / 255.0, 1.0 / 255.0]], [[0.999, 1.5, -0.3]]])
        got = quantize_u8(vals)
        np.testing.assert_array_equal(got, [[[0, 1, 1]], [[255, 255, 0]]])

    def test_exact_grid_points_preserved(self):
        levels = np.arange(256, dtype=np.float64) / 255.0
        got = quantize_u8(levels.reshape(16, 16, 1))
        np.testing.assert_array_equal(got.ravel(), np.arange(256))


class TestImageRoundTrip:
    def test_png_round_trip_is_quantized_identity(self, tmp_path):
        rng = np.random.default_rng(30)
        img = rng.uniform(size=(9, 7, 3))
        path = tmp_path / "x.png"
        save_image(img, path)
        back = load_image(path)
        np.testing.assert_allclose(back, quantize_u8(img) / 255.0, atol=0)

    def test_u8_grid_survives_exactly(self, tmp_path):
        rng = np.random.default_rng(31)
        img = rng.integers(0, 256, size=(5, 5, 3)).astype(np.float64) / 255.0
        path = tmp_path / "x.png"
        save_image(img, path)
        np.testing.assert_array_equal(load_image(path), img)

    def test_gray_png_replicates_channels(self, tmp_path):
        path = tmp_path / "g.png"
        PILImage.fromarray(np.array([[0, 128], [255, 64]], dtype=np.uint8), mode="L").save(path)
        img = load_image(path)
        assert img.shape == (2, 2, 3)
        np.testing.assert_array_equal(img[:, :, 0], img[:, :, 1])
        assert img[0, 1, 2] == pytest.approx(128 / 255.0)

    def test_binary_ppm_accepted(self, tmp_path):
        path = tmp_path / "x.ppm"
        pixels = bytes([255, 0, 0, 0, 255, 0])
        path.write_bytes(b"P6\n2 1\n255\n" + pixels)
        img = load_image(path)
        assert img.shape == (1, 2, 3)
        np.testing.assert_allclose(img[0, 0], [1.0, 0.0, 0.0])
        np.testing.assert_allclose(img[0, 1], [0.0, 1.0, 0.0])

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "absent.png")

    def test_garbage_bytes_rejected(self, tmp_path):
        path = tmp_path / "bad.png"
        path.write_bytes(b"this is not a raster")
        with pytest.raises(ValueError, match="malformed"):
            load_image(path)

    def test_unsupported_mode_rejected(self, tmp_path):
        path = tmp_path / "rgba.png"
        PILImage.new("RGBA", (2, 2)).save(path)
        with pytest.raises(ValueError, match="unsupported image mode"):
            load_image(path)


class TestMaskRoundTrip:
    def test_round_trip(self, tmp_path):
        mask = np.array([[1, 0, 1], [0, 0, 1]], dtype=np.uint8)
        path = tmp_path / "m.png"
        save_mask(mask, path)
        np.testing.assert_array_equal(load_mask(path), mask)

    def test_file_encodes_static_as_255(self, tmp_path):
        path = tmp_path / "m.png"
        save_mask(np.array([[1, 0]], dtype=np.uint8), path)
        with PILImage.open(path) as im:
            raw = np.asarray(im)
        np.testing.assert_array_equal(raw, [[255, 0]])

    def test_intermediate_gray_rejected(self, tmp_path):
        path = tmp_path / "m.png"
        PILImage.fromarray(np.array([[255, 7]], dtype=np.uint8), mode="L").save(path)
        with pytest.raises(ValueError, match="other than 0 and 255"):
            load_mask(path)

    def test_rgb_file_rejected_as_mask(self, tmp_path):
        path = tmp_path / "m.png"
        PILImage.new("RGB", (2, 2)).save(path)
        with pytest.raises(ValueError, match="single-channel"):
            load_mask(path)

    def test_nonbinary_array_rejected_on_save(self, tmp_path):
        with pytest.raises(ValueError, match="binary"):
            save_mask(np.array([[2, 0]], dtype=np.uint8), tmp_path / "m.png")


class TestFeatureStackContainer:
    def test_golden_byte_layout(self, tmp_path):
        layer = np.array([[[1.0], [-2.5]]], dtype=np.float32)  # shape (1, 2, 1)
        path = tmp_path / "f.fstk"
        save_feature_stack(FeatureStack(layers=[layer]), path)
        want = (
            FSTK_MAGIC
            + struct.pack("<II", FSTK_VERSION, 1)
            + struct.pack("<III", 1, 2, 1)
            + np.array([1.0, -2.5], dtype="<f4").tobytes()
        )
        assert path.read_bytes() == want

    def test_round_trip_multi_layer(self, tmp_path):
        rng = np.random.default_rng(32)
        layers = [
            rng.normal(size=(4, 5, 7)).astype(np.float32),
            rng.normal(size=(2, 3, 7)).astype(np.float32),
        ]
        path = tmp_path / "f.fstk"
        save_feature_stack(FeatureStack(layers=layers), path)
        back = load_feature_stack(path)
        assert len(back.layers) == 2
        for a, b in zip(layers, back.layers):
            np.testing.assert_array_equal(a, b)
            assert b.dtype == np.float32

    def test_channel_index_fastest(self, tmp_path):
        # Two pixels, two channels: bytes must be p0c0, p0c1, p1c0, p1c1.
        layer = np.array([[[1.0, 2.0], [3.0, 4.0]]], dtype=np.float32)
        path = tmp_path / "f.fstk"
        save_feature_stack(FeatureStack(layers=[layer]), path)
        payload = path.read_bytes()[4 + 8 + 12 :]
        np.testing.assert_array_equal(np.frombuffer(payload, "<f4"), [1.0, 2.0, 3.0, 4.0])

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "f.fstk"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(ValueError, match="bad magic"):
            load_feature_stack(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "f.fstk"
        path.write_bytes(FSTK_MAGIC + struct.pack("<II", 9, 1) + struct.pack("<III", 1, 1, 1) + b"\x00" * 4)
        with pytest.raises(ValueError, match="version"):
            load_feature_stack(path)

    def test_zero_layers(self, tmp_path):
        path = tmp_path / "f.fstk"
        path.write_bytes(FSTK_MAGIC + struct.pack("<II", FSTK_VERSION, 0))
        with pytest.raises(ValueError, match="zero layers"):
            load_feature_stack(path)

    def test_truncations_rejected(self, tmp_path):
        layer = np.ones((2, 2, 3), dtype=np.float32)
        path = tmp_path / "f.fstk"
        save_feature_stack(FeatureStack(layers=[layer]), path)
        raw = path.read_bytes()
        for cut in (3, 11, 16, len(raw) - 1):
            (tmp_path / "cut.fstk").write_bytes(raw[:cut])
            with pytest.raises(ValueError, match="truncated"):
                load_feature_stack(tmp_path / "cut.fstk")

    def test_zero_dimension_rejected(self, tmp_path):
        path = tmp_path / "f.fstk"
        path.write_bytes(
            FSTK_MAGIC + struct.pack("<II", FSTK_VERSION, 1) + struct.pack("<III", 0, 2, 1)
        )
        with pytest.raises(ValueError, match="zero dimension"):
            load_feature_stack(path)

    def test_non_finite_payload_rejected(self, tmp_path):
        path = tmp_path / "f.fstk"
        payload = np.array([np.inf], dtype="<f4").tobytes()
        path.write_bytes(
            FSTK_MAGIC
            + struct.pack("<II", FSTK_VERSION, 1)
            + struct.pack("<III", 1, 1, 1)
            + payload
        )
        with pytest.raises(ValueError, match="non-finite"):
            load_feature_stack(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_feature_stack(tmp_path / "absent.fstk")

    def test_container_validation(self):
        with pytest.raises(ValueError, match="at least one layer"):
            FeatureStack(layers=[])
        with pytest.raises(ValueError, match="3-d"):
            FeatureStack(layers=[np.zeros((2, 2), dtype=np.float32)])
        with pytest.raises(ValueError, match="non-finite"):
            FeatureStack(layers=[np.full((1, 1, 1), np.nan, dtype=np.float32)])
