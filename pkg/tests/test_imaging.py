import numpy as np
import pytest

from wmbench.imaging import (
    CorruptImageError,
    Image,
    UnsupportedFormatError,
    bilinear_resize,
    center_crop_square,
    decode_png,
    derive_seed,
    encode_png,
    gaussian_blur,
    load_image,
    quantize_u8,
    rgb_to_yuv,
    rng,
    save_image,
    to_gray,
    yuv_to_rgb,
)


class TestImageType:
    def test_shape_and_properties(self):
        img = Image(np.zeros((3, 4, 5)))
        assert (img.channels, img.height, img.width) == (3, 4, 5)

    def test_rejects_bad_channel_count(self):
        with pytest.raises(ValueError):
            Image(np.zeros((2, 4, 4)))

    def test_rejects_non_finite(self):
        data = np.zeros((1, 4, 4))
        data[0, 0, 0] = np.nan
        with pytest.raises(ValueError):
            Image(data)

    def test_clamps_to_unit_range(self):
        img = Image(np.array([[[-0.5, 1.5], [0.25, 0.75]]]))
        assert img.data.min() == 0.0 and img.data.max() == 1.0

    def test_data_is_read_only(self):
        img = Image(np.zeros((1, 2, 2)))
        with pytest.raises(ValueError):
            img.data[0, 0, 0] = 1.0


class TestSeeding:
    def test_equal_seeds_equal_streams(self):
        assert np.array_equal(rng(123).standard_normal(50), rng(123).standard_normal(50))

    def test_derive_seed_stable_and_sensitive(self):
        assert derive_seed("a", 1) == derive_seed("a", 1)
        assert derive_seed("a", 1) != derive_seed("a", 2)
        assert 0 <= derive_seed("x") < 2 ** 64


class TestPpm:
    def test_full_scale_white_2x2(self, tmp_path):
        p = tmp_path / "white.ppm"
        p.write_bytes(b"P6\n2 2\n255\n" + b"\xff" * 12)
        img = load_image(p)
        assert img.channels == 3 and img.width == 2 and img.height == 2
        assert np.all(img.data == 1.0)

    def test_black_pixel_1x1(self, tmp_path):
        p = tmp_path / "black.ppm"
        p.write_bytes(b"P6\n1 1\n255\n\x00\x00\x00")
        assert np.all(load_image(p).data == 0.0)

    def test_comment_in_header(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n# a comment\n1 1\n255\n\x10\x20\x30")
        img = load_image(p)
        assert np.allclose(img.data[:, 0, 0], [16 / 255, 32 / 255, 48 / 255])

    def test_sixteen_bit_scaling(self, tmp_path):
        p = tmp_path / "deep.ppm"
        p.write_bytes(b"P6\n1 1\n65535\n" + (65535).to_bytes(2, "big") * 3)
        assert np.all(load_image(p).data == 1.0)

    def test_truncated_raster(self, tmp_path):
        p = tmp_path / "bad.ppm"
        p.write_bytes(b"P6\n2 2\n255\n\x00\x00")
        with pytest.raises(CorruptImageError):
            load_image(p)

    def test_roundtrip(self, tmp_path, random_image):
        img = random_image(3, side=16)
        p = tmp_path / "x.ppm"
        save_image(img, p)
        back = load_image(p)
        assert np.abs(back.data - img.data).max() <= 1 / 510 + 1e-12


class TestPng:
    def test_roundtrip_8x8_sample_identical(self, tmp_path, random_image):
        img = random_image(1, side=8)
        p = tmp_path / "x.png"
        save_image(img, p)
        first = load_image(p)
        save_image(first, p)
        again = load_image(p)
        assert np.array_equal(first.data, again.data)

    def test_quantization_bound(self, random_image):
        img = random_image(7, side=32)
        back = decode_png(encode_png(img))
        assert np.abs(back.data - img.data).max() <= 1 / 510 + 1e-12

    def test_gray_roundtrip(self, random_image):
        img = random_image(9, side=12, channels=1)
        back = decode_png(encode_png(img))
        assert back.channels == 1
        assert np.abs(back.data - img.data).max() <= 1 / 510 + 1e-12

    def test_interops_with_pillow(self, random_image):
        PIL = pytest.importorskip("PIL.Image")
        import io

        img = random_image(11, side=20)
        pil = PIL.open(io.BytesIO(encode_png(img)))
        arr = np.asarray(pil).astype(np.float64) / 255.0
        assert np.array_equal(np.transpose(arr, (2, 0, 1)), decode_png(encode_png(img)).data)

    def test_decodes_pillow_output(self, random_image):
        PIL = pytest.importorskip("PIL.Image")
        import io

        img = random_image(13, side=20)
        stored = (img.data.transpose(1, 2, 0) * 255).astype(np.uint8)
        buf = io.BytesIO()
        PIL.fromarray(stored).save(buf, "PNG")
        ours = decode_png(buf.getvalue())
        assert np.array_equal(ours.data, stored.transpose(2, 0, 1) / 255.0)

    def test_sixteen_bit_source(self):
        PIL = pytest.importorskip("PIL.Image")
        import io

        arr = np.array([[0, 32768], [65535, 1000]], dtype=np.uint16)
        buf = io.BytesIO()
        PIL.fromarray(arr).save(buf, "PNG")
        img = decode_png(buf.getvalue())
        assert np.allclose(img.data[0], arr / 65535.0)

    def test_bad_magic(self):
        with pytest.raises(UnsupportedFormatError):
            decode_png(b"JUNKJUNKJUNK")

    def test_crc_corruption_detected(self, random_image):
        blob = bytearray(encode_png(random_image(1, side=8)))
        blob[40] ^= 0xFF
        with pytest.raises(CorruptImageError):
            decode_png(bytes(blob))

    def test_truncation_detected(self, random_image):
        blob = encode_png(random_image(1, side=8))
        with pytest.raises(CorruptImageError):
            decode_png(blob[: len(blob) - 20])

    def test_unreadable_file_reported(self, tmp_path):
        with pytest.raises(OSError):
            load_image(tmp_path / "missing.png")

    def test_unsupported_suffix(self, tmp_path, random_image):
        with pytest.raises(UnsupportedFormatError):
            save_image(random_image(1), tmp_path / "x.bmp")


class TestQuantization:
    def test_round_half_up(self):
        # 0.5 -> 127.5 -> 128 under the mandated round-half-up rule
        assert quantize_u8(np.array([0.5]))[0] == 128

    def test_endpoints(self):
        assert quantize_u8(np.array([0.0]))[0] == 0
        assert quantize_u8(np.array([1.0]))[0] == 255


class TestColor:
    def test_white_luma(self):
        img = Image(np.ones((3, 2, 2)))
        assert np.allclose(rgb_to_yuv(img).plane(0), 1.0)

    def test_black_luma(self):
        img = Image(np.zeros((3, 2, 2)))
        assert np.allclose(rgb_to_yuv(img).plane(0), 0.0)

    def test_red_luma_bt601(self):
        data = np.zeros((3, 1, 1))
        data[0] = 1.0
        assert rgb_to_yuv(Image(data)).plane(0)[0, 0] == pytest.approx(0.299, abs=1e-12)

    def test_roundtrip_error(self):
        g = rng(5)
        img = Image(g.uniform(0, 1, (3, 25, 40)))
        back = yuv_to_rgb(rgb_to_yuv(img))
        assert np.abs(back.data - img.data).max() < 1e-6

    def test_gray_input_rejected(self):
        with pytest.raises(ValueError):
            rgb_to_yuv(Image(np.zeros((1, 2, 2))))

    def test_to_gray_matches_luma(self, random_image):
        img = random_image(21)
        assert np.allclose(to_gray(img).plane(0), rgb_to_yuv(img).plane(0))


class TestResampling:
    def test_resize_identity(self):
        plane = rng(1).uniform(0, 1, (10, 10))
        assert np.array_equal(bilinear_resize(plane, 10, 10), plane)

    def test_resize_constant_preserved(self):
        plane = np.full((12, 20), 0.37)
        assert np.allclose(bilinear_resize(plane, 7, 5), 0.37)

    def test_center_crop_square(self):
        img = Image(rng(2).uniform(0, 1, (3, 30, 44)))
        cropped = center_crop_square(img)
        assert cropped.height == cropped.width == 30
        assert np.array_equal(cropped.data, img.data[:, :, 7:37])

    def test_blur_preserves_constant(self):
        plane = np.full((16, 16), 0.6)
        assert np.allclose(gaussian_blur(plane), 0.6)

    def test_blur_reduces_variance(self):
        plane = rng(3).uniform(0, 1, (32, 32))
        assert gaussian_blur(plane).var() < plane.var()
