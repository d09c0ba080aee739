import numpy as np
import pytest

from wmbench.imaging import rng
from wmbench.transforms import (
    dct2,
    dct2_block,
    dwt2,
    fft2,
    idct2,
    idct2_block,
    idwt2,
    ifft2,
    make_ring_mask,
    svd,
)


def naive_dct2(block: np.ndarray) -> np.ndarray:
    """O(n^4) orthonormal type-II DCT straight from the double-sum definition."""
    n = block.shape[0]
    out = np.zeros((n, n))
    for u in range(n):
        for v in range(n):
            cu = np.sqrt(1 / n) if u == 0 else np.sqrt(2 / n)
            cv = np.sqrt(1 / n) if v == 0 else np.sqrt(2 / n)
            acc = 0.0
            for x in range(n):
                for y in range(n):
                    acc += (block[x, y]
                            * np.cos((2 * x + 1) * u * np.pi / (2 * n))
                            * np.cos((2 * y + 1) * v * np.pi / (2 * n)))
            out[u, v] = cu * cv * acc
    return out


def naive_dft2(grid: np.ndarray) -> np.ndarray:
    """O(N^4) DFT double sum, forward unnormalized."""
    h, w = grid.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = 0.0 + 0.0j
            for x in range(h):
                for y in range(w):
                    acc += grid[x, y] * np.exp(-2j * np.pi * (u * x / h + v * y / w))
            out[u, v] = acc
    return out


class TestDwt:
    def test_constant_grid(self):
        sb = dwt2(np.full((4, 4), 0.7))
        assert np.allclose(sb.ll, 1.4)
        for band in (sb.lh, sb.hl, sb.hh):
            assert np.allclose(band, 0.0)

    def test_roundtrip(self):
        for seed in range(20):
            grid = rng(seed).standard_normal((8, 8))
            assert np.abs(idwt2(dwt2(grid)) - grid).max() < 1e-9

    def test_energy_conservation(self):
        grid = rng(4).standard_normal((16, 16))
        sb = dwt2(grid)
        total = sum(np.sum(b ** 2) for b in (sb.ll, sb.lh, sb.hl, sb.hh))
        assert abs(total - np.sum(grid ** 2)) < 1e-9

    def test_odd_dimensions_rejected(self):
        with pytest.raises(ValueError):
            dwt2(np.zeros((5, 4)))

    def test_subband_shapes(self):
        sb = dwt2(np.zeros((10, 6)))
        assert sb.ll.shape == sb.lh.shape == sb.hl.shape == sb.hh.shape == (5, 3)


class TestDct:
    def test_constant_block(self):
        coeffs = dct2_block(np.ones((8, 8)))
        assert coeffs[0, 0] == pytest.approx(8.0, abs=1e-12)
        coeffs[0, 0] = 0
        assert np.abs(coeffs).max() < 1e-12

    def test_dc_is_8x_mean(self):
        block = rng(1).uniform(0, 1, (8, 8))
        assert dct2_block(block)[0, 0] == pytest.approx(8 * block.mean(), abs=1e-12)

    def test_impulse_energy(self):
        block = np.zeros((8, 8))
        block[0, 0] = 1.0
        assert np.sum(dct2_block(block) ** 2) == pytest.approx(1.0, abs=1e-12)

    def test_matches_naive_definition(self):
        block = rng(2).standard_normal((8, 8))
        assert np.abs(dct2_block(block) - naive_dct2(block)).max() < 1e-10

    def test_roundtrip(self):
        for seed in range(20):
            block = rng(seed).standard_normal((8, 8))
            assert np.abs(idct2_block(dct2_block(block)) - block).max() < 1e-9

    def test_wrong_size_rejected(self):
        with pytest.raises(ValueError):
            dct2_block(np.zeros((4, 4)))
        with pytest.raises(ValueError):
            idct2_block(np.zeros((8, 4)))

    def test_general_size_roundtrip(self):
        grid = rng(3).standard_normal((32, 32))
        assert np.abs(idct2(dct2(grid)) - grid).max() < 1e-9


class TestSvd:
    def test_identity(self):
        _, s, _ = svd(np.eye(3))
        assert np.allclose(s, 1.0)

    def test_diagonal(self):
        _, s, _ = svd(np.diag([3.0, 2.0, 1.0]))
        assert np.allclose(s, [3, 2, 1])

    def test_reconstruction(self):
        for seed in range(10):
            m = rng(seed).standard_normal((8, 8))
            u, s, v = svd(m)
            rel = np.linalg.norm(u @ np.diag(s) @ v.T - m) / np.linalg.norm(m)
            assert rel < 1e-8

    def test_singular_values_sorted_nonnegative(self):
        _, s, _ = svd(rng(5).standard_normal((6, 6)))
        assert np.all(s >= 0) and np.all(np.diff(s) <= 0)

    def test_matches_eigen_oracle(self):
        m = rng(6).standard_normal((8, 8))
        _, s, _ = svd(m)
        eig = np.sort(np.sqrt(np.maximum(np.linalg.eigvalsh(m.T @ m), 0)))[::-1]
        assert np.abs(s - eig).max() < 1e-8

    def test_non_finite_rejected(self):
        m = np.eye(3)
        m[1, 1] = np.inf
        with pytest.raises(ValueError):
            svd(m)


class TestFft:
    def test_delta_flat_spectrum(self):
        grid = np.zeros((8, 8))
        grid[0, 0] = 1.0
        assert np.allclose(fft2(grid).values, 1.0 + 0.0j)

    def test_constant_dc_only(self):
        spec = fft2(np.full((16, 16), 0.3)).values
        assert spec[0, 0] == pytest.approx(0.3 * 256)
        spec[0, 0] = 0
        assert np.abs(spec).max() < 1e-9

    def test_matches_naive_dft(self):
        grid = rng(7).standard_normal((16, 16))
        assert np.abs(fft2(grid).values - naive_dft2(grid)).max() < 1e-9

    def test_roundtrip(self):
        for seed in range(10):
            grid = rng(seed).standard_normal((32, 32))
            assert np.abs(ifft2(fft2(grid)) - grid).max() < 1e-9

    def test_hermitian_symmetry(self):
        spec = fft2(rng(8).standard_normal((16, 16))).values
        n = 16
        for u in range(n):
            for v in range(n):
                assert spec[u, v] == pytest.approx(np.conj(spec[(-u) % n, (-v) % n]), abs=1e-9)

    def test_parseval(self):
        grid = rng(9).standard_normal((32, 32))
        spec = fft2(grid).values
        assert np.sum(np.abs(spec) ** 2) / grid.size == pytest.approx(np.sum(grid ** 2), rel=1e-12)

    def test_non_power_of_two_rejected(self):
        with pytest.raises(ValueError):
            fft2(np.zeros((12, 12)))


class TestRingMask:
    def test_center_only(self):
        mask = make_ring_mask(8, 0, 1).mask
        assert mask.sum() == 1 and mask[4, 4]

    def test_outer_beyond_half_rejected(self):
        with pytest.raises(ValueError):
            make_ring_mask(8, 0, 100)
        with pytest.raises(ValueError):
            make_ring_mask(8, 3, 2)

    def test_count_matches_bruteforce(self):
        mask = make_ring_mask(64, 10, 14).mask
        count = 0
        for u in range(64):
            for v in range(64):
                d = np.hypot(u - 32, v - 32)
                count += 10 <= d < 14
        assert mask.sum() == count

    def test_symmetric_under_negation(self):
        # ring masks must pair each bin with its Hermitian partner
        mask = np.fft.ifftshift(make_ring_mask(64, 4, 14).mask)
        idx = np.arange(64)
        pu, pv = np.meshgrid((-idx) % 64, (-idx) % 64, indexing="ij")
        assert np.array_equal(mask, mask[pu, pv])
