import numpy as np
import pytest

from heatmark.shiftops import (
    add_coord_channels,
    blur_downsample,
    blur_kernel,
    max_blur_pool,
    shift_consistency,
    subsample,
)


def reference_blur_downsample(arr, n):
    """Loop reference: reflect pad, correlate, take every second pixel."""
    taps = {2: [1, 1], 3: [1, 2, 1], 5: [1, 4, 6, 4, 1]}[n]
    k2d = np.outer(taps, taps).astype(np.float64)
    k2d /= k2d.sum()
    lo, hi = (n // 2, n // 2) if n % 2 else (0, n - 1)
    c, h, w = arr.shape
    padded = np.pad(arr, ((0, 0), (lo, hi), (lo, hi)), mode="reflect")
    out = np.zeros((c, (h + 1) // 2, (w + 1) // 2))
    for ch in range(c):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                win = padded[ch, 2 * i : 2 * i + n, 2 * j : 2 * j + n]
                out[ch, i, j] = (win * k2d).sum()
    return out


# ----------------------------------------------------------------- kernels


def test_kernel_weights():
    np.testing.assert_array_equal(blur_kernel(2).weights, np.full((2, 2), 0.25))
    np.testing.assert_array_equal(
        blur_kernel(3).weights, np.outer([1, 2, 1], [1, 2, 1]) / 16.0
    )
    np.testing.assert_array_equal(
        blur_kernel(5).weights, np.outer([1, 4, 6, 4, 1], [1, 4, 6, 4, 1]) / 256.0
    )


def test_kernel_rejects_other_sizes():
    with pytest.raises(ValueError, match=r"kernel size must be one of \[2, 3, 5\]"):
        blur_kernel(4)


# ------------------------------------------------------------ downsampling


def test_blur_constant_passthrough():
    f = np.full((2, 8, 8), 3.25)
    for n in (2, 3, 5):
        out = blur_downsample(f, blur_kernel(n))
        assert out.shape == (2, 4, 4)
        np.testing.assert_array_equal(out, np.full((2, 4, 4), 3.25))


def test_blur2_is_block_average():
    f = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    out = blur_downsample(f, blur_kernel(2))
    # output (i, j) averages the 2x2 block anchored at input (2i, 2j)
    want = np.array([[[2.5, 4.5], [10.5, 12.5]]])
    np.testing.assert_array_equal(out, want)


@pytest.mark.parametrize("n", [2, 3, 5])
@pytest.mark.parametrize("shape", [(1, 8, 8), (2, 9, 7), (3, 7, 10)])
def test_blur_matches_loop_reference(rng, n, shape):
    f = rng.uniform(-1.0, 1.0, size=shape)
    got = blur_downsample(f, blur_kernel(n))
    np.testing.assert_allclose(got, reference_blur_downsample(f, n), atol=1e-12)


def test_blur_output_shape_ceil():
    f = np.zeros((1, 9, 7))
    assert blur_downsample(f, blur_kernel(3)).shape == (1, 5, 4)


def test_blur_rejects_small_and_misshaped():
    with pytest.raises(ValueError, match="smaller than kernel"):
        blur_downsample(np.zeros((1, 4, 4)), blur_kernel(5))
    with pytest.raises(ValueError, match=r"expected \(C, H, W\)"):
        blur_downsample(np.zeros((4, 4)), blur_kernel(3))
    with pytest.raises(ValueError, match="stride is fixed"):
        blur_downsample(np.zeros((1, 8, 8)), blur_kernel(3), stride=3)


def test_max_blur_pool_reference(rng):
    f = rng.uniform(size=(2, 8, 8))
    padded = np.pad(f, ((0, 0), (0, 1), (0, 1)), mode="edge")
    dense = np.maximum(
        np.maximum(padded[:, :-1, :-1], padded[:, :-1, 1:]),
        np.maximum(padded[:, 1:, :-1], padded[:, 1:, 1:]),
    )
    want = blur_downsample(dense, blur_kernel(3))
    np.testing.assert_array_equal(max_blur_pool(f, blur_kernel(3)), want)


def test_max_blur_pool_dominates_plain_blur(rng):
    f = rng.uniform(size=(1, 10, 10))
    k = blur_kernel(3)
    assert (max_blur_pool(f, k) >= blur_downsample(f, k) - 1e-12).all()


# --------------------------------------------------------- coord channels


def test_coord_channels_layout():
    f = np.zeros((3, 4, 5))
    out = add_coord_channels(f)
    assert out.shape == (5, 4, 5)
    x, y = out[3], out[4]
    np.testing.assert_array_equal(x[0], x[3])  # x varies along columns only
    np.testing.assert_array_equal(y[:, 0], y[:, 4])
    assert x[0, 0] == -1.0 and x[0, -1] == 1.0
    assert y[0, 0] == -1.0 and y[-1, 0] == 1.0
    np.testing.assert_allclose(x[0], np.linspace(-1, 1, 5))


def test_coord_channels_copy_payload(rng):
    f = rng.uniform(size=(2, 3, 3))
    np.testing.assert_array_equal(add_coord_channels(f)[:2], f)


def test_coord_channels_singleton_axis_is_zero():
    out = add_coord_channels(np.zeros((1, 1, 3)))
    np.testing.assert_array_equal(out[2], np.zeros((1, 3)))  # y axis has no extent


# ------------------------------------------------------- shift consistency


def test_shift_consistency_identity_pipeline(rng):
    f = rng.uniform(size=(1, 16, 16))
    # norm computation costs one ulp, the clip keeps the ceiling at 1
    assert shift_consistency(lambda a: a, f) >= 1.0 - 1e-12


def test_shift_consistency_zero_input():
    f = np.zeros((1, 8, 8))
    assert shift_consistency(lambda a: subsample(a), f) == 1.0


def test_checkerboard_aliasing_case():
    """Stride-2 subsampling collapses a +-1 checkerboard; blurring first keeps it.

    Odd shifts negate every sampled value, so 4 of the 9 probes score -1
    and the mean lands at 1/9. The binomial kernel nulls the alternating
    pattern outright, leaving the trivially consistent all-zero output.
    """
    rr, cc = np.meshgrid(np.arange(16), np.arange(16), indexing="ij")
    f = (1.0 - 2.0 * ((rr + cc) % 2))[None]
    plain = shift_consistency(lambda a: subsample(a), f)
    blurred = shift_consistency(lambda a: blur_downsample(a, blur_kernel(3)), f)
    assert plain == pytest.approx(1.0 / 9.0, abs=1e-12)
    assert blurred == 1.0


def test_blur_beats_subsampling_on_lowpass_noise():
    from heatmark.cli import circular_lowpass

    wins = 0
    trials = 20
    for t in range(trials):
        rng = np.random.default_rng(100 + t)
        f = circular_lowpass(rng, 32)
        plain = shift_consistency(lambda a: subsample(a), f)
        blurred = shift_consistency(lambda a: blur_downsample(a, blur_kernel(3)), f)
        wins += int(blurred > plain)
    assert wins == trials


def test_shift_consistency_validation():
    with pytest.raises(ValueError, match="max_shift"):
        shift_consistency(lambda a: a, np.zeros((1, 4, 4)), max_shift=-1)
    with pytest.raises(ValueError, match=r"expected \(C, H, W\)"):
        shift_consistency(lambda a: a, np.zeros((4, 4)))


def test_subsample_takes_even_indices():
    f = np.arange(16, dtype=np.float64).reshape(1, 4, 4)
    np.testing.assert_array_equal(subsample(f), [[[0.0, 2.0], [8.0, 10.0]]])
