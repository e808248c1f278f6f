import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saliencylab.resize import resize_map
from tests.oracles import bilinear_1d_ref


def test_constant_1x1_to_any_size():
    out = resize_map(np.array([[3.5]]), (4, 6))
    np.testing.assert_array_equal(out, np.full((4, 6), 3.5))


def test_two_to_five_corner_aligned():
    out = resize_map(np.array([[0.0], [1.0]]), (5, 1))
    np.testing.assert_allclose(out[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])


def test_matches_direct_formula_1d(rng):
    values = rng.normal(size=7)
    out = resize_map(values[:, None], (19, 1))
    np.testing.assert_allclose(out[:, 0], bilinear_1d_ref(values, 19), rtol=1e-12)


def test_corner_points_exact(rng):
    m = rng.normal(size=(3, 4))
    out = resize_map(m, (9, 10))
    assert out[0, 0] == m[0, 0]
    assert out[0, -1] == m[0, -1]
    assert out[-1, 0] == m[-1, 0]
    assert out[-1, -1] == m[-1, -1]


def test_upscale_hits_original_grid_points(rng):
    # (target - 1) divisible by (source - 1): every source sample is hit
    m = rng.normal(size=(3, 3))
    out = resize_map(m, (5, 5))
    np.testing.assert_allclose(out[::2, ::2], m, rtol=0, atol=0)


def test_downscale_rejected(rng):
    with pytest.raises(ValueError, match="downscaling"):
        resize_map(rng.normal(size=(4, 4)), (3, 5))


def test_unknown_mode_rejected(rng):
    with pytest.raises(ValueError, match="unknown mode"):
        resize_map(rng.normal(size=(2, 2)), (4, 4), mode="cubic")


def test_linear_mode_nearest_on_axis1():
    m = np.array([[0.0, 10.0]])
    out = resize_map(m, (1, 5), mode="linear")
    # positions 0, .25, .5, .75, 1 -> nearest (ties up): 0, 0, 10, 10, 10
    np.testing.assert_array_equal(out[0], [0.0, 0.0, 10.0, 10.0, 10.0])


def test_linear_mode_interpolates_axis0(rng):
    m = rng.normal(size=(2, 3))
    out = resize_map(m, (5, 3), mode="linear")
    for col in range(3):
        np.testing.assert_allclose(out[:, col], bilinear_1d_ref(m[:, col], 5),
                                   rtol=1e-12)


@settings(max_examples=40, deadline=None)
@given(sh=st.integers(1, 5), sw=st.integers(1, 5),
       up_h=st.integers(0, 6), up_w=st.integers(0, 6),
       mode=st.sampled_from(["bilinear", "linear"]),
       value=st.floats(-5, 5))
def test_constants_preserved(sh, sw, up_h, up_w, mode, value):
    out = resize_map(np.full((sh, sw), value), (sh + up_h, sw + up_w), mode)
    np.testing.assert_allclose(out, value, rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(sh=st.integers(2, 5), sw=st.integers(2, 5),
       up_h=st.integers(0, 6), up_w=st.integers(0, 6), seed=st.integers(0, 999))
def test_range_never_exceeds_source(sh, sw, up_h, up_w, seed):
    m = np.random.default_rng(seed).normal(size=(sh, sw))
    out = resize_map(m, (sh + up_h, sw + up_w))
    assert out.min() >= m.min() - 1e-12
    assert out.max() <= m.max() + 1e-12
