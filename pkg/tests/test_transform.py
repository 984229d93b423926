import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from medpipe.dataio import Volume
from medpipe.errors import DegenerateRange, InvalidDim, MissingState
from medpipe.transform import (
    Argmax,
    Clip,
    Flip,
    Normalize,
    ResampleToResolution,
    TensorCast,
    TransformState,
    apply_transforms,
    invert_transforms,
)


def vol(arr, spacing=(1.0, 1.0, 1.0)):
    arr = np.asarray(arr)
    while arr.ndim < 4:
        arr = arr[None]
    return Volume(arr, spacing=spacing)


def test_clip_then_normalize_affine_values():
    v = vol(np.array([-2000.0, -1000.0, 0.0, 500.0, 1000.0, 3000.0], dtype=np.float32).reshape(1, 1, 6))
    out = apply_transforms([Clip(-1000, 1000), Normalize(min_value=-1, max_value=1)], v, TransformState())
    np.testing.assert_allclose(out.array.ravel(), [-1, -1, 0, 0.5, 1, 1], atol=1e-7)


def test_clip_keeps_integer_dtype():
    v = vol(np.array([-3000, 20, 3000], dtype=np.int16).reshape(1, 1, 3))
    out = Clip(-1000.5, 1000.5)(v)
    assert out.dtype == np.int16
    np.testing.assert_array_equal(out.array.ravel(), [-1000, 20, 1000])


def test_normalize_non_lazy_uses_clip_bounds_and_inverts():
    rng = np.random.default_rng(0)
    v = vol(rng.uniform(-500, 500, (1, 3, 4, 4)).astype(np.float32))
    state = TransformState()
    out = apply_transforms([Clip(-1000, 1000), Normalize(lazy=False, min_value=0, max_value=1)], v, state)
    np.testing.assert_allclose(out.array, (v.array + 1000) / 2000, atol=1e-6)
    back = invert_transforms(state, out)
    np.testing.assert_allclose(back.array, v.array, atol=1e-3)
    assert np.max(np.abs(back.array - v.array)) / 1000 < 1e-5


def test_normalize_degenerate_and_channel_errors():
    with pytest.raises(DegenerateRange):
        Normalize()(vol(np.ones((1, 2, 2, 2), dtype=np.float32)))
    with pytest.raises(InvalidDim):
        Normalize(channels=[3])(vol(np.arange(8, dtype=np.float32).reshape(1, 2, 2, 2)))


def test_resample_extents_and_constant_field():
    v = vol(np.full((1, 4, 4, 4), 7.25, dtype=np.float32), spacing=(2.0, 2.0, 2.0))
    state = TransformState()
    up = ResampleToResolution([1, 1, 1])(v, state)
    assert up.spatial_shape == (8, 8, 8) and up.spacing == (1.0, 1.0, 1.0)
    assert np.all(up.array == np.float32(7.25))
    back = invert_transforms(state, up)
    assert back.spatial_shape == (4, 4, 4) and back.spacing == (2.0, 2.0, 2.0)
    assert np.all(back.array == np.float32(7.25))


def test_resample_linear_ramp_round_trip():
    ramp = np.arange(6, dtype=np.float64)[None, None, None, :] * 3.0 + np.zeros((1, 2, 2, 6))
    v = vol(ramp, spacing=(2.0, 1.0, 1.0))
    state = TransformState()
    fine = ResampleToResolution([1, 1, 1])(v, state)
    assert fine.spatial_shape == (2, 2, 12)
    interior = fine.array[..., :11]
    np.testing.assert_allclose(interior, np.arange(11)[None, None, None, :] * 1.5 + np.zeros_like(interior))
    back = invert_transforms(state, fine)
    assert np.max(np.abs(back.array - ramp)) < 1e-4


def test_labels_resample_nearest():
    labels = vol(np.array([0, 1, 2, 1], dtype=np.uint8).reshape(1, 1, 4), spacing=(2.0, 1.0, 1.0))
    out = ResampleToResolution([1, 1, 1])(labels)
    assert out.dtype == np.uint8
    assert set(np.unique(out.array)) <= {0, 1, 2}


def test_tensorcast_rounds_and_saturates():
    v = vol(np.array([-3.0, 0.4, 0.6, 300.0], dtype=np.float32).reshape(1, 1, 4))
    np.testing.assert_array_equal(TensorCast("uint8")(v).array.ravel(), [0, 0, 1, 255])


def test_argmax_keeps_unit_channel():
    arr = np.zeros((3, 1, 2, 2), dtype=np.float32)
    arr[2, 0, 0, 0] = 1
    arr[1, 0, 1, 1] = 1
    out = Argmax(0)(Volume(arr))
    assert out.shape == (1, 1, 2, 2)
    assert out.array[0, 0, 0, 0] == 2 and out.array[0, 0, 1, 1] == 1
    with pytest.raises(InvalidDim):
        Argmax(5)(Volume(arr))


def test_invert_without_state():
    with pytest.raises(MissingState):
        invert_transforms(None, vol(np.zeros((1, 1, 1, 1))))


def test_flip_draws():
    rng = np.random.default_rng(0)
    rec = Flip([0, 1, 0]).draw(rng)
    assert rec.flipped_axes == (False, True, False)
    assert Flip([1, 1, 1], prob=0).draw(rng).is_identity
    with pytest.raises(ValueError):
        Flip([0, 2, 0])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, (2, 3, 4, 5), elements=st.floats(-10, 10, width=32)),
       st.tuples(st.booleans(), st.booleans(), st.booleans()))
def test_flip_is_an_involution(arr, axes):
    flip = Flip([float(a) for a in axes])
    rec = flip.draw(np.random.default_rng(1))
    v = Volume(arr)
    twice = flip.invert(flip.apply(v, rec), rec)
    np.testing.assert_array_equal(twice.array, arr)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, (1, 2, 3, 4), elements=st.floats(-1000, 1000, width=32), unique=True),
       st.floats(-5, 0), st.floats(0.5, 5))
def test_normalize_inverse_property(arr, lo, width):
    v = Volume(arr)
    state = TransformState()
    out = Normalize(min_value=lo, max_value=lo + width)(v, state)
    back = invert_transforms(state, out)
    scale = max(1.0, float(np.max(np.abs(arr))))
    assert np.max(np.abs(back.array - arr)) / scale < 1e-5
