import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medpipe.errors import InvalidOverlap, ShapeError, UncoveredVoxel
from medpipe.patch import Accumulator, SlabSpec, axis_starts, compute_grid, cosine_weights, extract_patch

from oracles import brute_coverage, reconstruct_identity


@st.composite
def grid_cases(draw, max_shape=12, max_patch=6):
    shape = tuple(draw(st.integers(1, max_shape)) for _ in range(3))
    patch = tuple(draw(st.integers(1, max_patch)) for _ in range(3))
    overlap = tuple(draw(st.integers(0, p - 1)) for p in patch)
    return shape, patch, overlap


def test_axis_starts_examples():
    assert axis_starts(10, 4, 0) == [0, 4, 6]
    assert axis_starts(10, 4, 2) == [0, 2, 4, 6]
    assert axis_starts(3, 5, 0) == [0]
    with pytest.raises(InvalidOverlap):
        axis_starts(10, 4, 4)


def test_grid_index_order_is_row_major():
    grid = compute_grid((4, 4, 4), (2, 2, 4))
    assert grid.position(0) == (0, 0, 0)
    assert grid.position(1) == (0, 2, 0)
    assert grid.position(2) == (2, 0, 0)
    assert [grid.position(i) for i in range(len(grid))] == grid.positions


@settings(max_examples=150, deadline=None)
@given(grid_cases())
def test_every_voxel_is_covered(case):
    shape, patch, overlap = case
    grid = compute_grid(shape, patch, overlap)
    counts = brute_coverage(shape, grid)
    assert counts.min() >= 1
    for pos in grid.positions:
        assert all(0 <= p <= max(0, n - s) for p, n, s in zip(pos, shape, patch))


@settings(max_examples=100, deadline=None)
@given(grid_cases(), st.sampled_from(["Uniform", "Cosine"]), st.integers(0, 2 ** 32 - 1))
def test_identity_reconstruction(case, weighting, seed):
    shape, patch, overlap = case
    arr = np.random.default_rng(seed).standard_normal((2,) + shape).astype(np.float32)
    out = reconstruct_identity(arr, compute_grid(shape, patch, overlap), weighting)
    assert out.shape == arr.shape
    assert np.max(np.abs(out - arr)) < 1e-5


def test_padding_when_volume_is_smaller_than_patch():
    arr = np.arange(6, dtype=np.float32).reshape(1, 1, 2, 3)
    grid = compute_grid((1, 2, 3), (1, 4, 4))
    patch = extract_patch(arr, grid, 0, pad_value=-1)
    assert patch.shape == (1, 1, 4, 4)
    np.testing.assert_array_equal(patch[0, 0, :2, :3], arr[0, 0])
    assert np.all(patch[0, 0, 2:] == -1)


def test_slab_extraction_stacks_neighbours():
    arr = np.arange(5, dtype=np.float32)[None, :, None, None] * np.ones((1, 5, 2, 2), dtype=np.float32)
    grid = compute_grid((5, 2, 2), (1, 2, 2))
    slab = SlabSpec.from_patch((1, 2, 2), 2)
    p = extract_patch(arr, grid, 0, slab, pad_value=-1)
    assert p.shape == (5, 1, 2, 2)
    np.testing.assert_array_equal(p[:, 0, 0, 0], [-1, -1, 0, 1, 2])
    with pytest.raises(ShapeError):
        SlabSpec.from_patch((2, 2, 2), 1)


def test_cosine_weights_are_positive_and_symmetric():
    w = cosine_weights((1, 4, 5))
    assert w.shape == (1, 4, 5)
    assert np.all(w > 0)
    np.testing.assert_allclose(w, w[:, ::-1, ::-1])


def test_accumulator_errors():
    grid = compute_grid((2, 2, 2), (2, 2, 2))
    acc = Accumulator(grid, 1)
    with pytest.raises(UncoveredVoxel):
        acc.finalize()
    with pytest.raises(ShapeError):
        acc.accumulate(0, np.zeros((2, 2, 2, 2)))
    with pytest.raises(ValueError):
        Accumulator(grid, 1, "Gaussian")
