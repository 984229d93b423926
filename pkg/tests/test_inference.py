import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from medpipe.config import default_registry, dump_yaml, load_yaml, parse_config
from medpipe.dataio import Volume, read_metaimage, write_metaimage
from medpipe.errors import CheckpointLoadError, EmptyReduction, ShapeError
from medpipe.inference import Mean, Median, OutSameAsGroupDataset, Predictor, WeightedMean, combine_models, reduce
from medpipe.modelgraph.network import Network
from medpipe.modelgraph.unet import Head
from medpipe.tensor import Tensor
from medpipe.trainer import encode_checkpoint

from conftest import E2E

# ---------------------------------------------------------------- reductions


def test_reduce_examples():
    assert reduce([np.array([0.0]), np.array([1.0])], "Mean")[0] == 0.5
    got = reduce([np.array([0.2]), np.array([0.7]), np.array([0.4])], "Median")
    assert got[0] == sorted([0.2, 0.7, 0.4])[1]
    t = np.array([[1.0, 2.0]])
    np.testing.assert_array_equal(reduce([t], "Median"), t)
    assert reduce([np.array([1.0]), np.array([4.0])], "Median")[0] == 2.5


def test_reduce_errors_and_tensor_type():
    with pytest.raises(EmptyReduction):
        reduce([], "Mean")
    with pytest.raises(EmptyReduction):
        combine_models([], "Mean")
    with pytest.raises(ShapeError):
        reduce([np.zeros(2), np.zeros(3)], "Mean")
    out = reduce([Tensor(np.ones(2, np.float32))] * 2, Mean())
    assert isinstance(out, Tensor) and out.dtype == np.float32


def test_weighted_combination():
    a, b = np.array([1.0, 4.0]), np.array([3.0, -2.0])
    np.testing.assert_allclose(combine_models([a, b], WeightedMean([0.25, 0.75])), 0.25 * a + 0.75 * b, rtol=1e-15)
    with pytest.raises(ShapeError):
        WeightedMean([1.0])([a, b])


def test_custom_callable_reduction():
    out = reduce([np.array([1.0, 5.0]), np.array([3.0, 2.0])], lambda xs: np.maximum.reduce(xs))
    np.testing.assert_array_equal(out, [3.0, 5.0])


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3,), elements=st.floats(-100, 100)), st.integers(1, 6))
def test_mean_of_copies_is_identity(t, k):
    np.testing.assert_array_equal(combine_models([t] * k, "Mean"), t)


@settings(max_examples=60, deadline=None)
@given(st.lists(arrays(np.float64, (4,), elements=st.floats(-1e3, 1e3)), min_size=1, max_size=7))
def test_median_matches_sort_and_pick(values):
    got = reduce(values, Median())
    stack = np.sort(np.stack(values), axis=0)
    n = len(values)
    want = stack[n // 2] if n % 2 else (stack[n // 2 - 1] + stack[n // 2]) / 2
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(arrays(np.float64, (3, 5), elements=st.floats(0.01, 1.0)), min_size=1, max_size=5))
def test_mean_of_simplex_points_stays_on_simplex(raw):
    probs = [r / r.sum(axis=0, keepdims=True) for r in raw]
    np.testing.assert_allclose(reduce(probs, "Mean").sum(axis=0), 1.0, atol=1e-12)


# ---------------------------------------------------------------- writer


def test_writer_copies_reference_geometry(tmp_path):
    ref = Volume(np.zeros((1, 3, 4, 5), np.uint8), spacing=(1.5, 0.7, 0.7), origin=(10.0, -5.0, 2.0),
                 direction=np.array([[0.0, 1, 0], [1, 0, 0], [0, 0, 1]]))
    path = OutSameAsGroupDataset().write(Volume(np.ones((1, 3, 4, 5), np.uint8)), ref, tmp_path, "P1", "seg", "mha")
    assert path == tmp_path / "P1" / "Seg.mha"
    back = read_metaimage(path)
    assert back.spacing == ref.spacing and back.origin == ref.origin
    np.testing.assert_array_equal(back.direction, ref.direction)
    with pytest.raises(ShapeError):
        OutSameAsGroupDataset().write(Volume(np.ones((1, 3, 4, 4))), ref, tmp_path, "P1", "seg", "mha")


# ---------------------------------------------------------------- prediction runs

GEOMETRY = dict(spacing=(1.5, 1.0, 1.0), origin=(4.0, -20.0, 7.5))


def pointwise_model(nb_class: int = 2) -> Network:
    """A per-voxel channel map: commutes with every flip."""
    net = Network("Pointwise", in_channels=1, dim=2)
    net.add(Head(1, nb_class, bias=True))
    net.nb_class = nb_class
    return net


@pytest.fixture()
def registry():
    reg = default_registry().copy()
    reg.register("Model", "Pointwise", pointwise_model)
    return reg


def write_cases(root, names=("Patient_1", "Patient_2")):
    rng = np.random.default_rng(5)
    for name in names:
        ct = rng.normal(0, 300, (1, 8, 16, 16)).astype(np.int16)
        mask = (ct > 0).astype(np.uint8)
        write_metaimage(Volume(ct, **GEOMETRY), root / "Dataset" / name / "CT.mha")
        write_metaimage(Volume(mask, **GEOMETRY), root / "Dataset" / name / "MASK.mha")


def prediction_tree(model: str = "UNet", tta: bool = True, raw_output: bool = False) -> dict:
    tree = load_yaml((E2E / "Prediction.yml").read_text())
    body = tree["Predictor"]
    if model == "Pointwise":
        body["Model"] = {"classpath": "Pointwise", "Pointwise": {"nb_class": 2}}
    if not tta:
        body["Dataset"]["augmentations"] = None
    if raw_output:
        out = body["outputs_dataset"]["UNetBlock_0:Head:Softmax"]["OutputDataset"]
        out["after_reduction_transforms"] = None
        out["final_transforms"] = None
        out["group"] = "probs"
    if model == "Pointwise":
        body["outputs_dataset"] = {"Head:Softmax": body["outputs_dataset"]["UNetBlock_0:Head:Softmax"]}
    return tree


def save_model(root, model, name, seed=0):
    rng = np.random.default_rng(seed)
    params = {n: rng.standard_normal(p.shape).astype(np.float32) for n, p in model.named_parameters()}
    path = root / "Checkpoints" / "UNet" / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_checkpoint(params))
    return path


def run_predictor(root, tree, registry, models=None, seed=None):
    cfg = parse_config(dump_yaml(tree), "Prediction", registry)
    return Predictor(cfg, root, registry, seed=seed, models=models).run()


def test_flip_tta_is_identity_for_equivariant_model(tmp_path, registry):
    write_cases(tmp_path)
    save_model(tmp_path, pointwise_model(), "2025_01_01_00_00_00.pt")
    with_tta = run_predictor(tmp_path, prediction_tree("Pointwise", tta=True, raw_output=True), registry)
    a = [read_metaimage(p).array.copy() for p in with_tta]
    without = run_predictor(tmp_path, prediction_tree("Pointwise", tta=False, raw_output=True), registry)
    b = [read_metaimage(p).array for p in without]
    assert len(a) == len(b) == 2
    for x, y in zip(a, b):
        assert x.shape == (2, 8, 16, 16)
        np.testing.assert_allclose(x, y, atol=1e-5, rtol=0)
        np.testing.assert_allclose(x.sum(axis=0), 1.0, atol=1e-5)


def test_seg_output_dtype_values_and_geometry(tmp_path, registry):
    write_cases(tmp_path)
    save_model(tmp_path, pointwise_model(), "2025_01_01_00_00_00.pt")
    written = run_predictor(tmp_path, prediction_tree("Pointwise"), registry)
    assert written[0] == tmp_path / "Predictions" / "UNet" / "Dataset" / "Patient_1" / "Seg.mha"
    mask = read_metaimage(tmp_path / "Dataset" / "Patient_1" / "MASK.mha")
    seg = read_metaimage(written[0])
    assert seg.dtype == np.uint8 and set(np.unique(seg.array)) <= {0, 1}
    assert seg.spatial_shape == mask.spatial_shape
    assert seg.spacing == mask.spacing and seg.origin == mask.origin
    np.testing.assert_array_equal(seg.direction, mask.direction)
    assert (tmp_path / "Predictions" / "UNet" / "Prediction.yml").exists()
    assert (tmp_path / "Predictions" / "UNet" / "log.txt").exists()


def test_identical_checkpoints_combine_to_single_model(tmp_path, registry):
    write_cases(tmp_path)
    from medpipe.modelgraph import UNet

    net = UNet(channels=[1, 4, 8], nb_class=2)
    first = save_model(tmp_path, net, "2025_01_01_00_00_00.pt", seed=3)
    second = tmp_path / "Checkpoints" / "UNet" / "2025_01_01_00_00_01.pt"
    second.write_bytes(first.read_bytes())
    tree = prediction_tree(raw_output=True)
    single = [read_metaimage(p).array.copy() for p in run_predictor(tmp_path, tree, registry, models=[first.name])]
    double = [read_metaimage(p).array for p in
              run_predictor(tmp_path, tree, registry, models=[first.name, second.name])]
    for x, y in zip(single, double):
        np.testing.assert_array_equal(x, y)


def test_prediction_is_bit_reproducible(tmp_path, registry):
    write_cases(tmp_path)
    from medpipe.modelgraph import UNet

    save_model(tmp_path, UNet(channels=[1, 4, 8], nb_class=2), "2025_01_01_00_00_00.pt", seed=1)
    tree = prediction_tree()
    first = [p.read_bytes() for p in run_predictor(tmp_path, tree, registry)]
    second = [p.read_bytes() for p in run_predictor(tmp_path, tree, registry)]
    assert first == second


def test_missing_checkpoints(tmp_path, registry):
    write_cases(tmp_path)
    with pytest.raises(CheckpointLoadError):
        run_predictor(tmp_path, prediction_tree("Pointwise"), registry)
    save_model(tmp_path, pointwise_model(), "2025_01_01_00_00_00.pt")
    with pytest.raises(CheckpointLoadError):
        run_predictor(tmp_path, prediction_tree("Pointwise"), registry, models=["nope.pt"])


def test_output_path_may_not_escape(tmp_path, registry):
    write_cases(tmp_path)
    save_model(tmp_path, pointwise_model(), "2025_01_01_00_00_00.pt")
    tree = copy.deepcopy(prediction_tree("Pointwise"))
    tree["Predictor"]["outputs_dataset"]["Head:Softmax"]["OutputDataset"]["dataset_filename"] = "../../x:mha"
    with pytest.raises(ValueError):
        run_predictor(tmp_path, tree, registry)
