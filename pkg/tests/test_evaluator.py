import json
import math
import shutil

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from medpipe.config import parse_config
from medpipe.dataio import Volume, write_metaimage
from medpipe.errors import CaseMismatch, EmptySequence, ShapeError
from medpipe.evaluator import aggregate, dice, evaluate, to_json

from conftest import E2E
from oracles import set_dice, sort_aggregate

# ---------------------------------------------------------------- dice


def test_dice_examples():
    a = np.zeros(16, np.uint8)
    a[:4] = 1
    assert dice(a, a) == 1.0
    b = np.zeros(16, np.uint8)
    b[2:6] = 1
    assert dice(a, b) == pytest.approx((4 + 1e-6) / (8 + 1e-6), rel=1e-15)
    c = np.zeros(16, np.uint8)
    c[:3] = 1
    d = np.zeros(16, np.uint8)
    d[5:10] = 1
    assert dice(c, d) == pytest.approx(1e-6 / (8 + 1e-6), rel=1e-12)
    assert dice(np.zeros(4), np.zeros(4)) == 1.0
    with pytest.raises(ShapeError):
        dice(np.zeros(3), np.zeros(4))


def test_dice_matches_set_oracle():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        shape = tuple(rng.integers(1, 6, size=3))
        nb_labels = int(rng.integers(2, 4))
        pred = rng.integers(0, nb_labels, size=shape)
        gt = rng.integers(0, nb_labels, size=shape)
        worst = max(worst, abs(dice(pred, gt, 1e-6) - set_dice(pred, gt, 1e-6)))
    assert worst <= 1e-12


@settings(max_examples=100, deadline=None)
@given(arrays(np.uint8, (3, 4), elements=st.integers(0, 2)), arrays(np.uint8, (3, 4), elements=st.integers(0, 2)))
def test_dice_symmetric_and_bounded(a, b):
    assert dice(a, b) == dice(b, a)
    assert 0 < dice(a, b) <= 1
    assert dice(a, a) == 1.0


# ---------------------------------------------------------------- aggregate


def test_aggregate_examples():
    one = aggregate([5.0])
    assert (one.mean, one.std, one.p5, one.p95, one.count) == (5.0, 0.0, 5.0, 5.0, 1)
    two = aggregate([0.0, 10.0])
    assert (two.mean, two.std, two.p50) == (5.0, 5.0, 5.0)
    assert aggregate([1, 2, 3, 4]).p50 == 2.5
    with pytest.raises(EmptySequence):
        aggregate([])


def test_aggregate_matches_sort_oracle():
    rng = np.random.default_rng(1)
    for _ in range(100):
        values = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 3), size=int(rng.integers(1, 40)))
        got = aggregate(values).to_dict()
        want = sort_aggregate(values)
        assert got["count"] == want["count"]
        for key in ("mean", "std", "min", "max", "p5", "p25", "p50", "p75", "p95"):
            assert abs(got[key] - want[key]) <= 1e-12, key


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
def test_aggregate_chain(values):
    s = aggregate(values)
    assert s.min <= s.p5 <= s.p25 <= s.p50 <= s.p75 <= s.p95 <= s.max
    assert s.count == len(values)


@settings(max_examples=50, deadline=None)
@given(st.floats(-1e6, 1e6), st.integers(1, 20))
def test_aggregate_constant(value, n):
    s = aggregate([value] * n)
    assert s.std == 0.0
    assert s.mean == s.p5 == s.p50 == s.p95 == value


# ---------------------------------------------------------------- reports


def test_to_json_formatting():
    text = to_json({"b": 0.1, "a": {"x": 1.0, "n": 3}})
    assert text == '{\n  "b": 0.10000000000000001,\n  "a": {\n    "x": 1.0,\n    "n": 3\n  }\n}'
    assert json.loads(text) == {"b": 0.1, "a": {"x": 1.0, "n": 3}}
    with pytest.raises(ValueError):
        to_json({"x": math.nan})


def write_pair(root, name, gt, pred):
    write_metaimage(Volume(gt[None]), root / "Dataset" / name / "MASK.mha")
    if pred is not None:
        write_metaimage(Volume(pred[None]), root / "Predictions" / "UNet" / "Dataset" / name / "Seg.mha")


def evaluation_config(validation="None"):
    text = (E2E / "Evaluation.yml").read_text().replace("validation: 0.25", f"validation: {validation}")
    return parse_config(text, "Evaluation")


def test_perfect_predictions(tmp_path):
    mask = np.zeros((2, 4, 4), np.uint8)
    mask[0, :2] = 1
    for name in ("Patient_1", "Patient_2"):
        write_pair(tmp_path, name, mask, mask)
    paths = evaluate(evaluation_config(), tmp_path)
    assert [p.name for p in paths] == ["Metric_TRAIN.json"]
    report = json.loads(paths[0].read_text())
    assert report["per_case"] == {"Patient_1": {"MASK|Seg|Dice": 1.0}, "Patient_2": {"MASK|Seg|Dice": 1.0}}
    s = report["summary"]["MASK|Seg|Dice"]
    assert (s["mean"], s["std"], s["count"]) == (1.0, 0.0, 2)


def test_report_values_match_oracle_and_split(tmp_path):
    rng = np.random.default_rng(4)
    pairs = {}
    for k in range(1, 5):
        gt = rng.integers(0, 2, (3, 4, 4)).astype(np.uint8)
        pred = rng.integers(0, 2, (3, 4, 4)).astype(np.uint8)
        write_pair(tmp_path, f"Patient_{k}", gt, pred)
        pairs[f"Patient_{k}"] = (pred, gt)
    paths = evaluate(evaluation_config("0.25"), tmp_path)
    assert [p.name for p in paths] == ["Metric_TRAIN.json", "Metric_EVALUATION.json"]
    reports = [json.loads(p.read_text()) for p in paths]
    train, held = (set(r["per_case"]) for r in reports)
    assert train | held == set(pairs) and not train & held
    assert len(held) == 1
    for report in reports:
        for case, vals in report["per_case"].items():
            pred, gt = pairs[case]
            assert abs(vals["MASK|Seg|Dice"] - set_dice(pred, gt, 1e-6)) <= 1e-12


def test_evaluate_is_byte_stable(tmp_path):
    rng = np.random.default_rng(2)
    for k in (1, 2):
        write_pair(tmp_path, f"Patient_{k}", rng.integers(0, 2, (2, 3, 3)).astype(np.uint8),
                   rng.integers(0, 2, (2, 3, 3)).astype(np.uint8))
    first = evaluate(evaluation_config(), tmp_path)[0].read_bytes()
    second = evaluate(evaluation_config(), tmp_path)[0].read_bytes()
    assert first == second


def test_missing_prediction_is_case_mismatch(tmp_path):
    mask = np.ones((1, 2, 2), np.uint8)
    write_pair(tmp_path, "Patient_1", mask, mask)
    write_pair(tmp_path, "Patient_2", mask, None)
    with pytest.raises(CaseMismatch) as err:
        evaluate(evaluation_config(), tmp_path)
    assert "Patient_2" in str(err.value)


def test_config_copy_written(tmp_path):
    mask = np.ones((1, 2, 2), np.uint8)
    write_pair(tmp_path, "Patient_1", mask, mask)
    shutil.copyfile(E2E / "Evaluation.yml", tmp_path / "Evaluation.yml")
    evaluate(evaluation_config(), tmp_path)
    assert (tmp_path / "Evaluations" / "UNet" / "Evaluation.yml").exists()
    assert (tmp_path / "Evaluations" / "UNet" / "log.txt").exists()
