import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from medpipe.config import parse_config
from medpipe.errors import CheckpointLoadError
from medpipe.modelgraph import FocalLoss
from medpipe.synthetic import make_dataset
from medpipe.tensor import Graph, Tensor, backward
from medpipe.trainer import (
    CheckpointWriter,
    EarlyStoppingState,
    LRSchedulerState,
    Trainer,
    decode_checkpoint,
    early_stopping_check,
    ema_update,
    encode_checkpoint,
    inference_parameters,
    latest_checkpoint,
    plateau_step,
)
from medpipe.workspace import Workspace

from conftest import E2E


# ---------------------------------------------------------------- schedules


def test_plateau_reduces_after_patience_plus_one():
    state = LRSchedulerState(lr=0.001, factor=0.1, patience=10, threshold=1e-4)
    plateau_step(state, 1.0)
    lrs = [plateau_step(state, 1.0) for _ in range(11)]
    assert lrs[:10] == [0.001] * 10
    assert lrs[10] == pytest.approx(0.0001, rel=1e-15)
    assert state.count == 0


def test_plateau_strictly_decreasing_never_reduces():
    state = LRSchedulerState(lr=0.001, patience=0)
    for k in range(50):
        assert plateau_step(state, 10.0 - k) == 0.001


def test_plateau_improvement_by_exactly_threshold_is_not_improvement():
    state = LRSchedulerState(lr=1.0, factor=0.5, patience=0, threshold=0.25)
    plateau_step(state, 1.0)
    assert plateau_step(state, 0.75) == 0.5
    assert state.best == 1.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.integers(0, 5))
def test_plateau_lr_is_monotone_non_increasing(metrics, patience):
    state = LRSchedulerState(lr=0.01, factor=0.5, patience=patience)
    previous = state.lr
    for m in metrics:
        lr = plateau_step(state, m)
        assert 0 < lr <= previous
        assert state.count <= patience + 1
        previous = lr


def test_early_stopping_counts():
    state = EarlyStoppingState(patience=10, min_delta=0.0)
    assert not early_stopping_check(state, 1.0)
    flags = [early_stopping_check(state, 1.0) for _ in range(11)]
    assert flags == [False] * 10 + [True]
    improving = EarlyStoppingState(patience=0)
    assert not any(early_stopping_check(improving, -k) for k in range(30))


def test_early_stopping_max_mode():
    state = EarlyStoppingState(patience=0, mode="max", min_delta=0.1)
    early_stopping_check(state, 0.5)
    assert early_stopping_check(state, 0.55)


def test_ema_examples():
    out = ema_update({"w": np.array([1.0])}, {"w": np.array([0.0])}, 0.9)
    assert out["w"][0] == pytest.approx(0.9, rel=1e-15)
    e = {"w": np.array([5.0])}
    theta = {"w": np.array([2.0])}
    gap = 3.0
    for _ in range(20):
        e = ema_update(e, theta, 0.5)
        assert abs(e["w"][0] - 2.0) == pytest.approx(gap * 0.5, rel=1e-12)
        gap *= 0.5
    with pytest.raises(ValueError):
        ema_update(e, theta, 1.0)


def test_ema_keeps_dtype():
    out = ema_update({"w": np.ones(3, np.float32)}, {"w": np.zeros(3, np.float32)}, 0.99)
    assert out["w"].dtype == np.float32


# ---------------------------------------------------------------- checkpoints


def test_checkpoint_round_trip_is_bit_exact():
    rng = np.random.default_rng(0)
    params = {"a.weight": rng.standard_normal((3, 2, 3, 3)).astype(np.float32), "a.bias": np.zeros(3, np.float32),
              "scalar": np.array(1.5)}
    ema = {k: v + 1 for k, v in params.items()}
    p, e, meta = decode_checkpoint(encode_checkpoint(params, ema, {"epoch": 2}))
    assert meta == {"epoch": 2}
    for k in params:
        assert p[k].dtype == params[k].dtype and p[k].tobytes() == params[k].tobytes()
        assert e[k].tobytes() == ema[k].tobytes()
    _, none_ema, _ = decode_checkpoint(encode_checkpoint(params))
    assert none_ema is None


def test_checkpoint_corruption_is_reported(tmp_path):
    data = encode_checkpoint({"w": np.ones(4, np.float32)})
    with pytest.raises(CheckpointLoadError):
        decode_checkpoint(b"garbage" + data)
    with pytest.raises(CheckpointLoadError):
        decode_checkpoint(data[:-3])
    with pytest.raises(CheckpointLoadError):
        inference_parameters(tmp_path / "missing.pt")


def test_inference_parameters_prefer_ema(tmp_path):
    path = tmp_path / "x.pt"
    path.write_bytes(encode_checkpoint({"w": np.zeros(2)}, {"w": np.ones(2)}))
    np.testing.assert_array_equal(inference_parameters(path)["w"], [1.0, 1.0])


def test_writer_best_keeps_one_file_and_names_increase(tmp_path):
    writer = CheckpointWriter(tmp_path, "BEST", clock=lambda: 1_700_000_000.0)
    paths = [writer.save({"w": np.full(1, float(k))}) for k in range(3)]
    assert [p.name for p in paths] == sorted(p.name for p in paths)
    assert len({p.name for p in paths}) == 3
    assert sorted(tmp_path.glob("*.pt")) == [paths[-1]]
    assert latest_checkpoint(tmp_path) == paths[-1]
    assert len(paths[-1].stem.split("_")) == 6


def test_writer_all_keeps_every_file(tmp_path):
    writer = CheckpointWriter(tmp_path, "ALL", clock=lambda: 1_700_000_000.0)
    for k in range(3):
        writer.save({"w": np.full(1, float(k))})
    assert len(list(tmp_path.glob("*.pt"))) == 3
    with pytest.raises(ValueError):
        CheckpointWriter(tmp_path, "SOME")


def test_new_writer_never_reuses_older_names(tmp_path):
    first = CheckpointWriter(tmp_path, "ALL", clock=lambda: 1_700_000_000.0).save({"w": np.zeros(1)})
    second = CheckpointWriter(tmp_path, "ALL", clock=lambda: 1_600_000_000.0).save({"w": np.zeros(1)})
    assert second.name > first.name


# ---------------------------------------------------------------- training runs


def small_config(**overrides) -> str:
    text = (E2E / "Config.yml").read_text()
    values = {"epochs": 2}
    values.update(overrides)
    for key, value in values.items():
        lines = text.splitlines()
        for i, line in enumerate(lines):
            if line.strip().startswith(f"{key}:"):
                indent = line[: len(line) - len(line.lstrip())]
                lines[i] = f"{indent}{key}: {value}"
        text = "\n".join(lines) + "\n"
    return text


def make_trainer(root, seed=None, **overrides) -> Trainer:
    if not (root / "Dataset").exists():
        make_dataset(root, nb_cases=2, shape=(8, 16, 16))
    cfg = parse_config(small_config(**overrides), "Train")
    clock = iter(range(1_700_000_000, 1_800_000_000))
    return Trainer(cfg, Workspace(root, "UNet"), seed=seed, clock=lambda: float(next(clock)))


def test_smoke_run_writes_checkpoint_snapshot_and_logs(tmp_path):
    trainer = make_trainer(tmp_path)
    final = trainer.run()
    assert final is not None and final.parent == tmp_path / "Checkpoints" / "UNet"
    assert (tmp_path / "Setups" / "UNet" / "Config_0.yml").exists()
    lines = [json.loads(x) for x in (tmp_path / "Statistics" / "UNet" / "scalars.jsonl").read_text().splitlines()]
    assert {"step", "epoch", "name", "value", "lr"} <= set(lines[0])
    assert all(math.isfinite(x["value"]) for x in lines)
    steps = {x["step"] for x in lines if x["name"] == "total"}
    assert len(steps) == trainer.global_step
    images = tmp_path / "Statistics" / "UNet" / "Images"
    assert sorted(p.name for p in images.iterdir()) == ["CT", "MASK", "UNetBlock_0-Head-Argmax"]


def test_same_seed_same_losses(tmp_path):
    a = make_trainer(tmp_path / "a")
    b = make_trainer(tmp_path / "b")
    a.run()
    b.run()
    log = lambda r: (r / "Statistics" / "UNet" / "scalars.jsonl").read_text()  # noqa: E731
    assert log(tmp_path / "a") == log(tmp_path / "b")
    assert latest_checkpoint(tmp_path / "a" / "Checkpoints" / "UNet").read_bytes() == \
        latest_checkpoint(tmp_path / "b" / "Checkpoints" / "UNet").read_bytes()


def test_zero_epochs_writes_snapshot_only(tmp_path):
    assert make_trainer(tmp_path, epochs=0).run() is None
    assert (tmp_path / "Setups" / "UNet" / "Config_0.yml").exists()
    assert not list((tmp_path / "Checkpoints").rglob("*.pt")) if (tmp_path / "Checkpoints").exists() else True


def test_ema_run_stores_both_parameter_sets(tmp_path):
    trainer = make_trainer(tmp_path, epochs=1, ema_decay=0.9)
    path = trainer.run()
    params, ema, meta = decode_checkpoint(path.read_bytes())
    assert ema is not None and set(ema) == set(params)
    assert any(not np.array_equal(params[k], ema[k]) for k in params)
    assert meta["train_name"] == "UNet"


def test_gradient_accumulation_matches_large_batch(tmp_path, monkeypatch):
    """k accumulated batches of one sample set feed the optimizer the same gradient as one k-fold batch."""
    import medpipe.trainer.loop as loop

    seen = []
    real_step = loop.adamw_step

    def recording_step(params, grads, state):
        seen.append({n: g.astype(np.float64) for n, g in grads.items()})
        return real_step(params, grads, state)

    monkeypatch.setattr(loop, "adamw_step", recording_step)
    k = 3
    a = make_trainer(tmp_path)
    b = make_trainer(tmp_path)
    samples = a.epoch_samples(0)[:2]
    items = [(a.view_volumes(case, view, 0, j, {}), index) for j, (case, view, index) in enumerate(samples)]
    x, targets = a.assemble(items)
    loss = FocalLoss(gamma=2.0, alpha=[1.0, 1.0])  # a voxel mean, so repeating samples leaves it unchanged

    def grads(trainer, inputs, target):
        params = list(trainer.params.values())
        with Graph() as g:
            out = trainer.model.forward_collect(inputs, ["UNetBlock_0:Head:Softmax"])["UNetBlock_0:Head:Softmax"]
            value = loss(out, target)
        got = backward(g, value, params)
        return {n: got[p] for n, p in trainer.params.items()}

    window = None
    for _ in range(k):
        g = grads(a, x, targets["MASK"])
        window = g if window is None else {n: window[n] + g[n] for n in g}
    a.optimizer_step(window, k)
    big_x = Tensor(np.concatenate([x.data] * k))
    big_t = Tensor(np.concatenate([targets["MASK"].data] * k))
    b.optimizer_step(grads(b, big_x, big_t), 1)
    accumulated, single = seen
    for n in accumulated:
        np.testing.assert_allclose(accumulated[n], single[n], atol=1e-5, rtol=0)
