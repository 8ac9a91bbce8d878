import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stkit.errors import CheckpointMismatchError
from stkit.executor import (Checkpoint, average_checkpoints, list_checkpoints, load_checkpoint, prune_checkpoints,
                            restore_model, save_checkpoint)
from stkit.models import Transformer

from conftest import tiny_config


@pytest.fixture
def model():
    return Transformer(tiny_config("st", 20), seed=3)


def test_round_trip_is_value_identical(tmp_path, model):
    ckpt = Checkpoint.from_model(model, 42, {"vocab": "abc"}, task="st")
    save_checkpoint(ckpt, tmp_path / "c")
    back = load_checkpoint(tmp_path / "c")
    assert (back.step, back.fingerprints, back.extra) == (42, {"vocab": "abc"}, {"task": "st"})
    assert back.config == model.cfg.to_dict()
    assert back.params.keys() == ckpt.params.keys()
    for name, arr in ckpt.params.items():
        assert back.params[name].dtype == arr.dtype
        assert back.params[name].tobytes() == arr.tobytes()


def test_restore_reproduces_outputs(tmp_path, model):
    save_checkpoint(Checkpoint.from_model(model), tmp_path / "c")
    other = restore_model(Transformer(tiny_config("st", 20), seed=9), load_checkpoint(tmp_path / "c"))
    for name, p in model.named_parameters().items():
        np.testing.assert_array_equal(other.named_parameters()[name].data, p.data)


@settings(max_examples=25, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=10),
                       st.sampled_from([np.float32, np.float64, np.int64]).flatmap(
                           lambda dt: st.lists(st.integers(0, 3), max_size=3).map(
                               lambda shape: (np.arange(int(np.prod(shape)) if shape else 1) - 2.5).astype(dt)
                               .reshape(shape))), max_size=5))
def test_arbitrary_tensors_round_trip(tmp_path_factory, params):
    d = tmp_path_factory.mktemp("ck")
    save_checkpoint(Checkpoint(params), d)
    back = load_checkpoint(d)
    for name, arr in params.items():
        assert back.params[name].shape == arr.shape
        assert back.params[name].dtype == arr.dtype
        np.testing.assert_array_equal(back.params[name], arr)


def test_averaging_identical_checkpoints_is_identity(model):
    ckpt = Checkpoint.from_model(model, 7)
    avg = average_checkpoints([ckpt] * 10)
    for name, arr in ckpt.params.items():
        assert avg.params[name].tobytes() == arr.tobytes()


def test_average_of_one_and_three_is_two():
    a = Checkpoint({"w": np.ones((2, 2), np.float32)}, 1)
    b = Checkpoint({"w": np.full((2, 2), 3, np.float32)}, 5)
    avg = average_checkpoints([a, b])
    np.testing.assert_array_equal(avg.params["w"], np.full((2, 2), 2, np.float32))
    assert avg.step == 5


def test_average_is_order_independent():
    rng = np.random.default_rng(0)
    ckpts = [Checkpoint({"w": rng.normal(size=50).astype(np.float32)}) for _ in range(10)]
    forward = average_checkpoints(ckpts).params["w"]
    backward = average_checkpoints(ckpts[::-1]).params["w"]
    shuffled = average_checkpoints([ckpts[i] for i in rng.permutation(10)]).params["w"]
    assert forward.tobytes() == backward.tobytes() == shuffled.tobytes()


def test_missing_parameter_is_named():
    a = Checkpoint({"w": np.ones(2), "b": np.ones(1)})
    b = Checkpoint({"w": np.ones(2)})
    with pytest.raises(CheckpointMismatchError, match="b"):
        average_checkpoints([a, b])
    with pytest.raises(CheckpointMismatchError, match="shape"):
        average_checkpoints([a, Checkpoint({"w": np.ones(3), "b": np.ones(1)})])
    with pytest.raises(ValueError):
        average_checkpoints([])


def test_restore_rejects_a_foreign_checkpoint(model):
    with pytest.raises(CheckpointMismatchError):
        restore_model(model, Checkpoint({"w": np.ones(2)}))


def test_list_and_prune(tmp_path):
    for step in (5, 100, 20, 3):
        save_checkpoint(Checkpoint({"w": np.ones(1)}, step), tmp_path / f"ckpt-{step}")
    (tmp_path / "ckpt-junk").mkdir()
    assert [p.name for p in list_checkpoints(tmp_path)] == ["ckpt-3", "ckpt-5", "ckpt-20", "ckpt-100"]
    prune_checkpoints(tmp_path, 2)
    assert [p.name for p in list_checkpoints(tmp_path)] == ["ckpt-20", "ckpt-100"]
    assert list_checkpoints(tmp_path / "nowhere") == []


def test_assets_are_copied(tmp_path):
    asset = tmp_path / "vocab.txt"
    asset.write_text("a\n")
    save_checkpoint(Checkpoint({"w": np.ones(1)}), tmp_path / "c", {"vocab.txt": asset})
    assert (tmp_path / "c" / "vocab.txt").read_text() == "a\n"
