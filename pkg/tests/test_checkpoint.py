import struct

import numpy as np
import pytest

from elaspoof.checkpoint import MAGIC, Checkpoint, checkpoint_load, checkpoint_save, from_bytes, to_bytes
from elaspoof.ela import ElaConfig
from elaspoof.errors import CorruptCheckpointError, InvalidConfigError, UnsupportedVersionError
from elaspoof.layers import Conv2D, Dense, Flatten, MaxPool2D, ModelConfig, Activation
from elaspoof.model import Network, init_params
from elaspoof.tensor import Tensor
from elaspoof.training import Adam, TrainConfig


@pytest.fixture
def small_ckpt():
    cfg = ModelConfig(8, 8, 3, (Conv2D(4, 3, 3), Activation("relu"), MaxPool2D(2, 2, 2),
                                Flatten(), Dense(1), Activation("sigmoid")))
    params = init_params(cfg, seed=3)
    adam = Adam()
    grads = {k: Tensor.wrap(np.full(v.shape, 0.01)) for k, v in params.items()}
    adam.step(params, grads, 0.001)
    return Checkpoint(cfg, params, TrainConfig(epochs=3), ElaConfig(85, 2.0, 8), adam)


def test_round_trip_is_exact(small_ckpt, tmp_path):
    path = tmp_path / "m.ckpt"
    checkpoint_save(path, small_ckpt)
    back = checkpoint_load(path)
    assert back.model_config == small_ckpt.model_config
    assert back.train_config == small_ckpt.train_config
    assert back.ela_config == small_ckpt.ela_config
    for name, t in small_ckpt.params.items():
        assert back.params[name].array.tobytes() == t.array.tobytes()
        assert np.array_equal(back.adam.states[name].m.array, small_ckpt.adam.states[name].m.array)
        assert np.array_equal(back.adam.states[name].v.array, small_ckpt.adam.states[name].v.array)
    assert back.adam.t == 1
    assert to_bytes(back) == path.read_bytes()
    assert not (tmp_path / "m.ckpt.tmp").exists()


def test_predictions_survive_round_trip(small_ckpt, rng):
    x = Tensor.wrap(rng.random((5, 8, 8, 3)))
    back = from_bytes(to_bytes(small_ckpt))
    a = Network(small_ckpt.model_config, small_ckpt.params).predict(x)
    b = Network(back.model_config, back.params).predict(x)
    assert a.tobytes() == b.tobytes()


def test_without_optimizer(small_ckpt):
    small_ckpt.adam = None
    assert from_bytes(to_bytes(small_ckpt)).adam is None


def test_bytes_are_deterministic(small_ckpt):
    assert to_bytes(small_ckpt) == to_bytes(small_ckpt)


@pytest.mark.parametrize("cut", [0, 4, 12, 40, -9, -1])
def test_truncated(small_ckpt, cut):
    buf = to_bytes(small_ckpt)
    with pytest.raises(CorruptCheckpointError):
        from_bytes(buf[:cut])


def test_trailing_bytes(small_ckpt):
    with pytest.raises(CorruptCheckpointError, match="trailing"):
        from_bytes(to_bytes(small_ckpt) + b"\x00")


def test_bad_magic(small_ckpt):
    buf = bytearray(to_bytes(small_ckpt))
    buf[0:1] = b"X"
    with pytest.raises(CorruptCheckpointError, match="magic"):
        from_bytes(bytes(buf))


def test_future_version(small_ckpt):
    buf = bytearray(to_bytes(small_ckpt))
    buf[len(MAGIC):len(MAGIC) + 4] = struct.pack("<I", 2)
    with pytest.raises(UnsupportedVersionError) as err:
        from_bytes(bytes(buf))
    assert err.value.category == "unsupported-version"


def test_config_param_mismatch(small_ckpt):
    other = ModelConfig(8, 8, 3, (Conv2D(5, 3, 3), Activation("relu"), MaxPool2D(2, 2, 2),
                                  Flatten(), Dense(1), Activation("sigmoid")))
    small_ckpt.model_config = other
    with pytest.raises(InvalidConfigError):
        to_bytes(small_ckpt)
    good = to_bytes(Checkpoint(other, init_params(other, 0)))
    # splice the first block of a different model in front of these parameters
    with pytest.raises(CorruptCheckpointError):
        from_bytes(good.replace(b'"out_channels":5', b'"out_channels":6'))


def test_missing_file(tmp_path):
    with pytest.raises(CorruptCheckpointError):
        checkpoint_load(tmp_path / "nope.ckpt")
