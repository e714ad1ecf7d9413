import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from ckdehr import checkpoint
from ckdehr.rng import derive, make_rng


def test_layout_by_hand():
    blob = checkpoint.dumps({"w": np.array([[1.0, 2.0]])})
    expected = (b"CKDF" + struct.pack("<II", 1, 1) + struct.pack("<I", 1) + b"w" + struct.pack("<I", 2)
                + struct.pack("<QQ", 1, 2) + struct.pack("<dd", 1.0, 2.0))
    assert blob == expected


@settings(max_examples=40, deadline=None)
@given(st.dictionaries(st.text(min_size=1, max_size=8),
                       arrays(np.float64, array_shapes(min_dims=0, max_dims=3, max_side=4),
                              elements=st.floats(allow_nan=False, allow_infinity=False)),
                       max_size=4))
def test_bit_exact_roundtrip(tensors):
    back = checkpoint.loads(checkpoint.dumps(tensors))
    assert list(back) == list(tensors)
    for k, v in tensors.items():
        assert back[k].shape == v.shape and back[k].tobytes() == np.asarray(v, order="C").tobytes()


def test_file_roundtrip_and_errors(tmp_path):
    t = {"a": np.arange(6.0).reshape(2, 3), "b": np.array(3.5)}
    checkpoint.save(tmp_path / "x.ckdf", t)
    assert checkpoint.dumps(checkpoint.load(tmp_path / "x.ckdf")) == checkpoint.dumps(t)
    blob = checkpoint.dumps(t)
    with pytest.raises(checkpoint.CheckpointError, match="magic"):
        checkpoint.loads(b"XXXX" + blob[4:])
    with pytest.raises(checkpoint.CheckpointError, match="truncated"):
        checkpoint.loads(blob[:-3])
    with pytest.raises(checkpoint.CheckpointError, match="version"):
        checkpoint.loads(blob[:4] + struct.pack("<I", 9) + blob[8:])


def test_rng_determinism_and_derivation():
    assert np.array_equal(make_rng(42).random(5), make_rng(42).random(5))
    assert not np.array_equal(make_rng(42).random(5), make_rng(43).random(5))
    assert derive(1, "a") == derive(1, "a") != derive(1, "b")
    assert 0 <= derive(-5, "x") < 2 ** 64
