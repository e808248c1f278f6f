import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from saliencylab import tensorfile


def test_round_trip_bit_exact(tmp_path, rng):
    tensors = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=(7,)),
               "c.nested.name": rng.normal(size=(2, 2, 2))}
    path = tmp_path / "t.bin"
    tensorfile.save_tensors(path, tensors, {"note": "x"})
    loaded, meta = tensorfile.load_tensors(path)
    assert meta == {"note": "x"}
    assert set(loaded) == set(tensors)
    for name in tensors:
        assert loaded[name].dtype == np.float64
        np.testing.assert_array_equal(loaded[name], tensors[name])


def test_bytes_independent_of_insertion_order(tmp_path, rng):
    a = rng.normal(size=(2, 3))
    b = rng.normal(size=(4,))
    p1, p2 = tmp_path / "1.bin", tmp_path / "2.bin"
    tensorfile.save_tensors(p1, {"x": a, "y": b})
    tensorfile.save_tensors(p2, {"y": b, "x": a})
    assert p1.read_bytes() == p2.read_bytes()


def test_unsupported_version_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b'{"format_version": 99, "meta": {}, "tensors": {}}\n')
    with pytest.raises(ValueError, match="version"):
        tensorfile.load_tensors(path)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False,
                          width=64), min_size=1, max_size=40))
def test_values_survive_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("tf") / "v.bin"
    arr = np.asarray(values)
    tensorfile.save_tensors(path, {"v": arr})
    loaded, _ = tensorfile.load_tensors(path)
    np.testing.assert_array_equal(loaded["v"], arr)
