import json
import struct

import numpy as np
import pytest

from physattn.core import FeatureSequence, MaskSequence
from physattn.serialization import (
    ContainerParseError,
    array_from_bytes,
    array_from_json,
    array_to_bytes,
    array_to_json,
    read_features,
    read_masks,
    write_features,
    write_masks,
)


@pytest.fixture
def features():
    rng = np.random.default_rng(0)
    return FeatureSequence(rng.normal(size=(3, 2, 4, 5)))


def test_json_round_trip(features):
    back = array_from_json(array_to_json(features.data))
    assert np.array_equal(back, features.data)


def test_binary_round_trip(features):
    raw = array_to_bytes(features.data)
    assert struct.unpack("<4I", raw[:16]) == (3, 2, 4, 5)
    assert len(raw) == 16 + 8 * features.data.size
    assert np.array_equal(array_from_bytes(raw), features.data)


def test_layout_is_frame_row_col_channel():
    arr = np.arange(2 * 2 * 3 * 2, dtype=float).reshape(2, 2, 3, 2)
    payload = json.loads(array_to_json(arr))
    assert payload["data"][:4] == [0.0, 1.0, 2.0, 3.0]
    # second frame starts after H*W*d values
    assert payload["data"][12] == arr[1, 0, 0, 0]


@pytest.mark.parametrize("fmt,name", [("json", "f.json"), ("binary", "f.bin")])
def test_file_round_trip(tmp_path, features, fmt, name):
    write_features(tmp_path / name, features, fmt)
    back, got_fmt = read_features(tmp_path / name)
    assert got_fmt == fmt
    assert np.array_equal(back.data, features.data)


def test_masks_use_d1(tmp_path):
    m = MaskSequence(np.array([[[1.0, 0.0]], [[0.0, 1.0]]]))
    write_masks(tmp_path / "m.json", m)
    assert json.loads((tmp_path / "m.json").read_text())["d"] == 1
    assert np.array_equal(read_masks(tmp_path / "m.json").data, m.data)


def test_json_syntax_error_has_location():
    with pytest.raises(ContainerParseError) as err:
        array_from_json('{"T": 1,\n "H": }')
    assert err.value.line == 2
    assert "line 2" in str(err.value)


def test_json_length_mismatch():
    with pytest.raises(ContainerParseError, match="header implies 4"):
        array_from_json('{"T":2,"H":1,"W":1,"d":2,"data":[1,2,3]}')


def test_json_unknown_key():
    with pytest.raises(ContainerParseError, match="unknown"):
        array_from_json('{"T":1,"H":1,"W":1,"d":1,"data":[1],"extra":0}')


def test_binary_truncated():
    raw = array_to_bytes(np.zeros((1, 1, 1, 2)))
    with pytest.raises(ContainerParseError) as err:
        array_from_bytes(raw[:-3])
    assert err.value.offset == len(raw) - 3


def test_non_binary_mask_file(tmp_path):
    (tmp_path / "m.json").write_text('{"T":1,"H":1,"W":2,"d":1,"data":[0.5,1]}')
    with pytest.raises(ContainerParseError, match="binary"):
        read_masks(tmp_path / "m.json")
