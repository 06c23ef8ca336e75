from types import MappingProxyType

import pytest

from mapfuse.utils import (
    TIMING_KEYS,
    _checksum_of_results,
    _immutable_copy,
    _stable_serialize,
    strip_keys,
)


class BadDeepcopy:
    def __deepcopy__(self, memo):  # pragma: no cover - used to force error path
        raise RuntimeError("nope")


def test_immutable_copy_basic_and_immutability():
    lst = [1, 2, {"a": 3}]
    dct = {"x": 1, "y": [2, 3]}

    lst_copy = _immutable_copy(lst)
    dct_copy = _immutable_copy(dct)

    assert isinstance(lst_copy, tuple)
    assert isinstance(dct_copy, MappingProxyType)

    lst.append(99)
    dct["z"] = 5
    assert lst_copy != tuple(lst)
    assert "z" not in dct_copy

    with pytest.raises(TypeError):
        dct_copy["new"] = 1  # type: ignore[index]


def test_immutable_copy_raises_on_bad_object():
    with pytest.raises(ValueError):
        _immutable_copy(BadDeepcopy())


def test_immutable_copy_with_nested_structures():
    immutable = _immutable_copy({"a": [1, 2, {"b": 3}], "c": {"d": 4}})
    assert isinstance(immutable["a"], tuple)
    assert isinstance(immutable["c"], MappingProxyType)
    with pytest.raises(TypeError):
        immutable["c"]["d"] = 5  # type: ignore[index]


def test_stable_serialize_is_key_order_independent():
    assert _stable_serialize({"b": 2, "a": 1}) == _stable_serialize({"a": 1, "b": 2})
    assert _stable_serialize({"a": [1, 2, {"b": 3}]}) == b'{"a":[1,2,{"b":3}]}'


def test_stable_serialize_handles_non_json_values():
    assert isinstance(_stable_serialize({"x": object()}), bytes)


def test_stable_serialize_keeps_floats_exact():
    assert _stable_serialize({"a": 0.1 + 0.2}) == b'{"a":0.30000000000000004}'


def test_strip_keys_recurses_into_lists_and_mappings():
    doc = {
        "rows": [{"rmse": 0.1, "wall_time_seconds": 2.0}, {"rmse": 0.2, "timings": {"icp": 1}}],
        "summary": {"loop_box": {"median_wall_time_seconds": 1.0, "median_rmse": 0.1}},
    }
    assert strip_keys(doc) == {
        "rows": [{"rmse": 0.1}, {"rmse": 0.2}],
        "summary": {"loop_box": {"median_rmse": 0.1}},
    }
    assert strip_keys({"a": 1, "b": 2}, keys=("a",)) == {"b": 2}


def test_checksum_ignores_timing_fields():
    a = {"rmse": 0.5, "wall_time_seconds": 1.0, "scale_time_seconds": 0.1}
    b = {"rmse": 0.5, "wall_time_seconds": 9.0, "scale_time_seconds": 0.7}
    assert _checksum_of_results(a) == _checksum_of_results(b)
    assert "wall_time_seconds" in TIMING_KEYS


def test_checksum_different_for_different_data():
    assert _checksum_of_results({"rmse": 1.0}) != _checksum_of_results({"rmse": 1.5})


def test_checksum_algorithm_is_selectable():
    assert len(_checksum_of_results({"a": 1})) == 64
    assert len(_checksum_of_results({"a": 1}, algorithm="md5")) == 32
