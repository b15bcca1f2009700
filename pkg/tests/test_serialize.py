import json
import math

import jsonschema
import numpy as np
import pytest
from hypothesis import given, strategies as st

from dphase.serialize import dumps, load_schema, schema_names, to_jsonable, validate, write_json


class _Rep:
    def to_dict(self):
        return {"x": np.float64(1.5), "n": np.int64(3), "flag": np.bool_(True),
                "arr": np.arange(3.0), "bad": math.inf}


def test_to_jsonable_expands_reports():
    d = to_jsonable(_Rep())
    assert d == {"x": 1.5, "n": 3, "flag": True, "arr": [0.0, 1.0, 2.0], "bad": None}
    assert type(d["n"]) is int and type(d["flag"]) is bool


def test_to_jsonable_rejects_unknown():
    with pytest.raises(TypeError):
        to_jsonable(object())


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_floats_round_trip(x):
    assert json.loads(dumps({"v": x}))["v"] == x


def test_dumps_is_canonical():
    a = dumps({"b": 1, "a": [np.nan, 2.0]})
    assert a == dumps({"a": [None, 2.0], "b": 1})
    assert a.endswith("\n") and "NaN" not in a


def test_schemas_ship_and_load():
    names = schema_names()
    assert {"summary", "minimize", "oracle1d", "holder", "fam1"} <= set(names)
    for n in names:
        schema = load_schema(n)
        jsonschema.validators.validator_for(schema).check_schema(schema)

def test_write_json_validates(tmp_path):
    schema_ok = {"s_star": -0.1, "alpha": 0.8, "beta": 1.1, "energy": 1.9, "a": 1.0, "b": 1.0,
                 "p": 3.0, "q": 2.0}
    path = tmp_path / "o.json"
    write_json(path, schema_ok, "oracle1d")
    assert json.loads(path.read_text()) == schema_ok
    with pytest.raises(jsonschema.ValidationError):
        validate({"s_star": "x"}, "oracle1d")
