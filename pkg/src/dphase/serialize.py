"""JSON helpers: round-trip floats, NaN/inf as null, shipped schemas."""
from __future__ import annotations

import json
import math
from functools import lru_cache
from importlib import resources

import jsonschema
import numpy as np


def to_jsonable(obj):
    """Recursively convert reports, numpy scalars and arrays to JSON types.

    Non-finite floats become ``None``; objects with ``to_dict`` are expanded.
    """
    if hasattr(obj, "to_dict") and not isinstance(obj, type):
        return to_jsonable(obj.to_dict())
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if obj is None or isinstance(obj, str):
        return obj
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj) -> str:
    # json writes floats with repr, i.e. shortest round-trip decimal
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj, schema=None):
    data = to_jsonable(obj)
    if schema is not None:
        validate(data, schema)
    with open(path, "w") as fh:
        fh.write(dumps(data))


@lru_cache(maxsize=None)
def load_schema(name):
    text = resources.files("dphase").joinpath("schemas", f"{name}.json").read_text()
    return json.loads(text)


def schema_names():
    return sorted(p.name[:-5] for p in resources.files("dphase").joinpath("schemas").iterdir()
                  if p.name.endswith(".json"))


def validate(data, name):
    """Validate ``data`` (already JSON-typed) against the named schema."""
    jsonschema.validate(to_jsonable(data), load_schema(name))
