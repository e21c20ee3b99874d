"""JSON/CSV helpers with a fixed numeric format.

Floats are written with 17 significant digits so that reports round-trip
exactly and identical runs give byte-identical files.
"""

import csv
import hashlib
import json
import math

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def format_float(x):
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    if x == int(x) and abs(x) < 1e16:
        return "%.1f" % x
    return "%.17g" % x


def _emit(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, list):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_emit(v, indent, level + 1) for v in obj) + "]"
        items = ",\n".join(pad + _emit(v, indent, level + 1) for v in obj)
        return "[\n" + items + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = ",\n".join(
            pad + json.dumps(k, ensure_ascii=False) + ": " + _emit(v, indent, level + 1)
            for k, v in obj.items()
        )
        return "{\n" + items + "\n" + end + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    """Serialize ``obj`` to JSON text, converting numpy scalars and arrays."""
    return _emit(_plain(obj), indent, 0) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(obj))


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(
                [format_float(float(v)) if isinstance(v, (float, np.floating)) else v
                 for v in row]
            )


def array_hash(*arrays, extra=""):
    """Short content hash of arrays plus a free-form tag."""
    h = hashlib.sha256()
    for a in arrays:
        a = np.ascontiguousarray(a)
        h.update(str(a.dtype).encode())
        h.update(str(a.shape).encode())
        h.update(a.tobytes())
    h.update(extra.encode())
    return h.hexdigest()[:16]
