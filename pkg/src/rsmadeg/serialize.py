"""JSON helpers.  Complex values travel as ``[re, im]`` pairs."""

import json

import numpy as np


def encode_complex(arr):
    """Nested lists with every complex entry replaced by ``[re, im]``."""
    arr = np.asarray(arr, dtype=complex)
    if arr.ndim == 0:
        return [float(arr.real), float(arr.imag)]
    return [encode_complex(a) for a in arr]


def decode_complex(obj):
    arr = np.asarray(obj, dtype=float)
    if arr.shape[-1:] != (2,):
        raise ValueError("complex values must be encoded as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def to_jsonable(obj):
    """Convert numpy scalars/arrays (and containers of them) to plain Python."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return encode_complex(obj)
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj):
    # float repr is the shortest string that round-trips exactly
    return json.dumps(to_jsonable(obj), indent=2, allow_nan=False) + "\n"
