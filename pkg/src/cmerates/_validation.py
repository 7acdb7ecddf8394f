"""Input checks shared by the public functions and estimators."""

import numbers

import numpy as np
from sklearn.utils import check_array


def check_points(points, name="points", allow_empty=False):
    """Return ``points`` as a float64 array of shape (n, d).

    Scalars become a single 1-d point and 1-d sequences are read as n scalar points.
    """
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.shape[0] == 0:
        if allow_empty:
            return arr
        raise ValueError(f"{name} must be nonempty")
    return check_array(arr, ensure_2d=True, dtype=np.float64, input_name=name)


def check_point(x, dim=None, name="x"):
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a single point")
    if dim is not None and arr.shape[0] != dim:
        raise ValueError(f"{name} has dimension {arr.shape[0]}, expected {dim}")
    return arr


def check_positive(value, name, strict=True):
    if not isinstance(value, numbers.Real) or not np.isfinite(value):
        raise ValueError(f"{name} must be a finite real, got {value!r}")
    if strict and value <= 0:
        raise ValueError(f"{name} must be > 0, got {value!r}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value!r}")
    return float(value)


def check_open_unit(value, name):
    value = check_positive(value, name)
    if value >= 1:
        raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
    return value
