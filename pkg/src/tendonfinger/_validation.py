"""Small input validation helpers used across the package."""

import math

import numpy as np

from .exceptions import ValidationError


def check_positive(value, name):
    """Return ``value`` as float, raising ValidationError unless finite and > 0."""
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(name, f"expected a number, got {value!r}") from None
    if not math.isfinite(value) or value <= 0.0:
        raise ValidationError(name, f"must be finite and > 0, got {value!r}")
    return value


def check_finite(value, name):
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ValidationError(name, f"expected a number, got {value!r}") from None
    if not math.isfinite(value):
        raise ValidationError(name, f"must be finite, got {value!r}")
    return value


def check_vector(value, name, size=None):
    arr = np.asarray(value, dtype=float)
    if arr.ndim != 1 or (size is not None and arr.shape[0] != size):
        want = f"length {size}" if size is not None else "1-D"
        raise ValidationError(name, f"expected a {want} vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(name, "entries must be finite")
    return arr


def check_unit_vector(value, name, size=None, atol=1e-9):
    arr = check_vector(value, name, size)
    norm = np.linalg.norm(arr)
    if norm == 0.0:
        raise ValidationError(name, "zero vector has no direction")
    if abs(norm - 1.0) > atol:
        arr = arr / norm
    return arr


def check_symmetric(matrix, name="matrix", rtol=1e-12, size=None):
    """Return ``matrix`` as a float array after checking squareness and symmetry.

    Parameters
    ----------
    matrix : array_like, shape (n, n)
    name : str
        Used in the error message.
    rtol : float
        Allowed asymmetry relative to the largest absolute entry.
    size : int or tuple of int, optional
        Accepted values of ``n``.
    """
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValidationError(name, f"expected a square matrix, got shape {m.shape}")
    if size is not None:
        sizes = (size,) if isinstance(size, int) else tuple(size)
        if m.shape[0] not in sizes:
            raise ValidationError(name, f"expected size in {sizes}, got {m.shape[0]}")
    if not np.all(np.isfinite(m)):
        raise ValidationError(name, "entries must be finite")
    scale = max(np.max(np.abs(m)), 1e-300)
    if np.max(np.abs(m - m.T)) > rtol * scale:
        raise ValidationError(name, "matrix is not symmetric")
    return m


def is_psd(matrix, rtol=1e-10):
    """True when every eigenvalue is >= -rtol * ||matrix||."""
    m = np.asarray(matrix, dtype=float)
    w = np.linalg.eigvalsh(0.5 * (m + m.T))
    return bool(w.min() >= -rtol * max(np.linalg.norm(m, 2), 1e-300))
